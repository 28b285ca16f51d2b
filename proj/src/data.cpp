#include "koppa/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include "koppa/error.hpp"
#include "koppa/rng.hpp"

namespace koppa {

namespace {

Vector random_unit_vector(Rng& rng, std::size_t dim) {
    Vector v(dim);
    double n = 0.0;
    do {
        for (double& x : v) x = rng.normal();
        n = norm2(v);
    } while (n == 0.0);
    scale(1.0 / n, v);
    return v;
}

// Stratified 80/20 split of one class's sample rows (shuffled, seeded).
void split_class(const std::vector<std::size_t>& rows, Rng& rng,
                 std::vector<std::size_t>& train, std::vector<std::size_t>& test) {
    std::vector<std::size_t> shuffled = rows;
    rng.shuffle(shuffled);
    const std::size_t n_train = shuffled.size() * 4 / 5;
    train.insert(train.end(), shuffled.begin(), shuffled.begin() + n_train);
    test.insert(test.end(), shuffled.begin() + n_train, shuffled.end());
}

// Builds per-task datasets from a full sample table and a label -> global id
// remapping. Rows are regrouped per task with a per-class 80/20 split.
std::vector<TaskDataset> assemble_tasks(const Matrix& features, const std::vector<int>& global_y,
                                        std::size_t tasks, std::size_t classes_per_task,
                                        std::uint64_t seed) {
    std::map<int, std::vector<std::size_t>> rows_by_class;
    for (std::size_t r = 0; r < features.rows(); ++r) rows_by_class[global_y[r]].push_back(r);

    std::vector<TaskDataset> out;
    out.reserve(tasks);
    for (std::size_t t = 0; t < tasks; ++t) {
        TaskDataset ds;
        ds.class_begin = static_cast<int>(t * classes_per_task);
        ds.class_count = static_cast<int>(classes_per_task);
        std::vector<std::size_t> train_rows, test_rows;
        for (std::size_t c = 0; c < classes_per_task; ++c) {
            const int gc = ds.class_begin + static_cast<int>(c);
            Rng rng(derive_seed(seed, "split-class-" + std::to_string(gc)));
            auto it = rows_by_class.find(gc);
            if (it == rows_by_class.end() || it->second.empty()) {
                throw ParseError("no samples for class id " + std::to_string(gc));
            }
            split_class(it->second, rng, train_rows, test_rows);
        }
        auto take = [&](const std::vector<std::size_t>& rows, Matrix& x, std::vector<int>& y) {
            x = Matrix(rows.size(), features.cols());
            y.resize(rows.size());
            for (std::size_t i = 0; i < rows.size(); ++i) {
                x.set_row(i, features.row(rows[i]));
                y[i] = global_y[rows[i]];
            }
        };
        take(train_rows, ds.train_x, ds.train_y);
        take(test_rows, ds.test_x, ds.test_y);
        out.push_back(std::move(ds));
    }
    return out;
}

std::vector<TaskDataset> tasks_from_table(const Matrix& features, const std::vector<int>& labels,
                                          std::size_t tasks, std::size_t classes_per_task,
                                          std::uint64_t seed, const std::string& what) {
    std::vector<int> distinct = labels;
    std::sort(distinct.begin(), distinct.end());
    distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
    if (distinct.size() != tasks * classes_per_task) {
        throw ParseError(what + ": found " + std::to_string(distinct.size()) +
                         " distinct labels, expected " + std::to_string(tasks) + " tasks x " +
                         std::to_string(classes_per_task) + " classes = " +
                         std::to_string(tasks * classes_per_task));
    }
    Rng rng(derive_seed(seed, "class-order"));
    rng.shuffle(distinct);
    std::map<int, int> to_global;
    for (std::size_t i = 0; i < distinct.size(); ++i) to_global[distinct[i]] = static_cast<int>(i);
    std::vector<int> global_y(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i) global_y[i] = to_global[labels[i]];
    return assemble_tasks(features, global_y, tasks, classes_per_task, seed);
}

} // namespace

std::vector<TaskDataset> synth_split_gaussians(std::size_t tasks, std::size_t classes_per_task,
                                               std::size_t dim, std::size_t samples_per_class,
                                               double separation, std::uint64_t seed) {
    if (tasks < 1 || classes_per_task < 1 || dim < 1 || samples_per_class < 1) {
        throw DimensionError("synth_split_gaussians: all counts must be >= 1");
    }
    if (separation < 0.0) {
        throw DimensionError("synth_split_gaussians: separation must be non-negative");
    }
    const std::size_t n_classes = tasks * classes_per_task;
    const std::size_t n_total = n_classes * samples_per_class;
    Matrix features(n_total, dim);
    std::vector<int> labels(n_total);
    for (std::size_t c = 0; c < n_classes; ++c) {
        Rng rng(derive_seed(seed, "class-" + std::to_string(c)));
        Vector mean = random_unit_vector(rng, dim);
        scale(separation, mean);
        for (std::size_t s = 0; s < samples_per_class; ++s) {
            const std::size_t row = c * samples_per_class + s;
            auto dst = features.row(row);
            for (std::size_t d = 0; d < dim; ++d) dst[d] = mean[d] + rng.normal();
            labels[row] = static_cast<int>(c);
        }
    }
    return assemble_tasks(features, labels, tasks, classes_per_task, seed);
}

std::vector<TaskDataset> load_csv_tasks(const std::string& path, std::size_t tasks,
                                        std::size_t classes_per_task, std::uint64_t seed) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open CSV file: " + path);
    }
    std::string line;
    if (!std::getline(in, line)) {
        throw ParseError(path + ": empty file, expected a header row");
    }
    std::vector<Vector> rows;
    std::vector<int> labels;
    std::size_t expected_cols = 0;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (!line.empty() && line.back() == ',') cells.push_back("");
        if (cells.size() < 2) {
            throw ParseError(path + ": line " + std::to_string(line_no) +
                             ": expected at least one feature and a label");
        }
        if (expected_cols == 0) expected_cols = cells.size();
        if (cells.size() != expected_cols) {
            throw ParseError(path + ": line " + std::to_string(line_no) + ": expected " +
                             std::to_string(expected_cols) + " columns, got " +
                             std::to_string(cells.size()));
        }
        Vector row(cells.size() - 1);
        for (std::size_t i = 0; i + 1 < cells.size(); ++i) {
            const std::string& c = cells[i];
            const char* begin = c.data();
            const char* end = c.data() + c.size();
            auto res = std::from_chars(begin, end, row[i]);
            if (res.ec != std::errc{} || res.ptr != end || !std::isfinite(row[i])) {
                throw ParseError(path + ": line " + std::to_string(line_no) + ": column " +
                                 std::to_string(i + 1) + ": '" + c + "' is not a finite number");
            }
        }
        int label = 0;
        {
            const std::string& c = cells.back();
            auto res = std::from_chars(c.data(), c.data() + c.size(), label);
            if (res.ec != std::errc{} || res.ptr != c.data() + c.size()) {
                throw ParseError(path + ": line " + std::to_string(line_no) + ": label '" + c +
                                 "' is not an integer");
            }
        }
        rows.push_back(std::move(row));
        labels.push_back(label);
    }
    if (rows.empty()) {
        throw ParseError(path + ": no data rows");
    }
    return tasks_from_table(Matrix::from_rows(rows), labels, tasks, classes_per_task, seed, path);
}

namespace {

template <typename T>
void read_raw(std::ifstream& in, T* out, std::size_t count, const std::string& path) {
    in.read(reinterpret_cast<char*>(out), static_cast<std::streamsize>(count * sizeof(T)));
    if (!in) {
        throw ParseError(path + ": truncated file");
    }
}

} // namespace

std::vector<TaskDataset> load_kpds_tasks(const std::string& path, std::size_t tasks,
                                         std::size_t classes_per_task, std::uint64_t seed) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open KPDS file: " + path);
    }
    char magic[4];
    read_raw(in, magic, 4, path);
    if (std::memcmp(magic, "KPDS", 4) != 0) {
        throw ParseError(path + ": bad magic, expected KPDS");
    }
    std::uint32_t n = 0, d = 0, n_classes = 0;
    read_raw(in, &n, 1, path);
    read_raw(in, &d, 1, path);
    read_raw(in, &n_classes, 1, path);
    if (n == 0 || d == 0) {
        throw ParseError(path + ": empty dataset");
    }
    std::vector<float> raw(static_cast<std::size_t>(n) * d);
    read_raw(in, raw.data(), raw.size(), path);
    std::vector<std::uint32_t> raw_labels(n);
    read_raw(in, raw_labels.data(), raw_labels.size(), path);

    Matrix features(n, d);
    for (std::size_t i = 0; i < features.size(); ++i) {
        features.data()[i] = static_cast<double>(raw[i]);
    }
    if (!features.all_finite()) {
        throw ParseError(path + ": features contain NaN or Inf");
    }
    std::vector<int> labels(raw_labels.begin(), raw_labels.end());
    if (n_classes != tasks * classes_per_task) {
        throw ParseError(path + ": header claims " + std::to_string(n_classes) +
                         " classes, expected " + std::to_string(tasks * classes_per_task));
    }
    return tasks_from_table(features, labels, tasks, classes_per_task, seed, path);
}

void write_kpds(const std::string& path, const Matrix& features, const std::vector<int>& labels,
                std::uint32_t n_classes) {
    if (features.rows() != labels.size()) {
        throw DimensionError("write_kpds: feature row count does not match label count");
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw IoError("cannot open for writing: " + path);
    }
    out.write("KPDS", 4);
    const std::uint32_t n = static_cast<std::uint32_t>(features.rows());
    const std::uint32_t d = static_cast<std::uint32_t>(features.cols());
    out.write(reinterpret_cast<const char*>(&n), 4);
    out.write(reinterpret_cast<const char*>(&d), 4);
    out.write(reinterpret_cast<const char*>(&n_classes), 4);
    for (double x : features.data()) {
        const float f = static_cast<float>(x);
        out.write(reinterpret_cast<const char*>(&f), 4);
    }
    for (int l : labels) {
        const std::uint32_t u = static_cast<std::uint32_t>(l);
        out.write(reinterpret_cast<const char*>(&u), 4);
    }
    if (!out) {
        throw IoError("failed writing: " + path);
    }
}

} // namespace koppa
