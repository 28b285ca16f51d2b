#include <doctest.h>

#include <cstdio>
#include <fstream>
#include <map>
#include <set>

#include "koppa/data.hpp"
#include "koppa/error.hpp"
#include "support/oracles.hpp"

using koppa::Matrix;
using koppa::TaskDataset;

namespace {

struct TempFile {
    std::string path;
    explicit TempFile(const std::string& name, const std::string& contents = "")
        : path("koppa_test_" + name) {
        if (!contents.empty()) {
            std::ofstream out(path);
            out << contents;
        }
    }
    ~TempFile() { std::remove(path.c_str()); }
};

} // namespace

TEST_CASE("well-separated gaussians are solved by the nearest-mean oracle") {
    const auto tasks = koppa::synth_split_gaussians(2, 3, 16, 50, 10.0, 7);
    for (const TaskDataset& ds : tasks) {
        // Remap global labels into 0..C-1 for the oracle.
        std::vector<int> train_y, test_y;
        for (int y : ds.train_y) train_y.push_back(y - ds.class_begin);
        for (int y : ds.test_y) test_y.push_back(y - ds.class_begin);
        const double acc =
            oracles::nearest_mean_accuracy(ds.train_x, train_y, ds.test_x, test_y);
        CHECK(acc >= 0.99);
    }
}

TEST_CASE("zero separation is indistinguishable, oracle accuracy near chance") {
    const auto tasks = koppa::synth_split_gaussians(1, 4, 8, 200, 0.0, 3);
    const TaskDataset& ds = tasks[0];
    const double acc =
        oracles::nearest_mean_accuracy(ds.train_x, ds.train_y, ds.test_x, ds.test_y);
    CHECK(acc < 0.25 + 0.12);  // chance is 1/4
}

TEST_CASE("identical seeds give byte-identical datasets") {
    const auto a = koppa::synth_split_gaussians(2, 2, 6, 30, 3.0, 99);
    const auto b = koppa::synth_split_gaussians(2, 2, 6, 30, 3.0, 99);
    REQUIRE(a.size() == b.size());
    for (std::size_t t = 0; t < a.size(); ++t) {
        CHECK(a[t].train_x == b[t].train_x);
        CHECK(a[t].test_x == b[t].test_x);
        CHECK(a[t].train_y == b[t].train_y);
        CHECK(a[t].test_y == b[t].test_y);
    }
    const auto c = koppa::synth_split_gaussians(2, 2, 6, 30, 3.0, 100);
    CHECK(!(c[0].train_x == a[0].train_x));
}

TEST_CASE("task class ranges partition the label set with an 80/20 split") {
    const auto tasks = koppa::synth_split_gaussians(3, 2, 5, 40, 2.0, 11);
    std::set<int> seen;
    for (std::size_t t = 0; t < tasks.size(); ++t) {
        const TaskDataset& ds = tasks[t];
        CHECK(ds.class_begin == static_cast<int>(t) * 2);
        CHECK(ds.train_x.rows() == 2 * 32);  // 80% of 40 per class
        CHECK(ds.test_x.rows() == 2 * 8);
        for (int y : ds.train_y) {
            CHECK(y >= ds.class_begin);
            CHECK(y < ds.class_begin + ds.class_count);
            seen.insert(y);
        }
    }
    CHECK(seen.size() == 6);
}

TEST_CASE("csv loading partitions ten classes into five tasks of two") {
    std::string csv = "f0,f1,label\n";
    for (int cls = 0; cls < 10; ++cls) {
        for (int i = 0; i < 10; ++i) {
            csv += std::to_string(cls * 0.5) + "," + std::to_string(i * 0.25) + "," +
                   std::to_string(cls * 3) + "\n";  // labels 0,3,6,...,27
        }
    }
    TempFile file("ten_classes.csv", csv);
    const auto tasks = koppa::load_csv_tasks(file.path, 5, 2, 17);
    REQUIRE(tasks.size() == 5);
    std::set<int> seen;
    for (std::size_t t = 0; t < 5; ++t) {
        CHECK(tasks[t].class_begin == static_cast<int>(t) * 2);
        CHECK(tasks[t].train_x.rows() == 16);  // 2 classes x 8
        CHECK(tasks[t].test_x.rows() == 4);
        for (int y : tasks[t].train_y) seen.insert(y);
    }
    CHECK(seen.size() == 10);
}

TEST_CASE("csv loader reports malformed rows with their line number") {
    TempFile ragged("ragged.csv", "a,b,label\n1.0,2.0,0\n1.0,3\n");
    CHECK_THROWS_WITH_AS(koppa::load_csv_tasks(ragged.path, 1, 1, 1),
                         doctest::Contains("line 3"), koppa::ParseError);

    TempFile text("text.csv", "a,b,label\n1.0,apple,0\n");
    CHECK_THROWS_WITH_AS(koppa::load_csv_tasks(text.path, 1, 1, 1),
                         doctest::Contains("line 2"), koppa::ParseError);

    TempFile badlabel("badlabel.csv", "a,b,label\n1.0,2.0,zero\n");
    CHECK_THROWS_WITH_AS(koppa::load_csv_tasks(badlabel.path, 1, 1, 1),
                         doctest::Contains("label"), koppa::ParseError);
}

TEST_CASE("csv loader rejects a label count that does not match the split") {
    std::string csv = "x,label\n";
    for (int cls = 0; cls < 3; ++cls) csv += "1.0," + std::to_string(cls) + "\n";
    TempFile file("three.csv", csv);
    CHECK_THROWS_WITH_AS(koppa::load_csv_tasks(file.path, 2, 2, 1),
                         doctest::Contains("expected 2 tasks"), koppa::ParseError);
}

TEST_CASE("csv class histogram is preserved across the split") {
    std::string csv = "x,y,label\n";
    const int counts[2] = {20, 35};
    for (int cls = 0; cls < 2; ++cls) {
        for (int i = 0; i < counts[cls]; ++i) {
            csv += std::to_string(i) + ",0.5," + std::to_string(cls) + "\n";
        }
    }
    TempFile file("hist.csv", csv);
    const auto tasks = koppa::load_csv_tasks(file.path, 1, 2, 5);
    std::map<int, int> hist;
    for (int y : tasks[0].train_y) hist[y]++;
    for (int y : tasks[0].test_y) hist[y]++;
    // The seeded shuffle decides which original class landed on which global
    // id, but the multiset of class sizes must survive.
    std::multiset<int> sizes;
    for (const auto& [cls, n] : hist) sizes.insert(n);
    CHECK(sizes == std::multiset<int>{20, 35});
}

TEST_CASE("kpds files round-trip through writer and loader") {
    Matrix features(12, 3);
    std::vector<int> labels(12);
    for (std::size_t i = 0; i < 12; ++i) {
        for (std::size_t d = 0; d < 3; ++d) {
            features(i, d) = static_cast<double>(i) * 0.5 + static_cast<double>(d);
        }
        labels[i] = static_cast<int>(i) % 2;
    }
    TempFile file("roundtrip.kpds");
    koppa::write_kpds(file.path, features, labels, 2);
    const auto tasks = koppa::load_kpds_tasks(file.path, 1, 2, 3);
    REQUIRE(tasks.size() == 1);
    CHECK(tasks[0].train_x.rows() + tasks[0].test_x.rows() == 12);
    CHECK(tasks[0].train_x.cols() == 3);
}

TEST_CASE("kpds loader rejects bad magic and truncation") {
    TempFile bad("bad.kpds", "NOPExxxxxxxxxxxxxxxx");
    CHECK_THROWS_AS(koppa::load_kpds_tasks(bad.path, 1, 1, 1), koppa::ParseError);
    CHECK_THROWS_AS(koppa::load_kpds_tasks("does_not_exist.kpds", 1, 1, 1), koppa::IoError);
}
