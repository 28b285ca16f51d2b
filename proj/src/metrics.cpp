#include "koppa/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "koppa/error.hpp"
#include "koppa/rng.hpp"

namespace koppa {

AccuracyMatrix AccuracyMatrix::empty(std::size_t tasks) {
    AccuracyMatrix m;
    m.acc = Matrix(tasks, tasks, std::numeric_limits<double>::quiet_NaN());
    return m;
}

double average_accuracy(const AccuracyMatrix& m) {
    const std::size_t t_count = m.tasks();
    if (t_count == 0) {
        throw DimensionError("average_accuracy: empty matrix");
    }
    double sum = 0.0;
    for (std::size_t t = 0; t < t_count; ++t) sum += m.acc(t, t_count - 1);
    return sum / static_cast<double>(t_count);
}

double average_forgetting(const AccuracyMatrix& m) {
    const std::size_t t_count = m.tasks();
    if (t_count < 2) {
        throw DimensionError("average_forgetting: needs at least two tasks");
    }
    double sum = 0.0;
    for (std::size_t t = 0; t + 1 < t_count; ++t) {
        double best_drop = -std::numeric_limits<double>::infinity();
        for (std::size_t i = t; i + 1 < t_count; ++i) {
            best_drop = std::max(best_drop, m.acc(t, i) - m.acc(t, t_count - 1));
        }
        sum += best_drop;
    }
    return sum / static_cast<double>(t_count - 1);
}

double min_cost_assignment(const Matrix& cost) {
    if (cost.rows() != cost.cols()) {
        throw DimensionError("min_cost_assignment: cost matrix must be square");
    }
    const std::size_t n = cost.rows();
    if (n == 0) return 0.0;
    constexpr double kInf = std::numeric_limits<double>::infinity();

    // Hungarian algorithm with row/column potentials; p[j] is the row
    // currently assigned to column j (1-based, 0 = none).
    std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1, 0.0);
    std::vector<std::size_t> p(n + 1, 0), way(n + 1, 0);
    for (std::size_t i = 1; i <= n; ++i) {
        p[0] = i;
        std::size_t j0 = 0;
        std::fill(minv.begin(), minv.end(), kInf);
        std::vector<char> used(n + 1, 0);
        do {
            used[j0] = 1;
            const std::size_t i0 = p[j0];
            double delta = kInf;
            std::size_t j1 = 0;
            for (std::size_t j = 1; j <= n; ++j) {
                if (used[j]) continue;
                const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (std::size_t j = 0; j <= n; ++j) {
                if (used[j]) {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (p[j0] != 0);
        do {
            const std::size_t j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        } while (j0 != 0);
    }
    double total = 0.0;
    for (std::size_t j = 1; j <= n; ++j) total += cost(p[j] - 1, j - 1);
    return total;
}

double feature_shift(const std::vector<Vector>& old_features,
                     const std::vector<Vector>& new_features, std::uint64_t seed) {
    if (old_features.empty() || new_features.empty()) {
        throw DimensionError("feature_shift: empty sample set");
    }
    const std::size_t n = std::min(old_features.size(), new_features.size());
    auto subsample = [&](const std::vector<Vector>& src, std::string_view tag) {
        if (src.size() == n) return src;
        Rng rng(derive_seed(seed, tag));
        std::vector<std::size_t> idx = rng.sample_indices(src.size(), n);
        std::sort(idx.begin(), idx.end());
        std::vector<Vector> out;
        out.reserve(n);
        for (std::size_t i : idx) out.push_back(src[i]);
        return out;
    };
    const std::vector<Vector> a = subsample(old_features, "shift-subsample");
    const std::vector<Vector> b = subsample(new_features, "shift-subsample");

    Matrix cost(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            if (a[i].size() != b[j].size()) {
                throw DimensionError("feature_shift: feature dimensions differ");
            }
            double s = 0.0;
            for (std::size_t d = 0; d < a[i].size(); ++d) {
                const double diff = a[i][d] - b[j][d];
                s += diff * diff;
            }
            cost(i, j) = s;
        }
    }
    const double total = min_cost_assignment(cost);
    return std::sqrt(std::max(total, 0.0) / static_cast<double>(n));
}

Matrix key_query_heatmap(const PromptPool& pool, const std::vector<Matrix>& per_task_queries,
                         AttentionMode mode, Similarity sim) {
    const std::size_t t_count = pool.task_count();
    if (per_task_queries.size() != t_count) {
        throw DimensionError("key_query_heatmap: need one query sample per task");
    }
    Matrix heat(t_count, t_count);
    for (std::size_t qi = 0; qi < t_count; ++qi) {
        const Matrix& queries = per_task_queries[qi];
        if (queries.rows() == 0) {
            throw DimensionError("key_query_heatmap: empty query sample for a task");
        }
        for (std::size_t r = 0; r < queries.rows(); ++r) {
            const AttentionWeights w = attention_weights(pool, queries.row(r), mode, sim);
            for (std::size_t kj = 0; kj < t_count; ++kj) {
                double acc = 0.0;
                for (std::size_t i = 0; i < pool.prompts_per_task; ++i) {
                    acc += std::abs(w.at(kj, i));
                }
                heat(qi, kj) += acc / static_cast<double>(pool.prompts_per_task);
            }
        }
        for (std::size_t kj = 0; kj < t_count; ++kj) {
            heat(qi, kj) /= static_cast<double>(queries.rows());
        }
    }
    return heat;
}

Vector triggering_rate(const ModelState& model, const PromptPool& pool,
                       const std::vector<TaskDataset>& tasks, const ScoringOptions& opt) {
    Vector rates;
    rates.reserve(tasks.size());
    for (std::size_t t = 0; t < tasks.size(); ++t) {
        const TaskDataset& ds = tasks[t];
        if (ds.test_x.rows() == 0) {
            rates.push_back(0.0);
            continue;
        }
        std::size_t hits = 0;
        for (std::size_t r = 0; r < ds.test_x.rows(); ++r) {
            const Prediction p = predict(model, pool, ds.test_x.row(r), opt);
            if (p.task_id == t) ++hits;
        }
        rates.push_back(static_cast<double>(hits) / static_cast<double>(ds.test_x.rows()));
    }
    return rates;
}

} // namespace koppa
