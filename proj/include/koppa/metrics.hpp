#ifndef KOPPA_METRICS_HPP
#define KOPPA_METRICS_HPP

#include <cstdint>
#include <vector>

#include "koppa/data.hpp"
#include "koppa/matrix.hpp"
#include "koppa/model.hpp"
#include "koppa/prompt.hpp"

namespace koppa {

// acc(t, i): accuracy of task t measured after training task i, defined for
// i >= t only (NaN elsewhere).
struct AccuracyMatrix {
    Matrix acc;

    std::size_t tasks() const { return acc.rows(); }
    static AccuracyMatrix empty(std::size_t tasks);
    void set(std::size_t task, std::size_t after, double value) { acc(task, after) = value; }
};

// Mean of the final column: (1/T) sum_t acc(t, T-1).
double average_accuracy(const AccuracyMatrix& m);

// (1/(T-1)) sum_{t<T-1} max_{i in [t, T-1)} (acc(t,i) - acc(t,T-1)).
// Undefined for T == 1 (throws).
double average_forgetting(const AccuracyMatrix& m);

// Minimum total cost over all row-to-column assignments of a square cost
// matrix (Hungarian algorithm with potentials, O(n^3)).
double min_cost_assignment(const Matrix& cost);

// Exact 2-Wasserstein distance between two empirical distributions given as
// equal-dimension sample lists. Unequal sample counts are reduced to the
// smaller count by seeded subsampling. Throws on empty input.
double feature_shift(const std::vector<Vector>& old_features,
                     const std::vector<Vector>& new_features, std::uint64_t seed = 0);

// entry (i, j) = mean over task-i queries (rows of per_task_queries[i]) of
// the mean |weight| against task-j keys.
Matrix key_query_heatmap(const PromptPool& pool, const std::vector<Matrix>& per_task_queries,
                         AttentionMode mode, Similarity sim = Similarity::cosine);

// Fraction of each task's test samples whose predicted task equals the true
// one.
Vector triggering_rate(const ModelState& model, const PromptPool& pool,
                       const std::vector<TaskDataset>& tasks, const ScoringOptions& opt);

// Everything a finished run reports.
struct RunReport {
    AccuracyMatrix accuracy;
    double avg_accuracy = 0.0;
    double avg_forgetting = 0.0;  // NaN when only one task ran
    Vector shift_per_task;
    Vector shift_running_sum;
    Matrix heatmap;
    Vector triggering;
    Vector final_task_accuracies;
    std::size_t subspace_columns = 0;
    std::size_t basis_bytes = 0;
    std::size_t prototype_bytes = 0;
    std::size_t zero_query_events = 0;
};

} // namespace koppa

#endif
