#ifndef KOPPA_RUNNER_HPP
#define KOPPA_RUNNER_HPP

#include <string>
#include <vector>

#include <json.hpp>

#include "koppa/config.hpp"
#include "koppa/metrics.hpp"
#include "koppa/trainer.hpp"

namespace koppa {

struct MemoryReport {
    std::size_t basis_bytes = 0;
    std::size_t prototype_bytes = 0;
    std::size_t total_bytes = 0;
};

MemoryReport report_memory(const TrainState& state);

// Everything a run produced, kept in memory for programmatic inspection.
struct RunArtifacts {
    RunConfig config;
    RunReport report;
    TrainState state;
    std::vector<TaskDataset> datasets;
    // End-of-task vs end-of-run features of every task's train inputs, plus
    // each train input's query residual against the basis at its task close.
    std::vector<Matrix> features_at_close;
    std::vector<Matrix> features_at_end;
    std::vector<Vector> train_query_residuals;
};

// Trains the configured task sequence, evaluating after every task and
// computing the full metric battery. When `out_dir` is non-empty the run
// writes report.json, accuracy_matrix.csv, heatmap.csv and one checkpoint
// per task there; on a numerical failure a partial report is flushed before
// the error propagates.
RunArtifacts run_experiment(const RunConfig& cfg, const std::string& out_dir = "");

nlohmann::json report_to_json(const RunArtifacts& artifacts);

inline constexpr int kReportSchemaVersion = 1;

// Parses a previously written report.json, rejecting unknown schema versions.
nlohmann::json load_report(const std::string& path);

} // namespace koppa

#endif
