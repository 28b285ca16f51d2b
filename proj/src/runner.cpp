#include "koppa/runner.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>

#include "koppa/checkpoint.hpp"
#include "koppa/error.hpp"
#include "koppa/log.hpp"

namespace koppa {

namespace {

std::vector<TaskDataset> build_datasets(const RunConfig& cfg) {
    if (cfg.data.source == "synthetic") {
        return synth_split_gaussians(cfg.data.tasks, cfg.data.classes_per_task, cfg.data.dim,
                                     cfg.data.samples_per_class, cfg.data.separation, cfg.seed);
    }
    std::vector<TaskDataset> tasks;
    if (cfg.data.source == "csv") {
        tasks = load_csv_tasks(cfg.data.path, cfg.data.tasks, cfg.data.classes_per_task,
                               cfg.seed);
    } else {
        tasks = load_kpds_tasks(cfg.data.path, cfg.data.tasks, cfg.data.classes_per_task,
                                cfg.seed);
    }
    if (!tasks.empty() && tasks[0].train_x.cols() != cfg.model.d_in) {
        throw ParseError("dataset dimension " + std::to_string(tasks[0].train_x.cols()) +
                         " does not match model.d_in " + std::to_string(cfg.model.d_in));
    }
    return tasks;
}

ScoringOptions scoring_options(const RunConfig& cfg) {
    ScoringOptions opt;
    opt.rule = prediction_rule_of(cfg.mode);
    opt.use_probabilities = cfg.score_on_probabilities;
    opt.mode = attention_mode_of(cfg.mode);
    opt.sim = cfg.similarity;
    return opt;
}

Matrix snapshot_features(const TrainState& state, const TaskDataset& ds, AttentionMode mode,
                         Similarity sim) {
    Matrix out(ds.train_x.rows(), state.model.encoder.dims.d_z);
    for (std::size_t r = 0; r < ds.train_x.rows(); ++r) {
        out.set_row(r, pooled_features(state.model, state.pool, ds.train_x.row(r), mode, sim));
    }
    return out;
}

void write_csv_matrix(const std::string& path, const Matrix& m, const std::string& row_label,
                      const std::string& col_prefix) {
    std::ofstream out(path);
    if (!out) {
        throw IoError("cannot open for writing: " + path);
    }
    out << row_label;
    for (std::size_t c = 0; c < m.cols(); ++c) out << "," << col_prefix << c;
    out << "\n";
    out.precision(17);
    for (std::size_t r = 0; r < m.rows(); ++r) {
        out << r;
        for (std::size_t c = 0; c < m.cols(); ++c) {
            out << ",";
            if (!std::isnan(m(r, c))) out << m(r, c);
        }
        out << "\n";
    }
}

nlohmann::json matrix_to_json(const Matrix& m) {
    nlohmann::json rows = nlohmann::json::array();
    for (std::size_t r = 0; r < m.rows(); ++r) {
        nlohmann::json row = nlohmann::json::array();
        for (std::size_t c = 0; c < m.cols(); ++c) {
            if (std::isnan(m(r, c))) {
                row.push_back(nullptr);
            } else {
                row.push_back(m(r, c));
            }
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

void write_report_files(const RunArtifacts& art, const std::string& out_dir) {
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    const nlohmann::json j = report_to_json(art);
    std::ofstream out(fs::path(out_dir) / "report.json");
    if (!out) {
        throw IoError("cannot write report.json under " + out_dir);
    }
    out << j.dump(2) << "\n";
    write_csv_matrix((fs::path(out_dir) / "accuracy_matrix.csv").string(),
                     art.report.accuracy.acc, "task", "after_task_");
    write_csv_matrix((fs::path(out_dir) / "heatmap.csv").string(), art.report.heatmap,
                     "query_task", "key_task_");
}

} // namespace

MemoryReport report_memory(const TrainState& state) {
    MemoryReport m;
    m.basis_bytes = state.basis.dim * state.basis.columns() * sizeof(double);
    m.prototype_bytes = state.buffer.accounted_bytes();
    m.total_bytes = m.basis_bytes + m.prototype_bytes;
    return m;
}

RunArtifacts run_experiment(const RunConfig& cfg, const std::string& out_dir) {
    validate(cfg);
    RunArtifacts art;
    art.config = cfg;
    art.datasets = build_datasets(cfg);
    const std::size_t t_count = art.datasets.size();

    TaskSchedule sched;
    sched.epochs = cfg.train.epochs;
    sched.la_epochs = cfg.train.la_epochs;
    sched.batch_size = cfg.train.batch_size;
    sched.seed = cfg.seed;

    TrainerOptions topt;
    topt.mode = attention_mode_of(cfg.mode);
    topt.sim = cfg.similarity;
    topt.ce_weight = ce_weight_of(cfg.mode);
    topt.ova_weight = ova_weight_of(cfg.mode);
    topt.subspace_epsilon = cfg.subspace.epsilon;
    topt.subspace_samples = cfg.subspace.samples;
    topt.prototypes_per_task = cfg.prototypes.per_task;
    topt.stratified_prototypes = cfg.prototypes.stratified;
    topt.freeze_old_ce = cfg.freeze_old_ce;
    topt.adam = cfg.train.adam;

    Trainer trainer(cfg.model, cfg.prompts_per_task, sched, topt);
    const ScoringOptions score_opt = scoring_options(cfg);
    art.report.accuracy = AccuracyMatrix::empty(t_count);

    log_line(LogLevel::info, "[koppa] mode=%s tasks=%zu seed=%llu", to_string(cfg.mode).c_str(),
             t_count, static_cast<unsigned long long>(cfg.seed));
    try {
        for (std::size_t t = 0; t < t_count; ++t) {
            trainer.train_task(art.datasets[t]);
            const TrainState& st = trainer.state();

            // End-of-task feature snapshot and query residuals of this
            // task's train inputs against the basis just computed.
            art.features_at_close.push_back(
                snapshot_features(st, art.datasets[t], topt.mode, topt.sim));
            Vector residuals(art.datasets[t].train_x.rows());
            for (std::size_t r = 0; r < residuals.size(); ++r) {
                const Vector q =
                    st.model.encoder.query(art.datasets[t].train_x.row(r));
                residuals[r] = residual_norm(st.basis, q);
            }
            art.train_query_residuals.push_back(std::move(residuals));

            for (std::size_t i = 0; i <= t; ++i) {
                art.report.accuracy.set(
                    i, t,
                    task_accuracy(st.model, st.pool, art.datasets[i].test_x,
                                  art.datasets[i].test_y, score_opt));
            }
            log_line(LogLevel::info, "[koppa] task %zu/%zu done: acc=%.4f basis_cols=%zu", t + 1,
                     t_count, art.report.accuracy.acc(t, t), st.basis.columns());
            if (!out_dir.empty()) {
                std::filesystem::create_directories(out_dir);
                const std::string name =
                    "task_" + std::to_string(t + 1) + ".kopa";
                save_checkpoint((std::filesystem::path(out_dir) / name).string(),
                                trainer.state(), cfg);
            }
        }
    } catch (const NumericalError&) {
        // Flush what exists so the failure can be inspected, then propagate.
        art.state = trainer.state();
        if (!out_dir.empty()) write_report_files(art, out_dir);
        throw;
    }

    const TrainState& st = trainer.state();
    art.state = st;

    // End-of-run features for every task's train inputs.
    for (std::size_t t = 0; t < t_count; ++t) {
        art.features_at_end.push_back(
            snapshot_features(st, art.datasets[t], topt.mode, topt.sim));
    }

    // Metric battery.
    art.report.avg_accuracy = average_accuracy(art.report.accuracy);
    art.report.avg_forgetting = t_count >= 2 ? average_forgetting(art.report.accuracy)
                                             : std::numeric_limits<double>::quiet_NaN();
    double running = 0.0;
    for (std::size_t t = 0; t < t_count; ++t) {
        std::vector<Vector> before, after;
        for (std::size_t r = 0; r < art.features_at_close[t].rows(); ++r) {
            before.push_back(art.features_at_close[t].row_vec(r));
            after.push_back(art.features_at_end[t].row_vec(r));
        }
        const double shift = feature_shift(before, after, cfg.seed);
        art.report.shift_per_task.push_back(shift);
        running += shift;
        art.report.shift_running_sum.push_back(running);
    }
    art.report.heatmap = key_query_heatmap(st.pool, st.query_samples, topt.mode, topt.sim);
    art.report.triggering = triggering_rate(st.model, st.pool, art.datasets, score_opt);
    for (std::size_t t = 0; t < t_count; ++t) {
        art.report.final_task_accuracies.push_back(art.report.accuracy.acc(t, t_count - 1));
    }
    art.report.subspace_columns = st.basis.columns();
    const MemoryReport mem = report_memory(st);
    art.report.basis_bytes = mem.basis_bytes;
    art.report.prototype_bytes = mem.prototype_bytes;
    art.report.zero_query_events = st.zero_query_events;

    if (!out_dir.empty()) write_report_files(art, out_dir);
    return art;
}

nlohmann::json report_to_json(const RunArtifacts& art) {
    const RunReport& r = art.report;
    nlohmann::json j;
    j["schema_version"] = kReportSchemaVersion;
    j["config"] = config_to_json(art.config);
    j["accuracy_matrix"] = matrix_to_json(r.accuracy.acc);
    j["average_accuracy"] = r.avg_accuracy;
    if (std::isnan(r.avg_forgetting)) {
        j["average_forgetting"] = nullptr;
    } else {
        j["average_forgetting"] = r.avg_forgetting;
    }
    j["shift_per_task"] = r.shift_per_task;
    j["shift_running_sum"] = r.shift_running_sum;
    j["heatmap"] = matrix_to_json(r.heatmap);
    j["triggering_rate"] = r.triggering;
    j["final_task_accuracies"] = r.final_task_accuracies;
    j["subspace_columns"] = r.subspace_columns;
    j["memory"] = {{"basis_bytes", r.basis_bytes},
                   {"prototype_bytes", r.prototype_bytes},
                   {"total_bytes", r.basis_bytes + r.prototype_bytes}};
    j["diagnostics"] = {{"zero_query_events", r.zero_query_events}};
    return j;
}

nlohmann::json load_report(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open report: " + path);
    }
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(path + ": " + e.what());
    }
    if (!j.contains("schema_version") || !j["schema_version"].is_number_integer() ||
        j["schema_version"].get<int>() != kReportSchemaVersion) {
        throw ParseError(path + ": unknown report schema version");
    }
    return j;
}

} // namespace koppa
