#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "koppa/error.hpp"
#include "koppa/runner.hpp"

using namespace koppa;

namespace {

struct TempDir {
    std::filesystem::path path;
    explicit TempDir(const std::string& name)
        : path(std::filesystem::temp_directory_path() / ("koppa_" + name)) {
        std::filesystem::remove_all(path);
    }
    ~TempDir() { std::filesystem::remove_all(path); }
};

RunConfig tiny_config() {
    RunConfig cfg;
    cfg.data.tasks = 2;
    cfg.data.classes_per_task = 2;
    cfg.data.samples_per_class = 15;
    cfg.data.separation = 5.0;
    cfg.train.epochs = 4;
    cfg.train.la_epochs = 2;
    cfg.train.batch_size = 16;
    cfg.train.adam.lr = 0.01;
    cfg.subspace.samples = 50;
    cfg.prototypes.per_task = 10;
    return cfg;
}

std::string file_bytes(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

} // namespace

TEST_CASE("a small run populates the full report") {
    const RunArtifacts art = run_experiment(tiny_config());
    const RunReport& r = art.report;
    CHECK(r.accuracy.tasks() == 2);
    CHECK(!std::isnan(r.accuracy.acc(0, 0)));
    CHECK(!std::isnan(r.accuracy.acc(0, 1)));
    CHECK(!std::isnan(r.accuracy.acc(1, 1)));
    CHECK(std::isnan(r.accuracy.acc(1, 0)));
    CHECK(r.avg_accuracy >= 0.0);
    CHECK(r.avg_accuracy <= 1.0);
    CHECK(r.shift_per_task.size() == 2);
    CHECK(r.shift_running_sum[1] ==
          doctest::Approx(r.shift_per_task[0] + r.shift_per_task[1]));
    CHECK(r.heatmap.rows() == 2);
    CHECK(r.triggering.size() == 2);
    CHECK(r.subspace_columns > 0);
    CHECK(r.prototype_bytes == 10 * 2 * tiny_config().model.d_z * 8);
    CHECK(art.features_at_close.size() == 2);
    CHECK(art.features_at_end.size() == 2);
}

TEST_CASE("single-task runs leave forgetting undefined") {
    RunConfig cfg = tiny_config();
    cfg.data.tasks = 1;
    const RunArtifacts art = run_experiment(cfg);
    CHECK(std::isnan(art.report.avg_forgetting));
    const nlohmann::json j = report_to_json(art);
    CHECK(j["average_forgetting"].is_null());
}

TEST_CASE("report JSON is deterministic for identical config and seed") {
    const nlohmann::json a = report_to_json(run_experiment(tiny_config()));
    const nlohmann::json b = report_to_json(run_experiment(tiny_config()));
    CHECK(a.dump() == b.dump());
}

TEST_CASE("run writes report files and checkpoints") {
    TempDir dir("runner_files");
    run_experiment(tiny_config(), dir.path.string());
    CHECK(std::filesystem::exists(dir.path / "report.json"));
    CHECK(std::filesystem::exists(dir.path / "accuracy_matrix.csv"));
    CHECK(std::filesystem::exists(dir.path / "heatmap.csv"));
    CHECK(std::filesystem::exists(dir.path / "task_1.kopa"));
    CHECK(std::filesystem::exists(dir.path / "task_2.kopa"));

    const nlohmann::json report = load_report((dir.path / "report.json").string());
    CHECK(report["schema_version"] == kReportSchemaVersion);
    // The effective config embedded in the report reparses to an equal value.
    CHECK(config_from_json(report["config"]) == tiny_config());

    // Byte-identical on a rerun.
    TempDir dir2("runner_files_2");
    run_experiment(tiny_config(), dir2.path.string());
    CHECK(file_bytes(dir.path / "report.json") == file_bytes(dir2.path / "report.json"));
}

TEST_CASE("unknown report schema versions are rejected") {
    TempDir dir("schema");
    std::filesystem::create_directories(dir.path);
    const auto path = dir.path / "report.json";
    {
        std::ofstream out(path);
        out << R"({"schema_version": 999})";
    }
    CHECK_THROWS_AS(load_report(path.string()), ParseError);
    {
        std::ofstream out(path);
        out << R"({"no_version": true})";
    }
    CHECK_THROWS_AS(load_report(path.string()), ParseError);
}

TEST_CASE("every mode runs end to end") {
    for (RunMode mode : {RunMode::koppa, RunMode::coda, RunMode::just_ce, RunMode::just_ova,
                         RunMode::ce_plus_ova}) {
        RunConfig cfg = tiny_config();
        cfg.mode = mode;
        const RunArtifacts art = run_experiment(cfg);
        CHECK(art.report.accuracy.tasks() == 2);
    }
}

TEST_CASE("well-separated tasks reach near-perfect triggering") {
    RunConfig cfg;
    cfg.data.tasks = 3;
    cfg.data.classes_per_task = 2;
    cfg.data.samples_per_class = 40;
    cfg.data.separation = 8.0;
    cfg.model.hidden = 64;
    cfg.model.d_q = 64;
    cfg.model.d_z = 32;
    cfg.train.epochs = 60;
    cfg.train.la_epochs = 30;
    cfg.train.batch_size = 16;
    cfg.train.adam.lr = 0.02;
    cfg.prototypes.per_task = 100;
    cfg.freeze_old_ce = true;
    cfg.score_on_probabilities = false;
    const RunArtifacts art = run_experiment(cfg);
    for (double rate : art.report.triggering) CHECK(rate >= 0.95);
}

TEST_CASE("invalid configs are rejected before any work") {
    RunConfig cfg = tiny_config();
    cfg.subspace.epsilon = 2.0;
    CHECK_THROWS_AS(run_experiment(cfg), ParseError);
}
