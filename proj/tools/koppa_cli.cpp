// Experiment runner CLI. Talks to the library exclusively through the C API.

#include <cstdio>
#include <cstdlib>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "koppa/capi.h"

namespace {

int fail(const char* what, koppa_status status) {
    std::fprintf(stderr, "error: %s: %s\n", what, koppa_last_error());
    return status == KOPPA_OK ? 1 : static_cast<int>(status);
}

int cmd_run(const std::string& config_path, const std::vector<std::string>& overrides,
            const std::string& out_dir, bool quiet) {
    koppa_config* cfg = nullptr;
    koppa_status st = config_path.empty() ? koppa_config_default(&cfg)
                                          : koppa_config_load(config_path.c_str(), &cfg);
    if (st != KOPPA_OK) return fail("loading config", st);

    for (const std::string& assignment : overrides) {
        st = koppa_config_set(cfg, assignment.c_str());
        if (st != KOPPA_OK) {
            koppa_config_destroy(cfg);
            return fail("applying override", st);
        }
    }

    koppa_report* report = nullptr;
    st = koppa_run(cfg, out_dir.c_str(), &report);
    koppa_config_destroy(cfg);
    if (st != KOPPA_OK) return fail("run", st);

    double a_n = 0.0, f_n = 0.0;
    koppa_report_average_accuracy(report, &a_n);
    koppa_report_average_forgetting(report, &f_n);
    if (quiet) {
        std::printf("%.6f\n", a_n);
    } else {
        char* json = nullptr;
        if (koppa_report_to_json(report, &json) == KOPPA_OK) {
            std::printf("%s\n", json);
            koppa_string_free(json);
        }
        std::fprintf(stderr, "average_accuracy=%.6f average_forgetting=%.6f\n", a_n, f_n);
        if (!out_dir.empty()) {
            std::fprintf(stderr, "artifacts written to %s\n", out_dir.c_str());
        }
    }
    koppa_report_destroy(report);
    return 0;
}

int cmd_report(const std::string& checkpoint_path) {
    char* json = nullptr;
    const koppa_status st = koppa_checkpoint_summary(checkpoint_path.c_str(), &json);
    if (st != KOPPA_OK) return fail("reading checkpoint", st);
    std::printf("%s\n", json);
    koppa_string_free(json);
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"koppa: continual-learning experiment runner"};
    app.require_subcommand(1);

    std::string config_path;
    std::vector<std::string> overrides;
    std::string out_dir = "out";
    bool quiet = false;
    CLI::App* run = app.add_subcommand("run", "train a task sequence and emit reports");
    run->add_option("--config", config_path, "config JSON file (defaults used when omitted)");
    run->add_option("--set", overrides, "dotted-path override, e.g. train.epochs=30");
    run->add_option("--out", out_dir, "output directory for report.json, CSVs, checkpoints");
    run->add_flag("--quiet", quiet, "print only the final average accuracy");

    std::string checkpoint_path;
    CLI::App* report = app.add_subcommand("report", "summarize a binary checkpoint");
    report->add_option("--checkpoint", checkpoint_path, "path to a .kopa checkpoint")
        ->required();

    CLI11_PARSE(app, argc, argv);

    if (run->parsed()) return cmd_run(config_path, overrides, out_dir, quiet);
    if (report->parsed()) return cmd_report(checkpoint_path);
    return 1;
}
