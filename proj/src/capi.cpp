#include "koppa/capi.h"

#include <cmath>
#include <cstring>
#include <string>

#include "koppa/config.hpp"
#include "koppa/checkpoint.hpp"
#include "koppa/error.hpp"
#include "koppa/runner.hpp"

struct koppa_config {
    koppa::RunConfig cfg;
};

struct koppa_report {
    koppa::RunArtifacts artifacts;
};

namespace {

thread_local std::string g_last_error;

void set_error(const std::string& msg) { g_last_error = msg; }

char* dup_string(const std::string& s) {
    char* out = new char[s.size() + 1];
    std::memcpy(out, s.c_str(), s.size() + 1);
    return out;
}

// Runs `fn`, translating C++ exceptions into status codes.
template <typename Fn>
koppa_status guarded(Fn&& fn) {
    try {
        fn();
        g_last_error.clear();
        return KOPPA_OK;
    } catch (const koppa::ParseError& e) {
        set_error(e.what());
        return KOPPA_ERR_PARSE;
    } catch (const koppa::IoError& e) {
        set_error(e.what());
        return KOPPA_ERR_IO;
    } catch (const koppa::NumericalError& e) {
        set_error(e.what());
        return KOPPA_ERR_NUMERICAL;
    } catch (const koppa::DimensionError& e) {
        set_error(e.what());
        return KOPPA_ERR_INVALID_ARGUMENT;
    } catch (const std::exception& e) {
        set_error(e.what());
        return KOPPA_ERR_INTERNAL;
    } catch (...) {
        set_error("unknown error");
        return KOPPA_ERR_INTERNAL;
    }
}

} // namespace

extern "C" {

const char* koppa_version(void) { return "0.1.0"; }

const char* koppa_last_error(void) { return g_last_error.c_str(); }

koppa_status koppa_config_default(koppa_config** out) {
    if (out == nullptr) {
        set_error("out pointer is null");
        return KOPPA_ERR_INVALID_ARGUMENT;
    }
    return guarded([&] { *out = new koppa_config{}; });
}

koppa_status koppa_config_load(const char* path, koppa_config** out) {
    if (path == nullptr || out == nullptr) {
        set_error("path/out pointer is null");
        return KOPPA_ERR_INVALID_ARGUMENT;
    }
    return guarded([&] { *out = new koppa_config{koppa::load_config(path)}; });
}

koppa_status koppa_config_set(koppa_config* cfg, const char* assignment) {
    if (cfg == nullptr || assignment == nullptr) {
        set_error("config/assignment pointer is null");
        return KOPPA_ERR_INVALID_ARGUMENT;
    }
    return guarded([&] {
        nlohmann::json j = koppa::config_to_json(cfg->cfg);
        koppa::apply_override(j, assignment);
        // Field types and enums are checked here; cross-field constraints
        // are validated when the config is actually used, so overrides can
        // be applied in any order.
        cfg->cfg = koppa::config_from_json(j);
    });
}

koppa_status koppa_config_to_json(const koppa_config* cfg, char** out_json) {
    if (cfg == nullptr || out_json == nullptr) {
        set_error("config/out pointer is null");
        return KOPPA_ERR_INVALID_ARGUMENT;
    }
    return guarded([&] { *out_json = dup_string(koppa::config_to_json(cfg->cfg).dump(2)); });
}

void koppa_config_destroy(koppa_config* cfg) { delete cfg; }

koppa_status koppa_run(const koppa_config* cfg, const char* out_dir, koppa_report** out_report) {
    if (cfg == nullptr) {
        set_error("config pointer is null");
        return KOPPA_ERR_INVALID_ARGUMENT;
    }
    return guarded([&] {
        koppa::RunArtifacts art =
            koppa::run_experiment(cfg->cfg, out_dir != nullptr ? out_dir : "");
        if (out_report != nullptr) {
            *out_report = new koppa_report{std::move(art)};
        }
    });
}

koppa_status koppa_report_to_json(const koppa_report* report, char** out_json) {
    if (report == nullptr || out_json == nullptr) {
        set_error("report/out pointer is null");
        return KOPPA_ERR_INVALID_ARGUMENT;
    }
    return guarded(
        [&] { *out_json = dup_string(koppa::report_to_json(report->artifacts).dump(2)); });
}

koppa_status koppa_report_average_accuracy(const koppa_report* report, double* out) {
    if (report == nullptr || out == nullptr) {
        set_error("report/out pointer is null");
        return KOPPA_ERR_INVALID_ARGUMENT;
    }
    *out = report->artifacts.report.avg_accuracy;
    return KOPPA_OK;
}

koppa_status koppa_report_average_forgetting(const koppa_report* report, double* out) {
    if (report == nullptr || out == nullptr) {
        set_error("report/out pointer is null");
        return KOPPA_ERR_INVALID_ARGUMENT;
    }
    *out = report->artifacts.report.avg_forgetting;
    return KOPPA_OK;
}

void koppa_report_destroy(koppa_report* report) { delete report; }

koppa_status koppa_checkpoint_summary(const char* path, char** out_json) {
    if (path == nullptr || out_json == nullptr) {
        set_error("path/out pointer is null");
        return KOPPA_ERR_INVALID_ARGUMENT;
    }
    return guarded([&] { *out_json = dup_string(koppa::checkpoint_summary(path).dump(2)); });
}

void koppa_string_free(char* s) { delete[] s; }

} // extern "C"
