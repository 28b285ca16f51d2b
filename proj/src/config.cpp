#include "koppa/config.hpp"

#include <fstream>

#include "koppa/error.hpp"

namespace koppa {

std::string to_string(RunMode mode) {
    switch (mode) {
        case RunMode::koppa: return "koppa";
        case RunMode::coda: return "coda";
        case RunMode::just_ce: return "just_ce";
        case RunMode::just_ova: return "just_ova";
        case RunMode::ce_plus_ova: return "ce_plus_ova";
    }
    return "koppa";
}

RunMode run_mode_from_string(const std::string& s) {
    if (s == "koppa") return RunMode::koppa;
    if (s == "coda") return RunMode::coda;
    if (s == "just_ce") return RunMode::just_ce;
    if (s == "just_ova") return RunMode::just_ova;
    if (s == "ce_plus_ova") return RunMode::ce_plus_ova;
    throw ParseError("unknown mode '" + s +
                     "', expected koppa|coda|just_ce|just_ova|ce_plus_ova");
}

nlohmann::json config_to_json(const RunConfig& cfg) {
    nlohmann::json j;
    j["mode"] = to_string(cfg.mode);
    j["seed"] = cfg.seed;
    j["data"] = {{"source", cfg.data.source},
                 {"path", cfg.data.path},
                 {"tasks", cfg.data.tasks},
                 {"classes_per_task", cfg.data.classes_per_task},
                 {"dim", cfg.data.dim},
                 {"samples_per_class", cfg.data.samples_per_class},
                 {"separation", cfg.data.separation}};
    j["model"] = {{"d_in", cfg.model.d_in},
                  {"hidden", cfg.model.hidden},
                  {"d_q", cfg.model.d_q},
                  {"d_z", cfg.model.d_z},
                  {"d_p", cfg.model.d_p}};
    j["prompt"] = {{"per_task", cfg.prompts_per_task},
                   {"similarity", cfg.similarity == Similarity::cosine ? "cosine" : "dot"}};
    j["train"] = {{"epochs", cfg.train.epochs},
                  {"la_epochs", cfg.train.la_epochs},
                  {"batch_size", cfg.train.batch_size},
                  {"lr", cfg.train.adam.lr},
                  {"beta1", cfg.train.adam.beta1},
                  {"beta2", cfg.train.adam.beta2},
                  {"adam_eps", cfg.train.adam.eps}};
    j["subspace"] = {{"epsilon", cfg.subspace.epsilon}, {"samples", cfg.subspace.samples}};
    j["prototypes"] = {{"per_task", cfg.prototypes.per_task},
                       {"stratified", cfg.prototypes.stratified}};
    j["scoring"] = {{"use_probabilities", cfg.score_on_probabilities}};
    j["heads"] = {{"freeze_old_ce", cfg.freeze_old_ce}};
    return j;
}

namespace {

template <typename T>
void read_field(const nlohmann::json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

} // namespace

RunConfig config_from_json(const nlohmann::json& j) {
    RunConfig cfg;
    try {
        if (j.contains("mode")) cfg.mode = run_mode_from_string(j.at("mode").get<std::string>());
        read_field(j, "seed", cfg.seed);
        if (j.contains("data")) {
            const auto& d = j.at("data");
            read_field(d, "source", cfg.data.source);
            read_field(d, "path", cfg.data.path);
            read_field(d, "tasks", cfg.data.tasks);
            read_field(d, "classes_per_task", cfg.data.classes_per_task);
            read_field(d, "dim", cfg.data.dim);
            read_field(d, "samples_per_class", cfg.data.samples_per_class);
            read_field(d, "separation", cfg.data.separation);
        }
        if (j.contains("model")) {
            const auto& m = j.at("model");
            read_field(m, "d_in", cfg.model.d_in);
            read_field(m, "hidden", cfg.model.hidden);
            read_field(m, "d_q", cfg.model.d_q);
            read_field(m, "d_z", cfg.model.d_z);
            read_field(m, "d_p", cfg.model.d_p);
        }
        if (j.contains("prompt")) {
            const auto& p = j.at("prompt");
            read_field(p, "per_task", cfg.prompts_per_task);
            if (p.contains("similarity")) {
                const std::string s = p.at("similarity").get<std::string>();
                if (s == "cosine") {
                    cfg.similarity = Similarity::cosine;
                } else if (s == "dot") {
                    cfg.similarity = Similarity::dot;
                } else {
                    throw ParseError("prompt.similarity must be 'cosine' or 'dot'");
                }
            }
        }
        if (j.contains("train")) {
            const auto& t = j.at("train");
            read_field(t, "epochs", cfg.train.epochs);
            read_field(t, "la_epochs", cfg.train.la_epochs);
            read_field(t, "batch_size", cfg.train.batch_size);
            read_field(t, "lr", cfg.train.adam.lr);
            read_field(t, "beta1", cfg.train.adam.beta1);
            read_field(t, "beta2", cfg.train.adam.beta2);
            read_field(t, "adam_eps", cfg.train.adam.eps);
        }
        if (j.contains("subspace")) {
            const auto& s = j.at("subspace");
            read_field(s, "epsilon", cfg.subspace.epsilon);
            read_field(s, "samples", cfg.subspace.samples);
        }
        if (j.contains("prototypes")) {
            const auto& p = j.at("prototypes");
            read_field(p, "per_task", cfg.prototypes.per_task);
            read_field(p, "stratified", cfg.prototypes.stratified);
        }
        if (j.contains("scoring")) {
            read_field(j.at("scoring"), "use_probabilities", cfg.score_on_probabilities);
        }
        if (j.contains("heads")) {
            read_field(j.at("heads"), "freeze_old_ce", cfg.freeze_old_ce);
        }
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("config: ") + e.what());
    }
    return cfg;
}

RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open config file: " + path);
    }
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(path + ": " + e.what());
    }
    RunConfig cfg = config_from_json(j);
    validate(cfg);
    return cfg;
}

void apply_override(nlohmann::json& j, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) {
        throw ParseError("override must look like key.path=value, got '" + assignment + "'");
    }
    const std::string path = assignment.substr(0, eq);
    const std::string raw = assignment.substr(eq + 1);

    nlohmann::json value;
    try {
        value = nlohmann::json::parse(raw);
    } catch (const nlohmann::json::exception&) {
        value = raw;  // plain string
    }

    nlohmann::json* node = &j;
    std::size_t start = 0;
    while (true) {
        const auto dot = path.find('.', start);
        const std::string key = path.substr(start, dot - start);
        if (key.empty()) {
            throw ParseError("override path has an empty segment: '" + path + "'");
        }
        if (dot == std::string::npos) {
            (*node)[key] = value;
            break;
        }
        node = &(*node)[key];
        start = dot + 1;
    }
}

void validate(const RunConfig& cfg) {
    if (cfg.data.source != "synthetic" && cfg.data.source != "csv" && cfg.data.source != "kpds") {
        throw ParseError("data.source must be synthetic|csv|kpds");
    }
    if (cfg.data.source != "synthetic" && cfg.data.path.empty()) {
        throw ParseError("data.path is required for file-based sources");
    }
    if (cfg.data.tasks < 1 || cfg.data.classes_per_task < 1) {
        throw ParseError("data.tasks and data.classes_per_task must be >= 1");
    }
    if (cfg.data.source == "synthetic" && cfg.data.dim != cfg.model.d_in) {
        throw ParseError("data.dim must equal model.d_in");
    }
    if (cfg.model.d_in < 1 || cfg.model.hidden < 1 || cfg.model.d_q < 1 ||
        cfg.model.d_z < 1 || cfg.model.d_p < 1) {
        throw ParseError("model dimensions must all be >= 1");
    }
    if (cfg.prompts_per_task < 1) {
        throw ParseError("prompt.per_task must be >= 1");
    }
    if (cfg.train.epochs < 1) {
        throw ParseError("train.epochs must be >= 1");
    }
    if (cfg.train.la_epochs > cfg.train.epochs) {
        throw ParseError("train.la_epochs cannot exceed train.epochs");
    }
    if (cfg.data.tasks > 1 && cfg.mode != RunMode::coda && cfg.train.la_epochs < 1) {
        throw ParseError("train.la_epochs must be >= 1 for multi-task runs");
    }
    if (cfg.train.batch_size < 1) {
        throw ParseError("train.batch_size must be >= 1");
    }
    if (!(cfg.subspace.epsilon > 0.0 && cfg.subspace.epsilon < 1.0)) {
        throw ParseError("subspace.epsilon must lie in (0,1)");
    }
    if (cfg.subspace.samples < 1) {
        throw ParseError("subspace.samples must be >= 1");
    }
    if (!(cfg.train.adam.lr > 0.0)) {
        throw ParseError("train.lr must be positive");
    }
}

AttentionMode attention_mode_of(RunMode mode) {
    return mode == RunMode::coda ? AttentionMode::coda : AttentionMode::koppa;
}

double ce_weight_of(RunMode mode) {
    return mode == RunMode::just_ova ? 0.0 : 1.0;
}

double ova_weight_of(RunMode mode) {
    switch (mode) {
        case RunMode::just_ce:
        case RunMode::coda: return 0.0;
        default: return 1.0;
    }
}

PredictionRule prediction_rule_of(RunMode mode) {
    switch (mode) {
        case RunMode::koppa:
        case RunMode::ce_plus_ova: return PredictionRule::scored;
        case RunMode::just_ova: return PredictionRule::ova_argmax;
        case RunMode::just_ce:
        case RunMode::coda: return PredictionRule::ce_argmax;
    }
    return PredictionRule::scored;
}

} // namespace koppa
