#ifndef KOPPA_CONFIG_HPP
#define KOPPA_CONFIG_HPP

#include <cstdint>
#include <string>

#include <json.hpp>

#include "koppa/adam.hpp"
#include "koppa/model.hpp"
#include "koppa/prompt.hpp"

namespace koppa {

enum class RunMode { koppa, coda, just_ce, just_ova, ce_plus_ova };

std::string to_string(RunMode mode);
RunMode run_mode_from_string(const std::string& s);

struct DataConfig {
    std::string source = "synthetic";  // synthetic | csv | kpds
    std::string path;
    std::size_t tasks = 3;
    std::size_t classes_per_task = 2;
    std::size_t dim = 16;
    std::size_t samples_per_class = 50;
    double separation = 4.0;

    friend bool operator==(const DataConfig&, const DataConfig&) = default;
};

struct TrainConfig {
    std::size_t epochs = 20;
    std::size_t la_epochs = 10;
    std::size_t batch_size = 32;
    AdamConfig adam;

    friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

struct SubspaceConfig {
    double epsilon = 0.97;
    std::size_t samples = 200;

    friend bool operator==(const SubspaceConfig&, const SubspaceConfig&) = default;
};

struct PrototypeConfig {
    std::size_t per_task = 100;
    bool stratified = false;

    friend bool operator==(const PrototypeConfig&, const PrototypeConfig&) = default;
};

// Full description of one experiment. The effective config is embedded in
// the run report and must reparse to an equal value.
struct RunConfig {
    RunMode mode = RunMode::koppa;
    std::uint64_t seed = 1;
    DataConfig data;
    EncoderDims model;
    std::size_t prompts_per_task = 4;
    Similarity similarity = Similarity::cosine;
    TrainConfig train;
    SubspaceConfig subspace;
    PrototypeConfig prototypes;
    bool score_on_probabilities = true;
    bool freeze_old_ce = false;

    friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

nlohmann::json config_to_json(const RunConfig& cfg);
RunConfig config_from_json(const nlohmann::json& j);
RunConfig load_config(const std::string& path);

// Applies a CLI override of the form "dotted.path=value" onto the JSON form;
// the value is parsed as JSON when possible and kept as a string otherwise.
void apply_override(nlohmann::json& j, const std::string& assignment);

// Throws ParseError with a description on any invalid combination.
void validate(const RunConfig& cfg);

// Derived helpers used by the runner.
AttentionMode attention_mode_of(RunMode mode);
double ce_weight_of(RunMode mode);
double ova_weight_of(RunMode mode);
PredictionRule prediction_rule_of(RunMode mode);

} // namespace koppa

#endif
