#ifndef KOPPA_CHECKPOINT_HPP
#define KOPPA_CHECKPOINT_HPP

#include <string>

#include <json.hpp>

#include "koppa/config.hpp"
#include "koppa/trainer.hpp"

namespace koppa {

// Binary checkpoint layout (little-endian):
//   magic "KOPA", u32 format version,
//   then a sequence of sections, each: 4-byte tag, u64 payload length,
//   payload bytes. Tags: CONF (config JSON), ENCO (encoder), POOL, BASI,
//   BUFF, CEHD, OVAH.
inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const std::string& path, const TrainState& state, const RunConfig& cfg);

struct LoadedCheckpoint {
    RunConfig config;
    TrainState state;  // training snapshots (basis history etc.) are not persisted
};

LoadedCheckpoint load_checkpoint(const std::string& path);

// Compact JSON description of a checkpoint: version, task count, pool and
// basis shapes, prototype counts and the memory accounting.
nlohmann::json checkpoint_summary(const std::string& path);

} // namespace koppa

#endif
