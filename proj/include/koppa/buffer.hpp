#ifndef KOPPA_BUFFER_HPP
#define KOPPA_BUFFER_HPP

#include <cstdint>
#include <vector>

#include "koppa/matrix.hpp"

namespace koppa {

struct Prototype {
    Vector features;
    int label = 0;
};

// Per-task store of latent feature vectors captured when a task closes.
// Entries of closed tasks are never touched again; capacity bounds the count
// per task, not the byte-exact accounting (which uses capacity * tasks).
struct PrototypeBuffer {
    std::vector<std::vector<Prototype>> per_task;
    std::size_t capacity_per_task = 0;
    std::size_t feature_dim = 0;

    std::size_t task_count() const { return per_task.size(); }
    std::size_t total_entries() const;
    // Accounted bytes: capacity x tasks x feature dim x sizeof(double).
    std::size_t accounted_bytes() const;
};

// Appends min(n, |task_features|) entries for a new task, selected uniformly
// without replacement with the given seed. When `stratified` is set, the
// selection is spread as evenly as possible across the class labels present.
PrototypeBuffer capture(const PrototypeBuffer& buffer,
                        const std::vector<Prototype>& task_features, std::size_t n,
                        std::uint64_t seed, bool stratified = false);

// Every stored prototype, task-major in insertion order.
std::vector<Prototype> replay_all(const PrototypeBuffer& buffer);

} // namespace koppa

#endif
