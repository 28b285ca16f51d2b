#include "koppa/buffer.hpp"

#include <algorithm>
#include <map>

#include "koppa/rng.hpp"

namespace koppa {

std::size_t PrototypeBuffer::total_entries() const {
    std::size_t n = 0;
    for (const auto& task : per_task) n += task.size();
    return n;
}

std::size_t PrototypeBuffer::accounted_bytes() const {
    return capacity_per_task * task_count() * feature_dim * sizeof(double);
}

namespace {

std::vector<std::size_t> stratified_selection(const std::vector<Prototype>& feats,
                                              std::size_t n, Rng& rng) {
    std::map<int, std::vector<std::size_t>> by_class;
    for (std::size_t i = 0; i < feats.size(); ++i) by_class[feats[i].label].push_back(i);
    for (auto& [label, idx] : by_class) rng.shuffle(idx);

    // Round-robin over classes until n picks are made.
    std::vector<std::size_t> picked;
    std::size_t depth = 0;
    while (picked.size() < n) {
        bool any = false;
        for (auto& [label, idx] : by_class) {
            if (depth < idx.size()) {
                picked.push_back(idx[depth]);
                any = true;
                if (picked.size() == n) break;
            }
        }
        if (!any) break;
        ++depth;
    }
    std::sort(picked.begin(), picked.end());
    return picked;
}

} // namespace

PrototypeBuffer capture(const PrototypeBuffer& buffer, const std::vector<Prototype>& task_features,
                        std::size_t n, std::uint64_t seed, bool stratified) {
    PrototypeBuffer out = buffer;
    Rng rng(seed);
    const std::size_t take = std::min(n, task_features.size());
    std::vector<std::size_t> picked;
    if (stratified) {
        picked = stratified_selection(task_features, take, rng);
    } else {
        picked = rng.sample_indices(task_features.size(), take);
        std::sort(picked.begin(), picked.end());
    }
    std::vector<Prototype> stored;
    stored.reserve(picked.size());
    for (std::size_t i : picked) stored.push_back(task_features[i]);
    out.per_task.push_back(std::move(stored));
    if (!task_features.empty() && out.feature_dim == 0) {
        out.feature_dim = task_features.front().features.size();
    }
    return out;
}

std::vector<Prototype> replay_all(const PrototypeBuffer& buffer) {
    std::vector<Prototype> all;
    all.reserve(buffer.total_entries());
    for (const auto& task : buffer.per_task) {
        all.insert(all.end(), task.begin(), task.end());
    }
    return all;
}

} // namespace koppa
