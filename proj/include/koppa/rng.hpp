#ifndef KOPPA_RNG_HPP
#define KOPPA_RNG_HPP

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace koppa {

// Deterministic random source. std::mt19937_64 output is pinned by the
// standard, but the std distributions are not, so the draws below are
// implemented by hand to make identical seeds give identical streams on
// every platform.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    // Unbiased integer in [0, bound) via rejection sampling.
    std::uint64_t below(std::uint64_t bound);

    // Uniform double in [0, 1) with 53 bits of mantissa.
    double uniform();

    // Uniform double in [lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Standard normal via Box-Muller (one value per call, pair cached).
    double normal();

    // In-place Fisher-Yates shuffle.
    template <typename T>
    void shuffle(std::vector<T>& items) {
        for (std::size_t i = items.size(); i > 1; --i) {
            std::swap(items[i - 1], items[below(i)]);
        }
    }

    // k distinct indices from [0, n), uniformly without replacement,
    // in selection order.
    std::vector<std::size_t> sample_indices(std::size_t n, std::size_t k);

private:
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

// Stable sub-seed derivation so independent consumers (data generation,
// parameter init, shuffling, ...) never share a stream.
std::uint64_t derive_seed(std::uint64_t base, std::string_view tag);

} // namespace koppa

#endif
