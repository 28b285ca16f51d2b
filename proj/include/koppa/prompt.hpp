#ifndef KOPPA_PROMPT_HPP
#define KOPPA_PROMPT_HPP

#include <cstdint>
#include <optional>
#include <vector>

#include "koppa/matrix.hpp"

namespace koppa {

enum class AttentionMode { koppa, coda };
enum class Similarity { cosine, dot };

// One task's slice of the pool. Keys and prompts are stored one per row.
// Masks exist only in coda mode. Once the owning task closes the block is
// frozen and must never change again.
struct PromptBlock {
    Matrix keys;                  // M x d_q
    Matrix prompts;               // M x d_p
    std::optional<Matrix> masks;  // M x d_q, coda mode only
    bool frozen = false;
};

// The expanding key/prompt pool. One block per task seen so far.
struct PromptPool {
    std::vector<PromptBlock> blocks;
    std::size_t key_dim = 0;
    std::size_t prompt_dim = 0;
    std::size_t prompts_per_task = 0;

    std::size_t task_count() const { return blocks.size(); }
    std::size_t total_prompts() const { return blocks.size() * prompts_per_task; }

    // Appends an unfrozen block with seeded uniform init on
    // [-1/sqrt(dim), 1/sqrt(dim)]; masks included only in coda mode.
    void add_block(AttentionMode mode, std::uint64_t seed);
};

// Similarity weights of a query against every key in the pool, grouped
// task-major. koppa mode compares the raw query against each key; coda mode
// first gates the query elementwise with the key's mask. A zero query (or
// zero key / zero masked query under cosine) contributes weight 0 and sets
// the zero_query flag for diagnostics.
struct AttentionWeights {
    std::vector<double> values;   // length task_count * M
    std::size_t per_task = 0;
    bool zero_query = false;

    double at(std::size_t task, std::size_t i) const { return values[task * per_task + i]; }
};

// `current_key_override`, when given, replaces the LAST block's keys for this
// evaluation only (used while optimizing through the orthogonal projection).
AttentionWeights attention_weights(const PromptPool& pool, std::span<const double> query,
                                   AttentionMode mode, Similarity sim = Similarity::cosine,
                                   const Matrix* current_key_override = nullptr);

// Weighted sum of every prompt in the pool: sum_{t,i} alpha_{t,i} P^t_i.
Vector compose_prompt(const PromptPool& pool, const AttentionWeights& weights);

// Difference between the prompt composed under `pool_at_test` and under
// `pool_at_train` for the same query. The test pool must extend the train
// pool (same leading blocks, bit-identical); anything else throws.
Vector mismatch(const PromptPool& pool_at_train, const PromptPool& pool_at_test,
                std::span<const double> query, AttentionMode mode,
                Similarity sim = Similarity::cosine);

double similarity(std::span<const double> a, std::span<const double> b, Similarity sim);

} // namespace koppa

#endif
