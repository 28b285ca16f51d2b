#include "koppa/prompt.hpp"

#include <cmath>

#include "koppa/error.hpp"
#include "koppa/rng.hpp"

namespace koppa {

void PromptPool::add_block(AttentionMode mode, std::uint64_t seed) {
    Rng rng(seed);
    PromptBlock block;
    block.keys = Matrix(prompts_per_task, key_dim);
    block.prompts = Matrix(prompts_per_task, prompt_dim);
    const double key_bound = 1.0 / std::sqrt(static_cast<double>(key_dim));
    const double prompt_bound = 1.0 / std::sqrt(static_cast<double>(prompt_dim));
    for (double& x : block.keys.data()) x = rng.uniform(-key_bound, key_bound);
    for (double& x : block.prompts.data()) x = rng.uniform(-prompt_bound, prompt_bound);
    if (mode == AttentionMode::coda) {
        // Masks start at one: the gated query begins as the plain query and
        // the mask learns deviations from there.
        block.masks = Matrix(prompts_per_task, key_dim, 1.0);
    }
    blocks.push_back(std::move(block));
}

double similarity(std::span<const double> a, std::span<const double> b, Similarity sim) {
    const double d = dot(a, b);
    if (sim == Similarity::dot) return d;
    const double na = norm2(a);
    const double nb = norm2(b);
    if (na == 0.0 || nb == 0.0) return 0.0;
    return d / (na * nb);
}

AttentionWeights attention_weights(const PromptPool& pool, std::span<const double> query,
                                   AttentionMode mode, Similarity sim,
                                   const Matrix* current_key_override) {
    if (query.size() != pool.key_dim) {
        throw DimensionError("attention_weights: query dimension does not match keys");
    }
    AttentionWeights w;
    w.per_task = pool.prompts_per_task;
    w.values.assign(pool.total_prompts(), 0.0);
    if (norm2(query) == 0.0) {
        w.zero_query = true;
        return w;
    }

    Vector masked(query.size());
    for (std::size_t t = 0; t < pool.blocks.size(); ++t) {
        const bool is_last = (t + 1 == pool.blocks.size());
        const Matrix& keys = (is_last && current_key_override != nullptr)
                                 ? *current_key_override
                                 : pool.blocks[t].keys;
        for (std::size_t i = 0; i < pool.prompts_per_task; ++i) {
            std::span<const double> q = query;
            if (mode == AttentionMode::coda) {
                if (!pool.blocks[t].masks) {
                    throw DimensionError("attention_weights: coda mode requires mask vectors");
                }
                const auto mask = pool.blocks[t].masks->row(i);
                for (std::size_t d = 0; d < query.size(); ++d) masked[d] = query[d] * mask[d];
                q = masked;
            }
            w.values[t * pool.prompts_per_task + i] = similarity(q, keys.row(i), sim);
        }
    }
    return w;
}

Vector compose_prompt(const PromptPool& pool, const AttentionWeights& weights) {
    if (weights.values.size() != pool.total_prompts()) {
        throw DimensionError("compose_prompt: weight length does not match prompt count");
    }
    Vector out(pool.prompt_dim, 0.0);
    for (std::size_t t = 0; t < pool.blocks.size(); ++t) {
        for (std::size_t i = 0; i < pool.prompts_per_task; ++i) {
            const double a = weights.values[t * pool.prompts_per_task + i];
            if (a == 0.0) continue;
            axpy(a, pool.blocks[t].prompts.row(i), out);
        }
    }
    return out;
}

namespace {

bool blocks_identical(const PromptBlock& a, const PromptBlock& b) {
    if (a.keys == b.keys && a.prompts == b.prompts) {
        if (a.masks.has_value() != b.masks.has_value()) return false;
        return !a.masks || *a.masks == *b.masks;
    }
    return false;
}

} // namespace

Vector mismatch(const PromptPool& pool_at_train, const PromptPool& pool_at_test,
                std::span<const double> query, AttentionMode mode, Similarity sim) {
    if (pool_at_test.task_count() < pool_at_train.task_count() ||
        pool_at_test.key_dim != pool_at_train.key_dim ||
        pool_at_test.prompt_dim != pool_at_train.prompt_dim ||
        pool_at_test.prompts_per_task != pool_at_train.prompts_per_task) {
        throw DimensionError("mismatch: test pool does not extend the train pool");
    }
    for (std::size_t t = 0; t < pool_at_train.task_count(); ++t) {
        if (!blocks_identical(pool_at_train.blocks[t], pool_at_test.blocks[t])) {
            throw DimensionError("mismatch: shared pool blocks differ");
        }
    }
    const Vector at_test =
        compose_prompt(pool_at_test, attention_weights(pool_at_test, query, mode, sim));
    const Vector at_train =
        compose_prompt(pool_at_train, attention_weights(pool_at_train, query, mode, sim));
    Vector diff(at_test.size());
    for (std::size_t i = 0; i < diff.size(); ++i) diff[i] = at_test[i] - at_train[i];
    return diff;
}

} // namespace koppa
