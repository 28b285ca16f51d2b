#ifndef KOPPA_MODEL_HPP
#define KOPPA_MODEL_HPP

#include <cstdint>
#include <vector>

#include "koppa/buffer.hpp"
#include "koppa/matrix.hpp"
#include "koppa/prompt.hpp"
#include "koppa/subspace.hpp"

namespace koppa {

struct EncoderDims {
    std::size_t d_in = 16;
    std::size_t hidden = 32;
    std::size_t d_q = 16;
    std::size_t d_z = 16;
    std::size_t d_p = 8;

    friend bool operator==(const EncoderDims&, const EncoderDims&) = default;
};

// Frozen two-layer tanh network standing in for a pretrained backbone.
// The query path never sees prompts; the feature path receives the composed
// prompt additively in the hidden layer:
//   q(x) = tanh(Wq x)
//   z(x, p) = tanh(W2 tanh(W1 x + b1 + Vp p) + b2)
// All weights are fixed at construction and must never change afterwards.
struct SurrogateEncoder {
    EncoderDims dims;
    std::uint64_t seed = 0;
    Matrix w_q;  // d_q x d_in
    Matrix w1;   // hidden x d_in
    Vector b1;   // hidden
    Matrix v_p;  // hidden x d_p
    Matrix w2;   // d_z x hidden
    Vector b2;   // d_z

    SurrogateEncoder() = default;
    SurrogateEncoder(const EncoderDims& d, std::uint64_t seed);

    Vector query(std::span<const double> x) const;
    Vector features(std::span<const double> x, std::span<const double> prompt) const;

    // Forward pass keeping the intermediates needed to push gradients back
    // to the prompt.
    struct Trace {
        Vector hidden;  // tanh(W1 x + b1 + Vp p)
        Vector z;       // tanh(W2 hidden + b2)
    };
    Trace forward(std::span<const double> x, std::span<const double> prompt) const;
    Vector prompt_gradient(const Trace& trace, std::span<const double> dz) const;
};

// Growing classification head: one weight block per task, logits over all
// classes seen so far are the concatenation of the blocks.
struct CeHead {
    std::vector<Matrix> w;  // per block: classes x d_z
    std::vector<Vector> b;

    void add_block(std::size_t classes, std::size_t d_z, std::uint64_t seed);
    std::size_t block_count() const { return w.size(); }
    std::size_t total_classes() const;
    std::size_t class_offset(std::size_t block) const;
    std::size_t block_of_class(std::size_t global_class) const;
    Vector logits(std::span<const double> z) const;
};

// One-versus-all head: per task a single layer of 2*C outputs, two logits per
// class forming an (in-distribution, out-of-distribution) softmax pair.
struct OvaHead {
    std::vector<Matrix> w;  // per block: 2*classes x d_z
    std::vector<Vector> b;

    void add_block(std::size_t classes, std::size_t d_z, std::uint64_t seed);
    std::size_t block_count() const { return w.size(); }
    std::size_t total_classes() const;
    std::size_t class_offset(std::size_t block) const;
    std::size_t block_of_class(std::size_t global_class) const;

    // Margin s_c between the in- and out-logit of every seen class; the
    // in-distribution probability is sigmoid(s_c).
    Vector margins(std::span<const double> z) const;
    Vector in_dist_probs(std::span<const double> z) const;
};

struct ModelState {
    SurrogateEncoder encoder;
    CeHead ce;
    OvaHead ova;
};

// Gradients for everything trainable. Key/prompt/mask slots refer to the
// current (last) pool block; head slots cover every block.
struct Gradients {
    Matrix keys;
    Matrix prompts;
    Matrix masks;
    std::vector<Matrix> ce_w;
    std::vector<Vector> ce_b;
    std::vector<Matrix> ova_w;
    std::vector<Vector> ova_b;

    static Gradients zeros_like(const ModelState& model, const PromptPool& pool,
                                bool with_masks);
    bool all_finite() const;
};

struct OvaLossResult {
    double loss = 0.0;
    std::vector<Matrix> dw;
    std::vector<Vector> db;
    Vector dz;
};

// Loss of one feature vector under the OVA head:
//   -log p(y|z) - sum_{c != y} log(1 - p(c|z))
// with each log argument floored at 1e-12.
OvaLossResult ova_loss(const OvaHead& head, std::span<const double> z, int label);

struct TotalLossOptions {
    AttentionMode mode = AttentionMode::koppa;
    Similarity sim = Similarity::cosine;
    // When set, the last block's keys are projected onto the orthogonal
    // complement of this basis before every similarity evaluation, and key
    // gradients are chained back through the (symmetric) projection.
    const SubspaceBasis* orthogonality_constraint = nullptr;
    double ce_weight = 1.0;
    double ova_weight = 1.0;
    bool train_keys = true;
    bool train_prompts = true;
    bool train_masks = false;
    bool freeze_old_ce = false;
};

// Optional per-row precomputation reused across epochs: queries never change
// (the query path is frozen) and neither does the prompt contribution of
// frozen blocks while a task is being trained.
struct ForwardCache {
    Matrix queries;        // n x d_q
    Matrix frozen_prompt;  // n x d_p, contribution of all blocks except the last
};

struct LossValue {
    double total = 0.0;
    double ce = 0.0;
    double ova = 0.0;
};

// Joint objective over one batch: cross-entropy on the batch plus the OVA
// loss on batch features united with all buffered prototypes (uniform
// per-instance weighting within each term). Fills `grads` when non-null.
LossValue total_loss(const ModelState& model, const PromptPool& pool, const Matrix& inputs,
                     std::span<const int> labels, std::span<const std::size_t> rows,
                     const PrototypeBuffer& prototypes, const TotalLossOptions& opt,
                     Gradients* grads, const ForwardCache* cache = nullptr);

enum class PredictionRule { scored, ce_argmax, ova_argmax };

struct ScoringOptions {
    PredictionRule rule = PredictionRule::scored;
    // Apply the task score to softmax probabilities of the CE head (sign-safe)
    // instead of raw logits.
    bool use_probabilities = true;
    AttentionMode mode = AttentionMode::koppa;
    Similarity sim = Similarity::cosine;
};

// Per-task score: the best in-distribution probability among the task's
// classes, evaluated on the prompt-conditioned features of x.
Vector task_scores(const ModelState& model, const PromptPool& pool, std::span<const double> x,
                   const ScoringOptions& opt);

struct Prediction {
    int class_id = -1;
    std::size_t task_id = 0;
};

Prediction predict(const ModelState& model, const PromptPool& pool, std::span<const double> x,
                   const ScoringOptions& opt);

// Feature vector of x under the current pool (query -> attention -> composed
// prompt -> encoder).
Vector pooled_features(const ModelState& model, const PromptPool& pool,
                       std::span<const double> x, AttentionMode mode, Similarity sim);

} // namespace koppa

#endif
