#include "koppa/trainer.hpp"

#include <algorithm>
#include <numeric>
#include <string>

#include "koppa/error.hpp"
#include "koppa/rng.hpp"
#include "koppa/svd.hpp"

namespace koppa {

Trainer::Trainer(const EncoderDims& dims, std::size_t prompts_per_task,
                 const TaskSchedule& sched, const TrainerOptions& opt)
    : dims_(dims), sched_(sched), opt_(opt), adam_(opt.adam) {
    if (sched.epochs < 1) {
        throw DimensionError("TaskSchedule: epochs must be >= 1");
    }
    if (sched.la_epochs > sched.epochs) {
        throw DimensionError("TaskSchedule: la_epochs cannot exceed epochs");
    }
    state_.model.encoder = SurrogateEncoder(dims, derive_seed(sched.seed, "model"));
    state_.pool.key_dim = dims.d_q;
    state_.pool.prompt_dim = dims.d_p;
    state_.pool.prompts_per_task = prompts_per_task;
    state_.basis = SubspaceBasis::empty(dims.d_q);
    state_.buffer.capacity_per_task = opt.prototypes_per_task;
    state_.buffer.feature_dim = dims.d_z;
}

void Trainer::rebuild_cache(const TaskDataset& data) {
    const std::size_t n = data.train_x.rows();
    cache_.queries = Matrix(n, dims_.d_q);
    cache_.frozen_prompt = Matrix(n, dims_.d_p);
    const std::size_t frozen_blocks = state_.pool.task_count() - 1;
    Vector masked(dims_.d_q);
    for (std::size_t r = 0; r < n; ++r) {
        const Vector q = state_.model.encoder.query(data.train_x.row(r));
        cache_.queries.set_row(r, q);
        if (norm2(q) == 0.0) {
            ++state_.zero_query_events;
            continue;
        }
        auto dst = cache_.frozen_prompt.row(r);
        for (std::size_t t = 0; t < frozen_blocks; ++t) {
            const PromptBlock& block = state_.pool.blocks[t];
            for (std::size_t i = 0; i < state_.pool.prompts_per_task; ++i) {
                std::span<const double> qq = q;
                if (opt_.mode == AttentionMode::coda) {
                    const auto mask = block.masks->row(i);
                    for (std::size_t d = 0; d < masked.size(); ++d) masked[d] = q[d] * mask[d];
                    qq = masked;
                }
                const double a = similarity(qq, block.keys.row(i), opt_.sim);
                if (a != 0.0) axpy(a, block.prompts.row(i), dst);
            }
        }
    }
}

void Trainer::start_task(const TaskDataset& data) {
    if (data.train_x.rows() == 0) {
        throw DimensionError("start_task: empty training set");
    }
    if (static_cast<std::size_t>(data.class_begin) != state_.model.ce.total_classes()) {
        throw DimensionError("start_task: task class range does not extend the seen classes");
    }
    const std::size_t t = state_.pool.task_count();
    state_.pool.add_block(opt_.mode, derive_seed(sched_.seed, "pool-block-" + std::to_string(t)));
    state_.model.ce.add_block(static_cast<std::size_t>(data.class_count), dims_.d_z,
                              derive_seed(sched_.seed, "ce-block-" + std::to_string(t)));
    state_.model.ova.add_block(static_cast<std::size_t>(data.class_count), dims_.d_z,
                               derive_seed(sched_.seed, "ova-block-" + std::to_string(t)));
    rebuild_cache(data);
    phase1_done_ = false;
}

void Trainer::apply_gradients(const Gradients& grads, const TotalLossOptions& opts,
                              double lr_scale) {
    if (!grads.all_finite()) {
        throw NumericalError("training step produced a non-finite gradient");
    }
    const std::size_t t = state_.pool.task_count() - 1;
    PromptBlock& block = state_.pool.blocks[t];
    const std::string suffix = ":" + std::to_string(t);
    if (opts.train_keys) {
        adam_.step("keys" + suffix, block.keys.data(), grads.keys.data(), lr_scale);
    }
    if (opts.train_prompts) {
        adam_.step("prompts" + suffix, block.prompts.data(), grads.prompts.data(), lr_scale);
    }
    if (opts.train_masks && block.masks) {
        adam_.step("masks" + suffix, block.masks->data(), grads.masks.data(), lr_scale);
    }
    for (std::size_t b = 0; b < state_.model.ce.w.size(); ++b) {
        if (opts.freeze_old_ce && b + 1 != state_.model.ce.w.size()) continue;
        if (opts.ce_weight == 0.0) continue;
        const std::string tag = ":" + std::to_string(b);
        adam_.step("ce_w" + tag, state_.model.ce.w[b].data(), grads.ce_w[b].data(), lr_scale);
        adam_.step("ce_b" + tag, state_.model.ce.b[b], grads.ce_b[b], lr_scale);
    }
    if (opts.ova_weight != 0.0) {
        for (std::size_t b = 0; b < state_.model.ova.w.size(); ++b) {
            const std::string tag = ":" + std::to_string(b);
            adam_.step("ova_w" + tag, state_.model.ova.w[b].data(), grads.ova_w[b].data(),
                       lr_scale);
            adam_.step("ova_b" + tag, state_.model.ova.b[b], grads.ova_b[b], lr_scale);
        }
    }
}

void Trainer::run_epochs(const TaskDataset& data, std::size_t first_epoch, std::size_t count,
                         const TotalLossOptions& opts) {
    const std::size_t n = data.train_x.rows();
    if (n == 0) {
        throw DimensionError("training requires a non-empty dataset");
    }
    const std::size_t t = state_.pool.task_count() - 1;
    std::vector<std::size_t> order(n);
    for (std::size_t e = first_epoch; e < first_epoch + count; ++e) {
        std::iota(order.begin(), order.end(), 0);
        Rng rng(derive_seed(sched_.seed,
                            "order-" + std::to_string(t) + "-" + std::to_string(e)));
        rng.shuffle(order);
        const double lr_scale = cosine_lr(1.0, e, sched_.epochs);
        for (std::size_t start = 0; start < n; start += sched_.batch_size) {
            const std::size_t len = std::min(sched_.batch_size, n - start);
            Gradients grads =
                Gradients::zeros_like(state_.model, state_.pool, opts.train_masks);
            total_loss(state_.model, state_.pool, data.train_x, data.train_y,
                       std::span<const std::size_t>(order).subspan(start, len), state_.buffer,
                       opts, &grads, &cache_);
            apply_gradients(grads, opts, lr_scale);
        }
    }
}

void Trainer::train_first_task(const TaskDataset& data) {
    if (state_.tasks_done != 0 || state_.pool.task_count() != 1) {
        throw DimensionError("train_first_task: trainer is not at the first task");
    }
    TotalLossOptions opts;
    opts.mode = opt_.mode;
    opts.sim = opt_.sim;
    opts.ce_weight = opt_.ce_weight;
    opts.ova_weight = opt_.ova_weight;
    opts.train_masks = opt_.mode == AttentionMode::coda;
    opts.freeze_old_ce = opt_.freeze_old_ce;
    run_epochs(data, 0, sched_.epochs, opts);
    phase1_done_ = true;  // no projection phase exists for the first task
}

void Trainer::phase1_lookahead(const TaskDataset& data, std::size_t epochs) {
    if (state_.tasks_done < 1) {
        throw DimensionError("phase1_lookahead: only valid from the second task on");
    }
    if (state_.basis.columns() == 0 || state_.basis.task_count != state_.tasks_done) {
        throw DimensionError("phase1_lookahead: accumulated query subspace is missing");
    }
    TotalLossOptions opts;
    opts.mode = opt_.mode;
    opts.sim = opt_.sim;
    opts.ce_weight = opt_.ce_weight;
    opts.ova_weight = opt_.ova_weight;
    opts.orthogonality_constraint = &state_.basis;
    opts.freeze_old_ce = opt_.freeze_old_ce;
    run_epochs(data, 0, epochs, opts);
    phase1_done_ = true;
}

void Trainer::phase2_freeze_finetune(const TaskDataset& data, std::size_t epochs) {
    if (!phase1_done_) {
        throw DimensionError("phase2_freeze_finetune: phase 1 has not run");
    }
    PromptBlock& block = state_.pool.blocks.back();
    if (state_.tasks_done >= 1) {
        block.keys = project_onto_complement(block.keys, state_.basis.basis);
    }
    TotalLossOptions opts;
    opts.mode = opt_.mode;
    opts.sim = opt_.sim;
    opts.ce_weight = opt_.ce_weight;
    opts.ova_weight = opt_.ova_weight;
    opts.train_keys = false;
    opts.freeze_old_ce = opt_.freeze_old_ce;
    run_epochs(data, sched_.epochs - epochs, epochs, opts);
}

void Trainer::close_task(const TaskDataset& data) {
    const std::size_t t = state_.pool.task_count() - 1;
    const std::size_t n = data.train_x.rows();

    // Query sample for the subspace update.
    Rng sample_rng(derive_seed(sched_.seed, "subspace-sample-" + std::to_string(t)));
    std::vector<std::size_t> rows =
        sample_rng.sample_indices(n, std::min(opt_.subspace_samples, n));
    std::sort(rows.begin(), rows.end());
    Matrix query_cols(dims_.d_q, rows.size());
    Matrix query_rows(rows.size(), dims_.d_q);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const Vector q = state_.model.encoder.query(data.train_x.row(rows[i]));
        query_cols.set_col(i, q);
        query_rows.set_row(i, q);
    }
    state_.basis = update(state_.basis, query_cols, opt_.subspace_epsilon);
    state_.basis_snapshots.push_back(state_.basis.basis);
    state_.query_samples.push_back(query_rows);
    Vector residuals(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        residuals[i] = residual_norm(state_.basis, query_rows.row(i));
    }
    state_.query_residuals.push_back(std::move(residuals));

    // Prototypes carry end-of-task features.
    std::vector<Prototype> feats;
    feats.reserve(n);
    for (std::size_t r = 0; r < n; ++r) {
        feats.push_back({pooled_features(state_.model, state_.pool, data.train_x.row(r),
                                         opt_.mode, opt_.sim),
                         data.train_y[r]});
    }
    state_.buffer = capture(state_.buffer, feats, opt_.prototypes_per_task,
                            derive_seed(sched_.seed, "prototypes-" + std::to_string(t)),
                            opt_.stratified_prototypes);

    state_.pool.blocks.back().frozen = true;
    state_.tasks_done += 1;
}

void Trainer::train_task(const TaskDataset& data) {
    start_task(data);
    if (state_.tasks_done == 0 || opt_.mode == AttentionMode::coda) {
        if (state_.tasks_done == 0) {
            train_first_task(data);
        } else {
            // coda mode: one joint phase, masks trainable, no constraint
            TotalLossOptions opts;
            opts.mode = opt_.mode;
            opts.sim = opt_.sim;
            opts.ce_weight = opt_.ce_weight;
            opts.ova_weight = opt_.ova_weight;
            opts.train_masks = true;
            opts.freeze_old_ce = opt_.freeze_old_ce;
            run_epochs(data, 0, sched_.epochs, opts);
        }
    } else {
        phase1_lookahead(data, sched_.la_epochs);
        phase2_freeze_finetune(data, sched_.ft_epochs());
    }
    close_task(data);
}

double task_accuracy(const ModelState& model, const PromptPool& pool, const Matrix& inputs,
                     const std::vector<int>& labels, const ScoringOptions& opt) {
    if (inputs.rows() == 0) return 0.0;
    std::size_t hits = 0;
    for (std::size_t r = 0; r < inputs.rows(); ++r) {
        if (predict(model, pool, inputs.row(r), opt).class_id == labels[r]) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(inputs.rows());
}

} // namespace koppa
