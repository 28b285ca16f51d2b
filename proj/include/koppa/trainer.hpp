#ifndef KOPPA_TRAINER_HPP
#define KOPPA_TRAINER_HPP

#include <cstdint>
#include <vector>

#include "koppa/adam.hpp"
#include "koppa/buffer.hpp"
#include "koppa/data.hpp"
#include "koppa/model.hpp"
#include "koppa/prompt.hpp"
#include "koppa/subspace.hpp"

namespace koppa {

struct TaskSchedule {
    std::size_t epochs = 20;     // per task
    std::size_t la_epochs = 10;  // look-ahead phase length for tasks after the first
    std::size_t batch_size = 32;
    std::uint64_t seed = 1;

    std::size_t ft_epochs() const { return epochs - la_epochs; }
};

struct TrainerOptions {
    AttentionMode mode = AttentionMode::koppa;
    Similarity sim = Similarity::cosine;
    double ce_weight = 1.0;
    double ova_weight = 1.0;
    double subspace_epsilon = 0.97;
    std::size_t subspace_samples = 200;
    std::size_t prototypes_per_task = 100;
    bool stratified_prototypes = false;
    bool freeze_old_ce = false;
    AdamConfig adam;
};

// Everything that evolves over a run. One trainer thread owns this; snapshots
// handed to evaluation are value copies.
struct TrainState {
    ModelState model;
    PromptPool pool;
    SubspaceBasis basis;
    PrototypeBuffer buffer;
    std::size_t tasks_done = 0;

    // Per-task artifacts kept for diagnostics: basis snapshot after each
    // close, the query sample that produced it (rows), and each sampled
    // query's residual against the post-update basis.
    std::vector<Matrix> basis_snapshots;
    std::vector<Matrix> query_samples;
    std::vector<Vector> query_residuals;
    std::size_t zero_query_events = 0;
};

// Per-task training loop. KOPPA mode runs look-ahead optimization through
// the orthogonal projection, then freezes the projected keys and fine-tunes;
// coda mode trains keys, prompts and masks jointly with no constraint.
class Trainer {
public:
    Trainer(const EncoderDims& dims, std::size_t prompts_per_task, const TaskSchedule& sched,
            const TrainerOptions& opt);

    TrainState& state() { return state_; }
    const TrainState& state() const { return state_; }
    const TaskSchedule& schedule() const { return sched_; }
    const TrainerOptions& options() const { return opt_; }

    // Adds the pool block and head blocks for the next task and prepares the
    // per-row caches. Must be called once before the phase methods.
    void start_task(const TaskDataset& data);

    // Joint optimization of keys, prompts and heads; only valid for the
    // first task.
    void train_first_task(const TaskDataset& data);

    // Phase 1: optimize the loss at the projected keys while updating the
    // raw keys through the (symmetric) projection chain rule.
    void phase1_lookahead(const TaskDataset& data, std::size_t epochs);

    // Phase 2: replace the keys by their projection, stop updating them, and
    // fine-tune prompts and heads.
    void phase2_freeze_finetune(const TaskDataset& data, std::size_t epochs);

    // Subspace update from a seeded query sample, prototype capture with
    // end-of-task features, and freezing of the task's pool block.
    void close_task(const TaskDataset& data);

    // start_task + the mode-appropriate phases + close_task.
    void train_task(const TaskDataset& data);

private:
    void run_epochs(const TaskDataset& data, std::size_t first_epoch, std::size_t count,
                    const TotalLossOptions& opts);
    void apply_gradients(const Gradients& grads, const TotalLossOptions& opts, double lr_scale);
    void rebuild_cache(const TaskDataset& data);

    EncoderDims dims_;
    TaskSchedule sched_;
    TrainerOptions opt_;
    TrainState state_;
    Adam adam_;
    ForwardCache cache_;
    bool phase1_done_ = false;
};

// Accuracy of predict() over one dataset's test split.
double task_accuracy(const ModelState& model, const PromptPool& pool, const Matrix& inputs,
                     const std::vector<int>& labels, const ScoringOptions& opt);

} // namespace koppa

#endif
