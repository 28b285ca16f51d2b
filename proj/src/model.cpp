#include "koppa/model.hpp"

#include <algorithm>
#include <cmath>

#include "koppa/error.hpp"
#include "koppa/rng.hpp"
#include "koppa/svd.hpp"

namespace koppa {

namespace {

constexpr double kLogFloor = 1e-12;

double sigmoid(double s) {
    if (s >= 0.0) return 1.0 / (1.0 + std::exp(-s));
    const double e = std::exp(s);
    return e / (1.0 + e);
}

void fill_uniform(Matrix& m, Rng& rng, double bound) {
    for (double& x : m.data()) x = rng.uniform(-bound, bound);
}

void fill_uniform(Vector& v, Rng& rng, double bound) {
    for (double& x : v) x = rng.uniform(-bound, bound);
}

Vector tanh_vec(Vector v) {
    for (double& x : v) x = std::tanh(x);
    return v;
}

} // namespace

SurrogateEncoder::SurrogateEncoder(const EncoderDims& d, std::uint64_t s) : dims(d), seed(s) {
    Rng rng(derive_seed(seed, "encoder"));
    w_q = Matrix(d.d_q, d.d_in);
    w1 = Matrix(d.hidden, d.d_in);
    b1.assign(d.hidden, 0.0);
    v_p = Matrix(d.hidden, d.d_p);
    w2 = Matrix(d.d_z, d.hidden);
    b2.assign(d.d_z, 0.0);
    fill_uniform(w_q, rng, 1.0 / std::sqrt(static_cast<double>(d.d_in)));
    fill_uniform(w1, rng, 1.0 / std::sqrt(static_cast<double>(d.d_in)));
    fill_uniform(b1, rng, 0.5 / std::sqrt(static_cast<double>(d.d_in)));
    fill_uniform(v_p, rng, 1.0 / std::sqrt(static_cast<double>(d.d_p)));
    fill_uniform(w2, rng, 1.0 / std::sqrt(static_cast<double>(d.hidden)));
    fill_uniform(b2, rng, 0.5 / std::sqrt(static_cast<double>(d.hidden)));
}

Vector SurrogateEncoder::query(std::span<const double> x) const {
    return tanh_vec(matvec(w_q, x));
}

SurrogateEncoder::Trace SurrogateEncoder::forward(std::span<const double> x,
                                                  std::span<const double> prompt) const {
    Trace t;
    Vector pre = matvec(w1, x);
    for (std::size_t i = 0; i < pre.size(); ++i) pre[i] += b1[i];
    if (!prompt.empty()) {
        const Vector inj = matvec(v_p, prompt);
        for (std::size_t i = 0; i < pre.size(); ++i) pre[i] += inj[i];
    }
    t.hidden = tanh_vec(std::move(pre));
    Vector out = matvec(w2, t.hidden);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += b2[i];
    t.z = tanh_vec(std::move(out));
    return t;
}

Vector SurrogateEncoder::features(std::span<const double> x,
                                  std::span<const double> prompt) const {
    return forward(x, prompt).z;
}

Vector SurrogateEncoder::prompt_gradient(const Trace& t, std::span<const double> dz) const {
    // dz -> through tanh at output -> W2^T -> through tanh at hidden -> Vp^T
    Vector dv(dz.size());
    for (std::size_t i = 0; i < dv.size(); ++i) dv[i] = dz[i] * (1.0 - t.z[i] * t.z[i]);
    Vector dh = matvec_t(w2, dv);
    for (std::size_t i = 0; i < dh.size(); ++i) dh[i] *= 1.0 - t.hidden[i] * t.hidden[i];
    return matvec_t(v_p, dh);
}

void CeHead::add_block(std::size_t classes, std::size_t d_z, std::uint64_t seed) {
    Rng rng(seed);
    Matrix wb(classes, d_z);
    Vector bb(classes, 0.0);
    fill_uniform(wb, rng, 1.0 / std::sqrt(static_cast<double>(d_z)));
    w.push_back(std::move(wb));
    b.push_back(std::move(bb));
}

std::size_t CeHead::total_classes() const {
    std::size_t n = 0;
    for (const auto& block : w) n += block.rows();
    return n;
}

std::size_t CeHead::class_offset(std::size_t block) const {
    std::size_t off = 0;
    for (std::size_t i = 0; i < block; ++i) off += w[i].rows();
    return off;
}

std::size_t CeHead::block_of_class(std::size_t global_class) const {
    std::size_t off = 0;
    for (std::size_t i = 0; i < w.size(); ++i) {
        off += w[i].rows();
        if (global_class < off) return i;
    }
    throw DimensionError("CeHead: class id outside any block");
}

Vector CeHead::logits(std::span<const double> z) const {
    Vector out;
    out.reserve(total_classes());
    for (std::size_t bk = 0; bk < w.size(); ++bk) {
        const Vector part = matvec(w[bk], z);
        for (std::size_t c = 0; c < part.size(); ++c) out.push_back(part[c] + b[bk][c]);
    }
    return out;
}

void OvaHead::add_block(std::size_t classes, std::size_t d_z, std::uint64_t seed) {
    Rng rng(seed);
    Matrix wb(2 * classes, d_z);
    Vector bb(2 * classes, 0.0);
    fill_uniform(wb, rng, 1.0 / std::sqrt(static_cast<double>(d_z)));
    w.push_back(std::move(wb));
    b.push_back(std::move(bb));
}

std::size_t OvaHead::total_classes() const {
    std::size_t n = 0;
    for (const auto& block : w) n += block.rows() / 2;
    return n;
}

std::size_t OvaHead::class_offset(std::size_t block) const {
    std::size_t off = 0;
    for (std::size_t i = 0; i < block; ++i) off += w[i].rows() / 2;
    return off;
}

std::size_t OvaHead::block_of_class(std::size_t global_class) const {
    std::size_t off = 0;
    for (std::size_t i = 0; i < w.size(); ++i) {
        off += w[i].rows() / 2;
        if (global_class < off) return i;
    }
    throw DimensionError("OvaHead: class id outside any block");
}

Vector OvaHead::margins(std::span<const double> z) const {
    Vector out;
    out.reserve(total_classes());
    for (std::size_t bk = 0; bk < w.size(); ++bk) {
        const std::size_t classes = w[bk].rows() / 2;
        for (std::size_t j = 0; j < classes; ++j) {
            const double in_logit = dot(w[bk].row(2 * j), z) + b[bk][2 * j];
            const double out_logit = dot(w[bk].row(2 * j + 1), z) + b[bk][2 * j + 1];
            out.push_back(in_logit - out_logit);
        }
    }
    return out;
}

Vector OvaHead::in_dist_probs(std::span<const double> z) const {
    Vector m = margins(z);
    for (double& s : m) s = sigmoid(s);
    return m;
}

Gradients Gradients::zeros_like(const ModelState& model, const PromptPool& pool,
                                bool with_masks) {
    Gradients g;
    if (!pool.blocks.empty()) {
        const PromptBlock& last = pool.blocks.back();
        g.keys = Matrix(last.keys.rows(), last.keys.cols());
        g.prompts = Matrix(last.prompts.rows(), last.prompts.cols());
        if (with_masks && last.masks) g.masks = Matrix(last.masks->rows(), last.masks->cols());
    }
    for (const auto& wb : model.ce.w) g.ce_w.emplace_back(wb.rows(), wb.cols());
    for (const auto& bb : model.ce.b) g.ce_b.emplace_back(bb.size(), 0.0);
    for (const auto& wb : model.ova.w) g.ova_w.emplace_back(wb.rows(), wb.cols());
    for (const auto& bb : model.ova.b) g.ova_b.emplace_back(bb.size(), 0.0);
    return g;
}

bool Gradients::all_finite() const {
    if (!keys.all_finite() || !prompts.all_finite() || !masks.all_finite()) return false;
    for (const auto& m : ce_w) {
        if (!m.all_finite()) return false;
    }
    for (const auto& v : ce_b) {
        if (!koppa::all_finite(v)) return false;
    }
    for (const auto& m : ova_w) {
        if (!m.all_finite()) return false;
    }
    for (const auto& v : ova_b) {
        if (!koppa::all_finite(v)) return false;
    }
    return true;
}

namespace {

// Accumulates one instance's OVA loss and gradients. `weight` scales both;
// `dz` may be null when the feature vector is a constant (prototypes).
double accumulate_ova(const OvaHead& head, std::span<const double> z, int label, double weight,
                      std::vector<Matrix>* dw, std::vector<Vector>* db, Vector* dz) {
    double loss = 0.0;
    std::size_t global_c = 0;
    for (std::size_t bk = 0; bk < head.w.size(); ++bk) {
        const std::size_t classes = head.w[bk].rows() / 2;
        for (std::size_t j = 0; j < classes; ++j, ++global_c) {
            const double in_logit = dot(head.w[bk].row(2 * j), z) + head.b[bk][2 * j];
            const double out_logit = dot(head.w[bk].row(2 * j + 1), z) + head.b[bk][2 * j + 1];
            const double s = in_logit - out_logit;
            const double p = sigmoid(s);
            double grad_s;   // d(term)/ds, zero where the floor clamps
            if (static_cast<int>(global_c) == label) {
                loss += -std::log(std::max(p, kLogFloor));
                grad_s = (p > kLogFloor) ? (p - 1.0) : 0.0;
            } else {
                const double q = sigmoid(-s);  // 1 - p without cancellation
                loss += -std::log(std::max(q, kLogFloor));
                grad_s = (q > kLogFloor) ? p : 0.0;
            }
            if (dw != nullptr && grad_s != 0.0) {
                const double g = weight * grad_s;
                auto win = (*dw)[bk].row(2 * j);
                auto wout = (*dw)[bk].row(2 * j + 1);
                for (std::size_t d = 0; d < z.size(); ++d) {
                    win[d] += g * z[d];
                    wout[d] -= g * z[d];
                }
                (*db)[bk][2 * j] += g;
                (*db)[bk][2 * j + 1] -= g;
                if (dz != nullptr) {
                    const auto rin = head.w[bk].row(2 * j);
                    const auto rout = head.w[bk].row(2 * j + 1);
                    for (std::size_t d = 0; d < z.size(); ++d) {
                        (*dz)[d] += g * (rin[d] - rout[d]);
                    }
                }
            }
        }
    }
    return weight * loss;
}

// Gradient of similarity(q', k) with respect to k, where q' is the
// (possibly masked) query actually compared. Returns false when the weight
// is identically zero with no usable gradient (zero vectors).
bool similarity_grad_wrt_key(std::span<const double> q, std::span<const double> k,
                             Similarity sim, double alpha, Vector& out) {
    out.assign(k.size(), 0.0);
    if (sim == Similarity::dot) {
        for (std::size_t d = 0; d < k.size(); ++d) out[d] = q[d];
        return true;
    }
    const double nq = norm2(q);
    const double nk = norm2(k);
    if (nq == 0.0 || nk == 0.0) return false;
    const double inv = 1.0 / (nq * nk);
    const double inv_kk = alpha / (nk * nk);
    for (std::size_t d = 0; d < k.size(); ++d) out[d] = q[d] * inv - k[d] * inv_kk;
    return true;
}

// Same for the masked query u = q (x) mask; chain to the mask is
// d(sim)/du_d * q_d.
bool similarity_grad_wrt_masked_query(std::span<const double> u, std::span<const double> k,
                                      Similarity sim, double alpha, Vector& out) {
    out.assign(u.size(), 0.0);
    if (sim == Similarity::dot) {
        for (std::size_t d = 0; d < u.size(); ++d) out[d] = k[d];
        return true;
    }
    const double nu = norm2(u);
    const double nk = norm2(k);
    if (nu == 0.0 || nk == 0.0) return false;
    const double inv = 1.0 / (nu * nk);
    const double inv_uu = alpha / (nu * nu);
    for (std::size_t d = 0; d < u.size(); ++d) out[d] = k[d] * inv - u[d] * inv_uu;
    return true;
}

Vector softmax(const Vector& logits) {
    Vector p = logits;
    const double mx = *std::max_element(p.begin(), p.end());
    double sum = 0.0;
    for (double& x : p) {
        x = std::exp(x - mx);
        sum += x;
    }
    for (double& x : p) x /= sum;
    return p;
}

} // namespace

OvaLossResult ova_loss(const OvaHead& head, std::span<const double> z, int label) {
    if (label < 0 || static_cast<std::size_t>(label) >= head.total_classes()) {
        throw DimensionError("ova_loss: label outside the seen classes");
    }
    OvaLossResult r;
    for (const auto& wb : head.w) r.dw.emplace_back(wb.rows(), wb.cols());
    for (const auto& bb : head.b) r.db.emplace_back(bb.size(), 0.0);
    r.dz.assign(z.size(), 0.0);
    r.loss = accumulate_ova(head, z, label, 1.0, &r.dw, &r.db, &r.dz);
    return r;
}

LossValue total_loss(const ModelState& model, const PromptPool& pool, const Matrix& inputs,
                     std::span<const int> labels, std::span<const std::size_t> rows,
                     const PrototypeBuffer& prototypes, const TotalLossOptions& opt,
                     Gradients* grads, const ForwardCache* cache) {
    if (rows.empty()) {
        throw DimensionError("total_loss: batch must be non-empty");
    }
    if (pool.blocks.empty()) {
        throw DimensionError("total_loss: prompt pool has no blocks");
    }

    const PromptBlock& current = pool.blocks.back();
    const std::size_t last = pool.blocks.size() - 1;
    const std::size_t m_prompts = pool.prompts_per_task;

    // Effective keys of the current block, projected when a constraint is
    // active. The projection is a fixed linear map during the batch.
    Matrix projected;
    const Matrix* eff_keys = &current.keys;
    if (opt.orthogonality_constraint != nullptr &&
        opt.orthogonality_constraint->columns() > 0) {
        projected = project_onto_complement(current.keys, opt.orthogonality_constraint->basis);
        eff_keys = &projected;
    }

    const std::size_t n_batch = rows.size();
    const std::vector<Prototype> protos =
        opt.ova_weight != 0.0 ? replay_all(prototypes) : std::vector<Prototype>{};
    const std::size_t n_ova = n_batch + protos.size();
    const double ce_scale = opt.ce_weight / static_cast<double>(n_batch);
    const double ova_scale = n_ova > 0 ? opt.ova_weight / static_cast<double>(n_ova) : 0.0;

    LossValue out;
    Vector key_grad_tmp;
    Vector mask_grad_tmp;
    Vector masked_query(pool.key_dim);

    for (std::size_t row : rows) {
        const auto x = inputs.row(row);
        const int y = labels[row];

        // Query and the frozen blocks' prompt contribution.
        Vector query_vec;
        Vector prompt_fixed(pool.prompt_dim, 0.0);
        if (cache != nullptr) {
            query_vec = cache->queries.row_vec(row);
            prompt_fixed = cache->frozen_prompt.row_vec(row);
        } else {
            query_vec = model.encoder.query(x);
            for (std::size_t t = 0; t < last; ++t) {
                for (std::size_t i = 0; i < m_prompts; ++i) {
                    std::span<const double> q = query_vec;
                    if (opt.mode == AttentionMode::coda) {
                        const auto mask = pool.blocks[t].masks->row(i);
                        for (std::size_t d = 0; d < masked_query.size(); ++d) {
                            masked_query[d] = query_vec[d] * mask[d];
                        }
                        q = masked_query;
                    }
                    const double a = similarity(q, pool.blocks[t].keys.row(i), opt.sim);
                    if (a != 0.0) axpy(a, pool.blocks[t].prompts.row(i), prompt_fixed);
                }
            }
        }

        // Current block attention.
        Vector alpha(m_prompts, 0.0);
        const bool live_query = norm2(query_vec) != 0.0;
        Vector prompt_vec = prompt_fixed;
        for (std::size_t i = 0; i < m_prompts; ++i) {
            if (!live_query) break;
            std::span<const double> q = query_vec;
            if (opt.mode == AttentionMode::coda) {
                const auto mask = current.masks->row(i);
                for (std::size_t d = 0; d < masked_query.size(); ++d) {
                    masked_query[d] = query_vec[d] * mask[d];
                }
                q = masked_query;
            }
            alpha[i] = similarity(q, eff_keys->row(i), opt.sim);
            if (alpha[i] != 0.0) axpy(alpha[i], current.prompts.row(i), prompt_vec);
        }

        const SurrogateEncoder::Trace trace = model.encoder.forward(x, prompt_vec);
        Vector dz(trace.z.size(), 0.0);

        // Cross-entropy over all seen classes.
        if (opt.ce_weight != 0.0) {
            const Vector logits = model.ce.logits(trace.z);
            const Vector probs = softmax(logits);
            const double mx = *std::max_element(logits.begin(), logits.end());
            double lse = 0.0;
            for (double l : logits) lse += std::exp(l - mx);
            out.ce += ce_scale * (std::log(lse) + mx - logits[static_cast<std::size_t>(y)]);
            if (grads != nullptr) {
                std::size_t offset = 0;
                for (std::size_t bk = 0; bk < model.ce.w.size(); ++bk) {
                    const bool train_block = !opt.freeze_old_ce || bk + 1 == model.ce.w.size();
                    const std::size_t classes = model.ce.w[bk].rows();
                    for (std::size_t c = 0; c < classes; ++c) {
                        const std::size_t gc = offset + c;
                        const double dl =
                            ce_scale *
                            (probs[gc] - (static_cast<int>(gc) == y ? 1.0 : 0.0));
                        if (train_block) {
                            auto wrow = grads->ce_w[bk].row(c);
                            for (std::size_t d = 0; d < trace.z.size(); ++d) {
                                wrow[d] += dl * trace.z[d];
                            }
                            grads->ce_b[bk][c] += dl;
                        }
                        const auto wr = model.ce.w[bk].row(c);
                        for (std::size_t d = 0; d < trace.z.size(); ++d) dz[d] += dl * wr[d];
                    }
                    offset += classes;
                }
            }
        }

        // OVA on the batch sample.
        if (opt.ova_weight != 0.0) {
            out.ova += accumulate_ova(model.ova, trace.z, y, ova_scale,
                                      grads != nullptr ? &grads->ova_w : nullptr,
                                      grads != nullptr ? &grads->ova_b : nullptr,
                                      grads != nullptr ? &dz : nullptr);
        }

        if (grads == nullptr) continue;

        // dz -> composed prompt -> current block prompts / keys / masks.
        const Vector dprompt = model.encoder.prompt_gradient(trace, dz);
        for (std::size_t i = 0; i < m_prompts; ++i) {
            if (opt.train_prompts && alpha[i] != 0.0) {
                auto pr = grads->prompts.row(i);
                axpy(alpha[i], dprompt, pr);
            }
            if (!live_query) continue;
            const double dalpha = dot(dprompt, current.prompts.row(i));
            if (dalpha == 0.0) continue;
            std::span<const double> q = query_vec;
            if (opt.mode == AttentionMode::coda) {
                const auto mask = current.masks->row(i);
                for (std::size_t d = 0; d < masked_query.size(); ++d) {
                    masked_query[d] = query_vec[d] * mask[d];
                }
                q = masked_query;
            }
            if (opt.train_keys &&
                similarity_grad_wrt_key(q, eff_keys->row(i), opt.sim, alpha[i], key_grad_tmp)) {
                auto kr = grads->keys.row(i);
                axpy(dalpha, key_grad_tmp, kr);
            }
            if (opt.train_masks && opt.mode == AttentionMode::coda &&
                similarity_grad_wrt_masked_query(q, eff_keys->row(i), opt.sim, alpha[i],
                                                 mask_grad_tmp)) {
                auto mr = grads->masks.row(i);
                for (std::size_t d = 0; d < mask_grad_tmp.size(); ++d) {
                    mr[d] += dalpha * mask_grad_tmp[d] * query_vec[d];
                }
            }
        }
    }

    // OVA replay on stored prototypes: head gradients only.
    if (opt.ova_weight != 0.0) {
        for (const Prototype& p : protos) {
            out.ova += accumulate_ova(model.ova, p.features, p.label, ova_scale,
                                      grads != nullptr ? &grads->ova_w : nullptr,
                                      grads != nullptr ? &grads->ova_b : nullptr, nullptr);
        }
    }

    // Chain key gradients back through the projection: the map is symmetric,
    // so the gradient of the raw keys is the projected gradient.
    if (grads != nullptr && opt.train_keys && eff_keys == &projected) {
        grads->keys =
            project_onto_complement(grads->keys, opt.orthogonality_constraint->basis);
    }

    out.total = out.ce + out.ova;
    return out;
}

Vector pooled_features(const ModelState& model, const PromptPool& pool,
                       std::span<const double> x, AttentionMode mode, Similarity sim) {
    const Vector q = model.encoder.query(x);
    const AttentionWeights w = attention_weights(pool, q, mode, sim);
    const Vector prompt = compose_prompt(pool, w);
    return model.encoder.features(x, prompt);
}

namespace {

Vector task_scores_from_features(const ModelState& model, std::span<const double> z) {
    const Vector probs = model.ova.in_dist_probs(z);
    Vector scores;
    scores.reserve(model.ova.block_count());
    std::size_t off = 0;
    for (std::size_t bk = 0; bk < model.ova.block_count(); ++bk) {
        const std::size_t classes = model.ova.w[bk].rows() / 2;
        double best = 0.0;
        for (std::size_t j = 0; j < classes; ++j) best = std::max(best, probs[off + j]);
        scores.push_back(best);
        off += classes;
    }
    return scores;
}

} // namespace

Vector task_scores(const ModelState& model, const PromptPool& pool, std::span<const double> x,
                   const ScoringOptions& opt) {
    if (model.ova.block_count() == 0) {
        throw DimensionError("task_scores: no task has been trained");
    }
    const Vector z = pooled_features(model, pool, x, opt.mode, opt.sim);
    return task_scores_from_features(model, z);
}

Prediction predict(const ModelState& model, const PromptPool& pool, std::span<const double> x,
                   const ScoringOptions& opt) {
    if (model.ce.block_count() == 0) {
        throw DimensionError("predict: no task has been trained");
    }
    const Vector z = pooled_features(model, pool, x, opt.mode, opt.sim);

    Vector adjusted;
    if (opt.rule == PredictionRule::ova_argmax) {
        adjusted = model.ova.in_dist_probs(z);
    } else {
        const Vector logits = model.ce.logits(z);
        adjusted = opt.use_probabilities ? softmax(logits) : logits;
        if (opt.rule == PredictionRule::scored) {
            const Vector scores = task_scores_from_features(model, z);
            std::size_t off = 0;
            for (std::size_t bk = 0; bk < model.ce.block_count(); ++bk) {
                const std::size_t classes = model.ce.w[bk].rows();
                for (std::size_t c = 0; c < classes; ++c) adjusted[off + c] *= scores[bk];
                off += classes;
            }
        }
    }

    std::size_t best = 0;
    for (std::size_t c = 1; c < adjusted.size(); ++c) {
        if (adjusted[c] > adjusted[best]) best = c;
    }
    Prediction p;
    p.class_id = static_cast<int>(best);
    p.task_id = opt.rule == PredictionRule::ova_argmax ? model.ova.block_of_class(best)
                                                       : model.ce.block_of_class(best);
    return p;
}

} // namespace koppa
