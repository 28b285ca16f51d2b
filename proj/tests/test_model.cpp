#include <doctest.h>

#include <cmath>
#include <functional>

#include "koppa/error.hpp"
#include "koppa/model.hpp"
#include "koppa/rng.hpp"
#include "koppa/svd.hpp"
#include "support/oracles.hpp"

using namespace koppa;

namespace {

EncoderDims small_dims() {
    EncoderDims d;
    d.d_in = 5;
    d.hidden = 6;
    d.d_q = 7;
    d.d_z = 5;
    d.d_p = 4;
    return d;
}

struct Fixture {
    EncoderDims dims = small_dims();
    ModelState model;
    PromptPool pool;
    SubspaceBasis basis = SubspaceBasis::empty(7);
    PrototypeBuffer buffer;
    Matrix inputs;
    std::vector<int> labels;
    std::vector<std::size_t> rows;

    explicit Fixture(AttentionMode mode, std::uint64_t seed = 1234) {
        model.encoder = SurrogateEncoder(dims, seed);
        pool.key_dim = dims.d_q;
        pool.prompt_dim = dims.d_p;
        pool.prompts_per_task = 2;
        pool.add_block(mode, seed + 1);
        pool.add_block(mode, seed + 2);
        pool.blocks[0].frozen = true;
        model.ce.add_block(2, dims.d_z, seed + 3);
        model.ce.add_block(2, dims.d_z, seed + 4);
        model.ova.add_block(2, dims.d_z, seed + 5);
        model.ova.add_block(2, dims.d_z, seed + 6);

        Rng rng(seed + 7);
        Matrix queries(dims.d_q, 3);
        for (double& x : queries.data()) x = rng.normal();
        basis = update(basis, queries, 0.999);

        buffer.capacity_per_task = 8;
        buffer.feature_dim = dims.d_z;
        std::vector<Prototype> feats;
        for (int i = 0; i < 3; ++i) {
            Vector f(dims.d_z);
            for (double& x : f) x = rng.normal();
            feats.push_back({std::move(f), i % 2});
        }
        buffer = capture(buffer, feats, 3, seed + 8);

        inputs = Matrix(3, dims.d_in);
        for (double& x : inputs.data()) x = rng.normal();
        labels = {2, 3, 2};
        rows = {0, 1, 2};
    }

    TotalLossOptions options(bool constrained) const {
        TotalLossOptions opt;
        opt.mode = pool.blocks[0].masks ? AttentionMode::coda : AttentionMode::koppa;
        opt.train_masks = pool.blocks[0].masks.has_value();
        if (constrained) opt.orthogonality_constraint = &basis;
        return opt;
    }

    double eval(const TotalLossOptions& opt) const {
        return total_loss(model, pool, inputs, labels, rows, buffer, opt, nullptr).total;
    }
};

double rel_err(double a, double b) {
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-6});
}

// Central finite difference through an arbitrary parameter cell.
double fd(Fixture& fx, const TotalLossOptions& opt, double* cell, double h = 1e-6) {
    const double saved = *cell;
    *cell = saved + h;
    const double up = fx.eval(opt);
    *cell = saved - h;
    const double down = fx.eval(opt);
    *cell = saved;
    return (up - down) / (2.0 * h);
}

} // namespace

TEST_CASE("query path is deterministic, prompt-free and matches tanh(Wq x)") {
    const EncoderDims dims = small_dims();
    const SurrogateEncoder enc(dims, 99);

    for (double v : enc.query(Vector(dims.d_in, 0.0))) CHECK(v == 0.0);

    Rng rng(4);
    Vector x(dims.d_in);
    for (double& v : x) v = rng.normal();
    const Vector q1 = enc.query(x);
    const Vector q2 = enc.query(x);
    CHECK(q1 == q2);
    const Vector lin = matvec(enc.w_q, x);
    for (std::size_t i = 0; i < q1.size(); ++i) {
        CHECK(q1[i] == doctest::Approx(std::tanh(lin[i])).epsilon(1e-12));
    }
}

TEST_CASE("features with a zero prompt equal the prompt-free pass") {
    const EncoderDims dims = small_dims();
    const SurrogateEncoder enc(dims, 100);
    Rng rng(5);
    Vector x(dims.d_in);
    for (double& v : x) v = rng.normal();
    const Vector with_zero = enc.features(x, Vector(dims.d_p, 0.0));
    const Vector without = enc.features(x, {});
    CHECK(with_zero == without);
}

TEST_CASE("feature jacobian in the prompt matches finite differences") {
    const EncoderDims dims = small_dims();
    const SurrogateEncoder enc(dims, 101);
    Rng rng(6);
    Vector x(dims.d_in), p(dims.d_p);
    for (double& v : x) v = rng.normal();
    for (double& v : p) v = rng.normal();

    const auto trace = enc.forward(x, p);
    for (std::size_t j = 0; j < dims.d_z; ++j) {
        Vector dz(dims.d_z, 0.0);
        dz[j] = 1.0;
        const Vector analytic = enc.prompt_gradient(trace, dz);
        for (std::size_t i = 0; i < dims.d_p; ++i) {
            const double numeric = oracles::central_difference(
                [&](double v) {
                    Vector pp = p;
                    pp[i] = v;
                    return enc.features(x, pp)[j];
                },
                p[i], 1e-5);
            CHECK(rel_err(analytic[i], numeric) < 1e-4);
        }
    }
}

TEST_CASE("ova_loss approaches zero under perfect scores") {
    OvaHead head;
    head.add_block(2, 3, 1);
    // Saturate: in-logit hugely positive for class 0, negative otherwise.
    head.w[0] = Matrix(4, 3);
    head.b[0] = {50.0, -50.0, -50.0, 50.0};  // class 0 in, class 1 out
    const Vector z(3, 0.0);
    const auto r = ova_loss(head, z, 0);
    CHECK(r.loss < 1e-12);
}

TEST_CASE("ova_loss of indifferent scores is 2 ln 2 for two classes") {
    OvaHead head;
    head.add_block(2, 3, 2);
    head.w[0] = Matrix(4, 3);          // zero weights
    head.b[0] = Vector(4, 0.0);        // zero biases -> p = 0.5 everywhere
    const Vector z{0.3, -0.2, 0.9};
    const auto r = ova_loss(head, z, 1);
    CHECK(r.loss == doctest::Approx(2.0 * std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("ova_loss matches an independent scalar reimplementation") {
    OvaHead head;
    head.add_block(2, 4, 3);
    head.add_block(3, 4, 4);
    Rng rng(9);
    Vector z(4);
    for (double& v : z) v = rng.normal();
    const int y = 3;
    const auto r = ova_loss(head, z, y);

    double oracle = 0.0;
    int c = 0;
    for (std::size_t bk = 0; bk < head.w.size(); ++bk) {
        const std::size_t classes = head.w[bk].rows() / 2;
        for (std::size_t j = 0; j < classes; ++j, ++c) {
            const double a = koppa::dot(head.w[bk].row(2 * j), z) + head.b[bk][2 * j];
            const double b = koppa::dot(head.w[bk].row(2 * j + 1), z) + head.b[bk][2 * j + 1];
            const double p = std::exp(a) / (std::exp(a) + std::exp(b));
            if (c == y) {
                oracle -= std::log(std::max(p, 1e-12));
            } else {
                oracle -= std::log(std::max(1.0 - p, 1e-12));
            }
        }
    }
    CHECK(std::abs(r.loss - oracle) < 1e-10);
}

TEST_CASE("ova per-class probabilities form an exact two-way softmax") {
    OvaHead head;
    head.add_block(3, 4, 11);
    Rng rng(12);
    Vector z(4);
    for (double& v : z) v = rng.normal();
    const Vector probs = head.in_dist_probs(z);
    const Vector margins = head.margins(z);
    for (std::size_t c = 0; c < 3; ++c) {
        const double in = probs[c];
        const double out = 1.0 - probs[c];
        CHECK(in + out == 1.0);  // exact by construction
        const double direct = std::exp(margins[c]) / (std::exp(margins[c]) + 1.0);
        CHECK(in == doctest::Approx(direct).epsilon(1e-12));
    }
}

TEST_CASE("ova_loss head gradients match finite differences") {
    OvaHead head;
    head.add_block(2, 3, 21);
    Rng rng(22);
    Vector z(3);
    for (double& v : z) v = rng.normal();
    const auto r = ova_loss(head, z, 1);
    for (std::size_t row = 0; row < 4; ++row) {
        for (std::size_t col = 0; col < 3; ++col) {
            const double numeric = oracles::central_difference(
                [&](double v) {
                    OvaHead h2 = head;
                    h2.w[0](row, col) = v;
                    return ova_loss(h2, z, 1).loss;
                },
                head.w[0](row, col));
            CHECK(rel_err(r.dw[0](row, col), numeric) < 1e-4);
        }
    }
}

TEST_CASE("total_loss with an empty buffer covers the batch only") {
    Fixture fx(AttentionMode::koppa);
    const PrototypeBuffer empty{{}, 8, fx.dims.d_z};
    TotalLossOptions opt = fx.options(true);
    const LossValue with_protos =
        total_loss(fx.model, fx.pool, fx.inputs, fx.labels, fx.rows, fx.buffer, opt, nullptr);
    const LossValue no_protos =
        total_loss(fx.model, fx.pool, fx.inputs, fx.labels, fx.rows, empty, opt, nullptr);
    CHECK(with_protos.ova != doctest::Approx(no_protos.ova));
    CHECK(no_protos.total == doctest::Approx(no_protos.ce + no_protos.ova));
}

TEST_CASE("zero OVA weight reduces the objective to plain cross-entropy") {
    Fixture fx(AttentionMode::koppa);
    TotalLossOptions opt = fx.options(true);
    opt.ova_weight = 0.0;
    const LossValue v =
        total_loss(fx.model, fx.pool, fx.inputs, fx.labels, fx.rows, fx.buffer, opt, nullptr);
    CHECK(v.ova == 0.0);
    CHECK(v.total == doctest::Approx(v.ce));
}

TEST_CASE("total_loss gradients match finite differences (koppa, projected keys)") {
    Fixture fx(AttentionMode::koppa);
    TotalLossOptions opt = fx.options(true);
    Gradients g = Gradients::zeros_like(fx.model, fx.pool, false);
    total_loss(fx.model, fx.pool, fx.inputs, fx.labels, fx.rows, fx.buffer, opt, &g);

    Matrix& keys = fx.pool.blocks[1].keys;
    for (std::size_t i = 0; i < keys.size(); ++i) {
        CHECK(rel_err(g.keys.data()[i], fd(fx, opt, &keys.data()[i])) < 1e-4);
    }
    Matrix& prompts = fx.pool.blocks[1].prompts;
    for (std::size_t i = 0; i < prompts.size(); ++i) {
        CHECK(rel_err(g.prompts.data()[i], fd(fx, opt, &prompts.data()[i])) < 1e-4);
    }
    for (std::size_t bk = 0; bk < 2; ++bk) {
        for (std::size_t i = 0; i < fx.model.ce.w[bk].size(); ++i) {
            CHECK(rel_err(g.ce_w[bk].data()[i], fd(fx, opt, &fx.model.ce.w[bk].data()[i])) <
                  1e-4);
        }
        for (std::size_t i = 0; i < fx.model.ova.w[bk].size(); ++i) {
            CHECK(rel_err(g.ova_w[bk].data()[i], fd(fx, opt, &fx.model.ova.w[bk].data()[i])) <
                  1e-4);
        }
        for (std::size_t i = 0; i < fx.model.ce.b[bk].size(); ++i) {
            CHECK(rel_err(g.ce_b[bk][i], fd(fx, opt, &fx.model.ce.b[bk][i])) < 1e-4);
        }
        for (std::size_t i = 0; i < fx.model.ova.b[bk].size(); ++i) {
            CHECK(rel_err(g.ova_b[bk][i], fd(fx, opt, &fx.model.ova.b[bk][i])) < 1e-4);
        }
    }
}

TEST_CASE("total_loss gradients match finite differences (coda, masks)") {
    Fixture fx(AttentionMode::coda, 555);
    TotalLossOptions opt = fx.options(false);
    Gradients g = Gradients::zeros_like(fx.model, fx.pool, true);
    total_loss(fx.model, fx.pool, fx.inputs, fx.labels, fx.rows, fx.buffer, opt, &g);

    Matrix& keys = fx.pool.blocks[1].keys;
    for (std::size_t i = 0; i < keys.size(); ++i) {
        CHECK(rel_err(g.keys.data()[i], fd(fx, opt, &keys.data()[i])) < 1e-4);
    }
    Matrix& masks = *fx.pool.blocks[1].masks;
    for (std::size_t i = 0; i < masks.size(); ++i) {
        CHECK(rel_err(g.masks.data()[i], fd(fx, opt, &masks.data()[i])) < 1e-4);
    }
}

TEST_CASE("a full-span constraint kills attention and key gradients") {
    Fixture fx(AttentionMode::koppa);
    fx.basis.basis = Matrix::identity(fx.dims.d_q);
    fx.basis.task_count = 1;
    TotalLossOptions opt = fx.options(true);
    Gradients g = Gradients::zeros_like(fx.model, fx.pool, false);
    total_loss(fx.model, fx.pool, fx.inputs, fx.labels, fx.rows, fx.buffer, opt, &g);
    for (double v : g.keys.data()) CHECK(std::abs(v) < 1e-12);
}

TEST_CASE("total_loss rejects an empty batch") {
    Fixture fx(AttentionMode::koppa);
    const std::vector<std::size_t> none;
    CHECK_THROWS_AS(total_loss(fx.model, fx.pool, fx.inputs, fx.labels, none, fx.buffer,
                               fx.options(true), nullptr),
                    koppa::DimensionError);
}

TEST_CASE("task_scores lie in [0,1] and saturate under extreme heads") {
    Fixture fx(AttentionMode::koppa);
    ScoringOptions opt;
    const Vector scores = task_scores(fx.model, fx.pool, fx.inputs.row(0), opt);
    REQUIRE(scores.size() == 2);
    for (double s : scores) {
        CHECK(s >= 0.0);
        CHECK(s <= 1.0);
    }

    // Saturated in-logit bias makes the matching task's score approach 1.
    fx.model.ova.b[0] = {60.0, -60.0, 60.0, -60.0};
    const Vector sat = task_scores(fx.model, fx.pool, fx.inputs.row(0), opt);
    CHECK(sat[0] == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("task_scores equal a manual two-way softmax maximum") {
    Fixture fx(AttentionMode::koppa, 777);
    ScoringOptions opt;
    const Vector z = pooled_features(fx.model, fx.pool, fx.inputs.row(1),
                                     AttentionMode::koppa, Similarity::cosine);
    const Vector scores = task_scores(fx.model, fx.pool, fx.inputs.row(1), opt);
    int c = 0;
    for (std::size_t bk = 0; bk < 2; ++bk) {
        double manual = 0.0;
        for (std::size_t j = 0; j < 2; ++j, ++c) {
            const double a = koppa::dot(fx.model.ova.w[bk].row(2 * j), z) +
                             fx.model.ova.b[bk][2 * j];
            const double b = koppa::dot(fx.model.ova.w[bk].row(2 * j + 1), z) +
                             fx.model.ova.b[bk][2 * j + 1];
            manual = std::max(manual, std::exp(a) / (std::exp(a) + std::exp(b)));
        }
        CHECK(scores[bk] == doctest::Approx(manual).epsilon(1e-12));
    }
}

TEST_CASE("uniform task scores leave the argmax of the CE head unchanged") {
    Fixture fx(AttentionMode::koppa, 888);
    // Zero OVA head: every margin 0, every task score exactly 0.5.
    for (auto& w : fx.model.ova.w) w = Matrix(w.rows(), w.cols());
    for (auto& b : fx.model.ova.b) b.assign(b.size(), 0.0);
    ScoringOptions scored;
    ScoringOptions plain;
    plain.rule = PredictionRule::ce_argmax;
    for (std::size_t r = 0; r < fx.inputs.rows(); ++r) {
        CHECK(predict(fx.model, fx.pool, fx.inputs.row(r), scored).class_id ==
              predict(fx.model, fx.pool, fx.inputs.row(r), plain).class_id);
    }
}

TEST_CASE("a one-hot task score confines the prediction to that task") {
    Fixture fx(AttentionMode::koppa, 999);
    // Task 0 saturated in-distribution, task 1 saturated out.
    fx.model.ova.w[0] = Matrix(4, fx.dims.d_z);
    fx.model.ova.w[1] = Matrix(4, fx.dims.d_z);
    fx.model.ova.b[0] = {60.0, -60.0, 60.0, -60.0};
    fx.model.ova.b[1] = {-60.0, 60.0, -60.0, 60.0};
    ScoringOptions opt;
    for (std::size_t r = 0; r < fx.inputs.rows(); ++r) {
        const Prediction p = predict(fx.model, fx.pool, fx.inputs.row(r), opt);
        CHECK(p.task_id == 0);
        CHECK(p.class_id < 2);
    }
}

TEST_CASE("predict agrees with brute-force enumeration of adjusted scores") {
    Fixture fx(AttentionMode::koppa, 1111);
    ScoringOptions opt;
    for (std::size_t r = 0; r < fx.inputs.rows(); ++r) {
        const Vector z = pooled_features(fx.model, fx.pool, fx.inputs.row(r),
                                         AttentionMode::koppa, Similarity::cosine);
        const Vector logits = fx.model.ce.logits(z);
        // manual softmax
        double mx = logits[0];
        for (double l : logits) mx = std::max(mx, l);
        Vector probs(logits.size());
        double sum = 0.0;
        for (std::size_t c = 0; c < logits.size(); ++c) {
            probs[c] = std::exp(logits[c] - mx);
            sum += probs[c];
        }
        for (double& p : probs) p /= sum;
        const Vector scores = task_scores(fx.model, fx.pool, fx.inputs.row(r), opt);
        std::size_t best = 0;
        for (std::size_t c = 0; c < probs.size(); ++c) {
            const double adj_c = scores[fx.model.ce.block_of_class(c)] * probs[c];
            const double adj_b = scores[fx.model.ce.block_of_class(best)] * probs[best];
            if (adj_c > adj_b) best = c;
        }
        CHECK(predict(fx.model, fx.pool, fx.inputs.row(r), opt).class_id ==
              static_cast<int>(best));
    }
}
