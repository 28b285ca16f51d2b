#ifndef KOPPA_ADAM_HPP
#define KOPPA_ADAM_HPP

#include <map>
#include <string>

#include "koppa/matrix.hpp"

namespace koppa {

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

    friend bool operator==(const AdamConfig&, const AdamConfig&) = default;
};

// lr(epoch) = base * 0.5 * (1 + cos(pi * epoch / total)).
double cosine_lr(double base, std::size_t epoch, std::size_t total_epochs);

// Bias-corrected Adam over named parameter tensors. Tensors register lazily
// on first step, so new pool blocks and head blocks join as tasks arrive.
class Adam {
public:
    explicit Adam(const AdamConfig& cfg = {}) : cfg_(cfg) {}

    const AdamConfig& config() const { return cfg_; }

    // One update of `param` in place. `lr_scale` multiplies the base rate
    // (the cosine schedule enters here). Throws NumericalError on NaN/Inf
    // gradients; parameters are never polluted.
    void step(const std::string& name, std::span<double> param, std::span<const double> grad,
              double lr_scale = 1.0);

    void reset() { slots_.clear(); }

private:
    struct Slot {
        Vector m;
        Vector v;
        long steps = 0;
    };
    AdamConfig cfg_;
    std::map<std::string, Slot> slots_;
};

} // namespace koppa

#endif
