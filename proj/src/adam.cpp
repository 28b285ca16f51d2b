#include "koppa/adam.hpp"

#include <cmath>
#include <numbers>

#include "koppa/error.hpp"

namespace koppa {

double cosine_lr(double base, std::size_t epoch, std::size_t total_epochs) {
    if (total_epochs == 0) return base;
    const double frac = static_cast<double>(epoch) / static_cast<double>(total_epochs);
    return base * 0.5 * (1.0 + std::cos(std::numbers::pi * frac));
}

void Adam::step(const std::string& name, std::span<double> param, std::span<const double> grad,
                double lr_scale) {
    if (param.size() != grad.size()) {
        throw DimensionError("Adam::step: parameter and gradient sizes differ");
    }
    if (!all_finite(grad)) {
        throw NumericalError("Adam::step: gradient for '" + name + "' contains NaN or Inf");
    }
    Slot& slot = slots_[name];
    if (slot.m.empty()) {
        slot.m.assign(param.size(), 0.0);
        slot.v.assign(param.size(), 0.0);
    } else if (slot.m.size() != param.size()) {
        throw DimensionError("Adam::step: tensor '" + name + "' changed size");
    }

    slot.steps += 1;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(slot.steps));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(slot.steps));
    const double lr = cfg_.lr * lr_scale;
    for (std::size_t i = 0; i < param.size(); ++i) {
        slot.m[i] = cfg_.beta1 * slot.m[i] + (1.0 - cfg_.beta1) * grad[i];
        slot.v[i] = cfg_.beta2 * slot.v[i] + (1.0 - cfg_.beta2) * grad[i] * grad[i];
        const double mhat = slot.m[i] / bc1;
        const double vhat = slot.v[i] / bc2;
        param[i] -= lr * mhat / (std::sqrt(vhat) + cfg_.eps);
    }
}

} // namespace koppa
