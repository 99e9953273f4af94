#include "vary/optim.hpp"

#include <cmath>

namespace vary {

AdamW::AdamW(std::vector<Parameter*> params, AdamWConfig cfg)
    : params_(std::move(params)), cfg_(cfg) {}

double AdamW::clip_global_norm(double max_norm) {
    double sq = 0.0;
    for (Parameter* p : params_) {
        if (!p->trainable || !p->grad.same_shape(p->value)) continue;
        for (size_t i = 0; i < p->grad.numel(); ++i) sq += p->grad[i] * p->grad[i];
    }
    const double norm = std::sqrt(sq);
    if (max_norm > 0.0 && norm > max_norm) {
        const double s = max_norm / norm;
        for (Parameter* p : params_) {
            if (!p->trainable || !p->grad.same_shape(p->value)) continue;
            for (size_t i = 0; i < p->grad.numel(); ++i) p->grad[i] *= s;
        }
    }
    return norm;
}

void AdamW::step(double lr) {
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (Parameter* p : params_) {
        if (!p->trainable) continue;
        p->ensure_grad();
        if (!p->adam_m.same_shape(p->value)) {
            p->adam_m = Tensor::zeros(p->value.shape());
            p->adam_v = Tensor::zeros(p->value.shape());
        }
        for (size_t i = 0; i < p->value.numel(); ++i) {
            const double g = p->grad[i];
            p->adam_m[i] = cfg_.beta1 * p->adam_m[i] + (1.0 - cfg_.beta1) * g;
            p->adam_v[i] = cfg_.beta2 * p->adam_v[i] + (1.0 - cfg_.beta2) * g * g;
            const double mhat = p->adam_m[i] / bc1;
            const double vhat = p->adam_v[i] / bc2;
            p->value[i] -= lr * (mhat / (std::sqrt(vhat) + cfg_.eps) + cfg_.weight_decay * p->value[i]);
        }
    }
}

void AdamW::zero_grad() {
    for (Parameter* p : params_) p->zero_grad();
}

double cosine_lr(double peak, long step, long total_steps) {
    if (total_steps <= 0) return peak;
    if (step >= total_steps) step = total_steps - 1;
    const double frac = static_cast<double>(step) / static_cast<double>(total_steps);
    return peak * 0.5 * (1.0 + std::cos(3.141592653589793238462643383279502884 * frac));
}

}  // namespace vary
