#pragma once

#include <cstdint>
#include <vector>

#include "vary/graph.hpp"

namespace vary {

struct AdamWConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;
};

// Decoupled weight decay Adam. Skips non-trainable parameters entirely.
class AdamW {
public:
    AdamW(std::vector<Parameter*> params, AdamWConfig cfg);

    // Scales gradients so their global L2 norm is at most max_norm.
    // Returns the pre-clip norm. max_norm <= 0 disables clipping.
    double clip_global_norm(double max_norm);

    void step(double lr);
    void zero_grad();

    long steps_taken() const { return t_; }
    const std::vector<Parameter*>& params() const { return params_; }

private:
    std::vector<Parameter*> params_;
    AdamWConfig cfg_;
    long t_ = 0;
};

// lr(step) = peak * 0.5 * (1 + cos(pi * step / total)), step in [0, total)
double cosine_lr(double peak, long step, long total_steps);

}  // namespace vary
