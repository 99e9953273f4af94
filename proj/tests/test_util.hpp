#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "vary/graph.hpp"

namespace vary::testutil {

// max over checked entries of |analytic - numeric| / max(1, |a|, |n|)
inline double gradcheck(std::vector<Parameter*> params,
                        const std::function<double()>& loss_fn,
                        const std::function<void()>& backward_fn, int max_per_tensor = 64,
                        double h = 1e-5) {
    for (Parameter* p : params) {
        p->ensure_grad();
        p->zero_grad();
    }
    backward_fn();
    double worst = 0.0;
    for (Parameter* p : params) {
        const size_t n = p->value.numel();
        const size_t stride = n <= static_cast<size_t>(max_per_tensor)
                                  ? 1
                                  : n / static_cast<size_t>(max_per_tensor);
        for (size_t i = 0; i < n; i += stride) {
            const double saved = p->value[i];
            p->value[i] = saved + h;
            const double up = loss_fn();
            p->value[i] = saved - h;
            const double down = loss_fn();
            p->value[i] = saved;
            const double numeric = (up - down) / (2.0 * h);
            const double analytic = p->grad[i];
            const double denom = std::max({1.0, std::fabs(numeric), std::fabs(analytic)});
            worst = std::max(worst, std::fabs(analytic - numeric) / denom);
        }
    }
    return worst;
}

}  // namespace vary::testutil
