#pragma once

// Central-difference gradient checking against the tape's analytic gradients.

#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "tkr/autodiff.hpp"

namespace fixtures {

// `build` constructs a scalar loss on a fresh tape from the current contents
// of `params`. Probes `per_param` random entries of every parameter that
// received a nonzero (or zero) analytic gradient and returns the worst
// relative error at step h.
inline double grad_check(tkr::ParamStore& params,
                         const std::function<tkr::Var(tkr::Tape&)>& build,
                         std::mt19937_64& rng, int per_param = 4, double h = 1e-5) {
    auto forward = [&]() {
        tkr::Tape t;
        tkr::Var l = build(t);
        double v = t.val(l).a[0];
        t.clear();
        return v;
    };

    params.zero_grads();
    {
        tkr::Tape t;
        t.backward(build(t));
    }

    double worst = 0.0;
    for (const std::string& name : params.names) {
        tkr::Tensor& p = params.value(name);
        const tkr::Tensor& g = params.grad(name);
        for (int k = 0; k < per_param; ++k) {
            int i = static_cast<int>(rng() % static_cast<uint64_t>(p.size()));
            double saved = p.a[i];
            p.a[i] = saved + h;
            double up = forward();
            p.a[i] = saved - h;
            double down = forward();
            p.a[i] = saved;
            double fd = (up - down) / (2.0 * h);
            double an = g.a[i];
            double err = std::fabs(fd - an) / std::max({std::fabs(fd), std::fabs(an), 1e-4});
            worst = std::max(worst, err);
        }
    }
    return worst;
}

}  // namespace fixtures
