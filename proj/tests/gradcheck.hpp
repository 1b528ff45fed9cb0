#pragma once

// Shared finite-difference gradient checking helpers for the test suites.

#include <functional>

#include "aftrack/autodiff.hpp"

namespace aftrack::gradcheck {

using GraphFn = std::function<nn::Var(nn::Tape&, nn::Var)>;

inline Real eval_loss(const Tensor& x, const GraphFn& f) {
    nn::Tape tape(false);
    nn::Var loss = f(tape, tape.constant(x));
    return loss->val.v[0];
}

inline Tensor analytic_grad(const Tensor& x, const GraphFn& f) {
    nn::Parameter p("x", x);
    nn::Tape tape;
    nn::Var loss = f(tape, tape.param(p));
    tape.backward(loss);
    return p.grad;
}

inline Tensor numeric_grad(const Tensor& x, const GraphFn& f, Real step = 1e-3) {
    Tensor g(x.shape);
    Tensor probe = x;
    for (std::int64_t i = 0; i < x.numel(); ++i) {
        const Real saved = probe.v[i];
        probe.v[i] = saved + step;
        const Real up = eval_loss(probe, f);
        probe.v[i] = saved - step;
        const Real down = eval_loss(probe, f);
        probe.v[i] = saved;
        g.v[i] = (up - down) / (2 * step);
    }
    return g;
}

/// Largest relative disagreement between analytic and central-difference
/// gradients (relative to the max magnitude, floored to dodge 0/0).
inline Real max_rel_grad_error(const Tensor& x, const GraphFn& f, Real step = 1e-3) {
    const Tensor a = analytic_grad(x, f);
    const Tensor n = numeric_grad(x, f, step);
    Real worst = 0;
    for (std::int64_t i = 0; i < x.numel(); ++i) {
        const Real denom = std::max({std::abs(a.v[i]), std::abs(n.v[i]), 1e-6});
        worst = std::max(worst, std::abs(a.v[i] - n.v[i]) / denom);
    }
    return worst;
}

} // namespace aftrack::gradcheck
