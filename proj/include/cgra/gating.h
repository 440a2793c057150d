#pragma once

#include <functional>
#include <span>

#include "cgra/rng.h"
#include "cgra/tensor.h"

namespace cgra::gating {

// Gate network shared by every encoder layer unless the model is configured
// with per-layer gates.
struct GateParams {
    Matrix w;  // d×d, applied as X·W
    Matrix b;  // 1×d

    std::size_t dim() const noexcept { return w.rows(); }
    static GateParams zeros(std::size_t d) { return {Matrix(d, d), Matrix(1, d)}; }
    static GateParams random(std::size_t d, Rng& rng, Real stddev);
};

struct GateCache {
    Matrix x;  // L×d input
    Matrix g;  // L×d gate activations in (0,1)
    std::vector<Real> m;
    bool residual = true;
};

struct GateGrads {
    Matrix dx;  // L×d
    Matrix dw;  // d×d
    Matrix db;  // 1×d
};

struct GateOutput {
    Matrix r;
    GateCache cache;
};

// G = σ(X·W + b);  R = X + G ⊙ (X ⊙ M)  with M broadcast across columns.
// Without the residual path R = G ⊙ (X ⊙ M).
GateOutput gate_forward(const Matrix& x, std::span<const Real> m, const GateParams& params,
                        bool residual = true);

// Exact chain rule. With U = X ⊙ M and dZ = (dR ⊙ U) ⊙ G ⊙ (1 − G):
//   dX = [dR] + dR ⊙ G ⊙ M + dZ·Wᵀ,  dW = Xᵀ·dZ,  db = Σ_rows dZ
GateGrads gate_backward(const Matrix& dr, const GateCache& cache, const GateParams& params);

using BackwardFn = std::function<GateGrads(const Matrix&, const GateCache&, const GateParams&)>;

struct GradientCheckResult {
    Real max_relative_error = 0.0;
    Real max_abs_error = 0.0;
    std::size_t checked = 0;
};

// Central differences on every scalar of X, W and b under the loss sum(R).
// Relative error is |analytic − numeric| / max(|analytic|, |numeric|, 1).
GradientCheckResult gradient_check(const GateParams& params, const Matrix& x,
                                   std::span<const Real> m, Real epsilon, bool residual = true,
                                   const BackwardFn& backward = gate_backward);

struct RandomCheckSummary {
    Real worst_relative_error = 0.0;
    int trials = 0;
    std::size_t checked = 0;  // scalars compared across all trials
};

// Random instances with L in [1, 8], d in [1, 16], M in [1, 3] and the
// residual path on or off, all drawn from `seed`.
RandomCheckSummary random_gradient_checks(std::uint64_t seed, int trials, Real epsilon = 1e-5,
                                          const BackwardFn& backward = gate_backward);

}  // namespace cgra::gating
