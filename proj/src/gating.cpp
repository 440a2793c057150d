#include "cgra/gating.h"

#include <cmath>
#include <stdexcept>

#include "cgra/kernels.h"

namespace cgra::gating {

namespace kn = kernels::active;

GateParams GateParams::random(std::size_t d, Rng& rng, Real stddev) {
    GateParams p = zeros(d);
    for (std::size_t i = 0; i < p.w.size(); ++i) p.w[i] = stddev * rng.normal();
    return p;
}

namespace {

void check_params(const GateParams& params, std::size_t d) {
    require_shape(params.w, d, d, "gate W");
    require_shape(params.b, 1, d, "gate b");
}

// Scalar loss used by the checker.
Real loss_of(const GateParams& p, const Matrix& x, std::span<const Real> m, bool residual) {
    const Matrix r = gate_forward(x, m, p, residual).r;
    Real s = 0.0;
    for (std::size_t i = 0; i < r.size(); ++i) s += r[i];
    return s;
}

}  // namespace

GateOutput gate_forward(const Matrix& x, std::span<const Real> m, const GateParams& params,
                        bool residual) {
    const std::size_t len = x.rows(), d = x.cols();
    if (m.size() != len) {
        throw std::invalid_argument("gate_forward: boost length " + std::to_string(m.size()) +
                                    " != sequence length " + std::to_string(len));
    }
    check_params(params, d);

    GateOutput out;
    kn::matmul_nn(x, params.w, out.cache.g);
    Matrix& g = out.cache.g;
    out.r = Matrix(len, d);
    for (std::size_t i = 0; i < len; ++i) {
        for (std::size_t j = 0; j < d; ++j) {
            g(i, j) = kernels::sigmoid(g(i, j) + params.b[j]);
            const Real boosted = g(i, j) * (x(i, j) * m[i]);
            out.r(i, j) = residual ? x(i, j) + boosted : boosted;
        }
    }
    out.cache.x = x;
    out.cache.m.assign(m.begin(), m.end());
    out.cache.residual = residual;
    return out;
}

GateGrads gate_backward(const Matrix& dr, const GateCache& cache, const GateParams& params) {
    const std::size_t len = cache.x.rows(), d = cache.x.cols();
    require_shape(dr, len, d, "gate dR");
    require_shape(cache.g, len, d, "gate cache G");
    if (cache.m.size() != len) throw std::invalid_argument("gate_backward: cache boost length");
    check_params(params, d);

    GateGrads grads;
    grads.dx = Matrix(len, d);
    Matrix dz(len, d);
    for (std::size_t i = 0; i < len; ++i) {
        const Real mi = cache.m[i];
        for (std::size_t j = 0; j < d; ++j) {
            const Real g = cache.g(i, j);
            const Real up = dr(i, j);
            const Real dg = up * cache.x(i, j) * mi;
            dz(i, j) = dg * g * (1.0 - g);
            grads.dx(i, j) = (cache.residual ? up : 0.0) + up * g * mi;
        }
    }
    kn::matmul_nt(dz, params.w, grads.dx, /*accumulate=*/true);
    kn::matmul_tn(cache.x, dz, grads.dw);
    grads.db = Matrix(1, d);
    for (std::size_t i = 0; i < len; ++i) {
        for (std::size_t j = 0; j < d; ++j) grads.db[j] += dz(i, j);
    }
    return grads;
}

GradientCheckResult gradient_check(const GateParams& params, const Matrix& x,
                                   std::span<const Real> m, Real epsilon, bool residual,
                                   const BackwardFn& backward) {
    if (!(epsilon >= 1e-7 && epsilon <= 1e-3)) {
        throw std::invalid_argument("gradient_check: epsilon outside [1e-7, 1e-3]");
    }
    const auto fwd = gate_forward(x, m, params, residual);
    const Matrix ones(x.rows(), x.cols(), 1.0);
    const GateGrads analytic = backward(ones, fwd.cache, params);

    GradientCheckResult result;
    auto compare = [&](Real a, Real n) {
        const Real err = std::abs(a - n);
        const Real scale = std::max({std::abs(a), std::abs(n), Real{1.0}});
        result.max_abs_error = std::max(result.max_abs_error, err);
        result.max_relative_error = std::max(result.max_relative_error, err / scale);
        ++result.checked;
    };

    Matrix xp = x;
    for (std::size_t i = 0; i < xp.size(); ++i) {
        const Real orig = xp[i];
        xp[i] = orig + epsilon;
        const Real up = loss_of(params, xp, m, residual);
        xp[i] = orig - epsilon;
        const Real down = loss_of(params, xp, m, residual);
        xp[i] = orig;
        compare(analytic.dx[i], (up - down) / (2.0 * epsilon));
    }

    GateParams pp = params;
    auto check_tensor = [&](Matrix& t, const Matrix& grad) {
        for (std::size_t i = 0; i < t.size(); ++i) {
            const Real orig = t[i];
            t[i] = orig + epsilon;
            const Real up = loss_of(pp, x, m, residual);
            t[i] = orig - epsilon;
            const Real down = loss_of(pp, x, m, residual);
            t[i] = orig;
            compare(grad[i], (up - down) / (2.0 * epsilon));
        }
    };
    check_tensor(pp.w, analytic.dw);
    check_tensor(pp.b, analytic.db);
    return result;
}

RandomCheckSummary random_gradient_checks(std::uint64_t seed, int trials, Real epsilon,
                                          const BackwardFn& backward) {
    if (trials < 1) throw std::invalid_argument("random_gradient_checks: trials must be >= 1");
    Rng rng(seed);
    RandomCheckSummary out;
    for (int t = 0; t < trials; ++t) {
        const std::size_t len = 1 + rng.uniform_index(8);
        const std::size_t d = 1 + rng.uniform_index(16);
        GateParams params = GateParams::random(d, rng, 0.5);
        for (std::size_t i = 0; i < d; ++i) params.b[i] = 0.5 * rng.normal();
        Matrix x(len, d);
        for (std::size_t i = 0; i < x.size(); ++i) x[i] = rng.normal();
        std::vector<Real> m(len);
        for (Real& v : m) v = 1.0 + 2.0 * rng.uniform();
        const bool residual = rng.uniform() < 0.5;
        const GradientCheckResult r = gradient_check(params, x, m, epsilon, residual, backward);
        out.worst_relative_error = std::max(out.worst_relative_error, r.max_relative_error);
        out.checked += r.checked;
        ++out.trials;
    }
    return out;
}

}  // namespace cgra::gating
