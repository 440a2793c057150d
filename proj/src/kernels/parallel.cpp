#include <omp.h>

#include <algorithm>
#include <cmath>

#include "cgra/kernels.h"

namespace cgra::kernels {

namespace {
// Below this many multiply-adds a parallel region costs more than it saves.
constexpr std::size_t kMinParallelWork = 1 << 14;
}  // namespace

Real sigmoid(Real x) noexcept { return 1.0 / (1.0 + std::exp(-x)); }

int thread_count() { return omp_get_max_threads(); }
void set_thread_count(int n) { omp_set_num_threads(n < 1 ? 1 : n); }

namespace parallel {

void matmul_nt(const Matrix& a, const Matrix& b, Matrix& c, bool accumulate) {
    const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
    require_shape(b, n, k, "matmul_nt rhs");
    if (!accumulate) c = Matrix(m, n);
    require_shape(c, m, n, "matmul_nt out");
    const bool go = m * n * k >= kMinParallelWork;
#pragma omp parallel for schedule(static) if (go)
    for (std::size_t i = 0; i < m; ++i) {
        const Real* ai = a.data() + i * k;
        Real* ci = c.data() + i * n;
        for (std::size_t j = 0; j < n; ++j) {
            const Real* bj = b.data() + j * k;
            Real acc = 0.0;
            for (std::size_t p = 0; p < k; ++p) acc += ai[p] * bj[p];
            ci[j] += acc;
        }
    }
}

void matmul_nn(const Matrix& a, const Matrix& b, Matrix& c, bool accumulate) {
    const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
    require_shape(b, k, n, "matmul_nn rhs");
    if (!accumulate) c = Matrix(m, n);
    require_shape(c, m, n, "matmul_nn out");
    const bool go = m * n * k >= kMinParallelWork;
#pragma omp parallel for schedule(static) if (go)
    for (std::size_t i = 0; i < m; ++i) {
        const Real* ai = a.data() + i * k;
        Real* ci = c.data() + i * n;
        for (std::size_t j = 0; j < n; ++j) {
            Real acc = 0.0;
            for (std::size_t p = 0; p < k; ++p) acc += ai[p] * b.data()[p * n + j];
            ci[j] += acc;
        }
    }
}

void matmul_tn(const Matrix& a, const Matrix& b, Matrix& c, bool accumulate) {
    const std::size_t k = a.rows(), m = a.cols(), n = b.cols();
    require_shape(b, k, n, "matmul_tn rhs");
    if (!accumulate) c = Matrix(m, n);
    require_shape(c, m, n, "matmul_tn out");
    const bool go = m * n * k >= kMinParallelWork;
#pragma omp parallel for schedule(static) if (go)
    for (std::size_t i = 0; i < m; ++i) {
        Real* ci = c.data() + i * n;
        for (std::size_t j = 0; j < n; ++j) {
            Real acc = 0.0;
            for (std::size_t p = 0; p < k; ++p) acc += a.data()[p * m + i] * b.data()[p * n + j];
            ci[j] += acc;
        }
    }
}

void softmax_rows(Matrix& x) {
    const std::size_t n = x.cols();
    const bool go = x.size() >= kMinParallelWork / 8;
#pragma omp parallel for schedule(static) if (go)
    for (std::size_t i = 0; i < x.rows(); ++i) {
        Real* xi = x.data() + i * n;
        Real mx = xi[0];
        for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, xi[j]);
        Real sum = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            xi[j] = std::exp(xi[j] - mx);
            sum += xi[j];
        }
        for (std::size_t j = 0; j < n; ++j) xi[j] /= sum;
    }
}

void layer_norm_rows(const Matrix& x, Matrix& y, std::vector<Real>& rstd, Real eps) {
    const std::size_t n = x.cols();
    y = Matrix(x.rows(), n);
    rstd.assign(x.rows(), 0.0);
    const bool go = x.size() >= kMinParallelWork;
#pragma omp parallel for schedule(static) if (go)
    for (std::size_t i = 0; i < x.rows(); ++i) {
        const Real* xi = x.data() + i * n;
        Real* yi = y.data() + i * n;
        Real mean = 0.0;
        for (std::size_t j = 0; j < n; ++j) mean += xi[j];
        mean /= static_cast<Real>(n);
        Real var = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            const Real dv = xi[j] - mean;
            var += dv * dv;
        }
        var /= static_cast<Real>(n);
        const Real r = 1.0 / std::sqrt(var + eps);
        rstd[i] = r;
        for (std::size_t j = 0; j < n; ++j) yi[j] = (xi[j] - mean) * r;
    }
}

void layer_norm_backward(const Matrix& y, const std::vector<Real>& rstd, const Matrix& dy,
                         Matrix& dx) {
    const std::size_t n = y.cols();
    dx = Matrix(y.rows(), n);
    const bool go = y.size() >= kMinParallelWork;
#pragma omp parallel for schedule(static) if (go)
    for (std::size_t i = 0; i < y.rows(); ++i) {
        const Real* yi = y.data() + i * n;
        const Real* gi = dy.data() + i * n;
        Real* di = dx.data() + i * n;
        Real mean_dy = 0.0, mean_dyy = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            mean_dy += gi[j];
            mean_dyy += gi[j] * yi[j];
        }
        mean_dy /= static_cast<Real>(n);
        mean_dyy /= static_cast<Real>(n);
        for (std::size_t j = 0; j < n; ++j) di[j] = rstd[i] * (gi[j] - mean_dy - yi[j] * mean_dyy);
    }
}

void gelu(const Matrix& x, Matrix& y) {
    y = Matrix(x.rows(), x.cols());
    const std::size_t total = x.size();
    const bool go = total >= kMinParallelWork;
#pragma omp parallel for schedule(static) if (go)
    for (std::size_t i = 0; i < total; ++i) {
        y[i] = 0.5 * x[i] * (1.0 + std::erf(x[i] * M_SQRT1_2));
    }
}

void gelu_backward(const Matrix& x, const Matrix& dy, Matrix& dx) {
    dx = Matrix(x.rows(), x.cols());
    const std::size_t total = x.size();
    const bool go = total >= kMinParallelWork;
#pragma omp parallel for schedule(static) if (go)
    for (std::size_t i = 0; i < total; ++i) {
        const Real cdf = 0.5 * (1.0 + std::erf(x[i] * M_SQRT1_2));
        const Real pdf = std::exp(-0.5 * x[i] * x[i]) * (0.5 * M_2_SQRTPI * M_SQRT1_2);
        dx[i] = dy[i] * (cdf + x[i] * pdf);
    }
}

void disentangled_scores(const Matrix& q, const Matrix& k, const Matrix& qr, const Matrix& kr,
                         std::size_t col, std::size_t head_dim, int span, Real scale, Matrix& s) {
    const std::size_t len = q.rows();
    const std::size_t d = q.cols();
    s = Matrix(len, len);
    const bool go = len * len * head_dim >= kMinParallelWork;
#pragma omp parallel for schedule(static) if (go)
    for (std::size_t i = 0; i < len; ++i) {
        const Real* qi = q.data() + i * d;
        Real* si = s.data() + i * len;
        for (std::size_t j = 0; j < len; ++j) {
            const int rel = static_cast<int>(i) - static_cast<int>(j);
            const Real* kj = k.data() + j * d;
            const Real* krow = kr.data() + static_cast<std::size_t>(std::clamp(rel, -span, span) + span) * d;
            const Real* qrow = qr.data() + static_cast<std::size_t>(std::clamp(-rel, -span, span) + span) * d;
            Real acc = 0.0;
            for (std::size_t p = col; p < col + head_dim; ++p) {
                acc += qi[p] * kj[p] + qi[p] * krow[p] + kj[p] * qrow[p];
            }
            si[j] = scale * acc;
        }
    }
}

void attend_values(const Matrix& p, const Matrix& v, std::size_t col, std::size_t head_dim,
                   Matrix& out) {
    const std::size_t len = p.rows();
    const std::size_t keys = p.cols();
    const std::size_t d = v.cols();
    const bool go = len * keys * head_dim >= kMinParallelWork;
#pragma omp parallel for schedule(static) if (go)
    for (std::size_t i = 0; i < len; ++i) {
        const Real* pi = p.data() + i * keys;
        for (std::size_t c = col; c < col + head_dim; ++c) {
            Real acc = 0.0;
            for (std::size_t j = 0; j < keys; ++j) acc += pi[j] * v.data()[j * d + c];
            out(i, c) = acc;
        }
    }
}

void attend_values_backward(const Matrix& p, const Matrix& v, const Matrix& dout, std::size_t col,
                            std::size_t head_dim, Matrix& dp, Matrix& dv) {
    const std::size_t len = p.rows(), keys = p.cols(), d = v.cols();
    dp = Matrix(len, keys);
    const bool go = len * keys * head_dim >= kMinParallelWork;
#pragma omp parallel for schedule(static) if (go)
    for (std::size_t i = 0; i < len; ++i) {
        const Real* gi = dout.data() + i * d;
        Real* pi = dp.data() + i * keys;
        for (std::size_t j = 0; j < keys; ++j) {
            const Real* vj = v.data() + j * d;
            Real acc = 0.0;
            for (std::size_t c = col; c < col + head_dim; ++c) acc += gi[c] * vj[c];
            pi[j] = acc;
        }
    }
#pragma omp parallel for schedule(static) if (go)
    for (std::size_t j = 0; j < keys; ++j) {
        for (std::size_t c = col; c < col + head_dim; ++c) {
            Real acc = 0.0;
            for (std::size_t i = 0; i < len; ++i) acc += p.data()[i * keys + j] * dout.data()[i * d + c];
            dv(j, c) += acc;
        }
    }
}

void softmax_backward_rows(const Matrix& p, Matrix& dp) {
    const std::size_t n = p.cols();
    const bool go = p.size() >= kMinParallelWork / 8;
#pragma omp parallel for schedule(static) if (go)
    for (std::size_t i = 0; i < p.rows(); ++i) {
        const Real* pi = p.data() + i * n;
        Real* gi = dp.data() + i * n;
        Real dot = 0.0;
        for (std::size_t j = 0; j < n; ++j) dot += gi[j] * pi[j];
        for (std::size_t j = 0; j < n; ++j) gi[j] = pi[j] * (gi[j] - dot);
    }
}

void disentangled_scores_backward(const Matrix& ds, const Matrix& q, const Matrix& k,
                                  const Matrix& qr, const Matrix& kr, std::size_t col,
                                  std::size_t head_dim, int span, Real scale, Matrix& dq,
                                  Matrix& dk) {
    const std::size_t len = q.rows(), d = q.cols();
    const bool go = len * len * head_dim >= kMinParallelWork;
#pragma omp parallel for schedule(static) if (go)
    for (std::size_t i = 0; i < len; ++i) {
        const Real* si = ds.data() + i * len;
        for (std::size_t p = col; p < col + head_dim; ++p) {
            Real acc = 0.0;
            for (std::size_t j = 0; j < len; ++j) {
                const int rel = static_cast<int>(i) - static_cast<int>(j);
                const std::size_t c2p = static_cast<std::size_t>(std::clamp(rel, -span, span) + span);
                acc += si[j] * (k.data()[j * d + p] + kr.data()[c2p * d + p]);
            }
            dq(i, p) += scale * acc;
        }
    }
#pragma omp parallel for schedule(static) if (go)
    for (std::size_t j = 0; j < len; ++j) {
        for (std::size_t p = col; p < col + head_dim; ++p) {
            Real acc = 0.0;
            for (std::size_t i = 0; i < len; ++i) {
                const int rel = static_cast<int>(i) - static_cast<int>(j);
                const std::size_t p2c = static_cast<std::size_t>(std::clamp(-rel, -span, span) + span);
                acc += ds.data()[i * len + j] * (q.data()[i * d + p] + qr.data()[p2c * d + p]);
            }
            dk(j, p) += scale * acc;
        }
    }
}

}  // namespace parallel
}  // namespace cgra::kernels
