// Reference kernels: plain loops, no threading. The parallel build must
// reproduce these results exactly.

#include <algorithm>
#include <cmath>

#include "cgra/kernels.h"

namespace cgra::kernels::serial {

void matmul_nt(const Matrix& a, const Matrix& b, Matrix& c, bool accumulate) {
    const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
    require_shape(b, n, k, "matmul_nt rhs");
    if (!accumulate) c = Matrix(m, n);
    require_shape(c, m, n, "matmul_nt out");
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            Real acc = 0.0;
            for (std::size_t p = 0; p < k; ++p) acc += a(i, p) * b(j, p);
            c(i, j) += acc;
        }
    }
}

void matmul_nn(const Matrix& a, const Matrix& b, Matrix& c, bool accumulate) {
    const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
    require_shape(b, k, n, "matmul_nn rhs");
    if (!accumulate) c = Matrix(m, n);
    require_shape(c, m, n, "matmul_nn out");
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            Real acc = 0.0;
            for (std::size_t p = 0; p < k; ++p) acc += a(i, p) * b(p, j);
            c(i, j) += acc;
        }
    }
}

void matmul_tn(const Matrix& a, const Matrix& b, Matrix& c, bool accumulate) {
    const std::size_t k = a.rows(), m = a.cols(), n = b.cols();
    require_shape(b, k, n, "matmul_tn rhs");
    if (!accumulate) c = Matrix(m, n);
    require_shape(c, m, n, "matmul_tn out");
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            Real acc = 0.0;
            for (std::size_t p = 0; p < k; ++p) acc += a(p, i) * b(p, j);
            c(i, j) += acc;
        }
    }
}

void softmax_rows(Matrix& x) {
    for (std::size_t i = 0; i < x.rows(); ++i) {
        Real mx = x(i, 0);
        for (std::size_t j = 1; j < x.cols(); ++j) mx = std::max(mx, x(i, j));
        Real sum = 0.0;
        for (std::size_t j = 0; j < x.cols(); ++j) {
            x(i, j) = std::exp(x(i, j) - mx);
            sum += x(i, j);
        }
        for (std::size_t j = 0; j < x.cols(); ++j) x(i, j) /= sum;
    }
}

void layer_norm_rows(const Matrix& x, Matrix& y, std::vector<Real>& rstd, Real eps) {
    const std::size_t n = x.cols();
    y = Matrix(x.rows(), n);
    rstd.assign(x.rows(), 0.0);
    for (std::size_t i = 0; i < x.rows(); ++i) {
        Real mean = 0.0;
        for (std::size_t j = 0; j < n; ++j) mean += x(i, j);
        mean /= static_cast<Real>(n);
        Real var = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            const Real dv = x(i, j) - mean;
            var += dv * dv;
        }
        var /= static_cast<Real>(n);
        const Real r = 1.0 / std::sqrt(var + eps);
        rstd[i] = r;
        for (std::size_t j = 0; j < n; ++j) y(i, j) = (x(i, j) - mean) * r;
    }
}

void layer_norm_backward(const Matrix& y, const std::vector<Real>& rstd, const Matrix& dy,
                         Matrix& dx) {
    const std::size_t n = y.cols();
    dx = Matrix(y.rows(), n);
    for (std::size_t i = 0; i < y.rows(); ++i) {
        Real mean_dy = 0.0, mean_dyy = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            mean_dy += dy(i, j);
            mean_dyy += dy(i, j) * y(i, j);
        }
        mean_dy /= static_cast<Real>(n);
        mean_dyy /= static_cast<Real>(n);
        for (std::size_t j = 0; j < n; ++j) {
            dx(i, j) = rstd[i] * (dy(i, j) - mean_dy - y(i, j) * mean_dyy);
        }
    }
}

void gelu(const Matrix& x, Matrix& y) {
    y = Matrix(x.rows(), x.cols());
    for (std::size_t i = 0; i < x.size(); ++i) {
        y[i] = 0.5 * x[i] * (1.0 + std::erf(x[i] * M_SQRT1_2));
    }
}

void gelu_backward(const Matrix& x, const Matrix& dy, Matrix& dx) {
    dx = Matrix(x.rows(), x.cols());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const Real cdf = 0.5 * (1.0 + std::erf(x[i] * M_SQRT1_2));
        const Real pdf = std::exp(-0.5 * x[i] * x[i]) * (0.5 * M_2_SQRTPI * M_SQRT1_2);
        dx[i] = dy[i] * (cdf + x[i] * pdf);
    }
}

void disentangled_scores(const Matrix& q, const Matrix& k, const Matrix& qr, const Matrix& kr,
                         std::size_t col, std::size_t head_dim, int span, Real scale, Matrix& s) {
    const std::size_t len = q.rows();
    s = Matrix(len, len);
    for (std::size_t i = 0; i < len; ++i) {
        for (std::size_t j = 0; j < len; ++j) {
            const int rel = static_cast<int>(i) - static_cast<int>(j);
            const std::size_t c2p = static_cast<std::size_t>(std::clamp(rel, -span, span) + span);
            const std::size_t p2c = static_cast<std::size_t>(std::clamp(-rel, -span, span) + span);
            Real acc = 0.0;
            for (std::size_t p = col; p < col + head_dim; ++p) {
                acc += q(i, p) * k(j, p) + q(i, p) * kr(c2p, p) + k(j, p) * qr(p2c, p);
            }
            s(i, j) = scale * acc;
        }
    }
}

void attend_values(const Matrix& p, const Matrix& v, std::size_t col, std::size_t head_dim,
                   Matrix& out) {
    const std::size_t len = p.rows();
    for (std::size_t i = 0; i < len; ++i) {
        for (std::size_t c = col; c < col + head_dim; ++c) {
            Real acc = 0.0;
            for (std::size_t j = 0; j < p.cols(); ++j) acc += p(i, j) * v(j, c);
            out(i, c) = acc;
        }
    }
}

void attend_values_backward(const Matrix& p, const Matrix& v, const Matrix& dout, std::size_t col,
                            std::size_t head_dim, Matrix& dp, Matrix& dv) {
    const std::size_t len = p.rows(), keys = p.cols();
    dp = Matrix(len, keys);
    for (std::size_t i = 0; i < len; ++i) {
        for (std::size_t j = 0; j < keys; ++j) {
            Real acc = 0.0;
            for (std::size_t c = col; c < col + head_dim; ++c) acc += dout(i, c) * v(j, c);
            dp(i, j) = acc;
        }
    }
    for (std::size_t j = 0; j < keys; ++j) {
        for (std::size_t c = col; c < col + head_dim; ++c) {
            Real acc = 0.0;
            for (std::size_t i = 0; i < len; ++i) acc += p(i, j) * dout(i, c);
            dv(j, c) += acc;
        }
    }
}

void softmax_backward_rows(const Matrix& p, Matrix& dp) {
    for (std::size_t i = 0; i < p.rows(); ++i) {
        Real dot = 0.0;
        for (std::size_t j = 0; j < p.cols(); ++j) dot += dp(i, j) * p(i, j);
        for (std::size_t j = 0; j < p.cols(); ++j) dp(i, j) = p(i, j) * (dp(i, j) - dot);
    }
}

void disentangled_scores_backward(const Matrix& ds, const Matrix& q, const Matrix& k,
                                  const Matrix& qr, const Matrix& kr, std::size_t col,
                                  std::size_t head_dim, int span, Real scale, Matrix& dq,
                                  Matrix& dk) {
    const std::size_t len = q.rows();
    for (std::size_t i = 0; i < len; ++i) {
        for (std::size_t p = col; p < col + head_dim; ++p) {
            Real acc = 0.0;
            for (std::size_t j = 0; j < len; ++j) {
                const int rel = static_cast<int>(i) - static_cast<int>(j);
                const std::size_t c2p = static_cast<std::size_t>(std::clamp(rel, -span, span) + span);
                acc += ds(i, j) * (k(j, p) + kr(c2p, p));
            }
            dq(i, p) += scale * acc;
        }
    }
    for (std::size_t j = 0; j < len; ++j) {
        for (std::size_t p = col; p < col + head_dim; ++p) {
            Real acc = 0.0;
            for (std::size_t i = 0; i < len; ++i) {
                const int rel = static_cast<int>(i) - static_cast<int>(j);
                const std::size_t p2c = static_cast<std::size_t>(std::clamp(-rel, -span, span) + span);
                acc += ds(i, j) * (q(i, p) + qr(p2c, p));
            }
            dk(j, p) += scale * acc;
        }
    }
}

}  // namespace cgra::kernels::serial
