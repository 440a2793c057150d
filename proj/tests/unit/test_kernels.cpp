#include <cstring>

#include "doctest.h"
#include "helpers.h"

#include "cgra/kernels.h"

using namespace cgra;
namespace ks = cgra::kernels::serial;
namespace kp = cgra::kernels::parallel;
using testutil::random_matrix;

namespace {

bool bitwise_equal(const Matrix& a, const Matrix& b) {
    return a.same_shape(b) && std::memcmp(a.data(), b.data(), a.size() * sizeof(Real)) == 0;
}

struct Threads {
    explicit Threads(int n) : saved(kernels::thread_count()) { kernels::set_thread_count(n); }
    ~Threads() { kernels::set_thread_count(saved); }
    int saved;
};

}  // namespace

TEST_CASE("parallel kernels agree with the serial reference bit for bit") {
    Threads t(4);
    Rng rng(5);
    // Sizes on both sides of the parallel threshold.
    for (std::size_t n : {3u, 40u, 130u}) {
        const Matrix a = random_matrix(rng, n, 64), b = random_matrix(rng, n, 64), sq = random_matrix(rng, 64, 64);
        Matrix c1, c2;
        ks::matmul_nt(a, b, c1);
        kp::matmul_nt(a, b, c2);
        CHECK(bitwise_equal(c1, c2));
        ks::matmul_nn(a, sq, c1);
        kp::matmul_nn(a, sq, c2);
        CHECK(bitwise_equal(c1, c2));
        ks::matmul_tn(a, b, c1);
        kp::matmul_tn(a, b, c2);
        CHECK(bitwise_equal(c1, c2));
        c1 = random_matrix(rng, n, n);
        c2 = c1;
        ks::matmul_nt(a, b, c1, true);
        kp::matmul_nt(a, b, c2, true);
        CHECK(bitwise_equal(c1, c2));

        Matrix s1 = random_matrix(rng, n, n), s2 = s1;
        ks::softmax_rows(s1);
        kp::softmax_rows(s2);
        CHECK(bitwise_equal(s1, s2));
        Matrix d1 = random_matrix(rng, n, n), d2 = d1;
        ks::softmax_backward_rows(s1, d1);
        kp::softmax_backward_rows(s2, d2);
        CHECK(bitwise_equal(d1, d2));

        Matrix y1, y2, dx1, dx2;
        std::vector<Real> r1, r2;
        ks::layer_norm_rows(a, y1, r1, 1e-5);
        kp::layer_norm_rows(a, y2, r2, 1e-5);
        CHECK(bitwise_equal(y1, y2));
        CHECK(r1 == r2);
        const Matrix dy = random_matrix(rng, n, 64);
        ks::layer_norm_backward(y1, r1, dy, dx1);
        kp::layer_norm_backward(y2, r2, dy, dx2);
        CHECK(bitwise_equal(dx1, dx2));

        ks::gelu(a, y1);
        kp::gelu(a, y2);
        CHECK(bitwise_equal(y1, y2));
        ks::gelu_backward(a, dy, dx1);
        kp::gelu_backward(a, dy, dx2);
        CHECK(bitwise_equal(dx1, dx2));

        const Matrix qr = random_matrix(rng, 9, 64), kr = random_matrix(rng, 9, 64);
        ks::disentangled_scores(a, b, qr, kr, 16, 16, 4, 0.2, s1);
        kp::disentangled_scores(a, b, qr, kr, 16, 16, 4, 0.2, s2);
        CHECK(bitwise_equal(s1, s2));
        Matrix o1(n, 64), o2(n, 64);
        ks::softmax_rows(s1);
        kp::softmax_rows(s2);
        ks::attend_values(s1, b, 16, 16, o1);
        kp::attend_values(s2, b, 16, 16, o2);
        CHECK(bitwise_equal(o1, o2));

        Matrix dp1, dp2, dv1(n, 64), dv2(n, 64);
        ks::attend_values_backward(s1, b, dy, 16, 16, dp1, dv1);
        kp::attend_values_backward(s2, b, dy, 16, 16, dp2, dv2);
        CHECK(bitwise_equal(dp1, dp2));
        CHECK(bitwise_equal(dv1, dv2));
        Matrix dq1(n, 64), dq2(n, 64), dk1(n, 64), dk2(n, 64);
        ks::disentangled_scores_backward(dp1, a, b, qr, kr, 16, 16, 4, 0.2, dq1, dk1);
        kp::disentangled_scores_backward(dp2, a, b, qr, kr, 16, 16, 4, 0.2, dq2, dk2);
        CHECK(bitwise_equal(dq1, dq2));
        CHECK(bitwise_equal(dk1, dk2));
    }
}

TEST_CASE("matmul against a direct triple loop") {
    Rng rng(6);
    const Matrix a = random_matrix(rng, 5, 7), b = random_matrix(rng, 4, 7);
    Matrix c;
    ks::matmul_nt(a, b, c);
    for (std::size_t i = 0; i < 5; ++i) {
        for (std::size_t j = 0; j < 4; ++j) {
            Real s = 0.0;
            for (std::size_t k = 0; k < 7; ++k) s += a(i, k) * b(j, k);
            CHECK(c(i, j) == doctest::Approx(s).epsilon(1e-14));
        }
    }
    CHECK_THROWS(ks::matmul_nn(a, b, c));
}

TEST_CASE("softmax rows sum to one and layer norm is standardized") {
    Rng rng(7);
    Matrix s = random_matrix(rng, 6, 9, 5.0);
    kp::softmax_rows(s);
    for (std::size_t i = 0; i < 6; ++i) {
        Real sum = 0.0;
        for (Real v : s.row(i)) sum += v;
        CHECK(std::abs(sum - 1.0) < 1e-12);
    }
    const Matrix x = random_matrix(rng, 3, 50, 2.0);
    Matrix y;
    std::vector<Real> r;
    kp::layer_norm_rows(x, y, r, 0.0);
    for (std::size_t i = 0; i < 3; ++i) {
        Real mean = 0.0, var = 0.0;
        for (Real v : y.row(i)) mean += v / 50.0;
        for (Real v : y.row(i)) var += (v - mean) * (v - mean) / 50.0;
        CHECK(std::abs(mean) < 1e-12);
        CHECK(std::abs(var - 1.0) < 1e-10);
    }
}
