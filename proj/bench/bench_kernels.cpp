// Serial reference against the OpenMP kernels at encoder-like shapes.

#include <benchmark/benchmark.h>

#include "cgra/kernels.h"
#include "cgra/rng.h"

using namespace cgra;

namespace {

Matrix random(std::size_t r, std::size_t c, std::uint64_t seed) {
    Rng rng(seed);
    Matrix m(r, c);
    for (std::size_t i = 0; i < m.size(); ++i) m[i] = rng.normal();
    return m;
}

template <void (*F)(const Matrix&, const Matrix&, Matrix&, bool)>
void bm_matmul_nt(benchmark::State& st) {
    const auto L = static_cast<std::size_t>(st.range(0)), d = static_cast<std::size_t>(st.range(1));
    const Matrix a = random(L, d, 1), b = random(d, d, 2);
    Matrix c;
    for (auto _ : st) {
        F(a, b, c, false);
        benchmark::DoNotOptimize(c.data());
    }
    st.SetItemsProcessed(st.iterations() * static_cast<long>(L * d * d));
}

template <void (*F)(const Matrix&, const Matrix&, const Matrix&, const Matrix&, std::size_t, std::size_t, int,
                    Real, Matrix&)>
void bm_scores(benchmark::State& st) {
    const auto L = static_cast<std::size_t>(st.range(0));
    const std::size_t hd = 8;
    const int span = 8;
    const Matrix q = random(L, hd, 3), k = random(L, hd, 4), qr = random(2 * span + 1, hd, 5),
                 kr = random(2 * span + 1, hd, 6);
    Matrix s;
    for (auto _ : st) {
        F(q, k, qr, kr, 0, hd, span, 0.2, s);
        benchmark::DoNotOptimize(s.data());
    }
}

template <void (*F)(Matrix&)>
void bm_softmax(benchmark::State& st) {
    const auto L = static_cast<std::size_t>(st.range(0));
    const Matrix src = random(L, L, 7);
    for (auto _ : st) {
        Matrix x = src;
        F(x);
        benchmark::DoNotOptimize(x.data());
    }
}

template <void (*F)(const Matrix&, Matrix&, std::vector<Real>&, Real)>
void bm_layer_norm(benchmark::State& st) {
    const auto L = static_cast<std::size_t>(st.range(0));
    const Matrix x = random(L, 32, 8);
    Matrix y;
    std::vector<Real> rstd;
    for (auto _ : st) {
        F(x, y, rstd, 1e-5);
        benchmark::DoNotOptimize(y.data());
    }
}

}  // namespace

BENCHMARK(bm_matmul_nt<kernels::serial::matmul_nt>)->Name("matmul_nt/serial")->Args({128, 32})->Args({384, 32})->Args({384, 128});
BENCHMARK(bm_matmul_nt<kernels::parallel::matmul_nt>)->Name("matmul_nt/parallel")->Args({128, 32})->Args({384, 32})->Args({384, 128});
BENCHMARK(bm_scores<kernels::serial::disentangled_scores>)->Name("scores/serial")->Arg(128)->Arg(384);
BENCHMARK(bm_scores<kernels::parallel::disentangled_scores>)->Name("scores/parallel")->Arg(128)->Arg(384);
BENCHMARK(bm_softmax<kernels::serial::softmax_rows>)->Name("softmax/serial")->Arg(128)->Arg(384);
BENCHMARK(bm_softmax<kernels::parallel::softmax_rows>)->Name("softmax/parallel")->Arg(128)->Arg(384);
BENCHMARK(bm_layer_norm<kernels::serial::layer_norm_rows>)->Name("layer_norm/serial")->Arg(128)->Arg(384);
BENCHMARK(bm_layer_norm<kernels::parallel::layer_norm_rows>)->Name("layer_norm/parallel")->Arg(128)->Arg(384);

BENCHMARK_MAIN();
