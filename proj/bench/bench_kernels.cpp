// Serial reference versus OpenMP variant of each data-parallel kernel.
// Run with --benchmark_counters_tabular=true for a compact table.

#include <benchmark/benchmark.h>

#include <vector>

#include "eqlab/constellation.hpp"
#include "eqlab/kernels.hpp"
#include "eqlab/rng.hpp"

using namespace eqlab;

namespace {

struct ConvData {
    CVec x, h, out;
    explicit ConvData(std::size_t n, std::size_t taps) : x(n), h(taps), out(n)
    {
        RngStream rng(1, 0);
        for (auto& v : x)
            v = rng.complex_normal(1.0);
        for (auto& v : h)
            v = rng.complex_normal(1.0);
    }
};

template <bool Parallel>
void bm_convolve(benchmark::State& st)
{
    ConvData d(static_cast<std::size_t>(st.range(0)), static_cast<std::size_t>(st.range(1)));
    const auto off = static_cast<std::ptrdiff_t>(d.h.size() / 2);
    for (auto _ : st) {
        if constexpr (Parallel)
            kernels::convolve_omp(d.x, d.h, off, d.out);
        else
            kernels::convolve_serial(d.x, d.h, off, d.out);
        benchmark::DoNotOptimize(d.out.data());
    }
    st.SetItemsProcessed(st.iterations() * st.range(0));
    st.counters["threads"] = Parallel ? kernels::max_threads() : 1;
}

template <bool Parallel>
void bm_soft_demap(benchmark::State& st)
{
    const auto c = pcs_shape(build_qam(64), 4.6).constellation;
    RngStream rng(2, 0);
    CVec y(static_cast<std::size_t>(st.range(0)));
    for (auto& v : y)
        v = rng.complex_normal(1.0);
    std::vector<double> q(y.size() * c.size());
    for (auto _ : st) {
        if constexpr (Parallel)
            kernels::soft_demap_omp(y, c.points(), c.log_priors(), 0.01, q);
        else
            kernels::soft_demap_serial(y, c.points(), c.log_priors(), 0.01, q);
        benchmark::DoNotOptimize(q.data());
    }
    st.SetItemsProcessed(st.iterations() * st.range(0));
    st.counters["threads"] = Parallel ? kernels::max_threads() : 1;
}

template <bool Parallel>
void bm_conv1d(benchmark::State& st)
{
    const std::size_t in_ch = 8, out_ch = 16, k = 8, stride = 2;
    const auto in_len = static_cast<std::size_t>(st.range(0));
    RngStream rng(3, 0);
    std::vector<double> x(in_ch * in_len), w(out_ch * in_ch * k), b(out_ch);
    for (auto& v : x)
        v = rng.normal();
    for (auto& v : w)
        v = rng.normal();
    std::vector<double> y(out_ch * ((in_len - k) / stride + 1));
    for (auto _ : st) {
        if constexpr (Parallel)
            kernels::conv1d_omp(x, in_ch, in_len, w, b, out_ch, k, stride, y);
        else
            kernels::conv1d_serial(x, in_ch, in_len, w, b, out_ch, k, stride, y);
        benchmark::DoNotOptimize(y.data());
    }
    st.SetItemsProcessed(st.iterations() * static_cast<std::int64_t>(y.size()));
    st.counters["threads"] = Parallel ? kernels::max_threads() : 1;
}

} // namespace

BENCHMARK(bm_convolve<false>)->Name("convolve/serial")->Args({1 << 16, 31})->Args({1 << 18, 101});
BENCHMARK(bm_convolve<true>)->Name("convolve/omp")->Args({1 << 16, 31})->Args({1 << 18, 101});
BENCHMARK(bm_soft_demap<false>)->Name("soft_demap/serial")->Arg(1 << 14)->Arg(1 << 16);
BENCHMARK(bm_soft_demap<true>)->Name("soft_demap/omp")->Arg(1 << 14)->Arg(1 << 16);
BENCHMARK(bm_conv1d<false>)->Name("conv1d/serial")->Arg(1 << 12)->Arg(1 << 15);
BENCHMARK(bm_conv1d<true>)->Name("conv1d/omp")->Arg(1 << 12)->Arg(1 << 15);

BENCHMARK_MAIN();
