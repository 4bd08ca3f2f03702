#pragma once

// Data-parallel inner loops. Every kernel has a serial reference and an
// OpenMP variant; outputs are element-wise independent, so the two are
// bit-identical and the tests compare them exactly.

#include <complex>
#include <cstddef>
#include <span>

namespace eqlab::kernels {

using cplx = std::complex<double>;

enum class Exec { serial, parallel };

/// out[i] = sum_k x[i + offset - k] * h[k] for i in [0, out.size()),
/// treating x as zero outside its range.
void convolve_serial(std::span<const cplx> x, std::span<const cplx> h, std::ptrdiff_t offset, std::span<cplx> out);
void convolve_omp(std::span<const cplx> x, std::span<const cplx> h, std::ptrdiff_t offset, std::span<cplx> out);
void convolve(std::span<const cplx> x, std::span<const cplx> h, std::ptrdiff_t offset, std::span<cplx> out,
              Exec exec = Exec::parallel);

/// Posterior q[n][k] ∝ prior[k] exp(-|y[n] - points[k]|^2 / noise_var), row-major.
void soft_demap_serial(std::span<const cplx> y, std::span<const cplx> points, std::span<const double> log_prior,
                       double noise_var, std::span<double> q);
void soft_demap_omp(std::span<const cplx> y, std::span<const cplx> points, std::span<const double> log_prior,
                    double noise_var, std::span<double> q);
void soft_demap(std::span<const cplx> y, std::span<const cplx> points, std::span<const double> log_prior,
                double noise_var, std::span<double> q, Exec exec = Exec::parallel);

/// Valid-padding strided 1-D cross-correlation.
/// x: [in_ch x in_len], w: [out_ch x in_ch x kernel], b: [out_ch], y: [out_ch x out_len].
void conv1d_serial(std::span<const double> x, std::size_t in_ch, std::size_t in_len, std::span<const double> w,
                   std::span<const double> b, std::size_t out_ch, std::size_t kernel, std::size_t stride,
                   std::span<double> y);
void conv1d_omp(std::span<const double> x, std::size_t in_ch, std::size_t in_len, std::span<const double> w,
                std::span<const double> b, std::size_t out_ch, std::size_t kernel, std::size_t stride,
                std::span<double> y);

/// Number of threads the parallel variants would use.
int max_threads();
/// Blocks below this many outputs take the serial path in the dispatchers.
inline constexpr std::size_t kParallelThreshold = 4096;

} // namespace eqlab::kernels
