#include "eqlab/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace eqlab::kernels {

namespace {

inline cplx convolve_one(std::span<const cplx> x, std::span<const cplx> h, std::ptrdiff_t n)
{
    const auto nx = static_cast<std::ptrdiff_t>(x.size());
    const auto nh = static_cast<std::ptrdiff_t>(h.size());
    // x index n - k must lie in [0, nx)
    const std::ptrdiff_t k_lo = std::max<std::ptrdiff_t>(0, n - nx + 1);
    const std::ptrdiff_t k_hi = std::min<std::ptrdiff_t>(nh - 1, n);
    cplx acc{};
    for (std::ptrdiff_t k = k_lo; k <= k_hi; ++k)
        acc += x[static_cast<std::size_t>(n - k)] * h[static_cast<std::size_t>(k)];
    return acc;
}

inline void demap_row(cplx yn, std::span<const cplx> points, std::span<const double> log_prior, double inv_var,
                      double* row)
{
    const std::size_t m = points.size();
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < m; ++k) {
        row[k] = log_prior[k] - std::norm(yn - points[k]) * inv_var;
        mx = std::max(mx, row[k]);
    }
    double sum = 0.0;
    for (std::size_t k = 0; k < m; ++k) {
        row[k] = std::exp(row[k] - mx);
        sum += row[k];
    }
    const double inv = 1.0 / sum;
    for (std::size_t k = 0; k < m; ++k)
        row[k] *= inv;
}

inline void conv1d_row(std::span<const double> x, std::size_t in_ch, std::size_t in_len, std::span<const double> w,
                       std::span<const double> b, std::size_t o, std::size_t kernel, std::size_t stride,
                       std::size_t out_len, double* yrow)
{
    for (std::size_t t = 0; t < out_len; ++t) {
        double acc = b.empty() ? 0.0 : b[o];
        const std::size_t start = t * stride;
        for (std::size_t c = 0; c < in_ch; ++c) {
            const double* xr = x.data() + c * in_len + start;
            const double* wr = w.data() + (o * in_ch + c) * kernel;
            for (std::size_t k = 0; k < kernel; ++k)
                acc += wr[k] * xr[k];
        }
        yrow[t] = acc;
    }
}

} // namespace

void convolve_serial(std::span<const cplx> x, std::span<const cplx> h, std::ptrdiff_t offset, std::span<cplx> out)
{
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = convolve_one(x, h, static_cast<std::ptrdiff_t>(i) + offset);
}

void convolve_omp(std::span<const cplx> x, std::span<const cplx> h, std::ptrdiff_t offset, std::span<cplx> out)
{
    const auto n = static_cast<std::ptrdiff_t>(out.size());
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < n; ++i)
        out[static_cast<std::size_t>(i)] = convolve_one(x, h, i + offset);
}

void convolve(std::span<const cplx> x, std::span<const cplx> h, std::ptrdiff_t offset, std::span<cplx> out,
              Exec exec)
{
    if (exec == Exec::parallel && out.size() >= kParallelThreshold)
        convolve_omp(x, h, offset, out);
    else
        convolve_serial(x, h, offset, out);
}

void soft_demap_serial(std::span<const cplx> y, std::span<const cplx> points, std::span<const double> log_prior,
                       double noise_var, std::span<double> q)
{
    const double inv_var = 1.0 / noise_var;
    for (std::size_t n = 0; n < y.size(); ++n)
        demap_row(y[n], points, log_prior, inv_var, q.data() + n * points.size());
}

void soft_demap_omp(std::span<const cplx> y, std::span<const cplx> points, std::span<const double> log_prior,
                    double noise_var, std::span<double> q)
{
    const double inv_var = 1.0 / noise_var;
    const auto n_rows = static_cast<std::ptrdiff_t>(y.size());
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t n = 0; n < n_rows; ++n) {
        const auto i = static_cast<std::size_t>(n);
        demap_row(y[i], points, log_prior, inv_var, q.data() + i * points.size());
    }
}

void soft_demap(std::span<const cplx> y, std::span<const cplx> points, std::span<const double> log_prior,
                double noise_var, std::span<double> q, Exec exec)
{
    if (exec == Exec::parallel && y.size() * points.size() >= kParallelThreshold * 16)
        soft_demap_omp(y, points, log_prior, noise_var, q);
    else
        soft_demap_serial(y, points, log_prior, noise_var, q);
}

void conv1d_serial(std::span<const double> x, std::size_t in_ch, std::size_t in_len, std::span<const double> w,
                   std::span<const double> b, std::size_t out_ch, std::size_t kernel, std::size_t stride,
                   std::span<double> y)
{
    const std::size_t out_len = (in_len - kernel) / stride + 1;
    for (std::size_t o = 0; o < out_ch; ++o)
        conv1d_row(x, in_ch, in_len, w, b, o, kernel, stride, out_len, y.data() + o * out_len);
}

void conv1d_omp(std::span<const double> x, std::size_t in_ch, std::size_t in_len, std::span<const double> w,
                std::span<const double> b, std::size_t out_ch, std::size_t kernel, std::size_t stride,
                std::span<double> y)
{
    const std::size_t out_len = (in_len - kernel) / stride + 1;
    const auto n_out = static_cast<std::ptrdiff_t>(out_ch);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t o = 0; o < n_out; ++o) {
        const auto oi = static_cast<std::size_t>(o);
        conv1d_row(x, in_ch, in_len, w, b, oi, kernel, stride, out_len, y.data() + oi * out_len);
    }
}

int max_threads()
{
#ifdef _OPENMP
    return omp_get_max_threads();
#else
    return 1;
#endif
}

} // namespace eqlab::kernels
