#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "eqlab/constellation.hpp"
#include "eqlab/signal.hpp"

namespace eqlab::classic {

/// 2x2 butterfly FIR. Output lane x is w_xx*x + w_xy*y, lane y is
/// w_yx*x + w_yy*y, evaluated at symbol rate with the center tap aligned.
struct ButterflyFir {
    CVec w_xx, w_xy, w_yx, w_yy;
    int sps_in = 1;

    static ButterflyFir identity(std::size_t n_taps, int sps_in = 1);

    std::size_t n_taps() const noexcept { return w_xx.size(); }
    void validate() const;
    CVec& lane(int q, int p);
    const CVec& lane(int q, int p) const;
};

/// Decimating butterfly filter; output has one sample per symbol.
DualPolBlock butterfly_apply(const DualPolBlock& rx, const ButterflyFir& w);

/// CMA modulus R = E|c|^4 / E|c|^2 under the priors.
double cma_radius(const Constellation& c);

/// Mean over symbols and lanes of (|z|^2 - R)^2.
double cma_loss(const DualPolBlock& rx, const ButterflyFir& w, double R);

struct CmaOptions {
    double step = 1e-3;
    /// Divide the step by the mean received power.
    bool scale_by_power = true;
    /// Updates per entry of the loss trace.
    std::size_t trace_block = 1000;
    bool singularity_guard = true;
    double divergence_limit = 1e3;
};

struct CmaResult {
    ButterflyFir taps;
    std::vector<double> loss_trace;
    /// Set when both outputs locked to the same source and lane y was reset.
    bool reinitialized = false;
    /// Taps snapshot after every trace block (used for startup curves).
    std::vector<ButterflyFir> snapshots;
};

/// Godard CMA, one stochastic-gradient update per symbol, cycling through the
/// block as often as n_updates requires. Throws TrainingError on divergence.
CmaResult cma_train(const DualPolBlock& rx, const ButterflyFir& w0, double R, std::size_t n_updates,
                    const CmaOptions& opt = {}, bool keep_snapshots = false);

/// Row-major real feature matrix.
struct FeatureMatrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    std::span<const double> row(std::size_t r) const { return {data.data() + r * cols, cols}; }
    std::span<double> row(std::size_t r) { return {data.data() + r * cols, cols}; }
};

/// Windows of n_taps samples centered on samples[center_0 + k*stride].
/// Samples outside the block read as zero.
FeatureMatrix window_matrix(std::span<const double> samples, std::size_t first_center, std::size_t stride,
                            std::size_t count, std::size_t n_taps);

/// Ridge-regularized least squares, lambda = ridge_scale * trace(X^T X) / cols.
/// Throws NumericalError when the system stays singular.
RVec ffe_train_ls(const FeatureMatrix& features, std::span<const double> targets, double ridge_scale = 1e-6);

/// Normalized LMS alternative for the linear FFE.
RVec ffe_train_lms(const FeatureMatrix& features, std::span<const double> targets, double step, std::size_t epochs);

double ffe_apply(std::span<const double> taps, std::span<const double> window);

/// Second-order Volterra equalizer. The linear part uses the m1 samples at the
/// center of the window and the quadratic part the central m2 of them.
struct VolterraModel {
    std::size_t m1 = 1;
    std::size_t m2 = 0;
    RVec kernel1;  // m1
    RVec kernel2;  // m2 (m2 + 1) / 2, upper triangle, row-major
    double bias = 0.0;

    std::size_t feature_count() const noexcept { return m1 + m2 * (m2 + 1) / 2; }
    void validate() const;
};

std::size_t volterra_feature_count(std::size_t m1, std::size_t m2);
/// m1 linear terms followed by x_i x_j (i <= j) over the central m2 samples.
RVec volterra_features(std::span<const double> window, std::size_t m1, std::size_t m2);
double volterra_apply(const VolterraModel& model, std::span<const double> window);
/// Least-squares fit of kernels and bias on windows of length m1.
VolterraModel volterra_train_ls(const FeatureMatrix& windows, std::span<const double> targets, std::size_t m2,
                                double ridge_scale = 1e-6);

/// Real MACs per output symbol. A complex MAC counts as four real MACs,
/// biases are free, and butterfly counts are reported per polarization.
std::size_t macs_per_symbol(const ButterflyFir& w);
std::size_t macs_per_symbol_ffe(std::size_t n_taps);
std::size_t macs_per_symbol(const VolterraModel& v);
std::size_t macs_per_symbol_volterra(std::size_t m1, std::size_t m2);

} // namespace eqlab::classic
