#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "eqlab/rng.hpp"
#include "eqlab/signal.hpp"

namespace eqlab {

/// Points, bit labels and prior probabilities of a modulation format.
///
/// Invariants (checked on construction): priors are a probability vector,
/// points are pairwise distinct, and sum_i p_i |c_i|^2 = 1 when built with
/// normalize = true (all factory functions do).
class Constellation {
public:
    Constellation(std::string name, CVec points, std::vector<std::uint32_t> labels, RVec priors,
                  bool normalize = true);

    const std::string& name() const noexcept { return name_; }
    const CVec& points() const noexcept { return points_; }
    const std::vector<std::uint32_t>& labels() const noexcept { return labels_; }
    const RVec& priors() const noexcept { return priors_; }
    const RVec& log_priors() const noexcept { return log_priors_; }
    std::size_t size() const noexcept { return points_.size(); }
    int bits_per_symbol() const noexcept { return bits_; }
    /// True when all points lie on the real axis (PAM).
    bool is_real() const noexcept { return real_; }

    double entropy_bits() const;
    double mean_energy() const;
    /// E|c|^4 under the priors.
    double fourth_moment() const;

    /// Index of the nearest point (Euclidean).
    int nearest(cplx z) const;
    /// Index permutation for a rotation by `quarter_turns` * 90 degrees, or
    /// an empty vector when the constellation is not closed under it.
    std::vector<int> rotation_map(int quarter_turns) const;

    /// Line-oriented text format: header, size, then "re im prior label" rows.
    void save(std::ostream& os) const;
    static Constellation load(std::istream& is);

private:
    std::string name_;
    CVec points_;
    std::vector<std::uint32_t> labels_;
    RVec priors_;
    RVec log_priors_;
    int bits_ = 0;
    bool real_ = false;
};

/// Square Gray-labelled QAM, order in {4, 16, 64, 256}.
Constellation build_qam(int order);
/// Gray-labelled PAM, order in {2, 4, 8}.
Constellation build_pam(int order);

struct ShapingResult {
    Constellation constellation;
    double lambda = 0.0;
    int iterations = 0;
};

/// Maxwell-Boltzmann priors p_i ∝ exp(-lambda |c_i|^2) whose entropy hits
/// the target within tol, found by bisection on lambda >= 0. The returned
/// points are rescaled to unit energy under the new priors.
ShapingResult pcs_shape(const Constellation& base, double target_entropy_bits, double tol = 1e-6);

struct SymbolDraw {
    std::vector<int> indices;
    CVec symbols;
};

/// i.i.d. draws from the priors (inverse-CDF sampling).
SymbolDraw sample_symbols(const Constellation& c, std::size_t n, RngStream& rng);

/// Row-major posterior matrix, num_symbols x constellation size.
struct PosteriorBlock {
    std::size_t rows = 0;
    std::size_t cols = 0;
    RVec q;

    std::span<const double> row(std::size_t n) const { return {q.data() + n * cols, cols}; }
};

/// Gaussian-likelihood soft demapper, evaluated in the log domain.
PosteriorBlock soft_demap(std::span<const cplx> y, const Constellation& c, double noise_var);

std::vector<int> hard_decide(std::span<const cplx> y, const Constellation& c);

/// Bit errors between index sequences through the labels; counts lag-aligned
/// overlap like symbol_error_rate.
double bit_error_rate(std::span<const int> decisions, std::span<const int> reference, const Constellation& c,
                      int lag = 0, int quarter_turns = 0);

} // namespace eqlab
