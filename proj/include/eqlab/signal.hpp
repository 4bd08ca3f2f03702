#pragma once

#include <complex>
#include <cstddef>
#include <limits>
#include <span>
#include <vector>

#include "eqlab/rng.hpp"

namespace eqlab {

using cplx = std::complex<double>;
using CVec = std::vector<cplx>;
using RVec = std::vector<double>;

/// Complex baseband samples at `sps` samples per symbol.
///
/// All DSP runs in normalized time (symbol period = 1); `symbol_rate` is
/// bookkeeping only and is carried through for labelling.
struct SignalBlock {
    CVec samples;
    int sps = 1;
    double symbol_rate = 1.0;

    SignalBlock() = default;
    SignalBlock(CVec s, int sps_, double symbol_rate_ = 1.0);

    std::size_t size() const noexcept { return samples.size(); }
    std::size_t num_symbols() const noexcept { return samples.size() / static_cast<std::size_t>(sps); }
    double mean_power() const;
    /// Throws ParameterError on a broken invariant.
    void validate() const;
};

struct DualPolBlock {
    SignalBlock x;
    SignalBlock y;

    DualPolBlock() = default;
    DualPolBlock(SignalBlock x_, SignalBlock y_);

    std::size_t size() const noexcept { return x.size(); }
    int sps() const noexcept { return x.sps; }
    void validate() const;
};

enum class FirMode { same, full };

/// Root-raised-cosine taps, span_symbols*sps + 1 long, unit energy.
RVec rrc_taps(double rolloff, int span_symbols, int sps);

/// Linear convolution. `same` keeps the input length with the center tap
/// (index (taps-1)/2) aligned to the input sample. The output keeps the
/// input's sps, so `full` outputs can break the length invariant; they are
/// returned unvalidated.
SignalBlock fir_apply(const SignalBlock& signal, std::span<const cplx> taps, FirMode mode = FirMode::same);
SignalBlock fir_apply(const SignalBlock& signal, std::span<const double> taps, FirMode mode = FirMode::same);

/// SNR value that disables noise in awgn_add.
inline constexpr double kNoiseOff = std::numeric_limits<double>::infinity();

struct NoisyBlock {
    SignalBlock signal;
    double noise_var = 0.0;  // per complex sample, E|n|^2
};

/// Adds circular complex Gaussian noise, SNR per complex sample:
/// noise_var = P / 10^(snr_db/10) with P the measured mean power (when
/// measured_power) or 1.
NoisyBlock awgn_add(const SignalBlock& signal, double snr_db, RngStream& rng, bool measured_power = false);

enum class Ambiguity { none, qam_rotations };

struct SerResult {
    double rate = 0.0;
    int lag = 0;       // decisions[n + lag] is compared to reference[n]
    int rotation = 0;  // quarter turns applied to the decisions
    std::size_t compared = 0;
};

class Constellation;

/// Symbol error rate with lag search in [-max_lag, max_lag]. With
/// qam_rotations the decisions are also rotated by k*90 degrees (which
/// requires the constellation to map indices) and the minimum is reported.
SerResult symbol_error_rate(std::span<const int> decisions, std::span<const int> reference,
                            Ambiguity ambiguity = Ambiguity::none,
                            const Constellation* constellation = nullptr, int max_lag = 32);

/// Q(sqrt(2 Es/N0)) for antipodal signalling.
double theory_ber_2pam(double esn0_db);

} // namespace eqlab
