#pragma once

#include <array>
#include <optional>
#include <span>

#include "eqlab/rng.hpp"
#include "eqlab/signal.hpp"

namespace eqlab::channel {

struct CdTaps {
    CVec taps;
    /// 1 - energy of the truncated response (the full response is all-pass).
    double truncation_loss = 0.0;
};

/// Chromatic-dispersion FIR: the all-pass response exp(-j beta2L/2 w^2),
/// w in rad per symbol period, sampled on a DFT grid of at least 8*n_taps
/// bins and truncated to the n_taps around the center.
CdTaps cd_fir(double beta2L, int n_taps, int sps);

/// Smallest odd tap count that holds the dispersion response at sps:
/// ceil(4 pi |beta2L| sps^2), at least 1.
int cd_taps_for(double beta2L, int sps);

/// 2x2 MIMO FIR; tap(q, p) maps input lane p to output lane q.
struct Mimo2x2Fir {
    std::array<CVec, 4> taps;

    CVec& tap(int q, int p) { return taps[static_cast<std::size_t>(2 * q + p)]; }
    const CVec& tap(int q, int p) const { return taps[static_cast<std::size_t>(2 * q + p)]; }
    std::size_t length() const { return taps[0].size(); }
    /// Keeps `len` taps around the center (len odd), zero-padding if shorter.
    Mimo2x2Fir centered(std::size_t len) const;
    double energy() const;
};

enum class PolKind { rotation, jones, dgd };

struct PolModel {
    PolKind kind = PolKind::rotation;
    double theta = 0.0;                      // rotation angle, radians
    std::array<cplx, 4> jones{1, 0, 0, 1};   // row-major 2x2 unitary
    double dgd = 0.0;                        // differential delay, symbol periods
};

struct CoherentChannelConfig {
    int cd_taps_len = 0;  // 0: cd_taps_for(beta2L, sps)
    double beta2L = 0.0;
    PolModel pol;
    double snr_db = kNoiseOff;
    std::optional<double> rotation_rate;  // radians per symbol

    void validate() const;
};

struct CoherentOutput {
    DualPolBlock rx;
    Mimo2x2Fir impulse_response;  // composite mixing + CD (+ DGD)
    double noise_var = 0.0;
};

/// Polarization mixing, then per-lane CD, then AWGN (SNR per complex sample,
/// relative to unit signal power).
CoherentOutput coherent_channel_apply(const DualPolBlock& tx, const CoherentChannelConfig& cfg, RngStream& rng);

enum class NonlinearityKind { none, eam, soa };

struct Nonlinearity {
    NonlinearityKind kind = NonlinearityKind::none;
    double sat = 1.0;     // eam: field amplitude at which tanh saturates
    double p_sat = 1.0;   // soa: saturation power
    double g0 = 1.0;      // soa: small-signal power gain

    /// Memoryless transfer on the optical field amplitude.
    cplx apply(cplx a) const;
};

struct ImddChannelConfig {
    int sps = 2;
    double rolloff = 0.2;
    int rrc_span = 32;
    double beta2L = 0.0;
    int cd_taps = 0;  // 0: cd_taps_for(beta2L, sps)
    Nonlinearity nonlinearity;
    double snr_db = kNoiseOff;  // thermal noise, see imdd_channel_apply
    double shot_coeff = 0.0;    // signal-dependent noise variance per unit intensity
    std::optional<double> bias; // DC added to the drive; default guarantees drive >= 0

    void validate() const;
};

struct ImddOutput {
    SignalBlock rx;     // real-valued, cfg.sps samples per symbol, symbol k at k*sps
    SignalBlock clean;  // same chain without noise
    double bias = 0.0;
    double noise_var = 0.0;  // thermal variance per real sample
    /// Receiver output of the DC bias alone; subtract to center the levels.
    double dc_level = 0.0;
};

/// Smallest DC bias that keeps an RRC-shaped drive of symbols bounded by
/// max_abs non-negative for every possible sequence.
double imdd_min_bias(const ImddChannelConfig& cfg, double max_abs);

/// upsample -> RRC -> DC bias (drive, must be >= 0) -> intensity modulator
/// (field = sqrt(drive)) -> nonlinearity on the field -> CD -> |.|^2 ->
/// thermal noise -> receive RRC.
///
/// Noise convention: real Gaussian with variance 10^(-snr_db/10) per sample;
/// after the unit-energy receive filter a unit-energy PAM symbol sees the
/// same variance, so PAM-2 without impairments has BER
/// theory_ber_2pam(snr_db - 10 log10 2).
ImddOutput imdd_channel_apply(std::span<const double> pam_symbols, const ImddChannelConfig& cfg, RngStream& rng);

} // namespace eqlab::channel
