#include "eqlab/signal.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "eqlab/constellation.hpp"
#include "eqlab/error.hpp"
#include "eqlab/kernels.hpp"

namespace eqlab {

SignalBlock::SignalBlock(CVec s, int sps_, double symbol_rate_)
    : samples(std::move(s)), sps(sps_), symbol_rate(symbol_rate_)
{
    validate();
}

double SignalBlock::mean_power() const
{
    if (samples.empty())
        return 0.0;
    double p = 0.0;
    for (const auto& v : samples)
        p += std::norm(v);
    return p / static_cast<double>(samples.size());
}

void SignalBlock::validate() const
{
    if (sps < 1)
        throw ParameterError("SignalBlock: sps must be >= 1");
    if (!(symbol_rate > 0.0))
        throw ParameterError("SignalBlock: symbol_rate must be positive");
    if (samples.size() % static_cast<std::size_t>(sps) != 0)
        throw ParameterError("SignalBlock: length not divisible by sps");
    for (const auto& v : samples)
        if (!std::isfinite(v.real()) || !std::isfinite(v.imag()))
            throw ParameterError("SignalBlock: non-finite sample");
}

DualPolBlock::DualPolBlock(SignalBlock x_, SignalBlock y_) : x(std::move(x_)), y(std::move(y_))
{
    validate();
}

void DualPolBlock::validate() const
{
    x.validate();
    y.validate();
    if (x.size() != y.size() || x.sps != y.sps)
        throw ParameterError("DualPolBlock: lanes differ in length or sps");
}

RVec rrc_taps(double rolloff, int span_symbols, int sps)
{
    if (!(rolloff > 0.0) || rolloff > 1.0)
        throw ParameterError("rrc_taps: rolloff must be in (0, 1]");
    if (span_symbols < 1 || sps < 1)
        throw ParameterError("rrc_taps: span and sps must be positive");
    if ((span_symbols * sps) % 2 != 0)
        throw ParameterError("rrc_taps: span_symbols * sps must be even");
    const double b = rolloff;
    const double pi = std::numbers::pi;
    const int half = span_symbols * sps / 2;
    RVec h;
    h.reserve(static_cast<std::size_t>(2 * half + 1));
    for (int n = -half; n <= half; ++n) {
        const double t = static_cast<double>(n) / sps;
        double v;
        if (n == 0) {
            v = 1.0 - b + 4.0 * b / pi;
        } else if (std::abs(std::abs(4.0 * b * t) - 1.0) < 1e-12) {
            v = b / std::numbers::sqrt2 *
                ((1.0 + 2.0 / pi) * std::sin(pi / (4.0 * b)) + (1.0 - 2.0 / pi) * std::cos(pi / (4.0 * b)));
        } else {
            v = (std::sin(pi * t * (1.0 - b)) + 4.0 * b * t * std::cos(pi * t * (1.0 + b))) /
                (pi * t * (1.0 - (4.0 * b * t) * (4.0 * b * t)));
        }
        h.push_back(v);
    }
    double e = 0.0;
    for (double v : h)
        e += v * v;
    const double s = 1.0 / std::sqrt(e);
    for (double& v : h)
        v *= s;
    return h;
}

SignalBlock fir_apply(const SignalBlock& signal, std::span<const cplx> taps, FirMode mode)
{
    if (taps.empty())
        throw ParameterError("fir_apply: empty taps");
    const std::size_t n = signal.size();
    SignalBlock out;
    out.sps = signal.sps;
    out.symbol_rate = signal.symbol_rate;
    if (mode == FirMode::full) {
        out.samples.resize(n + taps.size() - 1);
        kernels::convolve(signal.samples, taps, 0, out.samples);
    } else {
        out.samples.resize(n);
        kernels::convolve(signal.samples, taps, static_cast<std::ptrdiff_t>((taps.size() - 1) / 2), out.samples);
    }
    return out;
}

SignalBlock fir_apply(const SignalBlock& signal, std::span<const double> taps, FirMode mode)
{
    CVec c(taps.begin(), taps.end());
    return fir_apply(signal, std::span<const cplx>(c), mode);
}

NoisyBlock awgn_add(const SignalBlock& signal, double snr_db, RngStream& rng, bool measured_power)
{
    if (signal.samples.empty())
        throw ParameterError("awgn_add: empty signal");
    if (std::isnan(snr_db) || snr_db == -kNoiseOff)
        throw ParameterError("awgn_add: snr_db must be finite or +inf");
    NoisyBlock out{signal, 0.0};
    if (snr_db == kNoiseOff)
        return out;
    const double p = measured_power ? signal.mean_power() : 1.0;
    out.noise_var = p / std::pow(10.0, snr_db / 10.0);
    for (auto& v : out.signal.samples)
        v += rng.complex_normal(out.noise_var);
    return out;
}

SerResult symbol_error_rate(std::span<const int> decisions, std::span<const int> reference, Ambiguity ambiguity,
                            const Constellation* constellation, int max_lag)
{
    const auto nd = static_cast<std::ptrdiff_t>(decisions.size());
    const auto nr = static_cast<std::ptrdiff_t>(reference.size());
    if (std::abs(nd - nr) > max_lag)
        throw EvaluationError("symbol_error_rate: length mismatch exceeds the alignment window");
    if (nd == 0 || nr == 0)
        throw EvaluationError("symbol_error_rate: empty input");

    std::vector<std::vector<int>> maps{{}};
    if (ambiguity == Ambiguity::qam_rotations) {
        if (constellation == nullptr)
            throw ParameterError("symbol_error_rate: rotation search needs the constellation");
        for (int r = 1; r < 4; ++r) {
            auto m = constellation->rotation_map(r);
            if (m.empty())
                throw EvaluationError("symbol_error_rate: constellation not closed under 90 degree rotation");
            maps.push_back(std::move(m));
        }
    }

    // keep at least three quarters of the shorter sequence in every comparison
    const int lag_limit = static_cast<int>(std::min<std::ptrdiff_t>(max_lag, std::min(nd, nr) / 4));
    SerResult best;
    best.rate = 2.0;
    for (int lag = -lag_limit; lag <= lag_limit; ++lag) {
        const std::ptrdiff_t n0 = std::max<std::ptrdiff_t>(0, -lag);
        const std::ptrdiff_t n1 = std::min<std::ptrdiff_t>(nr, nd - lag);
        if (n1 <= n0)
            continue;
        for (std::size_t r = 0; r < maps.size(); ++r) {
            std::size_t errors = 0;
            for (std::ptrdiff_t n = n0; n < n1; ++n) {
                int d = decisions[static_cast<std::size_t>(n + lag)];
                if (!maps[r].empty())
                    d = maps[r][static_cast<std::size_t>(d)];
                errors += d != reference[static_cast<std::size_t>(n)] ? 1u : 0u;
            }
            const auto cmp = static_cast<std::size_t>(n1 - n0);
            const double rate = static_cast<double>(errors) / static_cast<double>(cmp);
            if (rate < best.rate) {
                best = {rate, lag, static_cast<int>(r), cmp};
            }
        }
    }
    if (best.rate > 1.0)
        throw EvaluationError("symbol_error_rate: no overlap within the alignment window");
    return best;
}

double theory_ber_2pam(double esn0_db)
{
    if (esn0_db == -kNoiseOff)
        return 0.5;
    // Q(sqrt(2x)) = erfc(sqrt(x)) / 2
    return 0.5 * std::erfc(std::sqrt(std::pow(10.0, esn0_db / 10.0)));
}

} // namespace eqlab
