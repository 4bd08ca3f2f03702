#include "eqlab/channel.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "eqlab/error.hpp"

namespace eqlab::channel {

namespace {

constexpr double kPi = std::numbers::pi;

CVec conv_full(const CVec& a, const CVec& b)
{
    CVec out(a.size() + b.size() - 1);
    for (std::size_t i = 0; i < a.size(); ++i)
        for (std::size_t j = 0; j < b.size(); ++j)
            out[i + j] += a[i] * b[j];
    return out;
}

std::array<cplx, 4> rotation(double theta)
{
    const double c = std::cos(theta);
    const double s = std::sin(theta);
    return {cplx{c}, cplx{-s}, cplx{s}, cplx{c}};
}

} // namespace

CdTaps cd_fir(double beta2L, int n_taps, int sps)
{
    if (n_taps < 1 || n_taps % 2 == 0)
        throw ParameterError("cd_fir: n_taps must be odd and positive");
    if (sps < 1)
        throw ParameterError("cd_fir: sps must be positive");
    std::size_t grid = 1;
    while (grid < 8 * static_cast<std::size_t>(n_taps))
        grid *= 2;
    const auto n = static_cast<std::ptrdiff_t>(grid);
    // H_k on the DFT grid; frequency in cycles per symbol is (k / grid) * sps
    CVec response(grid);
    for (std::ptrdiff_t k = 0; k < n; ++k) {
        const std::ptrdiff_t kk = k < n / 2 ? k : k - n;
        const double w = 2.0 * kPi * static_cast<double>(kk) / static_cast<double>(n) * sps;
        response[static_cast<std::size_t>(k)] = std::polar(1.0, -0.5 * beta2L * w * w);
    }
    // inverse DFT evaluated only at the kept taps m in [-(n_taps-1)/2, (n_taps-1)/2]
    const int half = (n_taps - 1) / 2;
    CdTaps out;
    out.taps.resize(static_cast<std::size_t>(n_taps));
    double energy = 0.0;
    for (int m = -half; m <= half; ++m) {
        cplx acc{};
        for (std::ptrdiff_t k = 0; k < n; ++k) {
            const double ph = 2.0 * kPi * static_cast<double>((k * m) % n) / static_cast<double>(n);
            acc += response[static_cast<std::size_t>(k)] * std::polar(1.0, ph);
        }
        acc /= static_cast<double>(n);
        if (std::abs(acc) < 1e-15)
            acc = 0.0;
        out.taps[static_cast<std::size_t>(m + half)] = acc;
        energy += std::norm(acc);
    }
    out.truncation_loss = std::max(0.0, 1.0 - energy);
    return out;
}

int cd_taps_for(double beta2L, int sps)
{
    int n = static_cast<int>(std::ceil(4.0 * kPi * std::abs(beta2L) * sps * sps));
    n = std::max(n, 1);
    return n % 2 == 0 ? n + 1 : n;
}

Mimo2x2Fir Mimo2x2Fir::centered(std::size_t len) const
{
    if (len % 2 == 0)
        throw ParameterError("Mimo2x2Fir::centered: length must be odd");
    Mimo2x2Fir out;
    const auto src_c = static_cast<std::ptrdiff_t>(length() / 2);
    const auto dst_c = static_cast<std::ptrdiff_t>(len / 2);
    for (std::size_t i = 0; i < 4; ++i) {
        out.taps[i].assign(len, cplx{});
        for (std::ptrdiff_t k = 0; k < static_cast<std::ptrdiff_t>(len); ++k) {
            const std::ptrdiff_t s = k - dst_c + src_c;
            if (s >= 0 && s < static_cast<std::ptrdiff_t>(length()))
                out.taps[i][static_cast<std::size_t>(k)] = taps[i][static_cast<std::size_t>(s)];
        }
    }
    return out;
}

double Mimo2x2Fir::energy() const
{
    double e = 0.0;
    for (const auto& t : taps)
        for (const auto& v : t)
            e += std::norm(v);
    return e;
}

void CoherentChannelConfig::validate() const
{
    if (cd_taps_len < 0 || (cd_taps_len > 0 && cd_taps_len % 2 == 0))
        throw ParameterError("coherent channel: cd_taps_len must be odd");
    if (pol.kind == PolKind::jones) {
        const auto& j = pol.jones;
        // J J^H = I
        const cplx a = j[0] * std::conj(j[0]) + j[1] * std::conj(j[1]);
        const cplx b = j[0] * std::conj(j[2]) + j[1] * std::conj(j[3]);
        const cplx d = j[2] * std::conj(j[2]) + j[3] * std::conj(j[3]);
        if (std::abs(a - 1.0) > 1e-9 || std::abs(b) > 1e-9 || std::abs(d - 1.0) > 1e-9)
            throw ParameterError("coherent channel: Jones matrix is not unitary");
    }
    if (pol.kind == PolKind::dgd && (pol.dgd < 0.0))
        throw ParameterError("coherent channel: dgd must be non-negative");
    if (std::isnan(snr_db))
        throw ParameterError("coherent channel: snr_db is NaN");
}

CoherentOutput coherent_channel_apply(const DualPolBlock& tx, const CoherentChannelConfig& cfg, RngStream& rng)
{
    tx.validate();
    cfg.validate();
    const int sps = tx.sps();
    const std::size_t n = tx.size();

    const std::array<cplx, 4> mix = cfg.pol.kind == PolKind::jones ? cfg.pol.jones : rotation(cfg.pol.theta);
    CVec mx(n), my(n);
    for (std::size_t i = 0; i < n; ++i) {
        std::array<cplx, 4> m = mix;
        if (cfg.rotation_rate) {
            const double extra = *cfg.rotation_rate * static_cast<double>(i) / sps;
            const auto r = rotation(extra);
            // time-varying rotation applied after the static mixing
            m = {r[0] * mix[0] + r[1] * mix[2], r[0] * mix[1] + r[1] * mix[3], r[2] * mix[0] + r[3] * mix[2],
                 r[2] * mix[1] + r[3] * mix[3]};
        }
        const cplx xi = tx.x.samples[i];
        const cplx yi = tx.y.samples[i];
        mx[i] = m[0] * xi + m[1] * yi;
        my[i] = m[2] * xi + m[3] * yi;
    }

    // differential group delay as a two-tap fractional delay on the y lane
    CVec dgd_y{1.0};
    if (cfg.pol.kind == PolKind::dgd && cfg.pol.dgd > 0.0) {
        const double d = cfg.pol.dgd * sps;
        if (d > 1.0)
            throw ParameterError("coherent channel: dgd longer than one sample");
        dgd_y = {1.0 - d, d};
        CVec delayed(n);
        for (std::size_t i = 0; i < n; ++i)
            delayed[i] = (1.0 - d) * my[i] + (i > 0 ? d * my[i - 1] : cplx{});
        my = std::move(delayed);
    }

    const int n_taps = cfg.cd_taps_len > 0 ? cfg.cd_taps_len : cd_taps_for(cfg.beta2L, sps);
    const CdTaps cd = cd_fir(cfg.beta2L, n_taps, sps);
    SignalBlock bx = fir_apply(SignalBlock(std::move(mx), sps, tx.x.symbol_rate), cd.taps);
    SignalBlock by = fir_apply(SignalBlock(std::move(my), sps, tx.y.symbol_rate), cd.taps);

    CoherentOutput out;
    auto rx_x = awgn_add(bx, cfg.snr_db, rng, false);
    RngStream rng_y = rng.substream(1);
    auto rx_y = awgn_add(by, cfg.snr_db, rng_y, false);
    out.noise_var = rx_x.noise_var;
    out.rx = DualPolBlock(std::move(rx_x.signal), std::move(rx_y.signal));

    // composite response; the DGD taps make the y row one tap longer, pad the x row to match
    const CVec hx = conv_full(cd.taps, CVec{1.0, 0.0});
    const CVec hy = conv_full(cd.taps, dgd_y.size() == 2 ? dgd_y : CVec{1.0, 0.0});
    for (int q = 0; q < 2; ++q) {
        for (int p = 0; p < 2; ++p) {
            const CVec& base = q == 0 ? hx : hy;
            CVec t(base.size());
            for (std::size_t k = 0; k < base.size(); ++k)
                t[k] = base[k] * mix[static_cast<std::size_t>(2 * q + p)];
            // drop the padding tap so the center stays on the CD center
            t.pop_back();
            out.impulse_response.tap(q, p) = std::move(t);
        }
    }
    return out;
}

cplx Nonlinearity::apply(cplx a) const
{
    switch (kind) {
    case NonlinearityKind::none:
        return a;
    case NonlinearityKind::eam: {
        const double mag = std::abs(a);
        if (mag == 0.0)
            return a;
        return a * (sat * std::tanh(mag / sat) / mag);
    }
    case NonlinearityKind::soa:
        return a * std::sqrt(g0 / (1.0 + std::norm(a) / p_sat));
    }
    return a;
}

void ImddChannelConfig::validate() const
{
    if (sps < 2)
        throw ParameterError("imdd channel: sps must be >= 2");
    if (!(rolloff > 0.0) || rolloff > 1.0)
        throw ParameterError("imdd channel: rolloff must be in (0, 1]");
    if (nonlinearity.kind == NonlinearityKind::eam && !(nonlinearity.sat > 0.0))
        throw ParameterError("imdd channel: eam sat must be positive");
    if (nonlinearity.kind == NonlinearityKind::soa && (!(nonlinearity.p_sat > 0.0) || !(nonlinearity.g0 > 0.0)))
        throw ParameterError("imdd channel: soa p_sat and g0 must be positive");
    if (cd_taps < 0 || (cd_taps > 0 && cd_taps % 2 == 0))
        throw ParameterError("imdd channel: cd_taps must be odd");
    if (shot_coeff < 0.0)
        throw ParameterError("imdd channel: shot_coeff must be non-negative");
}

double imdd_min_bias(const ImddChannelConfig& cfg, double max_abs)
{
    const RVec g = rrc_taps(cfg.rolloff, cfg.rrc_span, cfg.sps);
    double worst = 0.0;
    for (int phase = 0; phase < cfg.sps; ++phase) {
        double s = 0.0;
        for (std::size_t k = static_cast<std::size_t>(phase); k < g.size(); k += static_cast<std::size_t>(cfg.sps))
            s += std::abs(g[k]);
        worst = std::max(worst, s);
    }
    return worst * max_abs;
}

ImddOutput imdd_channel_apply(std::span<const double> pam, const ImddChannelConfig& cfg, RngStream& rng)
{
    cfg.validate();
    if (pam.empty())
        throw ParameterError("imdd channel: no symbols");
    const int sps = cfg.sps;
    const std::size_t n = pam.size() * static_cast<std::size_t>(sps);
    const RVec g = rrc_taps(cfg.rolloff, cfg.rrc_span, sps);

    double max_abs = 0.0;
    for (double v : pam)
        max_abs = std::max(max_abs, std::abs(v));

    CVec up(n);
    for (std::size_t k = 0; k < pam.size(); ++k)
        up[k * static_cast<std::size_t>(sps)] = pam[k];
    SignalBlock drive = fir_apply(SignalBlock(std::move(up), sps), g);

    ImddOutput out;
    out.bias = cfg.bias ? *cfg.bias : imdd_min_bias(cfg, max_abs);
    for (auto& v : drive.samples) {
        const double d = v.real() + out.bias;
        if (d < -1e-12)
            throw ParameterError("imdd channel: negative drive after bias");
        v = std::max(d, 0.0);
    }

    CVec field(n);
    for (std::size_t i = 0; i < n; ++i)
        field[i] = cfg.nonlinearity.apply(std::sqrt(drive.samples[i].real()));

    const int n_cd = cfg.cd_taps > 0 ? cfg.cd_taps : cd_taps_for(cfg.beta2L, sps);
    SignalBlock dispersed = fir_apply(SignalBlock(std::move(field), sps), cd_fir(cfg.beta2L, n_cd, sps).taps);

    CVec intensity(n), noisy(n);
    out.noise_var = cfg.snr_db == kNoiseOff ? 0.0 : std::pow(10.0, -cfg.snr_db / 10.0);
    for (std::size_t i = 0; i < n; ++i) {
        intensity[i] = std::norm(dispersed.samples[i]);
        double var = out.noise_var + cfg.shot_coeff * intensity[i].real();
        noisy[i] = intensity[i].real() + (var > 0.0 ? std::sqrt(var) * rng.normal() : 0.0);
    }
    out.clean = fir_apply(SignalBlock(std::move(intensity), sps), g);
    out.rx = fir_apply(SignalBlock(std::move(noisy), sps), g);
    for (auto* blk : {&out.clean, &out.rx})
        for (auto& v : blk->samples)
            v = {v.real(), 0.0};

    double gsum = 0.0;
    for (double v : g)
        gsum += v;
    out.dc_level = out.bias * gsum;
    return out;
}

} // namespace eqlab::channel
