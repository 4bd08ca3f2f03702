#include "eqlab/vae.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "eqlab/rng.hpp"

namespace eqlab::vae {

namespace {

struct Range {
    std::size_t s0, s1;  // posterior symbols
    std::size_t r0, r1;  // reconstructed symbols
};

Range resolve(const Segment& seg, std::size_t n_sym)
{
    Range r{seg.begin, seg.end, seg.recon_begin, seg.recon_end};
    if (r.s1 == 0)
        r.s1 = n_sym;
    if (r.r1 == 0) {
        r.r0 = r.s0;
        r.r1 = r.s1;
    }
    if (r.s0 >= r.s1 || r.s1 > n_sym || r.r0 >= r.r1 || r.r1 > n_sym)
        throw EvaluationError("vae: segment outside the received block");
    return r;
}

const CVec& lane_samples(const DualPolBlock& rx, int q) { return q == 0 ? rx.x.samples : rx.y.samples; }

// encoder output of lane p for symbols [s0, s1)
CVec encode_lane(const DualPolBlock& rx, const ButterflyFir& w, int p, int lanes, std::size_t s0, std::size_t s1)
{
    const auto c = static_cast<std::ptrdiff_t>(w.n_taps() / 2);
    const int sps = w.sps_in;
    CVec z(s1 - s0);
    for (int q = 0; q < lanes; ++q) {
        const CVec& in = lane_samples(rx, q);
        const CVec& taps = w.lane(p, q);
        const auto ns = static_cast<std::ptrdiff_t>(in.size());
        for (std::size_t n = s0; n < s1; ++n) {
            const std::ptrdiff_t base = static_cast<std::ptrdiff_t>(n) * sps + c;
            cplx acc{};
            for (std::size_t k = 0; k < taps.size(); ++k) {
                const std::ptrdiff_t i = base - static_cast<std::ptrdiff_t>(k);
                if (i >= 0 && i < ns)
                    acc += taps[k] * in[static_cast<std::size_t>(i)];
            }
            z[n - s0] += acc;
        }
    }
    return z;
}

void encoder_grad(const DualPolBlock& rx, const CVec& gz, int p, int lanes, std::size_t s0, ButterflyFir& g)
{
    const auto c = static_cast<std::ptrdiff_t>(g.n_taps() / 2);
    const int sps = g.sps_in;
    for (int q = 0; q < lanes; ++q) {
        const CVec& in = lane_samples(rx, q);
        CVec& gt = g.lane(p, q);
        const auto ns = static_cast<std::ptrdiff_t>(in.size());
        for (std::size_t j = 0; j < gz.size(); ++j) {
            const std::ptrdiff_t base = static_cast<std::ptrdiff_t>(s0 + j) * sps + c;
            for (std::size_t k = 0; k < gt.size(); ++k) {
                const std::ptrdiff_t i = base - static_cast<std::ptrdiff_t>(k);
                if (i >= 0 && i < ns)
                    gt[k] += gz[j] * std::conj(in[static_cast<std::size_t>(i)]);
            }
        }
    }
}

ButterflyFir zero_like(const ButterflyFir& w)
{
    ButterflyFir g = w;
    for (auto* t : {&g.w_xx, &g.w_xy, &g.w_yx, &g.w_yy})
        std::fill(t->begin(), t->end(), cplx{});
    return g;
}

Mimo2x2Fir zero_like(const Mimo2x2Fir& h)
{
    Mimo2x2Fir g = h;
    for (auto& t : g.taps)
        std::fill(t.begin(), t.end(), cplx{});
    return g;
}

// Linear decoder applied to per-lane symbol means; shared by the VAE and VQ-VAE.
struct Reconstruction {
    std::array<CVec, 2> err;      // r - h * mu over the reconstructed samples
    std::array<RVec, 2> weight;   // B_p[n]: decoder energy landing inside the range
    double residual = 0.0;        // sum |err|^2
    double variance_term = 0.0;   // sum_p sum_n B_p[n] var_p[n]
    std::size_t samples = 0;      // reconstructed samples per lane
};

Reconstruction reconstruct(const DualPolBlock& rx, const Mimo2x2Fir& h, int lanes, int sps, const Range& r,
                           const std::array<CVec, 2>& mu, const std::array<RVec, 2>* var)
{
    Reconstruction out;
    const std::size_t m0 = r.r0 * static_cast<std::size_t>(sps);
    const std::size_t m1 = r.r1 * static_cast<std::size_t>(sps);
    out.samples = m1 - m0;
    const auto ch = static_cast<std::ptrdiff_t>(h.length() / 2);
    for (int q = 0; q < lanes; ++q) {
        const CVec& rxq = lane_samples(rx, q);
        out.err[static_cast<std::size_t>(q)].assign(rxq.begin() + static_cast<std::ptrdiff_t>(m0),
                                                    rxq.begin() + static_cast<std::ptrdiff_t>(m1));
    }
    for (int p = 0; p < lanes; ++p) {
        auto& wp = out.weight[static_cast<std::size_t>(p)];
        wp.assign(r.s1 - r.s0, 0.0);
        for (int q = 0; q < lanes; ++q) {
            const CVec& taps = h.tap(q, p);
            CVec& e = out.err[static_cast<std::size_t>(q)];
            for (std::size_t n = r.s0; n < r.s1; ++n) {
                const cplx m_n = mu[static_cast<std::size_t>(p)][n - r.s0];
                for (std::size_t k = 0; k < taps.size(); ++k) {
                    const std::ptrdiff_t m =
                        static_cast<std::ptrdiff_t>(n) * sps + static_cast<std::ptrdiff_t>(k) - ch;
                    if (m < static_cast<std::ptrdiff_t>(m0) || m >= static_cast<std::ptrdiff_t>(m1))
                        continue;
                    e[static_cast<std::size_t>(m) - m0] -= taps[k] * m_n;
                    wp[n - r.s0] += std::norm(taps[k]);
                }
            }
        }
        if (var != nullptr)
            for (std::size_t j = 0; j < wp.size(); ++j)
                out.variance_term += wp[j] * (*var)[static_cast<std::size_t>(p)][j];
    }
    for (int q = 0; q < lanes; ++q)
        for (const auto& v : out.err[static_cast<std::size_t>(q)])
            out.residual += std::norm(v);
    return out;
}

// d(residual + variance_term)/d mu_p[n], packed complex, without the variance part
CVec residual_grad_mu(const Mimo2x2Fir& h, const Reconstruction& rec, int lanes, int sps, const Range& r, int p)
{
    const std::size_t m0 = r.r0 * static_cast<std::size_t>(sps);
    const std::size_t m1 = r.r1 * static_cast<std::size_t>(sps);
    const auto ch = static_cast<std::ptrdiff_t>(h.length() / 2);
    CVec g(r.s1 - r.s0);
    for (int q = 0; q < lanes; ++q) {
        const CVec& taps = h.tap(q, p);
        const CVec& e = rec.err[static_cast<std::size_t>(q)];
        for (std::size_t n = r.s0; n < r.s1; ++n)
            for (std::size_t k = 0; k < taps.size(); ++k) {
                const std::ptrdiff_t m = static_cast<std::ptrdiff_t>(n) * sps + static_cast<std::ptrdiff_t>(k) - ch;
                if (m < static_cast<std::ptrdiff_t>(m0) || m >= static_cast<std::ptrdiff_t>(m1))
                    continue;
                g[n - r.s0] -= 2.0 * std::conj(taps[k]) * e[static_cast<std::size_t>(m) - m0];
            }
    }
    return g;
}

// d(residual + variance_term)/dh, packed complex
void decoder_grad(const Mimo2x2Fir& h, const Reconstruction& rec, int lanes, int sps, const Range& r,
                  const std::array<CVec, 2>& mu, const std::array<RVec, 2>* var, double scale, Mimo2x2Fir& g)
{
    const std::size_t m0 = r.r0 * static_cast<std::size_t>(sps);
    const std::size_t m1 = r.r1 * static_cast<std::size_t>(sps);
    const auto ch = static_cast<std::ptrdiff_t>(h.length() / 2);
    for (int q = 0; q < lanes; ++q)
        for (int p = 0; p < lanes; ++p) {
            const CVec& taps = h.tap(q, p);
            CVec& gt = g.tap(q, p);
            const CVec& e = rec.err[static_cast<std::size_t>(q)];
            for (std::size_t k = 0; k < taps.size(); ++k) {
                cplx acc{};
                double vsum = 0.0;
                for (std::size_t n = r.s0; n < r.s1; ++n) {
                    const std::ptrdiff_t m =
                        static_cast<std::ptrdiff_t>(n) * sps + static_cast<std::ptrdiff_t>(k) - ch;
                    if (m < static_cast<std::ptrdiff_t>(m0) || m >= static_cast<std::ptrdiff_t>(m1))
                        continue;
                    acc -= 2.0 * e[static_cast<std::size_t>(m) - m0] *
                           std::conj(mu[static_cast<std::size_t>(p)][n - r.s0]);
                    if (var != nullptr)
                        vsum += (*var)[static_cast<std::size_t>(p)][n - r.s0];
                }
                gt[k] += scale * (acc + 2.0 * taps[k] * vsum);
            }
        }
}

struct AdamState {
    std::vector<double> m, v;
    std::size_t t = 0;
};

std::vector<cplx*> encoder_params(ButterflyFir& w, int lanes)
{
    std::vector<cplx*> out;
    for (int q = 0; q < lanes; ++q)
        for (int p = 0; p < lanes; ++p)
            for (auto& v : w.lane(q, p))
                out.push_back(&v);
    return out;
}

std::vector<cplx*> decoder_params(Mimo2x2Fir& h, int lanes)
{
    std::vector<cplx*> out;
    for (int q = 0; q < lanes; ++q)
        for (int p = 0; p < lanes; ++p)
            for (auto& v : h.tap(q, p))
                out.push_back(&v);
    return out;
}

void adam_step(const std::vector<cplx*>& params, const std::vector<cplx*>& grads, AdamState& st, double lr,
               const AdamOptions& o)
{
    if (st.m.empty()) {
        st.m.assign(2 * params.size(), 0.0);
        st.v.assign(2 * params.size(), 0.0);
    }
    ++st.t;
    const double bc1 = 1.0 - std::pow(o.beta1, static_cast<double>(st.t));
    const double bc2 = 1.0 - std::pow(o.beta2, static_cast<double>(st.t));
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double g[2] = {grads[i]->real(), grads[i]->imag()};
        double upd[2];
        for (int c = 0; c < 2; ++c) {
            double& m = st.m[2 * i + static_cast<std::size_t>(c)];
            double& v = st.v[2 * i + static_cast<std::size_t>(c)];
            m = o.beta1 * m + (1.0 - o.beta1) * g[c];
            v = o.beta2 * v + (1.0 - o.beta2) * g[c] * g[c];
            upd[c] = lr * (m / bc1) / (std::sqrt(v / bc2) + o.eps);
        }
        *params[i] -= cplx{upd[0], upd[1]};
    }
}

Range batch_range(std::size_t n_sym, std::size_t batch, std::size_t pad, RngStream& rng)
{
    const std::size_t b = std::min(batch, n_sym);
    const std::size_t start = n_sym > b ? rng.index(n_sym - b + 1) : 0;
    Range r;
    r.r0 = start;
    r.r1 = start + b;
    r.s0 = start >= pad ? start - pad : 0;
    r.s1 = std::min(n_sym, start + b + pad);
    return r;
}

} // namespace

VaeLeModel VaeLeModel::initial(const Constellation& c, std::size_t encoder_taps, std::size_t decoder_taps, int sps_in,
                               int lanes)
{
    if (decoder_taps % 2 == 0)
        throw ParameterError("VaeLeModel: decoder length must be odd");
    VaeLeModel m{ButterflyFir::identity(encoder_taps, sps_in), {}, 1.0, c, lanes};
    for (auto& t : m.decoder.taps)
        t.assign(decoder_taps, cplx{});
    m.decoder.tap(0, 0)[decoder_taps / 2] = 1.0;
    m.decoder.tap(1, 1)[decoder_taps / 2] = 1.0;
    m.validate();
    return m;
}

void VaeLeModel::validate() const
{
    encoder.validate();
    if (!(sigma2 > 0.0) || !std::isfinite(sigma2))
        throw ParameterError("VaeLeModel: sigma2 must be positive");
    if (lanes != 1 && lanes != 2)
        throw ParameterError("VaeLeModel: lanes must be 1 or 2");
    const std::size_t n = decoder.length();
    if (n == 0 || n % 2 == 0)
        throw ParameterError("VaeLeModel: decoder length must be odd");
    for (const auto& t : decoder.taps) {
        if (t.size() != n)
            throw ParameterError("VaeLeModel: decoder lanes differ in length");
        for (const auto& v : t)
            if (!std::isfinite(v.real()) || !std::isfinite(v.imag()))
                throw ParameterError("VaeLeModel: non-finite decoder tap");
    }
}

std::vector<PosteriorBlock> vae_posterior(const DualPolBlock& rx, const VaeLeModel& model)
{
    model.validate();
    if (rx.sps() != model.encoder.sps_in)
        throw ParameterError("vae_posterior: input sps does not match the encoder");
    std::vector<PosteriorBlock> out;
    const std::size_t n_sym = rx.x.num_symbols();
    for (int p = 0; p < model.lanes; ++p) {
        const CVec z = encode_lane(rx, model.encoder, p, model.lanes, 0, n_sym);
        out.push_back(soft_demap(z, model.constellation, model.sigma2));
    }
    return out;
}

ElboBreakdown elbo_loss(const DualPolBlock& rx, const std::vector<PosteriorBlock>& q, const VaeLeModel& model)
{
    model.validate();
    const std::size_t n_sym = rx.x.num_symbols();
    if (q.size() != static_cast<std::size_t>(model.lanes))
        throw EvaluationError("elbo_loss: one posterior block per lane expected");
    const Range r{0, n_sym, 0, n_sym};
    const auto& pts = model.constellation.points();
    const auto& logp = model.constellation.log_priors();
    std::array<CVec, 2> mu;
    std::array<RVec, 2> var;
    double kl = 0.0;
    for (int p = 0; p < model.lanes; ++p) {
        const auto& qp = q[static_cast<std::size_t>(p)];
        if (qp.rows != n_sym || qp.cols != pts.size())
            throw EvaluationError("elbo_loss: posterior not aligned with the symbol grid");
        auto& m = mu[static_cast<std::size_t>(p)];
        auto& v = var[static_cast<std::size_t>(p)];
        m.assign(n_sym, cplx{});
        v.assign(n_sym, 0.0);
        for (std::size_t n = 0; n < n_sym; ++n) {
            const auto row = qp.row(n);
            double s = 0.0;
            for (std::size_t c = 0; c < pts.size(); ++c) {
                m[n] += row[c] * pts[c];
                s += row[c] * std::norm(pts[c]);
                if (row[c] > 0.0)
                    kl += row[c] * (std::log(row[c]) - logp[c]);
            }
            v[n] = std::max(0.0, s - std::norm(m[n]));
        }
    }
    const Reconstruction rec = reconstruct(rx, model.decoder, model.lanes, rx.sps(), r, mu, &var);
    ElboBreakdown out;
    out.recon = (rec.residual + rec.variance_term) / (model.sigma2 * static_cast<double>(n_sym));
    out.kl = kl / static_cast<double>(n_sym);
    out.total = out.recon + out.kl;
    return out;
}

ElboBreakdown elbo_forward(const DualPolBlock& rx, const VaeLeModel& model, ModelGradient* grad, const Segment& seg)
{
    if (rx.sps() != model.encoder.sps_in)
        throw ParameterError("elbo_forward: input sps does not match the encoder");
    const int lanes = model.lanes;
    const int sps = rx.sps();
    const Range r = resolve(seg, rx.x.num_symbols());
    const std::size_t nb = r.s1 - r.s0;
    const auto& pts = model.constellation.points();
    const auto& logp = model.constellation.log_priors();
    const std::size_t m_pts = pts.size();
    const double s2 = model.sigma2;
    const double norm = 1.0 / static_cast<double>(nb);

    std::array<CVec, 2> z, mu;
    std::array<RVec, 2> var, logq;
    double kl = 0.0;
    RVec logits(m_pts);
    for (int p = 0; p < lanes; ++p) {
        const auto pi = static_cast<std::size_t>(p);
        z[pi] = encode_lane(rx, model.encoder, p, lanes, r.s0, r.s1);
        mu[pi].assign(nb, cplx{});
        var[pi].assign(nb, 0.0);
        logq[pi].assign(nb * m_pts, 0.0);
        for (std::size_t n = 0; n < nb; ++n) {
            double mx = -std::numeric_limits<double>::infinity();
            for (std::size_t c = 0; c < m_pts; ++c) {
                logits[c] = logp[c] - std::norm(z[pi][n] - pts[c]) / s2;
                mx = std::max(mx, logits[c]);
            }
            double sum = 0.0;
            for (std::size_t c = 0; c < m_pts; ++c)
                sum += std::exp(logits[c] - mx);
            const double lse = mx + std::log(sum);
            double s = 0.0;
            for (std::size_t c = 0; c < m_pts; ++c) {
                const double lq = logits[c] - lse;
                const double qc = std::exp(lq);
                logq[pi][n * m_pts + c] = lq;
                mu[pi][n] += qc * pts[c];
                s += qc * std::norm(pts[c]);
                kl += qc * (lq - logp[c]);
            }
            var[pi][n] = s - std::norm(mu[pi][n]);
        }
    }

    const Reconstruction rec = reconstruct(rx, model.decoder, lanes, sps, r, mu, &var);
    const double big_s = rec.residual + rec.variance_term;
    ElboBreakdown out;
    out.recon = big_s / s2 * norm;
    out.kl = kl * norm;
    out.total = out.recon + out.kl;
    if (grad == nullptr)
        return out;

    grad->encoder = zero_like(model.encoder);
    grad->decoder = zero_like(model.decoder);
    grad->sigma2 = -big_s / (s2 * s2) * norm;

    RVec gq(m_pts);
    for (int p = 0; p < lanes; ++p) {
        const auto pi = static_cast<std::size_t>(p);
        const CVec gmu_res = residual_grad_mu(model.decoder, rec, lanes, sps, r, p);
        CVec gz(nb);
        for (std::size_t n = 0; n < nb; ++n) {
            const double b = rec.weight[pi][n];
            const cplx gmu = gmu_res[n] - 2.0 * mu[pi][n] * b;
            const double* lq = &logq[pi][n * m_pts];
            double mean = 0.0;
            for (std::size_t c = 0; c < m_pts; ++c) {
                const double ds = (std::conj(gmu) * pts[c]).real() + b * std::norm(pts[c]);
                gq[c] = (ds / s2 + (lq[c] - logp[c])) * norm;
                mean += std::exp(lq[c]) * gq[c];
            }
            cplx acc{};
            double acc_s2 = 0.0;
            for (std::size_t c = 0; c < m_pts; ++c) {
                // dL/dlogit_c = q_c (G_c - E_q[G])
                const double a = std::exp(lq[c]) * (gq[c] - mean);
                const cplx d = z[pi][n] - pts[c];
                acc += a * d;
                acc_s2 += a * std::norm(d);
            }
            gz[n] = -2.0 / s2 * acc;
            grad->sigma2 += acc_s2 / (s2 * s2);
        }
        encoder_grad(rx, gz, p, lanes, r.s0, grad->encoder);
    }
    decoder_grad(model.decoder, rec, lanes, sps, r, mu, &var, norm / s2, grad->decoder);
    return out;
}

VaeTrainResult vae_train(const DualPolBlock& rx, const VaeLeModel& model0, const VaeTrainOptions& opt)
{
    model0.validate();
    const std::size_t n_sym = rx.x.num_symbols();
    if (opt.batch < 4 * model0.decoder.length() / static_cast<std::size_t>(rx.sps()) && opt.batch < n_sym)
        throw ParameterError("vae_train: batch must cover at least four decoder lengths");
    VaeTrainResult res{model0, {}, {}, {}};
    VaeLeModel& model = res.model;
    RngStream rng(opt.seed, 0x7661);
    const std::size_t pad = model.decoder.length() / (2 * static_cast<std::size_t>(rx.sps())) + 1;
    AdamState enc_state, dec_state;
    std::vector<double> totals;

    for (std::size_t step = 0; step < opt.n_steps; ++step) {
        const Range r = batch_range(n_sym, opt.batch, pad, rng);
        const Segment seg{r.s0, r.s1, r.r0, r.r1};
        ModelGradient g;
        const VaeLeModel last_good = model;
        const ElboBreakdown l = elbo_forward(rx, model, &g, seg);
        totals.push_back(l.total);
        if (!std::isfinite(l.total))
            throw VaeTrainingError("vae_train: loss is not finite", totals, last_good);
        res.trace.push_back(l);

        adam_step(encoder_params(model.encoder, model.lanes), encoder_params(g.encoder, model.lanes), enc_state,
                  opt.adam.lr_encoder, opt.adam);
        if (step >= opt.decoder_warmup)
            adam_step(decoder_params(model.decoder, model.lanes), decoder_params(g.decoder, model.lanes), dec_state,
                      opt.adam.lr_decoder, opt.adam);

        // closed-form noise variance on the updated parameters
        std::array<CVec, 2> mu;
        std::array<RVec, 2> var;
        double proxy = 0.0;
        for (int p = 0; p < model.lanes; ++p) {
            const auto pi = static_cast<std::size_t>(p);
            const CVec z = encode_lane(rx, model.encoder, p, model.lanes, r.s0, r.s1);
            const PosteriorBlock q = soft_demap(z, model.constellation, model.sigma2);
            mu[pi].assign(z.size(), cplx{});
            var[pi].assign(z.size(), 0.0);
            for (std::size_t n = 0; n < z.size(); ++n) {
                const auto row = q.row(n);
                double s = 0.0, qmax = 0.0;
                for (std::size_t c = 0; c < row.size(); ++c) {
                    mu[pi][n] += row[c] * model.constellation.points()[c];
                    s += row[c] * std::norm(model.constellation.points()[c]);
                    qmax = std::max(qmax, row[c]);
                }
                var[pi][n] = s - std::norm(mu[pi][n]);
                if (n + r.s0 >= r.r0 && n + r.s0 < r.r1)
                    proxy += 1.0 - qmax;
            }
        }
        const Reconstruction rec = reconstruct(rx, model.decoder, model.lanes, rx.sps(), r, mu, &var);
        const double s2 = (rec.residual + rec.variance_term) / static_cast<double>(model.lanes * rec.samples);
        model.sigma2 = std::min(opt.sigma2_cap, std::max(opt.sigma2_floor, s2));
        if (!std::isfinite(model.sigma2))
            throw VaeTrainingError("vae_train: noise variance is not finite", totals, last_good);
        res.ser_proxy.push_back(proxy / static_cast<double>(model.lanes * (r.r1 - r.r0)));
        if (opt.snapshot_every > 0 && (step + 1) % opt.snapshot_every == 0)
            res.snapshots.push_back(model.encoder);
    }
    return res;
}

double alignment_score(const Mimo2x2Fir& est, const Mimo2x2Fir& truth, int max_lag)
{
    const double ne = std::sqrt(est.energy());
    const double nt = std::sqrt(truth.energy());
    if (ne == 0.0 || nt == 0.0)
        return 0.0;
    const auto ce = static_cast<std::ptrdiff_t>(est.length() / 2);
    const auto ct = static_cast<std::ptrdiff_t>(truth.length() / 2);
    // |<est column p, truth column p2>| maximized over lag
    auto column = [&](int p, int p2) {
        double best = 0.0;
        for (int lag = -max_lag; lag <= max_lag; ++lag) {
            cplx acc{};
            for (int q = 0; q < 2; ++q) {
                const CVec& a = est.tap(q, p);
                const CVec& b = truth.tap(q, p2);
                for (std::size_t k = 0; k < a.size(); ++k) {
                    const std::ptrdiff_t j = static_cast<std::ptrdiff_t>(k) - ce + ct + lag;
                    if (j >= 0 && j < static_cast<std::ptrdiff_t>(b.size()))
                        acc += a[k] * std::conj(b[static_cast<std::size_t>(j)]);
                }
            }
            best = std::max(best, std::abs(acc));
        }
        return best;
    };
    const double straight = column(0, 0) + column(1, 1);
    const double swapped = column(0, 1) + column(1, 0);
    return std::min(1.0, std::max(straight, swapped) / (ne * nt));
}

ChannelEstimate channel_estimate(const VaeLeModel& model, const std::optional<Mimo2x2Fir>& truth)
{
    ChannelEstimate out{model.decoder, std::numeric_limits<double>::quiet_NaN()};
    if (truth)
        out.score = alignment_score(model.decoder, *truth);
    return out;
}

std::vector<int> vq_quantize(std::span<const cplx> z, const Constellation& c, double sigma2)
{
    std::vector<int> idx(z.size());
    const auto& pts = c.points();
    const auto& logp = c.log_priors();
    for (std::size_t n = 0; n < z.size(); ++n) {
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k < pts.size(); ++k) {
            const double d = std::norm(z[n] - pts[k]) - sigma2 * logp[k];
            if (d < best) {
                best = d;
                idx[n] = static_cast<int>(k);
            }
        }
    }
    return idx;
}

VqBreakdown vqvae_forward(const DualPolBlock& rx, const VaeLeModel& model, double beta_commit, ModelGradient* grad,
                          const Segment& seg)
{
    if (beta_commit < 0.0)
        throw ParameterError("vqvae: beta_commit must be non-negative");
    if (rx.sps() != model.encoder.sps_in)
        throw ParameterError("vqvae: input sps does not match the encoder");
    const int lanes = model.lanes;
    const int sps = rx.sps();
    const Range r = resolve(seg, rx.x.num_symbols());
    const std::size_t nb = r.s1 - r.s0;
    const double norm = 1.0 / static_cast<double>(nb);
    const auto& pts = model.constellation.points();

    std::array<CVec, 2> z, xhat;
    double commit = 0.0;
    for (int p = 0; p < lanes; ++p) {
        const auto pi = static_cast<std::size_t>(p);
        z[pi] = encode_lane(rx, model.encoder, p, lanes, r.s0, r.s1);
        const auto idx = vq_quantize(z[pi], model.constellation, model.sigma2);
        xhat[pi].resize(nb);
        for (std::size_t n = 0; n < nb; ++n) {
            xhat[pi][n] = pts[static_cast<std::size_t>(idx[n])];
            commit += std::norm(z[pi][n] - xhat[pi][n]);
        }
    }
    const Reconstruction rec = reconstruct(rx, model.decoder, lanes, sps, r, xhat, nullptr);
    VqBreakdown out;
    out.recon = rec.residual / model.sigma2 * norm;
    out.commit = beta_commit * commit * norm;
    out.total = out.recon + out.commit;
    if (grad == nullptr)
        return out;

    grad->encoder = zero_like(model.encoder);
    grad->decoder = zero_like(model.decoder);
    grad->sigma2 = -rec.residual / (model.sigma2 * model.sigma2) * norm;
    for (int p = 0; p < lanes; ++p) {
        const auto pi = static_cast<std::size_t>(p);
        const CVec gx = residual_grad_mu(model.decoder, rec, lanes, sps, r, p);
        CVec gz(nb);
        for (std::size_t n = 0; n < nb; ++n)
            gz[n] = gx[n] / model.sigma2 * norm + 2.0 * beta_commit * (z[pi][n] - xhat[pi][n]) * norm;
        encoder_grad(rx, gz, p, lanes, r.s0, grad->encoder);
    }
    decoder_grad(model.decoder, rec, lanes, sps, r, xhat, nullptr, norm / model.sigma2, grad->decoder);
    return out;
}

VqTrainResult vqvae_train(const DualPolBlock& rx, const VaeLeModel& model0, double beta_commit,
                          const VaeTrainOptions& opt)
{
    model0.validate();
    const std::size_t n_sym = rx.x.num_symbols();
    VqTrainResult res{model0, {}};
    VaeLeModel& model = res.model;
    RngStream rng(opt.seed, 0x7671);
    const std::size_t pad = model.decoder.length() / (2 * static_cast<std::size_t>(rx.sps())) + 1;
    AdamState enc_state, dec_state;
    std::vector<double> totals;
    for (std::size_t step = 0; step < opt.n_steps; ++step) {
        const Range r = batch_range(n_sym, opt.batch, pad, rng);
        ModelGradient g;
        const VaeLeModel last_good = model;
        const VqBreakdown l = vqvae_forward(rx, model, beta_commit, &g, {r.s0, r.s1, r.r0, r.r1});
        totals.push_back(l.total);
        if (!std::isfinite(l.total))
            throw VaeTrainingError("vqvae_train: loss is not finite", totals, last_good);
        res.trace.push_back(l);
        adam_step(encoder_params(model.encoder, model.lanes), encoder_params(g.encoder, model.lanes), enc_state,
                  opt.adam.lr_encoder, opt.adam);
        if (step >= opt.decoder_warmup)
            adam_step(decoder_params(model.decoder, model.lanes), decoder_params(g.decoder, model.lanes), dec_state,
                      opt.adam.lr_decoder, opt.adam);
        // residual power from the same batch before the step sets the next variance
        model.sigma2 = std::max(opt.sigma2_floor, l.recon * model.sigma2 * static_cast<double>(r.s1 - r.s0) /
                                                      static_cast<double>(model.lanes * (r.r1 - r.r0) *
                                                                          static_cast<std::size_t>(rx.sps())));
    }
    return res;
}

std::vector<std::vector<int>> vae_decide(const DualPolBlock& rx, const VaeLeModel& model)
{
    std::vector<std::vector<int>> out;
    const std::size_t n_sym = rx.x.num_symbols();
    for (int p = 0; p < model.lanes; ++p) {
        const CVec z = encode_lane(rx, model.encoder, p, model.lanes, 0, n_sym);
        out.push_back(hard_decide(z, model.constellation));
    }
    return out;
}

} // namespace eqlab::vae
