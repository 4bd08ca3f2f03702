#include "eqlab/selftest.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <sstream>

#include <omp.h>

#include "eqlab/checkpoint.hpp"
#include "eqlab/classic.hpp"
#include "eqlab/cnn.hpp"
#include "eqlab/explore.hpp"
#include "eqlab/kernels.hpp"
#include "eqlab/nn.hpp"
#include "eqlab/snn.hpp"
#include "eqlab/vae.hpp"

namespace eqlab::selftest {

namespace {

std::string fmt(const char* f, double v)
{
    char buf[64];
    std::snprintf(buf, sizeof(buf), f, v);
    return buf;
}

double rel_err(double a, double b)
{
    return std::abs(a - b) / std::max(1e-3, std::max(std::abs(a), std::abs(b)));
}

// Central differences at h and h/4. Returns false when they disagree, i.e.
// the loss has a kink (ReLU, spike readout max) inside the stencil.
struct GradStats {
    double worst = 0.0;
    std::size_t checked = 0;
    std::size_t skipped = 0;

    void probe(const std::function<double(double)>& loss_at, double analytic, double tol, double h = 1e-6)
    {
        const double fd1 = (loss_at(h) - loss_at(-h)) / (2 * h);
        const double fd4 = (loss_at(h / 4) - loss_at(-h / 4)) / (h / 2);
        if (rel_err(fd1, fd4) > tol) {
            ++skipped;
            return;
        }
        ++checked;
        worst = std::max(worst, rel_err(fd1, analytic));
    }

    Check verdict(const std::string& name, std::size_t instances, double tol) const
    {
        const bool ok = worst < tol && checked > 0 && skipped * 20 <= checked + skipped;
        return {name, ok,
                std::to_string(instances) + " instances, " + std::to_string(checked) + " coordinates, " +
                    std::to_string(skipped) + " skipped at kinks, worst rel err " + fmt("%.3g", worst),
                worst};
    }
};

std::size_t draw(RngStream& rng, std::size_t lo, std::size_t hi)
{
    return lo + rng.index(hi - lo + 1);
}

} // namespace

Check pareto_oracle(std::size_t instances, std::size_t max_n, std::uint64_t seed)
{
    using explore::ParetoPoint;
    RngStream rng(seed, 0x7061);
    std::size_t mismatches = 0;
    for (std::size_t inst = 0; inst < instances; ++inst) {
        const std::size_t n = inst == 0 ? 1 : draw(rng, 1, max_n);
        // small value sets force ties in both coordinates
        const std::size_t levels = draw(rng, 1, 40);
        std::vector<ParetoPoint> pts(n);
        for (std::size_t i = 0; i < n; ++i)
            pts[i] = {static_cast<double>(10 * rng.index(levels)), static_cast<double>(rng.index(levels)) / 64.0,
                      "m" + std::to_string(i), false};
        std::vector<ParetoPoint> oracle;
        for (std::size_t i = 0; i < n; ++i) {
            bool dominated = false;
            for (std::size_t j = 0; j < n && !dominated; ++j) {
                const auto& p = pts[i];
                const auto& q = pts[j];
                if (q.macs <= p.macs && q.metric <= p.metric && (q.macs < p.macs || q.metric < p.metric))
                    dominated = true;
                if (j < i && q.macs == p.macs && q.metric == p.metric)
                    dominated = true;  // duplicate of an earlier point
            }
            if (!dominated)
                oracle.push_back(pts[i]);
        }
        std::sort(oracle.begin(), oracle.end(), [](const auto& a, const auto& b) { return a.macs < b.macs; });
        const auto front = explore::pareto_front(pts);
        bool same = front.size() == oracle.size();
        for (std::size_t i = 0; same && i < front.size(); ++i)
            same = front[i].macs == oracle[i].macs && front[i].metric == oracle[i].metric &&
                   front[i].model_id == oracle[i].model_id;
        const double budget = static_cast<double>(10 * rng.index(levels + 1));
        std::optional<ParetoPoint> best;
        for (const auto& p : pts)
            if (p.macs <= budget && (!best || p.metric < best->metric || (p.metric == best->metric && p.macs < best->macs)))
                best = p;
        const auto got = explore::budget_optimal(pts, budget);
        same = same && best.has_value() == got.has_value() && (!best || best->model_id == got->model_id);
        mismatches += same ? 0 : 1;
    }
    return {"pareto front vs brute-force oracle", mismatches == 0,
            std::to_string(instances) + " instances up to n=" + std::to_string(max_n) + ", " +
                std::to_string(mismatches) + " mismatches",
            static_cast<double>(mismatches)};
}

Check mac_accounting(std::size_t models, std::uint64_t seed)
{
    RngStream rng(seed, 0x6d6163);
    std::size_t mismatches = 0;
    for (std::size_t k = 0; k < models; ++k) {
        double got = 0.0, want = 0.0;
        switch (k % 5) {
        case 0: {
            const std::size_t n = draw(rng, 1, 99);
            got = static_cast<double>(classic::macs_per_symbol_ffe(n));
            for (std::size_t i = 0; i < n; ++i)
                want += 1;
            break;
        }
        case 1: {
            const std::size_t m1 = draw(rng, 1, 61), m2 = draw(rng, 0, m1);
            classic::VolterraModel v{m1, m2, RVec(m1, 0.1), RVec(m2 * (m2 + 1) / 2, 0.2), 0.0};
            got = static_cast<double>(classic::macs_per_symbol(v));
            // linear taps, then one product and one weight per x_i x_j, i <= j
            want = static_cast<double>(m1);
            for (std::size_t i = 0; i < m2; ++i)
                for (std::size_t j = i; j < m2; ++j)
                    want += 2;
            if (got != static_cast<double>(classic::macs_per_symbol_volterra(m1, m2)))
                ++mismatches;
            break;
        }
        case 2: {
            const std::size_t n = 2 * draw(rng, 0, 20) + 1;
            const auto w = classic::ButterflyFir::identity(n);
            got = static_cast<double>(classic::macs_per_symbol(w));
            // four complex FIRs, four real MACs per complex tap, two output lanes
            for (int lane = 0; lane < 4; ++lane)
                for (std::size_t t = 0; t < n; ++t)
                    want += 4;
            want /= 2;
            break;
        }
        case 3: {
            cnn::CnnConfig cfg;
            cfg.input_window = draw(rng, 12, 64);
            cfg.symbols_per_window = draw(rng, 1, 3);
            cfg.classes = draw(rng, 2, 4);
            std::size_t ch = 1, len = cfg.input_window;
            const std::size_t convs = draw(rng, 1, 2);
            for (std::size_t c = 0; c < convs; ++c) {
                const std::size_t out = draw(rng, 1, 6), ker = draw(rng, 1, std::min<std::size_t>(7, len)),
                                  str = draw(rng, 1, 3);
                cfg.layers.push_back(cnn::LayerSpec::conv(ch, out, ker, str));
                cfg.layers.push_back(cnn::LayerSpec::relu());
                std::size_t positions = 0;
                for (std::size_t s = 0; s + ker <= len; s += str)
                    ++positions;
                ch = out;
                len = positions;
            }
            cfg.layers.push_back(cnn::LayerSpec::dense(ch * len, cfg.output_size()));
            got = cnn::macs_per_symbol_cnn(cfg);
            // recount from the activations the forward pass produces
            RngStream r1 = rng.substream(k), r2 = rng.substream(k + 1000);
            auto m1 = cnn::CnnModel<double>::init(cfg, r1);
            auto m2 = cnn::CnnModel<double>::init(cfg, r2);
            std::vector<double> x(cfg.input_window, 0.5);
            nn::Tape<double> tape;
            const auto y1 = tape.value(m1.forward(tape, x, 1)).size();
            const auto y2 = tape.value(m2.forward(tape, x, 1)).size();
            std::size_t in_ch = 1, in_len = cfg.input_window;
            for (const auto& l : cfg.layers) {
                if (l.kind == cnn::LayerKind::conv1d) {
                    std::size_t positions = 0;
                    for (std::size_t s = 0; s + l.kernel <= in_len; s += l.stride)
                        ++positions;
                    want += static_cast<double>(positions * l.out) * static_cast<double>(in_ch * l.kernel);
                    in_ch = l.out;
                    in_len = positions;
                } else if (l.kind == cnn::LayerKind::dense) {
                    want += static_cast<double>(in_ch * in_len * l.out);
                }
            }
            want /= static_cast<double>(cfg.symbols_per_window);
            // shape purity: weights do not change the count or the output shape
            if (y1 != cfg.output_size() || y2 != y1 || macs_per_symbol_cnn(m2.cfg) != got)
                ++mismatches;
            break;
        }
        case 4: {
            snn::SnnConfig cfg;
            cfg.sizes = {draw(rng, 2, 40), draw(rng, 1, 40), draw(rng, 2, 4)};
            if (rng.index(2))
                cfg.sizes.insert(cfg.sizes.begin() + 2, draw(rng, 1, 20));
            got = cfg.dense_macs();
            for (std::size_t l = 0; l + 1 < cfg.sizes.size(); ++l)
                for (std::size_t i = 0; i < cfg.sizes[l]; ++i)
                    want += static_cast<double>(cfg.sizes[l + 1]);
            break;
        }
        }
        if (got != want)
            ++mismatches;
    }
    return {"MAC accounting vs recount", mismatches == 0,
            std::to_string(models) + " models, " + std::to_string(mismatches) + " mismatches",
            static_cast<double>(mismatches)};
}

Check elbo_gradients(std::size_t instances, std::uint64_t seed, double tol)
{
    RngStream rng(seed, 0x656c626f);
    GradStats st;
    for (std::size_t inst = 0; inst < instances; ++inst) {
        const Constellation c = inst % 3 == 2 ? pcs_shape(build_qam(16), 3.6).constellation : build_qam(16);
        const int sps = 1 + static_cast<int>(inst % 2);
        const int lanes = inst % 4 == 0 ? 1 : 2;
        const std::size_t ne = 2 * draw(rng, 0, 2) + 1, nd = 2 * draw(rng, 0, 2) + 1;
        const std::size_t n = 48;
        CVec x(n * static_cast<std::size_t>(sps)), y(x.size());
        for (auto& v : x)
            v = rng.complex_normal(1.0);
        for (auto& v : y)
            v = rng.complex_normal(1.0);
        const DualPolBlock rx(SignalBlock(x, sps), SignalBlock(y, sps));
        auto m = vae::VaeLeModel::initial(c, ne, nd, sps, lanes);
        for (int q = 0; q < 2; ++q)
            for (int p = 0; p < 2; ++p) {
                for (auto& t : m.encoder.lane(q, p))
                    t += rng.complex_normal(0.04);
                for (auto& t : m.decoder.tap(q, p))
                    t += rng.complex_normal(0.04);
            }
        m.sigma2 = 0.3 + rng.uniform();
        const vae::Segment seg = inst % 5 == 1 ? vae::Segment{4, 44, 8, 40} : vae::Segment{};
        vae::ModelGradient g;
        vae::elbo_forward(rx, m, &g, seg);
        auto coord = [&](cplx& param, cplx grad) {
            const cplx orig = param;
            for (int part = 0; part < 2; ++part) {
                const cplx dir = part == 0 ? cplx{1.0, 0.0} : cplx{0.0, 1.0};
                st.probe(
                    [&](double d) {
                        param = orig + d * dir;
                        const double l = vae::elbo_forward(rx, m, nullptr, seg).total;
                        param = orig;
                        return l;
                    },
                    part == 0 ? grad.real() : grad.imag(), tol);
            }
        };
        for (int q = 0; q < lanes; ++q)
            for (int p = 0; p < lanes; ++p) {
                for (std::size_t k = 0; k < ne; ++k)
                    coord(m.encoder.lane(q, p)[k], g.encoder.lane(q, p)[k]);
                for (std::size_t k = 0; k < nd; ++k)
                    coord(m.decoder.tap(q, p)[k], g.decoder.tap(q, p)[k]);
            }
        const double s0 = m.sigma2;
        st.probe(
            [&](double d) {
                m.sigma2 = s0 + d;
                const double l = vae::elbo_forward(rx, m, nullptr, seg).total;
                m.sigma2 = s0;
                return l;
            },
            g.sigma2, tol);
    }
    return st.verdict("ELBO gradient vs finite differences", instances, tol);
}

Check cnn_gradients(std::size_t instances, std::uint64_t seed, double tol)
{
    RngStream rng(seed, 0x636e6e67);
    GradStats st;
    for (std::size_t inst = 0; inst < instances; ++inst) {
        cnn::CnnConfig cfg;
        cfg.input_window = draw(rng, 8, 24);
        cfg.symbols_per_window = draw(rng, 1, 2);
        cfg.classes = draw(rng, 2, 4);
        cfg.output = inst % 4 == 3 ? cnn::OutputMode::regression : cnn::OutputMode::class_scores;
        std::size_t ch = 1, len = cfg.input_window;
        const std::size_t convs = draw(rng, 1, 2);
        for (std::size_t c = 0; c < convs; ++c) {
            const std::size_t out = draw(rng, 1, 4), ker = draw(rng, 1, std::min<std::size_t>(5, len)),
                              str = draw(rng, 1, 2);
            cfg.layers.push_back(cnn::LayerSpec::conv(ch, out, ker, str));
            cfg.layers.push_back(cnn::LayerSpec::relu());
            len = (len - ker) / str + 1;
            ch = out;
        }
        if (inst % 2) {
            const std::size_t hidden = draw(rng, 2, 6);
            cfg.layers.push_back(cnn::LayerSpec::dense(ch * len, hidden));
            cfg.layers.push_back(cnn::LayerSpec::relu());
            ch = hidden;
            len = 1;
        }
        cfg.layers.push_back(cnn::LayerSpec::dense(ch * len, cfg.output_size()));
        RngStream init = rng.substream(inst);
        auto model = cnn::CnnModel<double>::init(cfg, init);
        for (auto& p : model.params)
            for (auto& v : p.value)
                v += 0.1 * rng.normal();  // non-zero biases too
        const std::size_t batch = draw(rng, 1, 3);
        std::vector<double> x(batch * cfg.input_window);
        for (auto& v : x)
            v = rng.normal();
        std::vector<int> labels(batch * cfg.symbols_per_window);
        std::vector<double> target(labels.size());
        for (std::size_t i = 0; i < labels.size(); ++i) {
            labels[i] = static_cast<int>(rng.index(cfg.classes));
            target[i] = rng.normal();
        }
        nn::Tape<double> tape;
        auto loss = [&]() {
            tape.clear();
            auto y = model.forward(tape, x, batch);
            return cfg.output == cnn::OutputMode::class_scores ? tape.softmax_cross_entropy(y, labels, cfg.classes)
                                                               : tape.mse(y, target);
        };
        for (auto& p : model.params)
            p.zero_grad();
        tape.backward(loss());
        std::vector<std::vector<double>> grads;
        for (const auto& p : model.params)
            grads.push_back(p.grad);
        for (std::size_t pi = 0; pi < model.params.size(); ++pi) {
            auto& p = model.params[pi];
            // every bias, a sample of the weights
            const std::size_t probes = std::min<std::size_t>(p.size(), 6);
            for (std::size_t s = 0; s < probes; ++s) {
                const std::size_t i = p.size() <= 6 ? s : rng.index(p.size());
                const double orig = p.value[i];
                st.probe(
                    [&](double d) {
                        p.value[i] = orig + d;
                        const double l = tape.value(loss())[0];
                        p.value[i] = orig;
                        return l;
                    },
                    grads[pi][i], tol);
            }
        }
    }
    return st.verdict("CNN gradient vs finite differences", instances, tol);
}

Check snn_gradients(std::size_t instances, std::uint64_t seed, double tol)
{
    RngStream rng(seed, 0x736e6e67);
    GradStats st;
    for (std::size_t inst = 0; inst < instances; ++inst) {
        snn::SnnConfig cfg;
        cfg.sizes = {draw(rng, 2, 10), draw(rng, 2, 8)};
        if (inst % 3 == 2)
            cfg.sizes.push_back(draw(rng, 2, 6));
        cfg.sizes.push_back(draw(rng, 2, 3));
        cfg.timesteps = draw(rng, 1, 8);
        cfg.surrogate_beta = 2.0 + 8.0 * rng.uniform();
        cfg.lif.reset = inst % 2 ? snn::Reset::zero : snn::Reset::subtract;
        cfg.lif.tau_mem = 2.0 + 6.0 * rng.uniform();
        cfg.lif.tau_syn = 1.0 + 3.0 * rng.uniform();
        RngStream init = rng.substream(inst);
        auto model = snn::SnnModel::init(cfg, init);
        for (auto& p : model.params)
            for (auto& v : p.value)
                v += 0.1 * rng.normal();
        std::vector<double> window(cfg.sizes.front());
        for (auto& v : window)
            v = rng.normal();
        const int label = static_cast<int>(rng.index(cfg.sizes.back()));
        for (auto& p : model.params)
            p.grad.assign(p.value.size(), 0.0);
        snn::snn_loss_grad(model, window, label, true);
        std::vector<std::vector<double>> grads;
        for (const auto& p : model.params)
            grads.push_back(p.grad);
        auto loss = [&]() {
            const auto logits = snn::snn_logits(model, window, true);
            const double mx = *std::max_element(logits.begin(), logits.end());
            double z = 0.0;
            for (double l : logits)
                z += std::exp(l - mx);
            return std::log(z) + mx - logits[static_cast<std::size_t>(label)];
        };
        for (std::size_t pi = 0; pi < model.params.size(); ++pi) {
            auto& p = model.params[pi];
            const std::size_t probes = std::min<std::size_t>(p.size(), 6);
            for (std::size_t s = 0; s < probes; ++s) {
                const std::size_t i = p.size() <= 6 ? s : rng.index(p.size());
                const double orig = p.value[i];
                st.probe(
                    [&](double d) {
                        p.value[i] = orig + d;
                        const double l = loss();
                        p.value[i] = orig;
                        return l;
                    },
                    grads[pi][i], tol);
            }
        }
    }
    return st.verdict("SNN surrogate gradient vs finite differences (smooth forward)", instances, tol);
}

Check lif_oracle(std::uint64_t seed)
{
    snn::LifParams p;
    const double am = p.alpha_mem(), as = p.alpha_syn();
    std::vector<std::string> problems;
    // scalar recurrence, written out independently
    auto scalar = [&](double c, std::size_t T) {
        std::vector<double> s(T), v(T);
        double i = 0.0, vv = 0.0, sp = 0.0;
        for (std::size_t t = 0; t < T; ++t) {
            i = as * i + c;
            vv = am * vv - p.v_th * sp + i;
            sp = vv >= p.v_th ? 1.0 : 0.0;
            s[t] = sp;
            v[t] = vv;
        }
        return std::pair{s, v};
    };
    const double c_edge = p.v_th * (1.0 - am) * (1.0 - as);  // steady state exactly at threshold
    const std::size_t T = 400;
    for (double c : {0.0, 0.5 * c_edge, 0.99 * c_edge, 1.5 * c_edge, 3.0 * c_edge, 10.0 * c_edge}) {
        const std::vector<double> input(T, c), w{1.0};
        const auto tr = snn::lif_forward(input, 1, w, 1, p);
        const auto [s, v] = scalar(c, T);
        double spikes = 0.0;
        for (std::size_t t = 0; t < T; ++t) {
            spikes += tr.spikes[t];
            if (tr.spikes[t] != s[t] || std::abs(tr.v[t] - v[t]) > 1e-12)
                problems.push_back("recurrence mismatch at c=" + fmt("%.4g", c));
        }
        if (c < c_edge && spikes != 0.0)
            problems.push_back("sub-threshold input spiked");
        if (c > c_edge) {
            std::vector<std::size_t> times;
            for (std::size_t t = 0; t < T; ++t)
                if (tr.spikes[t] != 0.0)
                    times.push_back(t);
            if (times.size() < 3) {
                problems.push_back("supra-threshold input did not spike periodically");
            } else {
                // steady state: intervals settle to a period (two adjacent integers
                // when the exact period is fractional)
                std::size_t lo = T, hi = 0;
                for (std::size_t k = times.size() / 2; k + 1 < times.size(); ++k) {
                    lo = std::min(lo, times[k + 1] - times[k]);
                    hi = std::max(hi, times[k + 1] - times[k]);
                }
                if (hi - lo > 1)
                    problems.push_back("irregular spike intervals at c=" + fmt("%.4g", c));
            }
        }
    }
    // boundedness with subtractive reset on random inputs
    RngStream rng(seed, 0x6c6966);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t f = 1 + rng.index(8), n = 1 + rng.index(8), steps = 200;
        std::vector<double> w(f * n), in(steps * f);
        for (auto& x : w)
            x = 2.0 * rng.normal();
        for (auto& x : in)
            x = rng.index(2) ? 1.0 : 0.0;
        const auto tr = snn::lif_forward(in, f, w, n, p);
        for (std::size_t o = 0; o < n; ++o) {
            double row = 0.0;
            for (std::size_t k = 0; k < f; ++k)
                row += std::abs(w[o * f + k]);
            const double i_bound = row / (1.0 - as);
            for (std::size_t t = 0; t < steps; ++t) {
                if (std::abs(tr.v[t * n + o]) > i_bound / (1.0 - am) + p.v_th + 1e-9)
                    problems.push_back("membrane exceeded its bound");
                if (tr.spikes[t * n + o] != 0.0 && tr.spikes[t * n + o] != 1.0)
                    problems.push_back("non-binary spike");
            }
        }
    }
    std::sort(problems.begin(), problems.end());
    problems.erase(std::unique(problems.begin(), problems.end()), problems.end());
    std::string detail = problems.empty() ? "scalar oracle, thresholds, periodicity and bounds hold" : problems.front();
    return {"LIF recurrence oracle", problems.empty(), detail, static_cast<double>(problems.size())};
}

Check kernels_match(std::uint64_t seed)
{
    RngStream rng(seed, 0x6b726e);
    bool same = true;
    // more threads than cores is fine here, the point is a split iteration space
    const int saved = omp_get_max_threads();
    omp_set_num_threads(std::max(4, saved));
    {
        CVec x(20000), h(31), a(20000), b(20000);
        for (auto& v : x)
            v = rng.complex_normal(1.0);
        for (auto& v : h)
            v = rng.complex_normal(1.0);
        kernels::convolve_serial(x, h, 15, a);
        kernels::convolve_omp(x, h, 15, b);
        same = same && a == b;
    }
    {
        const auto c = pcs_shape(build_qam(64), 4.6).constellation;
        CVec y(5000);
        for (auto& v : y)
            v = rng.complex_normal(1.0);
        std::vector<double> a(y.size() * c.size()), b(a.size());
        kernels::soft_demap_serial(y, c.points(), c.log_priors(), 0.05, a);
        kernels::soft_demap_omp(y, c.points(), c.log_priors(), 0.05, b);
        same = same && a == b;
    }
    {
        const std::size_t in_ch = 3, in_len = 4000, out_ch = 5, k = 7, stride = 2;
        std::vector<double> x(in_ch * in_len), w(out_ch * in_ch * k), bias(out_ch);
        for (auto& v : x)
            v = rng.normal();
        for (auto& v : w)
            v = rng.normal();
        for (auto& v : bias)
            v = rng.normal();
        const std::size_t out_len = (in_len - k) / stride + 1;
        std::vector<double> a(out_ch * out_len), b(a.size());
        kernels::conv1d_serial(x, in_ch, in_len, w, bias, out_ch, k, stride, a);
        kernels::conv1d_omp(x, in_ch, in_len, w, bias, out_ch, k, stride, b);
        same = same && a == b;
    }
    const int used = kernels::max_threads();
    omp_set_num_threads(saved);
    return {"serial and OpenMP kernels agree bit for bit", same,
            "convolve, soft_demap, conv1d on " + std::to_string(used) + " threads", same ? 0.0 : 1.0};
}

Check checkpoint_roundtrip(std::uint64_t seed)
{
    RngStream rng(seed, 0x636b70);
    std::vector<ckpt::Checkpoint> items;
    RVec ffe(9);
    for (auto& v : ffe)
        v = rng.normal();
    items.push_back(ckpt::from_ffe(ffe));
    classic::VolterraModel vm{5, 3, RVec(5), RVec(6), rng.normal()};
    for (auto& v : vm.kernel1)
        v = rng.normal();
    for (auto& v : vm.kernel2)
        v = rng.normal();
    items.push_back(ckpt::from_volterra(vm));
    auto bf = classic::ButterflyFir::identity(7, 2);
    for (int q = 0; q < 2; ++q)
        for (int p = 0; p < 2; ++p)
            for (auto& t : bf.lane(q, p))
                t += rng.complex_normal(0.1);
    items.push_back(ckpt::from_butterfly(bf));
    auto vae = vae::VaeLeModel::initial(pcs_shape(build_qam(64), 4.6).constellation, 5, 3, 1, 2);
    vae.encoder = classic::ButterflyFir::identity(5, 1);
    for (auto& t : vae.decoder.tap(0, 1))
        t += rng.complex_normal(0.1);
    vae.sigma2 = 0.0123;
    items.push_back(ckpt::from_vae(vae));
    cnn::CnnConfig cc;
    cc.input_window = 16;
    cc.layers = {cnn::LayerSpec::conv(1, 3, 4, 2), cnn::LayerSpec::relu(), cnn::LayerSpec::dense(21, 2)};
    RngStream r1 = rng.substream(1);
    items.push_back(ckpt::from_cnn(cnn::CnnModel<float>::init(cc, r1)));
    snn::SnnConfig sc;
    sc.sizes = {8, 6, 2};
    sc.encoding = snn::InputEncoding::ternary;
    sc.lif.reset = snn::Reset::zero;
    RngStream r2 = rng.substream(2);
    items.push_back(ckpt::from_snn(snn::SnnModel::init(sc, r2)));

    std::size_t bad = 0;
    for (const auto& c : items) {
        std::ostringstream a;
        ckpt::save(a, c);
        std::istringstream in(a.str());
        ckpt::Checkpoint back = ckpt::load(in);
        // rebuild the model from the file, then serialize it again
        if (c.kind == "ffe") back = ckpt::from_ffe(ckpt::to_ffe(back));
        else if (c.kind == "volterra") back = ckpt::from_volterra(ckpt::to_volterra(back));
        else if (c.kind == "butterfly") back = ckpt::from_butterfly(ckpt::to_butterfly(back));
        else if (c.kind == "vae-le") back = ckpt::from_vae(ckpt::to_vae(back));
        else if (c.kind == "cnn") back = ckpt::from_cnn(ckpt::to_cnn(back));
        else if (c.kind == "snn") back = ckpt::from_snn(ckpt::to_snn(back));
        std::ostringstream b;
        ckpt::save(b, back);
        bad += a.str() == b.str() ? 0 : 1;
    }
    return {"checkpoint round trip", bad == 0,
            std::to_string(items.size()) + " model kinds, " + std::to_string(bad) + " differ", static_cast<double>(bad)};
}

std::vector<Check> run_all(std::uint64_t seed, bool quick)
{
    const std::size_t grad_n = quick ? 20 : 100;
    const std::vector<std::pair<std::string, std::function<Check()>>> suites{
        {"pareto", [&] { return pareto_oracle(quick ? 20 : 100, 1000, seed); }},
        {"macs", [&] { return mac_accounting(20, seed); }},
        {"elbo", [&] { return elbo_gradients(grad_n, seed, 1e-5); }},
        {"cnn", [&] { return cnn_gradients(grad_n, seed, 1e-5); }},
        {"snn", [&] { return snn_gradients(grad_n, seed, 1e-5); }},
        {"lif", [&] { return lif_oracle(seed); }},
        {"kernels", [&] { return kernels_match(seed); }},
        {"checkpoint", [&] { return checkpoint_roundtrip(seed); }},
    };
    std::vector<Check> out;
    for (const auto& [name, run] : suites) {
        try {
            out.push_back(run());
        } catch (const std::exception& e) {
            out.push_back({name, false, std::string("threw: ") + e.what(), 1.0});
        }
    }
    return out;
}

} // namespace eqlab::selftest
