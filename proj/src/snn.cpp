#include "eqlab/snn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "eqlab/error.hpp"

namespace eqlab::snn {

double LifParams::alpha_mem() const { return std::exp(-1.0 / tau_mem); }
double LifParams::alpha_syn() const { return std::exp(-1.0 / tau_syn); }

void LifParams::validate() const
{
    if (!(tau_mem > 0.0) || !(tau_syn > 0.0) || !std::isfinite(tau_mem) || !std::isfinite(tau_syn))
        throw ParameterError("LifParams: time constants must be positive and finite");
    if (!(v_th > 0.0) || !std::isfinite(v_th))
        throw ParameterError("LifParams: threshold must be positive");
}

double surrogate_grad(double v, double v_th, double beta)
{
    const double d = 1.0 + beta * std::abs(v - v_th);
    return 1.0 / (d * d);
}

double surrogate_spike(double v, double v_th, double beta)
{
    const double x = v - v_th;
    return 0.5 + x / (1.0 + beta * std::abs(x));
}

namespace {

struct LayerState {
    std::vector<double> in;  // [T x fan_in]
    std::vector<double> i;   // [T x out]
    std::vector<double> v;
    std::vector<double> s;
};

// One layer over T steps. spiking=false gives the leaky readout (no spikes,
// no reset).
void run_layer(LayerState& st, std::size_t steps, std::size_t fan_in, std::size_t out, const double* w,
               const double* b, const LifParams& p, bool spiking, bool smooth, double beta)
{
    const double am = p.alpha_mem();
    const double as = p.alpha_syn();
    st.i.assign(steps * out, 0.0);
    st.v.assign(steps * out, 0.0);
    st.s.assign(spiking ? steps * out : 0, 0.0);
    for (std::size_t t = 0; t < steps; ++t) {
        const double* x = st.in.data() + t * fan_in;
        for (std::size_t o = 0; o < out; ++o) {
            double cur = b ? b[o] : 0.0;
            const double* wr = w + o * fan_in;
            for (std::size_t f = 0; f < fan_in; ++f)
                cur += wr[f] * x[f];
            const std::size_t k = t * out + o;
            const double i_prev = t ? st.i[k - out] : 0.0;
            const double v_prev = t ? st.v[k - out] : 0.0;
            const double s_prev = (spiking && t) ? st.s[k - out] : 0.0;
            st.i[k] = as * i_prev + cur;
            double carry = am * v_prev;
            if (spiking) {
                if (p.reset == Reset::zero)
                    carry *= 1.0 - s_prev;
                else
                    carry -= p.v_th * s_prev;
            }
            st.v[k] = carry + st.i[k];
            if (spiking)
                st.s[k] = smooth ? surrogate_spike(st.v[k], p.v_th, beta) : (st.v[k] >= p.v_th ? 1.0 : 0.0);
        }
    }
}

std::vector<double> encode(const SnnConfig& cfg, std::span<const double> window)
{
    const std::size_t n = window.size();
    std::vector<double> frame(n);
    for (std::size_t f = 0; f < n; ++f) {
        const double x = window[f];
        if (cfg.encoding == InputEncoding::current)
            frame[f] = x;
        else
            frame[f] = std::abs(x) > cfg.ternary_threshold ? (x > 0.0 ? 1.0 : -1.0) : 0.0;
    }
    std::vector<double> in(cfg.timesteps * n);
    for (std::size_t t = 0; t < cfg.timesteps; ++t)
        std::copy(frame.begin(), frame.end(), in.begin() + static_cast<std::ptrdiff_t>(t * n));
    return in;
}

std::vector<LayerState> forward(const SnnModel& m, std::span<const double> window, bool smooth)
{
    const auto& cfg = m.cfg;
    if (window.size() != cfg.sizes.front())
        throw ParameterError("snn: window length differs from the input size");
    const std::size_t layers = cfg.sizes.size() - 1;
    std::vector<LayerState> st(layers);
    st[0].in = encode(cfg, window);
    for (std::size_t l = 0; l < layers; ++l) {
        const bool spiking = l + 1 < layers;
        run_layer(st[l], cfg.timesteps, cfg.sizes[l], cfg.sizes[l + 1], m.params[2 * l].value.data(),
                  m.params[2 * l + 1].value.data(), cfg.lif, spiking, smooth, cfg.surrogate_beta);
        if (spiking)
            st[l + 1].in = st[l].s;
    }
    return st;
}

// Readout: max over time of each class membrane, plus the step it came from.
void readout(const LayerState& out, std::size_t steps, std::size_t classes, std::vector<double>& logits,
             std::vector<std::size_t>& at)
{
    logits.assign(classes, -std::numeric_limits<double>::infinity());
    at.assign(classes, 0);
    for (std::size_t t = 0; t < steps; ++t)
        for (std::size_t c = 0; c < classes; ++c)
            if (out.v[t * classes + c] > logits[c]) {
                logits[c] = out.v[t * classes + c];
                at[c] = t;
            }
}

} // namespace

LifTrace lif_forward(std::span<const double> input, std::size_t features, std::span<const double> weights,
                     std::size_t neurons, const LifParams& p)
{
    p.validate();
    if (features == 0 || neurons == 0 || input.size() % features != 0)
        throw ParameterError("lif_forward: input is not a whole number of steps");
    if (weights.size() != features * neurons)
        throw ParameterError("lif_forward: weight count differs from neurons x features");
    LayerState st;
    st.in.assign(input.begin(), input.end());
    const std::size_t steps = input.size() / features;
    run_layer(st, steps, features, neurons, weights.data(), nullptr, p, true, false, 0.0);
    return {steps, neurons, std::move(st.s), std::move(st.v), std::move(st.i)};
}

void SnnConfig::validate() const
{
    lif.validate();
    if (sizes.size() < 3)
        throw ParameterError("SnnConfig: need an input, at least one hidden layer and a readout");
    for (auto s : sizes)
        if (s == 0)
            throw ParameterError("SnnConfig: layer sizes must be positive");
    if (sizes.back() < 2)
        throw ParameterError("SnnConfig: readout needs at least two classes");
    if (timesteps == 0)
        throw ParameterError("SnnConfig: timesteps must be positive");
    if (!(surrogate_beta > 0.0))
        throw ParameterError("SnnConfig: surrogate_beta must be positive");
    if (encoding == InputEncoding::ternary && !(ternary_threshold >= 0.0))
        throw ParameterError("SnnConfig: ternary_threshold must be non-negative");
}

double SnnConfig::dense_macs() const
{
    double macs = 0.0;
    for (std::size_t l = 0; l + 1 < sizes.size(); ++l)
        macs += static_cast<double>(sizes[l] * sizes[l + 1]);
    return macs;
}

SnnModel SnnModel::init(const SnnConfig& cfg, RngStream& rng)
{
    cfg.validate();
    SnnModel m{cfg, {}};
    for (std::size_t l = 0; l + 1 < cfg.sizes.size(); ++l) {
        nn::Param<double> w({cfg.sizes[l + 1], cfg.sizes[l]});
        nn::Param<double> b({cfg.sizes[l + 1]});
        const double lim = std::sqrt(6.0 / static_cast<double>(cfg.sizes[l]));
        for (auto& x : w.value)
            x = lim * (2.0 * rng.uniform() - 1.0);
        m.params.push_back(std::move(w));
        m.params.push_back(std::move(b));
    }
    return m;
}

std::uint64_t SnnModel::checksum() const
{
    return nn::checksum<double>(std::span<const nn::Param<double>>(params));
}

std::vector<double> snn_logits(const SnnModel& m, std::span<const double> window, bool smooth, SnnActivity* activity)
{
    const auto st = forward(m, window, smooth);
    std::vector<double> logits;
    std::vector<std::size_t> at;
    readout(st.back(), m.cfg.timesteps, m.cfg.sizes.back(), logits, at);
    if (activity) {
        activity->layer_inputs.clear();
        for (const auto& s : st)
            activity->layer_inputs.push_back(s.in);
    }
    return logits;
}

double snn_loss_grad(SnnModel& m, std::span<const double> window, int label, bool smooth, double scale)
{
    const auto& cfg = m.cfg;
    const std::size_t classes = cfg.sizes.back();
    if (label < 0 || static_cast<std::size_t>(label) >= classes)
        throw ParameterError("snn_loss_grad: label out of range");
    for (auto& p : m.params)
        if (p.grad.size() != p.value.size())
            p.grad.assign(p.value.size(), 0.0);

    const auto st = forward(m, window, smooth);
    std::vector<double> logits;
    std::vector<std::size_t> at;
    readout(st.back(), cfg.timesteps, classes, logits, at);

    const double mx = *std::max_element(logits.begin(), logits.end());
    double z = 0.0;
    for (double l : logits)
        z += std::exp(l - mx);
    const double loss = std::log(z) + mx - logits[static_cast<std::size_t>(label)];

    const std::size_t T = cfg.timesteps;
    const std::size_t layers = cfg.sizes.size() - 1;
    const double am = cfg.lif.alpha_mem();
    const double as = cfg.lif.alpha_syn();

    // gradient w.r.t. the output of the layer being processed, [T x out]
    std::vector<double> g_out(T * classes, 0.0);
    for (std::size_t c = 0; c < classes; ++c) {
        const double pc = std::exp(logits[c] - mx) / z;
        g_out[at[c] * classes + c] = scale * (pc - (static_cast<std::size_t>(label) == c ? 1.0 : 0.0));
    }

    for (std::size_t l = layers; l-- > 0;) {
        const std::size_t fan_in = cfg.sizes[l];
        const std::size_t out = cfg.sizes[l + 1];
        const bool spiking = l + 1 < layers;
        const LayerState& s = st[l];
        auto& w = m.params[2 * l];
        auto& b = m.params[2 * l + 1];
        std::vector<double> gi(T * out, 0.0);
        std::vector<double> gv_next(out, 0.0), gi_next(out, 0.0);
        for (std::size_t t = T; t-- > 0;) {
            for (std::size_t o = 0; o < out; ++o) {
                const std::size_t k = t * out + o;
                double gv;
                if (spiking) {
                    const double vt = s.v[k];
                    const double st_ = s.s[k];
                    double gs = g_out[k];
                    double keep = am;
                    if (t + 1 < T) {
                        if (cfg.lif.reset == Reset::zero) {
                            gs += gv_next[o] * (-am * vt);
                            keep = am * (1.0 - st_);
                        } else {
                            gs += gv_next[o] * (-cfg.lif.v_th);
                        }
                    }
                    gv = gs * surrogate_grad(vt, cfg.lif.v_th, cfg.surrogate_beta) + gv_next[o] * keep;
                } else {
                    gv = g_out[k] + gv_next[o] * am;
                }
                const double g = gv + as * gi_next[o];
                gi[k] = g;
                gv_next[o] = gv;
                gi_next[o] = g;
            }
        }
        for (std::size_t t = 0; t < T; ++t) {
            const double* x = s.in.data() + t * fan_in;
            for (std::size_t o = 0; o < out; ++o) {
                const double g = gi[t * out + o];
                if (g == 0.0)
                    continue;
                b.grad[o] += g;
                double* gw = w.grad.data() + o * fan_in;
                for (std::size_t f = 0; f < fan_in; ++f)
                    gw[f] += g * x[f];
            }
        }
        if (l == 0)
            break;
        std::vector<double> g_in(T * fan_in, 0.0);
        for (std::size_t t = 0; t < T; ++t)
            for (std::size_t o = 0; o < out; ++o) {
                const double g = gi[t * out + o];
                if (g == 0.0)
                    continue;
                const double* wr = w.value.data() + o * fan_in;
                double* gx = g_in.data() + t * fan_in;
                for (std::size_t f = 0; f < fan_in; ++f)
                    gx[f] += g * wr[f];
            }
        g_out = std::move(g_in);
    }
    return loss;
}

double synops_count(const SnnActivity& activity, const SnnConfig& cfg)
{
    if (activity.layer_inputs.size() + 1 != cfg.sizes.size())
        throw ParameterError("synops_count: activity does not match the configuration");
    double ops = 0.0;
    for (std::size_t l = 0; l < activity.layer_inputs.size(); ++l) {
        const auto& in = activity.layer_inputs[l];
        const auto events = std::count_if(in.begin(), in.end(), [](double x) { return x != 0.0; });
        ops += static_cast<double>(events) * static_cast<double>(cfg.sizes[l + 1]);
    }
    return ops;
}

std::vector<int> snn_predict(const SnnModel& m, const cnn::WindowSet& data, double* synops_per_symbol)
{
    if (data.symbols != 1)
        throw ParameterError("snn_predict: one decision per window expected");
    std::vector<int> dec(data.count);
    double ops = 0.0;
#pragma omp parallel for schedule(static) reduction(+ : ops)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(data.count); ++i) {
        SnnActivity act;
        const auto logits = snn_logits(m, data.row(static_cast<std::size_t>(i)), false, synops_per_symbol ? &act : nullptr);
        dec[static_cast<std::size_t>(i)] =
            static_cast<int>(std::max_element(logits.begin(), logits.end()) - logits.begin());
        if (synops_per_symbol)
            ops += synops_count(act, m.cfg);
    }
    if (synops_per_symbol)
        *synops_per_symbol = data.count ? ops / static_cast<double>(data.count) : 0.0;
    return dec;
}

SnnTrainResult snn_train(const cnn::WindowSet& train, const cnn::WindowSet& val, const SnnConfig& cfg,
                         const Constellation& c, const cnn::TrainOptions& opt)
{
    cfg.validate();
    if (cfg.sizes.back() != c.size())
        throw ParameterError("snn_train: class count differs from the constellation size");
    if (train.count == 0 || val.count == 0)
        throw ParameterError("snn_train: empty training or validation set");
    if (train.window != cfg.sizes.front() || val.window != cfg.sizes.front())
        throw ParameterError("snn_train: window length differs from the input size");
    if (train.symbols != 1 || val.symbols != 1)
        throw ParameterError("snn_train: one decision per window expected");

    RngStream rng(opt.seed, 0x736e6e);
    RngStream init_rng = rng.substream(1);
    RngStream shuffle_rng = rng.substream(2);
    SnnTrainResult res{SnnModel::init(cfg, init_rng), {}};
    SnnModel& model = res.model;
    SnnModel best = model;
    double best_ber = std::numeric_limits<double>::infinity();
    std::size_t since_best = 0;

    std::vector<nn::Param<double>*> ptrs;
    for (auto& p : model.params)
        ptrs.push_back(&p);
    nn::Adam<double> adam(ptrs, opt.adam);
    std::vector<std::size_t> order(train.count);
    std::iota(order.begin(), order.end(), std::size_t{0});
    const std::size_t batch = std::max<std::size_t>(1, opt.batch);

    for (std::size_t epoch = 0; epoch < opt.epochs; ++epoch) {
        for (std::size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[shuffle_rng.index(i)]);
        double loss_sum = 0.0;
        for (std::size_t b = 0; b < train.count; b += batch) {
            const std::size_t n = std::min(batch, train.count - b);
            adam.zero_grad();
            double l = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                const std::size_t r = order[b + i];
                l += snn_loss_grad(model, train.row(r), train.labels[r], false, 1.0 / static_cast<double>(n));
            }
            if (!std::isfinite(l)) {
                res.report.loss_trace.push_back(l);
                throw TrainingError("snn_train: loss is not finite", res.report.loss_trace);
            }
            adam.step();
            loss_sum += l;
        }
        res.report.loss_trace.push_back(loss_sum / static_cast<double>(train.count));
        const auto dec = snn_predict(model, val);
        const double ber = bit_error_rate(dec, val.labels, c);
        res.report.val_ber_trace.push_back(ber);
        res.report.epochs = epoch + 1;
        if (ber < best_ber) {
            best_ber = ber;
            best = model;
            since_best = 0;
        } else if (++since_best >= opt.patience) {
            break;
        }
    }
    model = best;
    double synops = 0.0;
    snn_predict(model, val, &synops);
    res.report.checksum = model.checksum();
    res.report.macs_per_symbol = cfg.dense_macs() * static_cast<double>(cfg.timesteps);
    res.report.synops_per_symbol = synops;
    return res;
}

} // namespace eqlab::snn
