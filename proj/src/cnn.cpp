#include "eqlab/cnn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "eqlab/error.hpp"

namespace eqlab::cnn {

LayerSpec LayerSpec::conv(std::size_t in_ch, std::size_t out_ch, std::size_t kernel, std::size_t stride)
{
    return {LayerKind::conv1d, in_ch, out_ch, kernel, stride};
}

LayerSpec LayerSpec::relu() { return {LayerKind::relu, 0, 0, 0, 1}; }

LayerSpec LayerSpec::dense(std::size_t in, std::size_t out) { return {LayerKind::dense, in, out, 0, 1}; }

std::vector<std::pair<std::size_t, std::size_t>> CnnConfig::shapes() const
{
    if (input_window == 0 || symbols_per_window == 0 || classes < 2)
        throw ParameterError("CnnConfig: window and symbols per window must be positive, classes at least 2");
    std::vector<std::pair<std::size_t, std::size_t>> out;
    std::size_t ch = 1, len = input_window;
    bool flat = false;
    for (const auto& l : layers) {
        switch (l.kind) {
        case LayerKind::conv1d:
            if (flat)
                throw ParameterError("CnnConfig: conv1d after a dense layer");
            if (l.in != ch || l.out == 0 || l.kernel == 0 || l.stride == 0 || l.kernel > len)
                throw ParameterError("CnnConfig: conv1d shape does not chain");
            len = (len - l.kernel) / l.stride + 1;
            ch = l.out;
            break;
        case LayerKind::relu:
            break;
        case LayerKind::dense:
            if (l.in != ch * len || l.out == 0)
                throw ParameterError("CnnConfig: dense input does not match the previous layer");
            ch = l.out;
            len = 1;
            flat = true;
            break;
        }
        out.emplace_back(ch, len);
    }
    if (!layers.empty() && ch * len != output_size())
        throw ParameterError("CnnConfig: network output does not match the decision count");
    return out;
}

void CnnConfig::validate() const
{
    if (layers.empty())
        throw ParameterError("CnnConfig: empty network");
    shapes();
}

std::size_t CnnConfig::output_size() const
{
    return output == OutputMode::class_scores ? symbols_per_window * classes : symbols_per_window;
}

double macs_per_symbol_cnn(const CnnConfig& cfg)
{
    if (cfg.layers.empty())
        return 0.0;
    const auto shapes = cfg.shapes();
    double total = 0.0;
    for (std::size_t i = 0; i < cfg.layers.size(); ++i) {
        const auto& l = cfg.layers[i];
        if (l.kind == LayerKind::conv1d)
            total += static_cast<double>(shapes[i].second * l.out * l.in * l.kernel);
        else if (l.kind == LayerKind::dense)
            total += static_cast<double>(l.in * l.out);
    }
    return total / static_cast<double>(cfg.symbols_per_window);
}

WindowSet frame_windows(std::span<const double> rx, std::span<const int> labels, int sps, std::size_t window,
                        std::size_t symbols_per_window, std::size_t first_symbol, std::size_t last_symbol)
{
    if (sps < 1 || window == 0 || symbols_per_window == 0)
        throw ParameterError("frame_windows: sps, window and group size must be positive");
    if (last_symbol > labels.size() || first_symbol > last_symbol)
        throw ParameterError("frame_windows: symbol range outside the label sequence");
    WindowSet out;
    out.window = window;
    out.symbols = symbols_per_window;
    out.count = (last_symbol - first_symbol) / symbols_per_window;
    out.x.assign(out.count * window, 0.0);
    out.labels.resize(out.count * symbols_per_window);
    const auto s = static_cast<std::ptrdiff_t>(sps);
    const auto n_rx = static_cast<std::ptrdiff_t>(rx.size());
    for (std::size_t g = 0; g < out.count; ++g) {
        const std::size_t n0 = first_symbol + g * symbols_per_window;
        // group midpoint in samples, window centered on it
        const std::ptrdiff_t mid2 = 2 * static_cast<std::ptrdiff_t>(n0) * s + static_cast<std::ptrdiff_t>(symbols_per_window - 1) * s;
        const std::ptrdiff_t start = (mid2 - static_cast<std::ptrdiff_t>(window) + 1) / 2;
        for (std::size_t k = 0; k < window; ++k) {
            const std::ptrdiff_t i = start + static_cast<std::ptrdiff_t>(k);
            if (i >= 0 && i < n_rx)
                out.x[g * window + k] = rx[static_cast<std::size_t>(i)];
        }
        for (std::size_t j = 0; j < symbols_per_window; ++j)
            out.labels[g * symbols_per_window + j] = labels[n0 + j];
    }
    return out;
}

template <class T>
CnnModel<T> CnnModel<T>::init(const CnnConfig& cfg, RngStream& rng)
{
    cfg.validate();
    CnnModel m;
    m.cfg = cfg;
    for (const auto& l : cfg.layers) {
        if (l.kind == LayerKind::relu)
            continue;
        const bool conv = l.kind == LayerKind::conv1d;
        nn::Param<T> w(conv ? std::vector<std::size_t>{l.out, l.in, l.kernel} : std::vector<std::size_t>{l.out, l.in});
        const double fan_in = static_cast<double>(conv ? l.in * l.kernel : l.in);
        const double bound = std::sqrt(6.0 / fan_in);
        for (auto& v : w.value)
            v = static_cast<T>((2.0 * rng.uniform() - 1.0) * bound);
        m.params.push_back(std::move(w));
        m.params.emplace_back(std::vector<std::size_t>{l.out});
    }
    return m;
}

template <class T>
nn::Var<T> CnnModel<T>::forward(nn::Tape<T>& tape, std::span<const T> windows, std::size_t batch)
{
    if (windows.size() != batch * cfg.input_window)
        throw ParameterError("cnn forward: batch does not match the input window");
    nn::Var<T> x = tape.input({batch, 1, cfg.input_window}, std::vector<T>(windows.begin(), windows.end()));
    std::size_t p = 0;
    bool flat = false;
    for (const auto& l : cfg.layers) {
        switch (l.kind) {
        case LayerKind::conv1d: {
            auto w = tape.param(params[p]);
            auto b = tape.param(params[p + 1]);
            p += 2;
            x = tape.conv1d(x, w, b, l.stride);
            break;
        }
        case LayerKind::relu:
            x = tape.relu(x);
            break;
        case LayerKind::dense: {
            if (!flat) {
                x = tape.flatten(x);
                flat = true;
            }
            auto w = tape.param(params[p]);
            auto b = tape.param(params[p + 1]);
            p += 2;
            x = tape.dense(x, w, b);
            break;
        }
        }
    }
    if (!flat)
        x = tape.flatten(x);
    return x;
}

template <class T>
std::uint64_t CnnModel<T>::checksum() const
{
    return nn::checksum<T>(params);
}

namespace {

template <class T>
std::vector<T> gather(const WindowSet& data, std::span<const std::size_t> order, std::size_t begin, std::size_t n)
{
    std::vector<T> out(n * data.window);
    for (std::size_t i = 0; i < n; ++i) {
        const auto row = data.row(order[begin + i]);
        for (std::size_t k = 0; k < data.window; ++k)
            out[i * data.window + k] = static_cast<T>(row[k]);
    }
    return out;
}

int nearest_real(double v, const Constellation& c)
{
    int best = 0;
    double d = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < c.size(); ++k) {
        const double e = std::abs(v - c.points()[k].real());
        if (e < d) {
            d = e;
            best = static_cast<int>(k);
        }
    }
    return best;
}

} // namespace

template <class T>
std::vector<int> cnn_predict(CnnModel<T>& model, const WindowSet& data, const Constellation& c)
{
    if (data.window != model.cfg.input_window || data.symbols != model.cfg.symbols_per_window)
        throw ParameterError("cnn_predict: windows do not match the model");
    std::vector<int> out(data.count * data.symbols);
    std::vector<std::size_t> order(data.count);
    std::iota(order.begin(), order.end(), std::size_t{0});
    nn::Tape<T> tape;
    const std::size_t chunk = 512;
    const std::size_t classes = model.cfg.classes;
    for (std::size_t b = 0; b < data.count; b += chunk) {
        const std::size_t n = std::min(chunk, data.count - b);
        const auto x = gather<T>(data, order, b, n);
        tape.clear();
        const auto& y = tape.value(model.forward(tape, x, n));
        for (std::size_t i = 0; i < n * data.symbols; ++i) {
            if (model.cfg.output == OutputMode::class_scores) {
                const T* row = &y[i * classes];
                out[b * data.symbols + i] = static_cast<int>(std::max_element(row, row + classes) - row);
            } else {
                out[b * data.symbols + i] = nearest_real(static_cast<double>(y[i]), c);
            }
        }
    }
    return out;
}

template <class T>
CnnTrainResult<T> cnn_train(const WindowSet& train, const WindowSet& val, const CnnConfig& cfg, const Constellation& c,
                            const TrainOptions& opt)
{
    cfg.validate();
    if (cfg.classes != c.size())
        throw ParameterError("cnn_train: class count differs from the constellation size");
    if (train.count == 0 || val.count == 0)
        throw ParameterError("cnn_train: empty training or validation set");
    if (train.window != cfg.input_window || val.window != cfg.input_window)
        throw ParameterError("cnn_train: window length differs from the configuration");
    RngStream rng(opt.seed, 0x636e6e);
    RngStream init_rng = rng.substream(1);
    RngStream shuffle_rng = rng.substream(2);
    CnnTrainResult<T> res{CnnModel<T>::init(cfg, init_rng), {}};
    CnnModel<T>& model = res.model;
    CnnModel<T> best = model;
    double best_ber = std::numeric_limits<double>::infinity();
    std::size_t since_best = 0;

    std::vector<nn::Param<T>*> ptrs;
    for (auto& p : model.params)
        ptrs.push_back(&p);
    nn::Adam<T> adam(ptrs, opt.adam);
    nn::Tape<T> tape;
    std::vector<std::size_t> order(train.count);
    std::iota(order.begin(), order.end(), std::size_t{0});
    const std::size_t batch = std::max<std::size_t>(1, opt.batch);

    for (std::size_t epoch = 0; epoch < opt.epochs; ++epoch) {
        // Fisher-Yates with the stream's own index draw
        for (std::size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[shuffle_rng.index(i)]);
        double loss_sum = 0.0;
        std::size_t batches = 0;
        for (std::size_t b = 0; b < train.count; b += batch) {
            const std::size_t n = std::min(batch, train.count - b);
            const auto x = gather<T>(train, order, b, n);
            tape.clear();
            adam.zero_grad();
            auto y = model.forward(tape, x, n);
            nn::Var<T> loss;
            if (cfg.output == OutputMode::class_scores) {
                std::vector<int> lab(n * train.symbols);
                for (std::size_t i = 0; i < n; ++i)
                    for (std::size_t j = 0; j < train.symbols; ++j)
                        lab[i * train.symbols + j] = train.labels[order[b + i] * train.symbols + j];
                loss = tape.softmax_cross_entropy(y, lab, cfg.classes);
            } else {
                std::vector<T> tgt(n * train.symbols);
                for (std::size_t i = 0; i < n; ++i)
                    for (std::size_t j = 0; j < train.symbols; ++j)
                        tgt[i * train.symbols + j] = static_cast<T>(
                            c.points()[static_cast<std::size_t>(train.labels[order[b + i] * train.symbols + j])].real());
                loss = tape.mse(y, tgt);
            }
            const double l = static_cast<double>(tape.value(loss)[0]);
            if (!std::isfinite(l)) {
                res.report.loss_trace.push_back(l);
                throw TrainingError("cnn_train: loss is not finite", res.report.loss_trace);
            }
            tape.backward(loss);
            adam.step();
            loss_sum += l;
            ++batches;
        }
        res.report.loss_trace.push_back(loss_sum / static_cast<double>(batches));
        const auto dec = cnn_predict(model, val, c);
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
    res.report.checksum = model.checksum();
    res.report.macs_per_symbol = macs_per_symbol_cnn(cfg);
    return res;
}

template struct CnnModel<float>;
template struct CnnModel<double>;
template std::vector<int> cnn_predict<float>(CnnModel<float>&, const WindowSet&, const Constellation&);
template std::vector<int> cnn_predict<double>(CnnModel<double>&, const WindowSet&, const Constellation&);
template CnnTrainResult<float> cnn_train<float>(const WindowSet&, const WindowSet&, const CnnConfig&,
                                                const Constellation&, const TrainOptions&);
template CnnTrainResult<double> cnn_train<double>(const WindowSet&, const WindowSet&, const CnnConfig&,
                                                  const Constellation&, const TrainOptions&);

} // namespace eqlab::cnn
