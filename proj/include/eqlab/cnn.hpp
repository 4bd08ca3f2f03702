#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "eqlab/constellation.hpp"
#include "eqlab/nn.hpp"
#include "eqlab/rng.hpp"

namespace eqlab::cnn {

enum class LayerKind { conv1d, relu, dense };

/// conv1d uses in/out as channel counts; dense uses them as feature counts.
struct LayerSpec {
    LayerKind kind = LayerKind::relu;
    std::size_t in = 0;
    std::size_t out = 0;
    std::size_t kernel = 0;
    std::size_t stride = 1;

    static LayerSpec conv(std::size_t in_ch, std::size_t out_ch, std::size_t kernel, std::size_t stride = 1);
    static LayerSpec relu();
    static LayerSpec dense(std::size_t in, std::size_t out);
};

enum class OutputMode { class_scores, regression };

struct CnnConfig {
    std::vector<LayerSpec> layers;
    std::size_t input_window = 0;        // samples, single input channel
    std::size_t symbols_per_window = 1;  // decisions produced per window
    std::size_t classes = 2;
    OutputMode output = OutputMode::class_scores;

    /// Activation shape after each layer as {channels, length}; dense layers
    /// report {features, 1}. Throws ParameterError if the chain is broken.
    std::vector<std::pair<std::size_t, std::size_t>> shapes() const;
    void validate() const;
    std::size_t output_size() const;
};

/// Real MACs per decided symbol: conv out_len*out_ch*in_ch*kernel plus dense
/// in*out, divided by symbols per window. Biases and activations are free.
double macs_per_symbol_cnn(const CnnConfig& cfg);

/// Windows of received samples with the constellation indices they decide.
struct WindowSet {
    std::size_t count = 0;
    std::size_t window = 0;
    std::size_t symbols = 1;  // labels per window
    std::vector<double> x;    // count x window
    std::vector<int> labels;  // count x symbols

    std::span<const double> row(std::size_t i) const { return {x.data() + i * window, window}; }
};

/// Groups of `symbols_per_window` consecutive symbols starting at first_symbol,
/// each framed by `window` samples centered on the group. Samples outside the
/// block read as zero.
WindowSet frame_windows(std::span<const double> rx, std::span<const int> labels, int sps, std::size_t window,
                        std::size_t symbols_per_window, std::size_t first_symbol, std::size_t last_symbol);

template <class T>
struct CnnModel {
    CnnConfig cfg;
    std::vector<nn::Param<T>> params;  // weight then bias for every conv/dense layer

    /// He-uniform weights, zero biases.
    static CnnModel init(const CnnConfig& cfg, RngStream& rng);

    /// Output node: [B, output_size()].
    nn::Var<T> forward(nn::Tape<T>& tape, std::span<const T> windows, std::size_t batch);
    std::uint64_t checksum() const;
};

/// Hard decisions (constellation indices) for every label slot of the set.
template <class T>
std::vector<int> cnn_predict(CnnModel<T>& model, const WindowSet& data, const Constellation& c);

struct TrainOptions {
    nn::AdamConfig adam;
    std::size_t batch = 128;
    std::size_t epochs = 30;
    std::size_t patience = 5;  // epochs without validation improvement
    std::uint64_t seed = 1;
};

struct TrainReport {
    std::vector<double> loss_trace;     // mean training loss per epoch
    std::vector<double> val_ber_trace;  // validation BER per epoch
    std::size_t epochs = 0;
    std::uint64_t checksum = 0;
    double macs_per_symbol = 0.0;
    double synops_per_symbol = 0.0;     // spiking models only
};

template <class T>
struct CnnTrainResult {
    CnnModel<T> model;  // parameters of the best validation epoch
    TrainReport report;
};

/// Mini-batch Adam on cross-entropy (or MSE against the symbol amplitude in
/// regression mode) with early stopping on validation BER.
/// Throws TrainingError on a non-finite loss.
template <class T>
CnnTrainResult<T> cnn_train(const WindowSet& train, const WindowSet& val, const CnnConfig& cfg,
                            const Constellation& c, const TrainOptions& opt);

extern template struct CnnModel<float>;
extern template struct CnnModel<double>;

} // namespace eqlab::cnn
