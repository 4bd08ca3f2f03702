#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "eqlab/cnn.hpp"
#include "eqlab/constellation.hpp"
#include "eqlab/nn.hpp"
#include "eqlab/rng.hpp"

namespace eqlab::snn {

enum class Reset { subtract, zero };

struct LifParams {
    double tau_mem = 5.0;  // timesteps
    double tau_syn = 2.0;  // timesteps
    double v_th = 1.0;
    Reset reset = Reset::subtract;

    double alpha_mem() const;
    double alpha_syn() const;
    void validate() const;
};

/// Membrane and spike recordings, row-major [T x neurons].
struct LifTrace {
    std::size_t steps = 0;
    std::size_t neurons = 0;
    std::vector<double> spikes;
    std::vector<double> v;
    std::vector<double> i;
};

/// One LIF layer driven by input events/currents [T x features] through
/// weights [neurons x features]:
///   i_t = a_syn i_{t-1} + W s_t
///   v_t = a_mem v_{t-1} + i_t - reset(s_{t-1})
///   s_t = [v_t >= v_th]
/// Subtractive reset removes v_th after a spike; zero reset scales the
/// carried-over membrane by (1 - s_{t-1}).
LifTrace lif_forward(std::span<const double> input, std::size_t features, std::span<const double> weights,
                     std::size_t neurons, const LifParams& p);

/// Fast-sigmoid pseudo-derivative 1 / (1 + beta |v - v_th|)^2.
double surrogate_grad(double v, double v_th, double beta);

/// Smooth stand-in for the spike whose exact derivative is surrogate_grad.
double surrogate_spike(double v, double v_th, double beta);

enum class InputEncoding { current, ternary };

struct SnnConfig {
    std::vector<std::size_t> sizes;  // input, hidden..., classes
    std::size_t timesteps = 10;
    InputEncoding encoding = InputEncoding::current;
    double ternary_threshold = 0.5;  // in units of the window's input scale
    double surrogate_beta = 10.0;
    LifParams lif;

    void validate() const;
    /// MACs of the equivalent dense network for one time step.
    double dense_macs() const;
};

struct SnnModel {
    SnnConfig cfg;
    /// Per layer: weights [out x in] then biases [out].
    std::vector<nn::Param<double>> params;

    static SnnModel init(const SnnConfig& cfg, RngStream& rng);
    std::uint64_t checksum() const;
};

/// Spike rasters of one decision: per layer input events [T x fan-in].
struct SnnActivity {
    std::vector<std::vector<double>> layer_inputs;
};

/// Readout membranes maxed over time, one row per class. `smooth` swaps the
/// Heaviside for surrogate_spike, which makes the network differentiable.
std::vector<double> snn_logits(const SnnModel& m, std::span<const double> window, bool smooth = false,
                               SnnActivity* activity = nullptr);

/// Cross-entropy of one window; scale * gradient (surrogate backward through
/// time) is accumulated into the grad fields of m.params.
double snn_loss_grad(SnnModel& m, std::span<const double> window, int label, bool smooth, double scale = 1.0);

/// Events times fan-out, summed over layers. Non-zero input currents count
/// as events. Divided by nothing: this is one decision's cost.
double synops_count(const SnnActivity& activity, const SnnConfig& cfg);

std::vector<int> snn_predict(const SnnModel& m, const cnn::WindowSet& data, double* synops_per_symbol = nullptr);

struct SnnTrainResult {
    SnnModel model;
    cnn::TrainReport report;
};

/// Adam with backprop-through-time; early stopping on validation BER.
SnnTrainResult snn_train(const cnn::WindowSet& train, const cnn::WindowSet& val, const SnnConfig& cfg,
                         const Constellation& c, const cnn::TrainOptions& opt);

} // namespace eqlab::snn
