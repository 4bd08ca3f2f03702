#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "eqlab/channel.hpp"
#include "eqlab/classic.hpp"
#include "eqlab/constellation.hpp"
#include "eqlab/error.hpp"
#include "eqlab/signal.hpp"

namespace eqlab::vae {

using classic::ButterflyFir;
using channel::Mimo2x2Fir;

/// Blind linear equalizer trained as a VAE: a butterfly encoder followed by
/// the soft demapper, and a linear 2x2 channel decoder with noise variance
/// sigma2. With lanes == 1 only the x-lane taps are used (single-lane
/// signals such as IM/DD); the y lanes of inputs are ignored.
struct VaeLeModel {
    ButterflyFir encoder;
    Mimo2x2Fir decoder;
    double sigma2 = 1.0;
    Constellation constellation;
    int lanes = 2;

    /// Center-spike encoder and decoder, sigma2 = 1.
    static VaeLeModel initial(const Constellation& c, std::size_t encoder_taps, std::size_t decoder_taps,
                              int sps_in = 1, int lanes = 2);
    void validate() const;
};

struct ElboBreakdown {
    double recon = 0.0;  // noise-normalized reconstruction, per symbol
    double kl = 0.0;     // KL(q || prior), per symbol
    double total = 0.0;
};

/// Gradient of a real loss with respect to complex parameters, packed as
/// dL/dRe + j dL/dIm.
struct ModelGradient {
    ButterflyFir encoder;
    Mimo2x2Fir decoder;
    double sigma2 = 0.0;
};

/// Symbols [begin, end) get posteriors; the reconstruction covers the
/// received samples of symbols [recon_begin, recon_end). Empty ranges mean
/// the whole block.
struct Segment {
    std::size_t begin = 0, end = 0;
    std::size_t recon_begin = 0, recon_end = 0;
};

/// Encoder + soft demapper; one posterior block per lane.
std::vector<PosteriorBlock> vae_posterior(const DualPolBlock& rx, const VaeLeModel& model);

/// ELBO terms for given posteriors over the whole block.
ElboBreakdown elbo_loss(const DualPolBlock& rx, const std::vector<PosteriorBlock>& q, const VaeLeModel& model);

/// Full forward pass (encoder, demapper, ELBO) with optional analytic
/// gradients for encoder taps, decoder taps and sigma2.
ElboBreakdown elbo_forward(const DualPolBlock& rx, const VaeLeModel& model, ModelGradient* grad = nullptr,
                           const Segment& seg = {});

struct AdamOptions {
    double lr_encoder = 1e-3;
    double lr_decoder = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct VaeTrainOptions {
    AdamOptions adam;
    std::size_t batch = 256;
    std::size_t n_steps = 1000;
    std::uint64_t seed = 1;
    double sigma2_floor = 1e-6;
    double sigma2_cap = std::numeric_limits<double>::infinity();
    /// Store the encoder every k steps (0 disables).
    std::size_t snapshot_every = 0;
    /// Steps with the decoder frozen at its initial value before joint training.
    std::size_t decoder_warmup = 0;
};

struct VaeTrainResult {
    VaeLeModel model;
    std::vector<ElboBreakdown> trace;
    /// Mean posterior error probability 1 - max_c q(c) per step; label free.
    std::vector<double> ser_proxy;
    std::vector<ButterflyFir> snapshots;
};

struct VaeTrainingError : TrainingError {
    VaeTrainingError(const std::string& what, std::vector<double> trace_, VaeLeModel last_good_)
        : TrainingError(what, std::move(trace_)), last_good(std::move(last_good_)) {}
    VaeLeModel last_good;
};

/// Mini-batch Adam on encoder and decoder taps; sigma2 follows the
/// closed-form residual power after every step.
VaeTrainResult vae_train(const DualPolBlock& rx, const VaeLeModel& model0, const VaeTrainOptions& opt);

struct ChannelEstimate {
    Mimo2x2Fir taps;
    /// Alignment with the ground truth in [0, 1]; NaN without ground truth.
    double score = 0.0;
};

/// Alignment score max over per-column lag, phase and column permutation of
/// sum_p |<h_:p, g_:pi(p)>| / (||h|| ||g||). Column freedoms absorb the
/// per-lane delay, rotation and swap ambiguities of blind equalizers.
double alignment_score(const Mimo2x2Fir& estimate, const Mimo2x2Fir& truth, int max_lag = 8);

ChannelEstimate channel_estimate(const VaeLeModel& model, const std::optional<Mimo2x2Fir>& truth = std::nullopt);

struct VqBreakdown {
    double recon = 0.0;
    double commit = 0.0;
    double total = 0.0;
};

/// Prior-weighted hard quantizer: argmin_c |z - c|^2 - sigma2 log p(c).
std::vector<int> vq_quantize(std::span<const cplx> z, const Constellation& c, double sigma2);

/// VQ-VAE loss: reconstruction through the decoder from quantized symbols
/// plus beta_commit * |z - sg(x_hat)|^2, per symbol. Gradients use the
/// straight-through estimator for the quantizer.
VqBreakdown vqvae_forward(const DualPolBlock& rx, const VaeLeModel& model, double beta_commit,
                          ModelGradient* grad = nullptr, const Segment& seg = {});

inline VqBreakdown vqvae_loss(const DualPolBlock& rx, const VaeLeModel& model, double beta_commit)
{
    return vqvae_forward(rx, model, beta_commit);
}

struct VqTrainResult {
    VaeLeModel model;
    std::vector<VqBreakdown> trace;
};

VqTrainResult vqvae_train(const DualPolBlock& rx, const VaeLeModel& model0, double beta_commit,
                          const VaeTrainOptions& opt);

/// Equalize with the encoder and take hard decisions per lane.
std::vector<std::vector<int>> vae_decide(const DualPolBlock& rx, const VaeLeModel& model);

} // namespace eqlab::vae
