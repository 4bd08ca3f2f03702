#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "eqlab/channel.hpp"
#include "eqlab/snn.hpp"

namespace eqlab::explore {

enum class Scenario { coherent_pcs, imdd };

struct CoherentScenario {
    int qam_order = 64;
    double entropy_bits = 4.6;  // <= 0 keeps uniform priors
    double beta2L = 0.75;
    int cd_taps = 0;            // 0: derived from beta2L
    double theta = 0.6283185307179586;
    int sps = 1;
    double rolloff = 0.2;       // pulse shaping when sps > 1
};

struct ImddScenario {
    int pam_order = 2;
    int sps = 2;
    double rolloff = 0.2;
    double beta2L = 0.4;
    std::vector<double> dispersion_scales{1.0};
    std::vector<std::string> dispersion_labels;  // one per scale, or empty
    channel::Nonlinearity nonlinearity;
    double shot_coeff = 0.0;
};

struct TrainingBudget {
    std::size_t train_symbols = 60000;
    std::size_t val_symbols = 20000;
    std::size_t eval_symbols = 100000;
    std::size_t epochs = 30;
    std::size_t batch = 128;
    std::size_t patience = 5;
    double lr = 3e-3;
    std::size_t cma_updates = 200000;
    double cma_step = 1e-3;
    std::size_t vae_steps = 6000;
    std::size_t vae_batch = 256;
    double vae_lr = 3e-3;
    std::size_t trace_every = 8192;   // training symbols between trace points
    std::size_t trace_symbols = 4000; // evaluation symbols per trace point
};

struct SnnDefaults {
    std::size_t timesteps = 10;
    snn::InputEncoding encoding = snn::InputEncoding::current;
    snn::Reset reset = snn::Reset::subtract;
    double surrogate_beta = 10.0;
};

struct ExperimentConfig {
    std::string name = "experiment";
    Scenario scenario = Scenario::imdd;
    CoherentScenario coherent;
    ImddScenario imdd;
    std::vector<std::string> models;
    std::vector<std::uint64_t> seeds{1};
    std::vector<double> snr_db{20.0};
    /// Artifact default, an approximate hardware complexity limit.
    double mac_budget = 2000.0;
    TrainingBudget train;
    SnnDefaults snn;
    std::string out_dir = "out";
    bool save_checkpoints = false;
    /// Wall time varies between runs; the CSV column stays 0 unless enabled.
    bool record_wall_time = false;

    void validate() const;
    /// Canonical key = value text, independent of the source file layout.
    std::string canonical() const;
    /// FNV-1a of canonical(), printed as 16 hex digits in the CSVs.
    std::string hash() const;
};

/// INI file: sections [experiment], [channel], [models], [training], [snn].
/// Unknown keys are rejected so typos do not silently fall back to defaults.
ExperimentConfig load_config(const std::string& path);
ExperimentConfig parse_config(std::istream& is);

enum class Family { raw, ffe, volterra, cnn, snn, cma, vae };

/// Model ids: raw, ffe:N, volterra:M1/M2, cnn:W/CxKsS[/CxKsS...],
/// snn:W/H[/H...], cma:N, vae:NE/ND.
struct ModelSpec {
    Family family = Family::raw;
    std::string id;
    std::vector<std::size_t> args;  // family-specific numbers in id order
};

ModelSpec parse_model(const std::string& id);
std::string family_name(Family f);

/// Builds the CNN of a cnn: id: conv layers with ReLU, then dense to classes.
cnn::CnnConfig cnn_config(const ModelSpec& m, std::size_t classes);
snn::SnnConfig snn_config(const ModelSpec& m, std::size_t classes, const SnnDefaults& d);
/// Per decided symbol, using the conventions of each family.
double model_macs(const ModelSpec& m, std::size_t classes, const SnnDefaults& d);

struct Cell {
    std::string scenario;  // scenario label, e.g. "imdd" or "imdd/90GBd"
    std::size_t variant = 0;
    std::string model_id;
    std::uint64_t seed = 0;
    double snr_db = 0.0;
};

struct TracePoint {
    std::size_t symbols = 0;  // training symbols consumed so far
    double ser = 0.0;
};

struct CellResult {
    Cell cell;
    double macs_per_symbol = 0.0;
    double ser = 0.0;
    double ber = 0.0;
    std::size_t train_steps = 0;
    double wall_s = 0.0;
    bool failed = false;
    std::string error;
    std::vector<TracePoint> trace;
    double synops_per_symbol = 0.0;  // snn only
    double channel_score = 0.0;      // vae only: decoder alignment with the true channel
};

struct ResultSet {
    std::string config_hash;
    std::vector<CellResult> rows;  // sorted by cell key
    bool record_wall_time = false;  // otherwise wall_s is written as 0

    std::size_t failures() const;
};

/// All cells of the config, sorted by (scenario, model_id, seed, snr).
std::vector<Cell> enumerate_cells(const ExperimentConfig& cfg);

/// Trains and evaluates one cell. Failures are returned, not thrown.
/// Checkpoints go to checkpoint_dir when it is non-empty.
CellResult run_cell(const ExperimentConfig& cfg, const Cell& cell, const std::string& checkpoint_dir = "");

/// Runs every cell on `workers` threads; the output does not depend on the
/// worker count.
ResultSet run_experiment(const ExperimentConfig& cfg, int workers = 1, bool verbose = false);

/// Files in dir: results.csv, summary.csv, traces.csv, failures.csv and
/// timing.log (the only non-deterministic output).
void write_results(const ResultSet& rs, const std::string& dir);

void write_results_csv(std::ostream& os, const ResultSet& rs);
ResultSet read_results_csv(std::istream& is);

/// Fixed-format number text used by every CSV writer.
std::string num(double v);

struct ParetoPoint {
    double macs = 0.0;
    double metric = 0.0;
    std::string model_id;
    bool dominated = false;
};

/// Non-dominated subset in (macs, metric), both minimized, sorted by macs.
/// Of identical points the first is kept. Points with a NaN metric are
/// ignored.
std::vector<ParetoPoint> pareto_front(std::span<const ParetoPoint> points);
/// Sets `dominated` on every point.
void mark_dominated(std::span<ParetoPoint> points);
/// Lowest metric among points with macs <= budget; ties go to fewer MACs.
std::optional<ParetoPoint> budget_optimal(std::span<const ParetoPoint> points, double budget);

/// Seed-averaged points of one (scenario, snr) slice of the results.
std::vector<ParetoPoint> mean_points(const ResultSet& rs, const std::string& scenario, double snr_db,
                                     bool use_ber = true);

/// SVG figures plus a plot-data CSV per figure. Throws UsageError on empty
/// results. Returns the written file names.
std::vector<std::string> emit_plots(const ResultSet& rs, double mac_budget, const std::string& dir);

} // namespace eqlab::explore
