#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include "eqlab/error.hpp"
#include "eqlab/explore.hpp"
#include "eqlab/selftest.hpp"

namespace fs = std::filesystem;
using namespace eqlab;

namespace {

const char* kSnrNote =
    "SNR is per two-dimensional complex sample (Es/N0 at the equalizer input, per polarization); "
    "for real IM/DD signals the same definition applies to the analytic signal.";

explore::ResultSet load_results(const std::string& path)
{
    std::ifstream f(path);
    if (!f)
        throw ParameterError("cannot open " + path);
    return explore::read_results_csv(f);
}

void print_check(const selftest::Check& c)
{
    std::printf("%s  %s: %s\n", c.pass ? "PASS" : "FAIL", c.name.c_str(), c.detail.c_str());
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{std::string("Equalizer lab: channel simulation, equalizer training and sweeps.\n") + kSnrNote};
    app.require_subcommand(1);

    std::string config_path, out_dir;
    std::uint64_t seed = 1;
    int workers = 1;
    bool verbose = false;

    auto* sim = app.add_subcommand("simulate", "Train and evaluate one (model, seed, snr) cell");
    std::string model;
    double snr = 20.0;
    std::size_t variant = 0;
    sim->add_option("--config", config_path, "Experiment config (INI)")->required()->check(CLI::ExistingFile);
    sim->add_option("--model", model, "Model id, e.g. ffe:21, cnn:40/8x8s2, vae:25/25")->required();
    sim->add_option("--seed", seed, "Seed");
    sim->add_option("--snr", snr, "SNR in dB")->capture_default_str();
    sim->add_option("--variant", variant, "Index into the dispersion scales (imdd)");
    sim->add_option("--out", out_dir, "Write results.csv and traces here instead of stdout");

    auto* sweep = app.add_subcommand("sweep", "Run every cell of the config grid");
    sweep->add_option("--config", config_path, "Experiment config (INI)")->required()->check(CLI::ExistingFile);
    sweep->add_option("--workers", workers, "Parallel cells")->check(CLI::PositiveNumber);
    sweep->add_option("--out", out_dir, "Output directory (default: the config's out_dir)");
    sweep->add_option("--seed", seed, "Override the seed list with this single seed");
    sweep->add_flag("--verbose,-v", verbose, "Log each finished cell to stderr");

    auto* par = app.add_subcommand("pareto", "Pareto front from a results CSV");
    std::string in_csv;
    double budget = -1.0;
    par->add_option("--in", in_csv, "results.csv")->required()->check(CLI::ExistingFile);
    par->add_option("--budget", budget, "MAC budget (default: from --config, else 2000)");
    par->add_option("--config", config_path, "Experiment config for the budget")->check(CLI::ExistingFile);
    par->add_option("--out", out_dir, "Directory for pareto.csv (default: print to stdout)");

    auto* plot = app.add_subcommand("plot", "SVG figures from a results CSV");
    plot->add_option("--in", in_csv, "results.csv")->required()->check(CLI::ExistingFile);
    plot->add_option("--budget", budget, "MAC budget line (default: from --config, else 2000)");
    plot->add_option("--config", config_path, "Experiment config for the budget")->check(CLI::ExistingFile);
    plot->add_option("--out", out_dir, "Output directory")->required();

    auto* self = app.add_subcommand("selftest", "Run the invariant suites");
    bool quick = false;
    self->add_option("--seed", seed, "Seed");
    self->add_flag("--quick", quick, "Fewer random instances");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*sim) {
            auto cfg = explore::load_config(config_path);
            const auto cells = explore::enumerate_cells(cfg);
            explore::Cell cell;
            bool found = false;
            for (const auto& c : cells)
                if (c.variant == variant) {
                    cell = c;
                    found = true;
                    break;
                }
            if (!found)
                throw ParameterError("no such variant");
            cell.model_id = explore::parse_model(model).id;
            cell.seed = seed;
            cell.snr_db = snr;
            explore::ResultSet rs;
            rs.config_hash = cfg.hash();
            rs.record_wall_time = cfg.record_wall_time;
            rs.rows.push_back(explore::run_cell(cfg, cell, cfg.save_checkpoints && !out_dir.empty()
                                                               ? (fs::path(out_dir) / "checkpoints").string()
                                                               : ""));
            if (!out_dir.empty())
                explore::write_results(rs, out_dir);
            else
                explore::write_results_csv(std::cout, rs);
            if (rs.rows[0].failed) {
                std::fprintf(stderr, "cell failed: %s\n", rs.rows[0].error.c_str());
                return 1;
            }
            return 0;
        }
        if (*sweep) {
            auto cfg = explore::load_config(config_path);
            if (sweep->count("--seed"))
                cfg.seeds = {seed};
            if (!out_dir.empty())
                cfg.out_dir = out_dir;
            const auto rs = explore::run_experiment(cfg, workers, verbose);
            explore::write_results(rs, cfg.out_dir);
            if (!rs.rows.empty() && rs.failures() < rs.rows.size())
                explore::emit_plots(rs, cfg.mac_budget, (fs::path(cfg.out_dir) / "plots").string());
            std::printf("%zu cells, %zu failed, results in %s\n", rs.rows.size(), rs.failures(), cfg.out_dir.c_str());
            // more than 10% failed cells is a failed run
            return rs.failures() * 10 > rs.rows.size() ? 1 : 0;
        }
        if (budget < 0.0)
            budget = config_path.empty() ? explore::ExperimentConfig{}.mac_budget
                                         : explore::load_config(config_path).mac_budget;
        if (*par) {
            const auto rs = load_results(in_csv);
            std::ostringstream os;
            os << "scenario,snr_db,model_id,macs_per_symbol,ber,budget_optimal\n";
            std::set<std::pair<std::string, double>> slices;
            for (const auto& r : rs.rows)
                slices.insert({r.cell.scenario, r.cell.snr_db});
            for (const auto& [sc, s] : slices) {
                const auto pts = explore::mean_points(rs, sc, s, true);
                const auto best = explore::budget_optimal(pts, budget);
                for (const auto& p : explore::pareto_front(pts))
                    os << sc << ',' << explore::num(s) << ',' << p.model_id << ',' << explore::num(p.macs) << ','
                       << explore::num(p.metric) << ',' << (best && best->model_id == p.model_id ? 1 : 0) << '\n';
            }
            if (out_dir.empty()) {
                std::cout << os.str();
            } else {
                fs::create_directories(out_dir);
                std::ofstream(fs::path(out_dir) / "pareto.csv") << os.str();
            }
            return 0;
        }
        if (*plot) {
            for (const auto& f : explore::emit_plots(load_results(in_csv), budget, out_dir))
                std::printf("%s\n", (fs::path(out_dir) / f).string().c_str());
            return 0;
        }
        if (*self) {
            bool ok = true;
            for (const auto& c : selftest::run_all(seed, quick)) {
                print_check(c);
                ok = ok && c.pass;
            }
            return ok ? 0 : 1;
        }
    } catch (const ParameterError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const UsageError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
