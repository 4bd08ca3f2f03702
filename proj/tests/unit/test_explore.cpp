#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "eqlab/error.hpp"
#include "eqlab/explore.hpp"
#include "eqlab/selftest.hpp"

using namespace eqlab;
using namespace eqlab::explore;
namespace fs = std::filesystem;

namespace {

const char* kSmallImdd = R"(
[experiment]
name = small
scenario = imdd
seeds = 1 2
snr_db = 16
out_dir = unused

[channel]
beta2L = 0.4
nonlinearity = eam
sat = 1.5
dispersion_scales = 1 2
dispersion_labels = a b

[models]
linear = raw ffe:5 volterra:5/3
learned = cnn:8/2x4s2 snn:8/4

[training]
train_symbols = 2000
val_symbols = 500
eval_symbols = 2000
epochs = 2
)";

const char* kSmallCoherent = R"(
[experiment]
scenario = coherent_pcs
seeds = 4
snr_db = 20

[channel]
qam_order = 16
entropy_bits = 3.6
beta2L = 0.3

[models]
m = cma:7 vae:7/7

[training]
train_symbols = 4000
val_symbols = 500
eval_symbols = 4000
cma_updates = 8000
vae_steps = 40
vae_batch = 64
trace_every = 2048
trace_symbols = 1000
)";

ExperimentConfig parse(const std::string& text)
{
    std::istringstream is(text);
    return parse_config(is);
}

std::string csv(const ResultSet& rs)
{
    std::ostringstream os;
    write_results_csv(os, rs);
    return os.str();
}

std::string slurp(const fs::path& p)
{
    std::ifstream f(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(f), {}};
}

} // namespace

TEST_CASE("pareto front, worked example")
{
    std::vector<ParetoPoint> pts{{10, 1e-2, "a", false}, {15, 2e-2, "b", false}, {20, 1e-3, "c", false}};
    const auto f = pareto_front(pts);
    REQUIRE(f.size() == 2);
    CHECK(f[0].model_id == "a");
    CHECK(f[1].model_id == "c");
    CHECK(budget_optimal(pts, 16)->model_id == "a");
    CHECK(budget_optimal(pts, 20)->model_id == "c");
    CHECK(!budget_optimal(pts, 5).has_value());
    mark_dominated(pts);
    CHECK(pts[1].dominated);
    CHECK(!pts[0].dominated);
}

TEST_CASE("pareto front tie rules")
{
    std::vector<ParetoPoint> same(5, ParetoPoint{7, 0.1, "x", false});
    CHECK(pareto_front(same).size() == 1);
    std::vector<ParetoPoint> one{{3, 0.5, "only", false}};
    CHECK(pareto_front(one).size() == 1);
    // equal macs keep the lower metric
    std::vector<ParetoPoint> tie{{5, 0.2, "hi", false}, {5, 0.1, "lo", false}};
    REQUIRE(pareto_front(tie).size() == 1);
    CHECK(pareto_front(tie)[0].model_id == "lo");
    CHECK(pareto_front(std::vector<ParetoPoint>{}).empty());
}

TEST_CASE("pareto front equals the brute-force oracle")
{
    const auto c = selftest::pareto_oracle(100, 1000, 17);
    INFO(c.detail);
    CHECK(c.pass);
}

TEST_CASE("mac accounting equals an independent recount")
{
    const auto c = selftest::mac_accounting(40, 23);
    INFO(c.detail);
    CHECK(c.pass);
}

TEST_CASE("model ids parse and reject malformed input")
{
    CHECK(parse_model("cnn:40/8x8s2/4x3s1").args == std::vector<std::size_t>{40, 8, 8, 2, 4, 3, 1});
    CHECK(parse_model("volterra:9/5").family == Family::volterra);
    CHECK(model_macs(parse_model("cnn:40/8x8s2"), 2, {}) == 1360.0);
    CHECK(model_macs(parse_model("snn:32/16"), 2, {}) == (32 * 16 + 16 * 2) * 10.0);
    CHECK(model_macs(parse_model("raw"), 2, {}) == 0.0);
    for (const char* bad : {"ffe", "ffe:x", "ffe:3/4", "volterra:3/5", "cnn:40", "cnn:40/8k8s2", "mlp:3", "cnn:8/2x9s1"}) {
        INFO(bad);
        CHECK_THROWS_AS(model_macs(parse_model(bad), 2, {}), ParameterError);
    }
}

TEST_CASE("config parsing and validation")
{
    const auto cfg = parse(kSmallImdd);
    CHECK(cfg.models.size() == 5);
    CHECK(cfg.imdd.dispersion_scales == std::vector<double>{1.0, 2.0});
    CHECK(cfg.mac_budget == 2000.0);
    CHECK(enumerate_cells(cfg).size() == 2 * 5 * 2);
    CHECK(enumerate_cells(cfg).front().scenario == "imdd/a");
    CHECK(cfg.hash().size() == 16);
    // the hash follows the content, not the layout
    CHECK(parse(std::string(kSmallImdd) + "\n\n").hash() == cfg.hash());
    CHECK(parse(std::string(kSmallImdd) + "[snn]\ntimesteps = 4\n").hash() != cfg.hash());

    CHECK_THROWS_AS(parse("[experiment]\nsed = 1\n"), ParameterError);
    CHECK_THROWS_AS(parse("[experiment]\nseeds = 1 1\n"), ParameterError);
    CHECK_THROWS_AS(parse("[experiment]\nseeds =\n"), ParameterError);
    CHECK_THROWS_AS(parse("[bogus]\nx = 1\n"), ParameterError);
    CHECK_THROWS_AS(parse("[experiment]\nscenario = coherent_pcs\n[models]\na = ffe:5\n"), ParameterError);
    CHECK_THROWS_AS(parse("[models]\na = ffe:5 ffe:5\n"), ParameterError);
    CHECK_THROWS_AS(parse("[channel]\ndispersion_scales = 1 2\ndispersion_labels = a\n"), ParameterError);
}

TEST_CASE("empty model grid gives an empty result set")
{
    auto cfg = parse("[experiment]\nseeds = 1\n");
    const auto rs = run_experiment(cfg, 2);
    CHECK(rs.rows.empty());
    CHECK(csv(rs).find('\n') == csv(rs).size() - 1);  // header only
    CHECK_THROWS_AS(emit_plots(rs, 2000, (fs::temp_directory_path() / "eqlab_empty_plot").string()), UsageError);
}

TEST_CASE("imdd sweep is deterministic and independent of the worker count")
{
    auto cfg = parse(kSmallImdd);
    const auto a = run_experiment(cfg, 1);
    const auto b = run_experiment(cfg, 3);
    CHECK(a.failures() == 0);
    CHECK(csv(a) == csv(b));
    for (const auto& r : a.rows) {
        INFO(r.cell.model_id);
        CHECK(r.ber >= 0.0);
        CHECK(r.ber <= 1.0);
        CHECK(r.wall_s >= 0.0);
        if (r.cell.model_id == "snn:8/4")
            CHECK(r.synops_per_symbol < r.macs_per_symbol);
    }
    // CSV round trip
    std::istringstream is(csv(a));
    CHECK(csv(read_results_csv(is)) == csv(a));

    const auto dir = fs::temp_directory_path() / "eqlab_test_sweep";
    fs::remove_all(dir);
    write_results(a, dir.string());
    const auto first = slurp(dir / "results.csv");
    const auto summary = slurp(dir / "summary.csv");
    write_results(b, dir.string());
    CHECK(slurp(dir / "results.csv") == first);
    CHECK(slurp(dir / "summary.csv") == summary);
    CHECK(fs::exists(dir / "failures.csv"));
    CHECK(fs::exists(dir / "timing.log"));

    const auto p1 = emit_plots(a, cfg.mac_budget, (dir / "p1").string());
    const auto p2 = emit_plots(b, cfg.mac_budget, (dir / "p2").string());
    REQUIRE(p1 == p2);
    CHECK(!p1.empty());
    for (const auto& f : p1)
        CHECK(slurp(dir / "p1" / f) == slurp(dir / "p2" / f));
    const auto svg = slurp(dir / "p1" / p1.front());
    CHECK(svg.find("<svg") != std::string::npos);
    CHECK(svg.find("Volterra") != std::string::npos);
    fs::remove_all(dir);
}

TEST_CASE("coherent sweep produces traces and is deterministic")
{
    auto cfg = parse(kSmallCoherent);
    const auto a = run_experiment(cfg, 1);
    const auto b = run_experiment(cfg, 2);
    CHECK(csv(a) == csv(b));
    REQUIRE(a.rows.size() == 2);
    for (const auto& r : a.rows) {
        INFO(r.cell.model_id << " " << r.error);
        CHECK(!r.failed);
        CHECK(!r.trace.empty());
        CHECK(r.ser <= 1.0);
    }
}

TEST_CASE("a failing cell is recorded and the run continues")
{
    auto cfg = parse(kSmallImdd);
    // parses, but the kernel is longer than the window
    cfg.models = {"ffe:5", "cnn:8/2x9s1"};
    cfg.imdd.dispersion_scales = {1.0};
    cfg.imdd.dispersion_labels.clear();
    const auto rs = run_experiment(cfg, 1);
    std::size_t failed = 0;
    for (const auto& r : rs.rows)
        failed += r.failed;
    CHECK(rs.rows.size() == 4);
    CHECK(rs.failures() == failed);
    CHECK(failed >= 1);
    for (const auto& r : rs.rows)
        if (r.cell.model_id == "ffe:5")
            CHECK(!r.failed);
}

TEST_CASE("plots of a single point and of nothing")
{
    ResultSet rs;
    rs.config_hash = "abc";
    CellResult r;
    r.cell = {"imdd", 0, "ffe:5", 1, 16.0};
    r.macs_per_symbol = 5;
    r.ber = 1e-2;
    rs.rows.push_back(r);
    const auto dir = fs::temp_directory_path() / "eqlab_test_single_plot";
    fs::remove_all(dir);
    const auto files = emit_plots(rs, 2000, dir.string());
    REQUIRE(!files.empty());
    const auto svg = slurp(dir / files.front());
    CHECK(svg.find("<circle") != std::string::npos);
    CHECK(svg.find("<polyline") == std::string::npos);
    fs::remove_all(dir);
    CHECK_THROWS_AS(emit_plots(ResultSet{}, 2000, dir.string()), UsageError);
}

TEST_CASE("results csv columns and scenario labels for two dispersion scales")
{
    auto cfg = parse(kSmallImdd);
    cfg.models = {"raw"};
    const auto rs = run_experiment(cfg, 1);
    const auto text = csv(rs);
    CHECK(text.rfind("scenario,model_id,seed,snr_db,macs_per_symbol,ser,ber,train_steps,wall_s,config_hash", 0) == 0);
    std::set<std::string> scenarios;
    for (const auto& row : rs.rows) {
        scenarios.insert(row.cell.scenario);
        // every row carries the config hash and its seed
        CHECK(text.find("," + std::to_string(row.cell.seed) + ",") != std::string::npos);
    }
    CHECK(scenarios.size() == 2);
    CHECK(text.find(rs.config_hash) != std::string::npos);
}
