#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include <omp.h>

#include "eqlab/checkpoint.hpp"
#include "eqlab/classic.hpp"
#include "eqlab/cnn.hpp"
#include "eqlab/error.hpp"
#include "eqlab/explore.hpp"
#include "eqlab/nn.hpp"
#include "eqlab/vae.hpp"

namespace eqlab::explore {

namespace fs = std::filesystem;

namespace {

constexpr std::size_t kMargin = 50;  // symbols skipped at each block edge

std::uint64_t key_hash(const std::string& s)
{
    return nn::fnv1a(s.data(), s.size());
}

std::string scenario_label(const ExperimentConfig& cfg, std::size_t variant)
{
    if (cfg.scenario == Scenario::coherent_pcs)
        return "coherent_pcs";
    if (cfg.imdd.dispersion_scales.size() == 1 && cfg.imdd.dispersion_labels.empty())
        return "imdd";
    if (!cfg.imdd.dispersion_labels.empty())
        return "imdd/" + cfg.imdd.dispersion_labels[variant];
    return "imdd/x" + num(cfg.imdd.dispersion_scales[variant]);
}

// Every model of a (scenario, seed, snr) slice sees the same data.
RngStream data_rng(const Cell& c)
{
    return RngStream(c.seed, key_hash(c.scenario + "|" + num(c.snr_db)));
}

std::uint64_t train_seed(const Cell& c)
{
    return c.seed * 1000003ull ^ key_hash(c.model_id);
}

Constellation coherent_constellation(const CoherentScenario& s)
{
    const auto base = build_qam(s.qam_order);
    return s.entropy_bits > 0.0 ? pcs_shape(base, s.entropy_bits).constellation : base;
}

// ---- imdd ----

struct ImddStream {
    RVec rx;  // mean removed, unit RMS
    std::vector<int> idx;
};

ImddStream imdd_stream(const channel::ImddChannelConfig& ch, const Constellation& c, std::size_t n, RngStream rng)
{
    auto draw = sample_symbols(c, n, rng);
    RVec amp(n);
    for (std::size_t i = 0; i < n; ++i)
        amp[i] = draw.symbols[i].real();
    const auto out = channel::imdd_channel_apply(amp, ch, rng);
    RVec r(out.rx.size());
    double mean = 0.0;
    for (std::size_t i = 0; i < r.size(); ++i) {
        r[i] = out.rx.samples[i].real();
        mean += r[i];
    }
    mean /= static_cast<double>(r.size());
    double p = 0.0;
    for (auto& v : r) {
        v -= mean;
        p += v * v;
    }
    const double scale = 1.0 / std::sqrt(p / static_cast<double>(r.size()));
    for (auto& v : r)
        v *= scale;
    return {std::move(r), std::move(draw.indices)};
}

std::vector<int> inner(const std::vector<int>& idx)
{
    return {idx.begin() + static_cast<std::ptrdiff_t>(kMargin), idx.end() - static_cast<std::ptrdiff_t>(kMargin)};
}

classic::FeatureMatrix windows(const ImddStream& s, int sps, std::size_t taps)
{
    return classic::window_matrix(s.rx, kMargin * static_cast<std::size_t>(sps), static_cast<std::size_t>(sps),
                                  s.idx.size() - 2 * kMargin, taps);
}

RVec amplitudes(const ImddStream& s, const Constellation& c)
{
    RVec t;
    for (std::size_t i = kMargin; i + kMargin < s.idx.size(); ++i)
        t.push_back(c.points()[static_cast<std::size_t>(s.idx[i])].real());
    return t;
}

template <class F>
std::vector<int> decide_rows(const classic::FeatureMatrix& w, const Constellation& c, F&& f)
{
    std::vector<int> d(w.rows);
    for (std::size_t r = 0; r < w.rows; ++r)
        d[r] = c.nearest({f(w.row(r)), 0.0});
    return d;
}

void save_ckpt(const std::string& dir, const Cell& cell, const ckpt::Checkpoint& c)
{
    if (dir.empty())
        return;
    std::string name = cell.scenario + "_" + cell.model_id + "_s" + std::to_string(cell.seed) + "_snr" +
                       num(cell.snr_db) + ".txt";
    for (auto& ch : name)
        if (ch == '/' || ch == ':')
            ch = '-';
    std::ofstream f(fs::path(dir) / name);
    ckpt::save(f, c);
}

void run_imdd(const ExperimentConfig& cfg, const ModelSpec& m, CellResult& res, const std::string& ckdir)
{
    const auto& s = cfg.imdd;
    const Cell& cell = res.cell;
    const auto c = build_pam(s.pam_order);
    channel::ImddChannelConfig ch;
    ch.sps = s.sps;
    ch.rolloff = s.rolloff;
    ch.beta2L = s.beta2L * s.dispersion_scales[cell.variant];
    ch.nonlinearity = s.nonlinearity;
    ch.snr_db = cell.snr_db;
    ch.shot_coeff = s.shot_coeff;
    ch.validate();

    RngStream rng = data_rng(cell);
    const auto& t = cfg.train;
    const auto train = imdd_stream(ch, c, t.train_symbols + 2 * kMargin, rng.substream(1));
    const auto val = imdd_stream(ch, c, t.val_symbols + 2 * kMargin, rng.substream(2));
    const auto test = imdd_stream(ch, c, t.eval_symbols + 2 * kMargin, rng.substream(3));
    const auto ref = inner(test.idx);
    const std::size_t sps = static_cast<std::size_t>(s.sps);

    std::vector<int> dec;
    switch (m.family) {
    case Family::raw: {
        dec.resize(ref.size());
        for (std::size_t i = 0; i < ref.size(); ++i)
            dec[i] = c.nearest({test.rx[(i + kMargin) * sps], 0.0});
        break;
    }
    case Family::ffe: {
        const auto taps = classic::ffe_train_ls(windows(train, s.sps, m.args[0]), amplitudes(train, c));
        dec = decide_rows(windows(test, s.sps, m.args[0]), c, [&](auto w) { return classic::ffe_apply(taps, w); });
        res.train_steps = 1;
        save_ckpt(ckdir, cell, ckpt::from_ffe(taps));
        break;
    }
    case Family::volterra: {
        const auto v = classic::volterra_train_ls(windows(train, s.sps, m.args[0]), amplitudes(train, c), m.args[1]);
        dec = decide_rows(windows(test, s.sps, m.args[0]), c, [&](auto w) { return classic::volterra_apply(v, w); });
        res.train_steps = 1;
        save_ckpt(ckdir, cell, ckpt::from_volterra(v));
        break;
    }
    case Family::cnn:
    case Family::snn: {
        const std::size_t window = m.args[0];
        auto frame = [&](const ImddStream& st) {
            return cnn::frame_windows(st.rx, st.idx, s.sps, window, 1, kMargin, st.idx.size() - kMargin);
        };
        const auto tw = frame(train), vw = frame(val), ew = frame(test);
        cnn::TrainOptions opt;
        opt.adam.lr = t.lr;
        opt.batch = t.batch;
        opt.epochs = t.epochs;
        opt.patience = t.patience;
        opt.seed = train_seed(cell);
        const std::size_t batches = (tw.count + opt.batch - 1) / opt.batch;
        if (m.family == Family::cnn) {
            auto r = cnn::cnn_train<float>(tw, vw, cnn_config(m, c.size()), c, opt);
            dec = cnn::cnn_predict(r.model, ew, c);
            res.train_steps = r.report.epochs * batches;
            save_ckpt(ckdir, cell, ckpt::from_cnn(r.model));
        } else {
            auto r = snn::snn_train(tw, vw, snn_config(m, c.size(), cfg.snn), c, opt);
            dec = snn::snn_predict(r.model, ew, &res.synops_per_symbol);
            res.train_steps = r.report.epochs * batches;
            save_ckpt(ckdir, cell, ckpt::from_snn(r.model));
        }
        break;
    }
    default:
        throw ParameterError("model family does not run on imdd");
    }
    res.ser = symbol_error_rate(dec, ref, Ambiguity::none, nullptr, 0).rate;
    res.ber = bit_error_rate(dec, ref, c);
}

// ---- coherent ----

struct CoherentData {
    Constellation c;
    DualPolBlock train, test;
    std::vector<int> ref[2];  // test symbols per lane
    channel::Mimo2x2Fir truth;
};

CoherentData coherent_data(const ExperimentConfig& cfg, const Cell& cell)
{
    const auto& s = cfg.coherent;
    CoherentData d{coherent_constellation(s), {}, {}, {}, {}};
    channel::CoherentChannelConfig ch;
    ch.beta2L = s.beta2L;
    ch.cd_taps_len = s.cd_taps;
    ch.pol.kind = channel::PolKind::rotation;
    ch.pol.theta = s.theta;
    // noise per sample; the shaped signal has power 1/sps per sample
    ch.snr_db = cell.snr_db + 10.0 * std::log10(static_cast<double>(s.sps));
    ch.validate();
    const RVec g = s.sps > 1 ? rrc_taps(s.rolloff, 16, s.sps) : RVec{};
    auto shape = [&](const CVec& sym) {
        if (s.sps == 1)
            return SignalBlock(sym, 1);
        CVec up(sym.size() * static_cast<std::size_t>(s.sps));
        for (std::size_t i = 0; i < sym.size(); ++i)
            up[i * static_cast<std::size_t>(s.sps)] = sym[i];
        return fir_apply(SignalBlock(std::move(up), s.sps), std::span<const double>(g));
    };
    RngStream rng = data_rng(cell);
    auto block = [&](std::size_t n, RngStream r, std::vector<int>* ref) {
        auto sx = sample_symbols(d.c, n, r);
        auto sy = sample_symbols(d.c, n, r);
        auto out = channel::coherent_channel_apply(DualPolBlock(shape(sx.symbols), shape(sy.symbols)), ch, r);
        if (s.sps > 1) {
            out.rx.x = fir_apply(out.rx.x, std::span<const double>(g));
            out.rx.y = fir_apply(out.rx.y, std::span<const double>(g));
        }
        if (ref) {
            ref[0] = std::move(sx.indices);
            ref[1] = std::move(sy.indices);
        }
        d.truth = out.impulse_response;
        return out.rx;
    };
    d.train = block(cfg.train.train_symbols, rng.substream(1), nullptr);
    d.test = block(cfg.train.eval_symbols, rng.substream(3), d.ref);
    return d;
}

struct Score {
    double ser = 1.0;
    double ber = 0.5;
};

// Genie-aided resolution of the blind ambiguities: each output lane is
// assigned to a transmit lane (as a permutation), and its delay and phase
// come from the peak of the cross-correlation with that lane's symbols.
Score blind_score(const DualPolBlock& eq, const CoherentData& d, std::size_t n)
{
    const auto& pts = d.c.points();
    const std::size_t total = std::min(n, eq.x.samples.size());
    const std::size_t skip = std::min<std::size_t>(kMargin, total / 4);
    const int max_lag = 32;
    struct Fit {
        double mag = 0.0;
        int lag = 0;
        cplx rot{1.0, 0.0};
    };
    auto fit = [&](const CVec& z, const std::vector<int>& ref) {
        Fit best;
        for (int lag = -max_lag; lag <= max_lag; ++lag) {
            cplx acc = 0.0;
            for (std::size_t k = skip; k + skip < total; ++k) {
                const auto m = static_cast<std::ptrdiff_t>(k) + lag;
                if (m < 0 || m >= static_cast<std::ptrdiff_t>(total))
                    continue;
                acc += z[static_cast<std::size_t>(m)] * std::conj(pts[static_cast<std::size_t>(ref[k])]);
            }
            if (std::abs(acc) > best.mag)
                best = {std::abs(acc), lag, std::conj(acc) / std::abs(acc)};
        }
        return best;
    };
    const CVec* lanes[2] = {&eq.x.samples, &eq.y.samples};
    Fit f[2][2];
    for (int q = 0; q < 2; ++q)
        for (int p = 0; p < 2; ++p)
            f[q][p] = fit(*lanes[q], d.ref[p]);
    const bool swap = f[0][1].mag + f[1][0].mag > f[0][0].mag + f[1][1].mag;
    Score s{0.0, 0.0};
    for (int q = 0; q < 2; ++q) {
        const int p = swap ? 1 - q : q;
        const Fit& ft = f[q][p];
        const CVec& z = *lanes[q];
        double pw = 0.0;
        for (std::size_t k = 0; k < total; ++k)
            pw += std::norm(z[k]);
        const cplx g = ft.rot / std::sqrt(pw / static_cast<double>(total));
        std::vector<int> dec;
        std::vector<int> ref;
        for (std::size_t k = skip; k + skip < total; ++k) {
            const auto m = static_cast<std::ptrdiff_t>(k) + ft.lag;
            if (m < 0 || m >= static_cast<std::ptrdiff_t>(total))
                continue;
            dec.push_back(d.c.nearest(z[static_cast<std::size_t>(m)] * g));
            ref.push_back(d.ref[p][k]);
        }
        s.ser += symbol_error_rate(dec, ref, Ambiguity::none, nullptr, 0).rate / 2.0;
        s.ber += bit_error_rate(dec, ref, d.c) / 2.0;
    }
    return s;
}

void run_coherent(const ExperimentConfig& cfg, const ModelSpec& m, CellResult& res, const std::string& ckdir)
{
    const auto& s = cfg.coherent;
    const auto& t = cfg.train;
    const auto d = coherent_data(cfg, res.cell);
    const std::size_t every = std::max<std::size_t>(1, t.trace_every);
    switch (m.family) {
    case Family::raw: {
        DualPolBlock eq = d.test;
        if (s.sps > 1)
            eq = classic::butterfly_apply(d.test, classic::ButterflyFir::identity(1, s.sps));
        const auto sc = blind_score(eq, d, t.eval_symbols);
        res.ser = sc.ser;
        res.ber = sc.ber;
        break;
    }
    case Family::cma: {
        classic::CmaOptions opt;
        opt.step = t.cma_step;
        opt.trace_block = every;
        const auto w0 = classic::ButterflyFir::identity(m.args[0], s.sps);
        const auto r = classic::cma_train(d.train, w0, classic::cma_radius(d.c), t.cma_updates, opt, true);
        for (std::size_t k = 0; k < r.snapshots.size(); ++k)
            res.trace.push_back({(k + 1) * every,
                                 blind_score(classic::butterfly_apply(d.test, r.snapshots[k]), d, t.trace_symbols).ser});
        const auto sc = blind_score(classic::butterfly_apply(d.test, r.taps), d, t.eval_symbols);
        res.ser = sc.ser;
        res.ber = sc.ber;
        res.train_steps = t.cma_updates;
        save_ckpt(ckdir, res.cell, ckpt::from_butterfly(r.taps));
        break;
    }
    case Family::vae: {
        vae::VaeTrainOptions opt;
        opt.batch = t.vae_batch;
        opt.n_steps = t.vae_steps;
        opt.adam.lr_encoder = opt.adam.lr_decoder = t.vae_lr;
        opt.seed = train_seed(res.cell);
        opt.snapshot_every = std::max<std::size_t>(1, every / t.vae_batch);
        const auto m0 = vae::VaeLeModel::initial(d.c, m.args[0], m.args[1], s.sps, 2);
        const auto r = vae::vae_train(d.train, m0, opt);
        for (std::size_t k = 0; k < r.snapshots.size(); ++k)
            res.trace.push_back({(k + 1) * opt.snapshot_every * opt.batch,
                                 blind_score(classic::butterfly_apply(d.test, r.snapshots[k]), d, t.trace_symbols).ser});
        const auto sc = blind_score(classic::butterfly_apply(d.test, r.model.encoder), d, t.eval_symbols);
        res.ser = sc.ser;
        res.ber = sc.ber;
        res.train_steps = t.vae_steps;
        res.channel_score = vae::alignment_score(r.model.decoder, d.truth);
        save_ckpt(ckdir, res.cell, ckpt::from_vae(r.model));
        break;
    }
    default:
        throw ParameterError("model family does not run on coherent_pcs");
    }
}

bool cell_less(const Cell& a, const Cell& b)
{
    if (a.scenario != b.scenario)
        return a.scenario < b.scenario;
    if (a.model_id != b.model_id)
        return a.model_id < b.model_id;
    if (a.seed != b.seed)
        return a.seed < b.seed;
    return a.snr_db < b.snr_db;
}

std::string clean(std::string s)
{
    for (auto& ch : s)
        if (ch == ',' || ch == '\n' || ch == '\r')
            ch = ';';
    return s;
}

std::vector<std::string> split_csv(const std::string& line)
{
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string f;
    while (std::getline(ss, f, ','))
        out.push_back(f);
    if (!line.empty() && line.back() == ',')
        out.emplace_back();
    return out;
}

const char* kHeader = "scenario,model_id,seed,snr_db,macs_per_symbol,ser,ber,train_steps,wall_s,config_hash";

} // namespace

std::size_t ResultSet::failures() const
{
    return static_cast<std::size_t>(std::count_if(rows.begin(), rows.end(), [](const auto& r) { return r.failed; }));
}

std::vector<Cell> enumerate_cells(const ExperimentConfig& cfg)
{
    cfg.validate();
    std::vector<Cell> cells;
    const std::size_t variants = cfg.scenario == Scenario::imdd ? cfg.imdd.dispersion_scales.size() : 1;
    for (std::size_t v = 0; v < variants; ++v)
        for (const auto& id : cfg.models)
            for (auto seed : cfg.seeds)
                for (double snr : cfg.snr_db)
                    cells.push_back({scenario_label(cfg, v), v, id, seed, snr});
    std::stable_sort(cells.begin(), cells.end(), cell_less);
    return cells;
}

CellResult run_cell(const ExperimentConfig& cfg, const Cell& cell, const std::string& checkpoint_dir)
{
    CellResult res;
    res.cell = cell;
    const auto t0 = std::chrono::steady_clock::now();
    try {
        const auto m = parse_model(cell.model_id);
        const std::size_t classes =
            cfg.scenario == Scenario::imdd ? static_cast<std::size_t>(cfg.imdd.pam_order)
                                           : static_cast<std::size_t>(cfg.coherent.qam_order);
        res.macs_per_symbol = model_macs(m, classes, cfg.snn);
        if (cfg.scenario == Scenario::imdd)
            run_imdd(cfg, m, res, checkpoint_dir);
        else
            run_coherent(cfg, m, res, checkpoint_dir);
    } catch (const std::exception& e) {
        res.failed = true;
        res.error = e.what();
        res.ser = res.ber = std::nan("");
    }
    res.wall_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return res;
}

ResultSet run_experiment(const ExperimentConfig& cfg, int workers, bool verbose)
{
    const auto cells = enumerate_cells(cfg);
    ResultSet rs;
    rs.config_hash = cfg.hash();
    rs.rows.resize(cells.size());
    std::string ckdir;
    if (cfg.save_checkpoints) {
        ckdir = (fs::path(cfg.out_dir) / "checkpoints").string();
        fs::create_directories(ckdir);
    }
    const int n = static_cast<int>(cells.size());
#pragma omp parallel for schedule(dynamic, 1) num_threads(std::max(1, workers))
    for (int i = 0; i < n; ++i) {
        auto r = run_cell(cfg, cells[static_cast<std::size_t>(i)], ckdir);
        if (verbose) {
#pragma omp critical(explore_log)
            std::fprintf(stderr, "[%s %s seed=%llu snr=%s] %s\n", r.cell.scenario.c_str(), r.cell.model_id.c_str(),
                         static_cast<unsigned long long>(r.cell.seed), num(r.cell.snr_db).c_str(),
                         r.failed ? ("failed: " + r.error).c_str()
                                  : ("ber " + num(r.ber) + " ser " + num(r.ser) + " (" + num(r.wall_s) + " s)").c_str());
        }
        rs.rows[static_cast<std::size_t>(i)] = std::move(r);
    }
    rs.record_wall_time = cfg.record_wall_time;
    return rs;
}

void write_results_csv(std::ostream& os, const ResultSet& rs)
{
    os << kHeader << '\n';
    for (const auto& r : rs.rows)
        os << r.cell.scenario << ',' << r.cell.model_id << ',' << r.cell.seed << ',' << num(r.cell.snr_db) << ','
           << num(r.macs_per_symbol) << ',' << num(r.ser) << ',' << num(r.ber) << ',' << r.train_steps << ','
           << num(rs.record_wall_time ? r.wall_s : 0.0) << ',' << rs.config_hash << '\n';
}

ResultSet read_results_csv(std::istream& is)
{
    ResultSet rs;
    std::string line;
    if (!std::getline(is, line) || line != kHeader)
        throw ParameterError("results csv: unexpected header");
    while (std::getline(is, line)) {
        if (line.empty())
            continue;
        const auto f = split_csv(line);
        if (f.size() != 10)
            throw ParameterError("results csv: expected 10 columns in '" + line + "'");
        CellResult r;
        try {
            r.cell = {f[0], 0, f[1], std::stoull(f[2]), std::stod(f[3])};
            r.macs_per_symbol = std::stod(f[4]);
            r.ser = std::stod(f[5]);
            r.ber = std::stod(f[6]);
            r.train_steps = std::stoull(f[7]);
            r.wall_s = std::stod(f[8]);
        } catch (const std::exception&) {
            throw ParameterError("results csv: bad number in '" + line + "'");
        }
        r.failed = std::isnan(r.ber);
        rs.config_hash = f[9];
        rs.record_wall_time = rs.record_wall_time || r.wall_s != 0.0;
        rs.rows.push_back(std::move(r));
    }
    return rs;
}

void write_results(const ResultSet& rs, const std::string& dir)
{
    fs::create_directories(dir);
    const fs::path d(dir);
    {
        std::ofstream f(d / "results.csv");
        write_results_csv(f, rs);
    }
    {
        // mean and sample std over the seeds of each (scenario, model, snr)
        struct Acc {
            double macs = 0.0;
            std::vector<double> ser, ber;
        };
        std::map<std::tuple<std::string, std::string, double>, Acc> groups;
        for (const auto& r : rs.rows) {
            auto& a = groups[{r.cell.scenario, r.cell.model_id, r.cell.snr_db}];
            a.macs = r.macs_per_symbol;
            if (!r.failed) {
                a.ser.push_back(r.ser);
                a.ber.push_back(r.ber);
            }
        }
        auto stats = [](const std::vector<double>& v) {
            if (v.empty())
                return std::pair{std::nan(""), std::nan("")};
            double m = 0.0;
            for (double x : v)
                m += x;
            m /= static_cast<double>(v.size());
            double s = 0.0;
            for (double x : v)
                s += (x - m) * (x - m);
            return std::pair{m, v.size() > 1 ? std::sqrt(s / static_cast<double>(v.size() - 1)) : 0.0};
        };
        std::ofstream f(d / "summary.csv");
        f << "scenario,model_id,snr_db,macs_per_symbol,n_seeds,ser_mean,ser_std,ber_mean,ber_std,config_hash\n";
        for (const auto& [k, a] : groups) {
            const auto [sm, ss] = stats(a.ser);
            const auto [bm, bs] = stats(a.ber);
            f << std::get<0>(k) << ',' << std::get<1>(k) << ',' << num(std::get<2>(k)) << ',' << num(a.macs) << ','
              << a.ser.size() << ',' << num(sm) << ',' << num(ss) << ',' << num(bm) << ',' << num(bs) << ','
              << rs.config_hash << '\n';
        }
    }
    {
        std::ofstream f(d / "traces.csv");
        f << "scenario,model_id,seed,snr_db,symbols,ser,config_hash\n";
        for (const auto& r : rs.rows)
            for (const auto& p : r.trace)
                f << r.cell.scenario << ',' << r.cell.model_id << ',' << r.cell.seed << ',' << num(r.cell.snr_db) << ','
                  << p.symbols << ',' << num(p.ser) << ',' << rs.config_hash << '\n';
    }
    {
        std::ofstream f(d / "failures.csv");
        f << "scenario,model_id,seed,snr_db,error,config_hash\n";
        for (const auto& r : rs.rows)
            if (r.failed)
                f << r.cell.scenario << ',' << r.cell.model_id << ',' << r.cell.seed << ',' << num(r.cell.snr_db)
                  << ',' << clean(r.error) << ',' << rs.config_hash << '\n';
    }
    {
        std::ofstream f(d / "timing.log");
        for (const auto& r : rs.rows)
            f << r.cell.scenario << ' ' << r.cell.model_id << ' ' << r.cell.seed << ' ' << num(r.cell.snr_db) << ' '
              << num(r.wall_s) << " s\n";
    }
}

} // namespace eqlab::explore
