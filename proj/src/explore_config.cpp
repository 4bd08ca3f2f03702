#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "eqlab/classic.hpp"
#include "eqlab/error.hpp"
#include "eqlab/explore.hpp"
#include "eqlab/nn.hpp"

namespace eqlab::explore {

namespace pt = boost::property_tree;

std::string num(double v)
{
    if (std::isnan(v))
        return "nan";
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return buf;
}

namespace {

std::vector<std::string> words(const std::string& s)
{
    std::istringstream is(s);
    std::vector<std::string> out;
    std::string w;
    while (is >> w)
        out.push_back(w);
    return out;
}

double to_double(const std::string& key, const std::string& s)
{
    try {
        std::size_t pos = 0;
        const double v = std::stod(s, &pos);
        if (pos != s.size())
            throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw ParameterError("config: " + key + " expects a number, got '" + s + "'");
    }
}

std::size_t to_size(const std::string& key, const std::string& s)
{
    const double v = to_double(key, s);
    if (v < 0 || v != std::floor(v))
        throw ParameterError("config: " + key + " expects a non-negative integer, got '" + s + "'");
    return static_cast<std::size_t>(v);
}

bool to_bool(const std::string& key, const std::string& s)
{
    if (s == "true" || s == "1" || s == "yes")
        return true;
    if (s == "false" || s == "0" || s == "no")
        return false;
    throw ParameterError("config: " + key + " expects true or false, got '" + s + "'");
}

std::string join(const std::vector<std::string>& v)
{
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i)
        s += (i ? " " : "") + v[i];
    return s;
}

template <class T, class F>
std::string join_num(const std::vector<T>& v, F f)
{
    std::vector<std::string> s;
    for (const auto& x : v)
        s.push_back(f(x));
    return join(s);
}

std::size_t parse_index(const std::string& id, const std::string& s)
{
    if (s.empty() || s.find_first_not_of("0123456789") != std::string::npos)
        throw ParameterError("model id '" + id + "': expected a positive integer, got '" + s + "'");
    const auto v = std::stoull(s);
    if (v == 0)
        throw ParameterError("model id '" + id + "': sizes must be positive");
    return static_cast<std::size_t>(v);
}

std::vector<std::string> split(const std::string& s, char sep)
{
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = s.find(sep, start);
        out.push_back(s.substr(start, pos == std::string::npos ? std::string::npos : pos - start));
        if (pos == std::string::npos)
            break;
        start = pos + 1;
    }
    return out;
}

} // namespace

std::string family_name(Family f)
{
    switch (f) {
    case Family::raw: return "raw";
    case Family::ffe: return "ffe";
    case Family::volterra: return "volterra";
    case Family::cnn: return "cnn";
    case Family::snn: return "snn";
    case Family::cma: return "cma";
    case Family::vae: return "vae";
    }
    return "?";
}

ModelSpec parse_model(const std::string& id)
{
    ModelSpec m;
    m.id = id;
    if (id == "raw")
        return m;
    const auto colon = id.find(':');
    if (colon == std::string::npos)
        throw ParameterError("model id '" + id + "': expected family:arguments");
    const std::string fam = id.substr(0, colon);
    const auto parts = split(id.substr(colon + 1), '/');
    auto expect = [&](std::size_t n) {
        if (parts.size() != n)
            throw ParameterError("model id '" + id + "': wrong number of arguments");
    };
    if (fam == "ffe" || fam == "cma") {
        m.family = fam == "ffe" ? Family::ffe : Family::cma;
        expect(1);
        m.args.push_back(parse_index(id, parts[0]));
    } else if (fam == "volterra" || fam == "vae") {
        m.family = fam == "volterra" ? Family::volterra : Family::vae;
        expect(2);
        m.args = {parse_index(id, parts[0]), parse_index(id, parts[1])};
        if (m.family == Family::volterra && m.args[1] > m.args[0])
            throw ParameterError("model id '" + id + "': quadratic memory exceeds the linear memory");
    } else if (fam == "cnn") {
        m.family = Family::cnn;
        if (parts.size() < 2)
            throw ParameterError("model id '" + id + "': expected window and at least one conv layer");
        m.args.push_back(parse_index(id, parts[0]));
        for (std::size_t i = 1; i < parts.size(); ++i) {
            // CxKsS: channels x kernel, stride
            const auto x = parts[i].find('x');
            const auto s = parts[i].find('s');
            if (x == std::string::npos || s == std::string::npos || s < x)
                throw ParameterError("model id '" + id + "': conv layer must read CxKsS");
            m.args.push_back(parse_index(id, parts[i].substr(0, x)));
            m.args.push_back(parse_index(id, parts[i].substr(x + 1, s - x - 1)));
            m.args.push_back(parse_index(id, parts[i].substr(s + 1)));
        }
    } else if (fam == "snn") {
        m.family = Family::snn;
        if (parts.size() < 2)
            throw ParameterError("model id '" + id + "': expected window and at least one hidden layer");
        for (const auto& p : parts)
            m.args.push_back(parse_index(id, p));
    } else {
        throw ParameterError("model id '" + id + "': unknown family '" + fam + "'");
    }
    return m;
}

cnn::CnnConfig cnn_config(const ModelSpec& m, std::size_t classes)
{
    if (m.family != Family::cnn)
        throw ParameterError("cnn_config: not a cnn model id");
    cnn::CnnConfig cfg;
    cfg.input_window = m.args[0];
    cfg.classes = classes;
    std::size_t ch = 1, len = m.args[0];
    for (std::size_t i = 1; i + 2 < m.args.size(); i += 3) {
        const std::size_t out = m.args[i], k = m.args[i + 1], s = m.args[i + 2];
        if (k > len)
            throw ParameterError("model id '" + m.id + "': kernel longer than its input");
        cfg.layers.push_back(cnn::LayerSpec::conv(ch, out, k, s));
        cfg.layers.push_back(cnn::LayerSpec::relu());
        ch = out;
        len = (len - k) / s + 1;
    }
    cfg.layers.push_back(cnn::LayerSpec::dense(ch * len, classes));
    cfg.validate();
    return cfg;
}

snn::SnnConfig snn_config(const ModelSpec& m, std::size_t classes, const SnnDefaults& d)
{
    if (m.family != Family::snn)
        throw ParameterError("snn_config: not an snn model id");
    snn::SnnConfig cfg;
    cfg.sizes.assign(m.args.begin(), m.args.end());
    cfg.sizes.push_back(classes);
    cfg.timesteps = d.timesteps;
    cfg.encoding = d.encoding;
    cfg.surrogate_beta = d.surrogate_beta;
    cfg.lif.reset = d.reset;
    cfg.validate();
    return cfg;
}

double model_macs(const ModelSpec& m, std::size_t classes, const SnnDefaults& d)
{
    switch (m.family) {
    case Family::raw: return 0.0;
    case Family::ffe: return static_cast<double>(classic::macs_per_symbol_ffe(m.args[0]));
    case Family::volterra: return static_cast<double>(classic::macs_per_symbol_volterra(m.args[0], m.args[1]));
    case Family::cnn: return cnn::macs_per_symbol_cnn(cnn_config(m, classes));
    case Family::snn: {
        const auto cfg = snn_config(m, classes, d);
        return cfg.dense_macs() * static_cast<double>(cfg.timesteps);
    }
    case Family::cma:
        return static_cast<double>(classic::macs_per_symbol(classic::ButterflyFir::identity(m.args[0])));
    case Family::vae:
        return static_cast<double>(classic::macs_per_symbol(classic::ButterflyFir::identity(m.args[0])));
    }
    return 0.0;
}

void ExperimentConfig::validate() const
{
    if (seeds.empty())
        throw ParameterError("config: seeds must not be empty");
    if (std::set<std::uint64_t>(seeds.begin(), seeds.end()).size() != seeds.size())
        throw ParameterError("config: seeds must be distinct");
    if (snr_db.empty())
        throw ParameterError("config: snr_db must not be empty");
    if (!(mac_budget >= 0.0))
        throw ParameterError("config: mac_budget must be non-negative");
    if (train.eval_symbols < 1000 || train.train_symbols < 1000 || train.val_symbols < 100)
        throw ParameterError("config: symbol counts are too small");
    std::set<std::string> ids;
    for (const auto& id : models) {
        const auto m = parse_model(id);
        if (!ids.insert(id).second)
            throw ParameterError("config: model '" + id + "' is listed twice");
        const bool blind = m.family == Family::cma || m.family == Family::vae;
        if (scenario == Scenario::coherent_pcs && !blind && m.family != Family::raw)
            throw ParameterError("config: model '" + id + "' does not run on the coherent scenario");
        if (scenario == Scenario::imdd && blind)
            throw ParameterError("config: model '" + id + "' does not run on the imdd scenario");
    }
    if (scenario == Scenario::imdd) {
        if (imdd.dispersion_scales.empty())
            throw ParameterError("config: dispersion_scales must not be empty");
        if (!imdd.dispersion_labels.empty() && imdd.dispersion_labels.size() != imdd.dispersion_scales.size())
            throw ParameterError("config: dispersion_labels must match dispersion_scales");
    }
}

std::string ExperimentConfig::canonical() const
{
    std::ostringstream os;
    os << "name = " << name << '\n';
    os << "scenario = " << (scenario == Scenario::imdd ? "imdd" : "coherent_pcs") << '\n';
    os << "seeds = " << join_num(seeds, [](std::uint64_t s) { return std::to_string(s); }) << '\n';
    os << "snr_db = " << join_num(snr_db, num) << '\n';
    os << "mac_budget = " << num(mac_budget) << '\n';
    os << "models = " << join(models) << '\n';
    if (scenario == Scenario::imdd) {
        os << "pam_order = " << imdd.pam_order << "\nsps = " << imdd.sps << "\nrolloff = " << num(imdd.rolloff)
           << "\nbeta2L = " << num(imdd.beta2L) << "\ndispersion_scales = " << join_num(imdd.dispersion_scales, num)
           << "\ndispersion_labels = " << join(imdd.dispersion_labels)
           << "\nnonlinearity = " << static_cast<int>(imdd.nonlinearity.kind) << ' ' << num(imdd.nonlinearity.sat)
           << ' ' << num(imdd.nonlinearity.p_sat) << ' ' << num(imdd.nonlinearity.g0)
           << "\nshot_coeff = " << num(imdd.shot_coeff) << '\n';
    } else {
        os << "qam_order = " << coherent.qam_order << "\nentropy_bits = " << num(coherent.entropy_bits)
           << "\nbeta2L = " << num(coherent.beta2L) << "\ncd_taps = " << coherent.cd_taps
           << "\ntheta = " << num(coherent.theta) << "\nsps = " << coherent.sps
           << "\nrolloff = " << num(coherent.rolloff) << '\n';
    }
    const auto& t = train;
    os << "train = " << t.train_symbols << ' ' << t.val_symbols << ' ' << t.eval_symbols << ' ' << t.epochs << ' '
       << t.batch << ' ' << t.patience << ' ' << num(t.lr) << ' ' << t.cma_updates << ' ' << num(t.cma_step) << ' '
       << t.vae_steps << ' ' << t.vae_batch << ' ' << num(t.vae_lr) << ' ' << t.trace_every << ' '
       << t.trace_symbols << '\n';
    os << "snn = " << snn.timesteps << ' ' << static_cast<int>(snn.encoding) << ' ' << static_cast<int>(snn.reset)
       << ' ' << num(snn.surrogate_beta) << '\n';
    return os.str();
}

std::string ExperimentConfig::hash() const
{
    const std::string c = canonical();
    char buf[20];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(nn::fnv1a(c.data(), c.size())));
    return buf;
}

ExperimentConfig parse_config(std::istream& is)
{
    pt::ptree tree;
    try {
        pt::read_ini(is, tree);
    } catch (const pt::ini_parser_error& e) {
        throw ParameterError(std::string("config: ") + e.what());
    }
    ExperimentConfig cfg;
    for (const auto& [section, body] : tree) {
        if (body.empty() && !body.data().empty())
            throw ParameterError("config: key '" + section + "' outside a section");
        for (const auto& [key, node] : body) {
            const std::string v = node.data();
            const std::string name = section + "." + key;
            auto unknown = [&] { throw ParameterError("config: unknown key " + name); };
            if (section == "experiment") {
                if (key == "name") cfg.name = v;
                else if (key == "scenario") {
                    if (v == "imdd") cfg.scenario = Scenario::imdd;
                    else if (v == "coherent_pcs") cfg.scenario = Scenario::coherent_pcs;
                    else throw ParameterError("config: unknown scenario '" + v + "'");
                }
                else if (key == "seeds") {
                    cfg.seeds.clear();
                    for (const auto& w : words(v)) cfg.seeds.push_back(to_size(name, w));
                }
                else if (key == "snr_db") {
                    cfg.snr_db.clear();
                    for (const auto& w : words(v)) cfg.snr_db.push_back(to_double(name, w));
                }
                else if (key == "mac_budget") cfg.mac_budget = to_double(name, v);
                else if (key == "out_dir") cfg.out_dir = v;
                else if (key == "save_checkpoints") cfg.save_checkpoints = to_bool(name, v);
                else if (key == "record_wall_time") cfg.record_wall_time = to_bool(name, v);
                else unknown();
            } else if (section == "channel") {
                auto& c = cfg.coherent;
                auto& d = cfg.imdd;
                if (key == "qam_order") c.qam_order = static_cast<int>(to_size(name, v));
                else if (key == "entropy_bits") c.entropy_bits = to_double(name, v);
                else if (key == "cd_taps") c.cd_taps = static_cast<int>(to_size(name, v));
                else if (key == "theta") c.theta = to_double(name, v);
                else if (key == "pam_order") d.pam_order = static_cast<int>(to_size(name, v));
                else if (key == "beta2L") c.beta2L = d.beta2L = to_double(name, v);
                else if (key == "sps") c.sps = d.sps = static_cast<int>(to_size(name, v));
                else if (key == "rolloff") c.rolloff = d.rolloff = to_double(name, v);
                else if (key == "dispersion_scales") {
                    d.dispersion_scales.clear();
                    for (const auto& w : words(v)) d.dispersion_scales.push_back(to_double(name, w));
                }
                else if (key == "dispersion_labels") d.dispersion_labels = words(v);
                else if (key == "nonlinearity") {
                    if (v == "none") d.nonlinearity.kind = channel::NonlinearityKind::none;
                    else if (v == "eam") d.nonlinearity.kind = channel::NonlinearityKind::eam;
                    else if (v == "soa") d.nonlinearity.kind = channel::NonlinearityKind::soa;
                    else throw ParameterError("config: unknown nonlinearity '" + v + "'");
                }
                else if (key == "sat") d.nonlinearity.sat = to_double(name, v);
                else if (key == "p_sat") d.nonlinearity.p_sat = to_double(name, v);
                else if (key == "g0") d.nonlinearity.g0 = to_double(name, v);
                else if (key == "shot_coeff") d.shot_coeff = to_double(name, v);
                else unknown();
            } else if (section == "models") {
                for (const auto& w : words(v)) cfg.models.push_back(w);
            } else if (section == "training") {
                auto& t = cfg.train;
                if (key == "train_symbols") t.train_symbols = to_size(name, v);
                else if (key == "val_symbols") t.val_symbols = to_size(name, v);
                else if (key == "eval_symbols") t.eval_symbols = to_size(name, v);
                else if (key == "epochs") t.epochs = to_size(name, v);
                else if (key == "batch") t.batch = to_size(name, v);
                else if (key == "patience") t.patience = to_size(name, v);
                else if (key == "lr") t.lr = to_double(name, v);
                else if (key == "cma_updates") t.cma_updates = to_size(name, v);
                else if (key == "cma_step") t.cma_step = to_double(name, v);
                else if (key == "vae_steps") t.vae_steps = to_size(name, v);
                else if (key == "vae_batch") t.vae_batch = to_size(name, v);
                else if (key == "vae_lr") t.vae_lr = to_double(name, v);
                else if (key == "trace_every") t.trace_every = to_size(name, v);
                else if (key == "trace_symbols") t.trace_symbols = to_size(name, v);
                else unknown();
            } else if (section == "snn") {
                auto& s = cfg.snn;
                if (key == "timesteps") s.timesteps = to_size(name, v);
                else if (key == "encoding") {
                    if (v == "current") s.encoding = snn::InputEncoding::current;
                    else if (v == "ternary") s.encoding = snn::InputEncoding::ternary;
                    else throw ParameterError("config: unknown encoding '" + v + "'");
                }
                else if (key == "reset") {
                    if (v == "subtract") s.reset = snn::Reset::subtract;
                    else if (v == "zero") s.reset = snn::Reset::zero;
                    else throw ParameterError("config: unknown reset '" + v + "'");
                }
                else if (key == "surrogate_beta") s.surrogate_beta = to_double(name, v);
                else unknown();
            } else {
                throw ParameterError("config: unknown section [" + section + "]");
            }
        }
    }
    cfg.validate();
    return cfg;
}

ExperimentConfig load_config(const std::string& path)
{
    std::ifstream f(path);
    if (!f)
        throw ParameterError("config: cannot open " + path);
    return parse_config(f);
}

} // namespace eqlab::explore
