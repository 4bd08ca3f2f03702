#include "eqlab/checkpoint.hpp"

#include <charconv>
#include <istream>
#include <ostream>
#include <sstream>

#include "eqlab/error.hpp"

namespace eqlab::ckpt {

namespace {

constexpr const char* kMagic = "eqlab-model v1";

std::string fmt(double v)
{
    char buf[32];
    const auto r = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, r.ptr);
}

double parse_double(const std::string& s)
{
    double v = 0.0;
    const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
    if (r.ec != std::errc() || r.ptr != s.data() + s.size())
        throw ParameterError("checkpoint: bad number '" + s + "'");
    return v;
}

std::size_t parse_size(const std::string& s)
{
    std::size_t v = 0;
    const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
    if (r.ec != std::errc() || r.ptr != s.data() + s.size())
        throw ParameterError("checkpoint: bad count '" + s + "'");
    return v;
}

std::size_t product(const std::vector<std::size_t>& shape)
{
    std::size_t n = 1;
    for (auto d : shape)
        n *= d;
    return n;
}

void expect_kind(const Checkpoint& c, const char* kind)
{
    if (c.kind != kind)
        throw ParameterError("checkpoint: expected kind " + std::string(kind) + ", found " + c.kind);
}

Tensor real_tensor(std::string name, std::vector<std::size_t> shape, const std::vector<double>& v)
{
    return {std::move(name), std::move(shape), v};
}

Tensor complex_tensor(std::string name, const CVec& v)
{
    Tensor t{std::move(name), {v.size(), 2}, {}};
    for (const auto& z : v) {
        t.values.push_back(z.real());
        t.values.push_back(z.imag());
    }
    return t;
}

CVec complex_values(const Tensor& t)
{
    if (t.shape.size() != 2 || t.shape[1] != 2)
        throw ParameterError("checkpoint: tensor " + t.name + " is not complex");
    CVec v(t.shape[0]);
    for (std::size_t i = 0; i < v.size(); ++i)
        v[i] = {t.values[2 * i], t.values[2 * i + 1]};
    return v;
}

std::string join_sizes(const std::vector<std::size_t>& v)
{
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i)
        s += (i ? " " : "") + std::to_string(v[i]);
    return s;
}

std::vector<std::size_t> split_sizes(const std::string& s)
{
    std::istringstream is(s);
    std::vector<std::size_t> v;
    std::string tok;
    while (is >> tok)
        v.push_back(parse_size(tok));
    return v;
}

const char* butterfly_names[4] = {"w_xx", "w_xy", "w_yx", "w_yy"};

} // namespace

const Tensor& Checkpoint::tensor(const std::string& name) const
{
    for (const auto& t : tensors)
        if (t.name == name)
            return t;
    throw ParameterError("checkpoint: missing tensor " + name);
}

const std::string& Checkpoint::get(const std::string& key) const
{
    const auto it = meta.find(key);
    if (it == meta.end())
        throw ParameterError("checkpoint: missing meta " + key);
    return it->second;
}

void save(std::ostream& os, const Checkpoint& c)
{
    os << kMagic << '\n' << "kind " << c.kind << '\n';
    for (const auto& [k, v] : c.meta)
        os << "meta " << k << ' ' << v << '\n';
    for (const auto& t : c.tensors) {
        if (product(t.shape) != t.values.size())
            throw ParameterError("checkpoint: tensor " + t.name + " shape does not match its values");
        os << "tensor " << t.name << ' ' << t.shape.size();
        for (auto d : t.shape)
            os << ' ' << d;
        os << '\n';
        for (std::size_t i = 0; i < t.values.size(); ++i)
            os << fmt(t.values[i]) << ((i + 1) % 8 == 0 || i + 1 == t.values.size() ? '\n' : ' ');
    }
    os << "end\n";
}

Checkpoint load(std::istream& is)
{
    std::string line;
    if (!std::getline(is, line) || line != kMagic)
        throw ParameterError("checkpoint: missing 'eqlab-model v1' header");
    Checkpoint c;
    std::string word;
    bool done = false;
    while (!done && is >> word) {
        if (word == "kind") {
            is >> c.kind;
        } else if (word == "meta") {
            std::string key;
            is >> key;
            std::getline(is, line);
            const auto start = line.find_first_not_of(' ');
            c.meta[key] = start == std::string::npos ? "" : line.substr(start);
        } else if (word == "tensor") {
            Tensor t;
            std::string rank;
            is >> t.name >> rank;
            t.shape.resize(parse_size(rank));
            for (auto& d : t.shape) {
                is >> word;
                d = parse_size(word);
            }
            t.values.resize(product(t.shape));
            for (auto& v : t.values) {
                if (!(is >> word))
                    throw ParameterError("checkpoint: tensor " + t.name + " is truncated");
                v = parse_double(word);
            }
            c.tensors.push_back(std::move(t));
        } else if (word == "end") {
            done = true;
        } else {
            throw ParameterError("checkpoint: unexpected token '" + word + "'");
        }
    }
    if (!done)
        throw ParameterError("checkpoint: missing 'end'");
    return c;
}

Checkpoint from_ffe(const RVec& taps)
{
    return {"ffe", {}, {real_tensor("taps", {taps.size()}, taps)}};
}

RVec to_ffe(const Checkpoint& c)
{
    expect_kind(c, "ffe");
    return c.tensor("taps").values;
}

Checkpoint from_volterra(const classic::VolterraModel& m)
{
    m.validate();
    Checkpoint c{"volterra", {{"m1", std::to_string(m.m1)}, {"m2", std::to_string(m.m2)}}, {}};
    c.tensors.push_back(real_tensor("kernel1", {m.kernel1.size()}, m.kernel1));
    c.tensors.push_back(real_tensor("kernel2", {m.kernel2.size()}, m.kernel2));
    c.tensors.push_back(real_tensor("bias", {1}, {m.bias}));
    return c;
}

classic::VolterraModel to_volterra(const Checkpoint& c)
{
    expect_kind(c, "volterra");
    classic::VolterraModel m;
    m.m1 = parse_size(c.get("m1"));
    m.m2 = parse_size(c.get("m2"));
    m.kernel1 = c.tensor("kernel1").values;
    m.kernel2 = c.tensor("kernel2").values;
    m.bias = c.tensor("bias").values.at(0);
    m.validate();
    return m;
}

Checkpoint from_butterfly(const classic::ButterflyFir& w)
{
    w.validate();
    Checkpoint c{"butterfly", {{"sps_in", std::to_string(w.sps_in)}}, {}};
    for (int k = 0; k < 4; ++k)
        c.tensors.push_back(complex_tensor(butterfly_names[k], w.lane(k / 2, k % 2)));
    return c;
}

classic::ButterflyFir to_butterfly(const Checkpoint& c)
{
    expect_kind(c, "butterfly");
    classic::ButterflyFir w;
    w.sps_in = static_cast<int>(parse_size(c.get("sps_in")));
    for (int k = 0; k < 4; ++k)
        w.lane(k / 2, k % 2) = complex_values(c.tensor(butterfly_names[k]));
    w.validate();
    return w;
}

Checkpoint from_vae(const vae::VaeLeModel& m)
{
    m.validate();
    Checkpoint c = from_butterfly(m.encoder);
    c.kind = "vae-le";
    c.meta["lanes"] = std::to_string(m.lanes);
    c.meta["constellation"] = m.constellation.name();
    c.tensors.push_back(real_tensor("sigma2", {1}, {m.sigma2}));
    for (int k = 0; k < 4; ++k)
        c.tensors.push_back(complex_tensor("dec" + std::to_string(k), m.decoder.taps[static_cast<std::size_t>(k)]));
    const auto& con = m.constellation;
    c.tensors.push_back(complex_tensor("points", con.points()));
    c.tensors.push_back(real_tensor("priors", {con.size()}, con.priors()));
    std::vector<double> labels(con.labels().begin(), con.labels().end());
    c.tensors.push_back(real_tensor("labels", {con.size()}, labels));
    return c;
}

vae::VaeLeModel to_vae(const Checkpoint& c)
{
    expect_kind(c, "vae-le");
    Checkpoint enc = c;
    enc.kind = "butterfly";
    const auto& lab = c.tensor("labels").values;
    std::vector<std::uint32_t> labels(lab.size());
    for (std::size_t i = 0; i < lab.size(); ++i)
        labels[i] = static_cast<std::uint32_t>(lab[i]);
    vae::VaeLeModel m{to_butterfly(enc),
                      {},
                      c.tensor("sigma2").values.at(0),
                      Constellation(c.get("constellation"), complex_values(c.tensor("points")), labels,
                                    c.tensor("priors").values, false),
                      static_cast<int>(parse_size(c.get("lanes")))};
    for (int k = 0; k < 4; ++k)
        m.decoder.taps[static_cast<std::size_t>(k)] = complex_values(c.tensor("dec" + std::to_string(k)));
    m.validate();
    return m;
}

Checkpoint from_cnn(const cnn::CnnModel<float>& m)
{
    const auto& cfg = m.cfg;
    cfg.validate();
    Checkpoint c{"cnn", {}, {}};
    c.meta["input_window"] = std::to_string(cfg.input_window);
    c.meta["symbols_per_window"] = std::to_string(cfg.symbols_per_window);
    c.meta["classes"] = std::to_string(cfg.classes);
    c.meta["output"] = cfg.output == cnn::OutputMode::class_scores ? "class_scores" : "regression";
    std::string layers;
    for (const auto& l : cfg.layers) {
        if (!layers.empty())
            layers += ' ';
        if (l.kind == cnn::LayerKind::conv1d)
            layers += "conv:" + std::to_string(l.in) + ':' + std::to_string(l.out) + ':' + std::to_string(l.kernel) +
                      ':' + std::to_string(l.stride);
        else if (l.kind == cnn::LayerKind::dense)
            layers += "dense:" + std::to_string(l.in) + ':' + std::to_string(l.out);
        else
            layers += "relu";
    }
    c.meta["layers"] = layers;
    for (std::size_t i = 0; i < m.params.size(); ++i) {
        const auto& p = m.params[i];
        c.tensors.push_back({"p" + std::to_string(i), p.shape, std::vector<double>(p.value.begin(), p.value.end())});
    }
    return c;
}

cnn::CnnModel<float> to_cnn(const Checkpoint& c)
{
    expect_kind(c, "cnn");
    cnn::CnnConfig cfg;
    cfg.input_window = parse_size(c.get("input_window"));
    cfg.symbols_per_window = parse_size(c.get("symbols_per_window"));
    cfg.classes = parse_size(c.get("classes"));
    cfg.output = c.get("output") == "regression" ? cnn::OutputMode::regression : cnn::OutputMode::class_scores;
    std::istringstream is(c.get("layers"));
    std::string tok;
    while (is >> tok) {
        std::vector<std::size_t> f;
        std::string head = tok.substr(0, tok.find(':'));
        std::size_t pos = tok.find(':');
        while (pos != std::string::npos) {
            const std::size_t next = tok.find(':', pos + 1);
            f.push_back(parse_size(tok.substr(pos + 1, next == std::string::npos ? std::string::npos : next - pos - 1)));
            pos = next;
        }
        if (head == "conv" && f.size() == 4)
            cfg.layers.push_back(cnn::LayerSpec::conv(f[0], f[1], f[2], f[3]));
        else if (head == "dense" && f.size() == 2)
            cfg.layers.push_back(cnn::LayerSpec::dense(f[0], f[1]));
        else if (head == "relu" && f.empty())
            cfg.layers.push_back(cnn::LayerSpec::relu());
        else
            throw ParameterError("checkpoint: bad layer '" + tok + "'");
    }
    cfg.validate();
    RngStream rng(0, 0);
    auto m = cnn::CnnModel<float>::init(cfg, rng);
    for (std::size_t i = 0; i < m.params.size(); ++i) {
        const auto& t = c.tensor("p" + std::to_string(i));
        if (t.shape != m.params[i].shape)
            throw ParameterError("checkpoint: tensor p" + std::to_string(i) + " has the wrong shape");
        for (std::size_t k = 0; k < t.values.size(); ++k)
            m.params[i].value[k] = static_cast<float>(t.values[k]);
    }
    return m;
}

Checkpoint from_snn(const snn::SnnModel& m)
{
    const auto& cfg = m.cfg;
    cfg.validate();
    Checkpoint c{"snn", {}, {}};
    c.meta["sizes"] = join_sizes(cfg.sizes);
    c.meta["timesteps"] = std::to_string(cfg.timesteps);
    c.meta["encoding"] = cfg.encoding == snn::InputEncoding::current ? "current" : "ternary";
    c.meta["ternary_threshold"] = fmt(cfg.ternary_threshold);
    c.meta["surrogate_beta"] = fmt(cfg.surrogate_beta);
    c.meta["tau_mem"] = fmt(cfg.lif.tau_mem);
    c.meta["tau_syn"] = fmt(cfg.lif.tau_syn);
    c.meta["v_th"] = fmt(cfg.lif.v_th);
    c.meta["reset"] = cfg.lif.reset == snn::Reset::subtract ? "subtract" : "zero";
    for (std::size_t i = 0; i < m.params.size(); ++i)
        c.tensors.push_back({"p" + std::to_string(i), m.params[i].shape, m.params[i].value});
    return c;
}

snn::SnnModel to_snn(const Checkpoint& c)
{
    expect_kind(c, "snn");
    snn::SnnConfig cfg;
    cfg.sizes = split_sizes(c.get("sizes"));
    cfg.timesteps = parse_size(c.get("timesteps"));
    cfg.encoding = c.get("encoding") == "ternary" ? snn::InputEncoding::ternary : snn::InputEncoding::current;
    cfg.ternary_threshold = parse_double(c.get("ternary_threshold"));
    cfg.surrogate_beta = parse_double(c.get("surrogate_beta"));
    cfg.lif.tau_mem = parse_double(c.get("tau_mem"));
    cfg.lif.tau_syn = parse_double(c.get("tau_syn"));
    cfg.lif.v_th = parse_double(c.get("v_th"));
    cfg.lif.reset = c.get("reset") == "zero" ? snn::Reset::zero : snn::Reset::subtract;
    RngStream rng(0, 0);
    auto m = snn::SnnModel::init(cfg, rng);
    for (std::size_t i = 0; i < m.params.size(); ++i) {
        const auto& t = c.tensor("p" + std::to_string(i));
        if (t.shape != m.params[i].shape)
            throw ParameterError("checkpoint: tensor p" + std::to_string(i) + " has the wrong shape");
        m.params[i].value = t.values;
    }
    return m;
}

} // namespace eqlab::ckpt
