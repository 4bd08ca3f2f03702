#include "eqlab/constellation.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>

#include "eqlab/error.hpp"
#include "eqlab/kernels.hpp"

namespace eqlab {

namespace {

std::uint32_t gray(std::uint32_t v) { return v ^ (v >> 1); }

double entropy_of(const RVec& p)
{
    double h = 0.0;
    for (double pi : p)
        if (pi > 0.0)
            h -= pi * std::log2(pi);
    return h;
}

RVec mb_priors(const CVec& pts, double lambda)
{
    // shift by the minimum energy so exp never underflows for the central point
    double e_min = std::numeric_limits<double>::infinity();
    for (const auto& c : pts)
        e_min = std::min(e_min, std::norm(c));
    RVec p(pts.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < pts.size(); ++i) {
        p[i] = std::exp(-lambda * (std::norm(pts[i]) - e_min));
        sum += p[i];
    }
    for (double& v : p)
        v /= sum;
    return p;
}

} // namespace

Constellation::Constellation(std::string name, CVec points, std::vector<std::uint32_t> labels, RVec priors,
                             bool normalize)
    : name_(std::move(name)), points_(std::move(points)), labels_(std::move(labels)), priors_(std::move(priors))
{
    const std::size_t m = points_.size();
    if (m < 2)
        throw ParameterError("constellation needs at least two points");
    if (labels_.size() != m || priors_.size() != m)
        throw ParameterError("constellation: points, labels and priors differ in length");
    if (!std::has_single_bit(m))
        throw ParameterError("constellation size must be a power of two");
    bits_ = std::countr_zero(m);

    double psum = 0.0;
    for (double p : priors_) {
        if (!(p >= 0.0) || !std::isfinite(p))
            throw ParameterError("constellation priors must be finite and non-negative");
        psum += p;
    }
    if (std::abs(psum - 1.0) > 1e-12) {
        if (std::abs(psum - 1.0) > 1e-6)
            throw ParameterError("constellation priors do not sum to one");
        for (double& p : priors_)
            p /= psum;
    }
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = i + 1; j < m; ++j)
            if (std::abs(points_[i] - points_[j]) < 1e-12)
                throw ParameterError("constellation points must be distinct");

    if (normalize) {
        const double scale = 1.0 / std::sqrt(mean_energy());
        for (auto& c : points_)
            c *= scale;
    }
    real_ = std::all_of(points_.begin(), points_.end(), [](cplx c) { return c.imag() == 0.0; });
    log_priors_.resize(m);
    for (std::size_t i = 0; i < m; ++i)
        log_priors_[i] = priors_[i] > 0.0 ? std::log(priors_[i]) : -std::numeric_limits<double>::infinity();
}

double Constellation::entropy_bits() const { return entropy_of(priors_); }

double Constellation::mean_energy() const
{
    double e = 0.0;
    for (std::size_t i = 0; i < points_.size(); ++i)
        e += priors_[i] * std::norm(points_[i]);
    return e;
}

double Constellation::fourth_moment() const
{
    double e = 0.0;
    for (std::size_t i = 0; i < points_.size(); ++i)
        e += priors_[i] * std::norm(points_[i]) * std::norm(points_[i]);
    return e;
}

int Constellation::nearest(cplx z) const
{
    int best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < points_.size(); ++k) {
        const double d = std::norm(z - points_[k]);
        if (d < best_d) {
            best_d = d;
            best = static_cast<int>(k);
        }
    }
    return best;
}

std::vector<int> Constellation::rotation_map(int quarter_turns) const
{
    static const cplx turns[4] = {{1, 0}, {0, 1}, {-1, 0}, {0, -1}};
    const cplx r = turns[((quarter_turns % 4) + 4) % 4];
    std::vector<int> map(points_.size());
    for (std::size_t k = 0; k < points_.size(); ++k) {
        const cplx target = points_[k] * r;
        const int j = nearest(target);
        if (std::abs(points_[static_cast<std::size_t>(j)] - target) > 1e-9)
            return {};
        map[k] = j;
    }
    return map;
}

void Constellation::save(std::ostream& os) const
{
    std::ostringstream buf;
    buf.precision(17);
    buf << "eqlab-constellation v1\n";
    buf << "name " << name_ << "\n";
    buf << "size " << points_.size() << "\n";
    for (std::size_t i = 0; i < points_.size(); ++i)
        buf << points_[i].real() << ' ' << points_[i].imag() << ' ' << priors_[i] << ' ' << labels_[i] << '\n';
    os << buf.str();
}

Constellation Constellation::load(std::istream& is)
{
    std::string magic, version, key, name;
    is >> magic >> version;
    if (magic != "eqlab-constellation" || version != "v1")
        throw ParameterError("not an eqlab-constellation v1 stream");
    std::size_t n = 0;
    is >> key >> name;
    if (key != "name")
        throw ParameterError("constellation: expected 'name'");
    is >> key >> n;
    if (key != "size" || !is)
        throw ParameterError("constellation: expected 'size'");
    CVec pts(n);
    RVec pri(n);
    std::vector<std::uint32_t> lab(n);
    for (std::size_t i = 0; i < n; ++i) {
        double re = 0, im = 0;
        is >> re >> im >> pri[i] >> lab[i];
        pts[i] = {re, im};
    }
    if (!is)
        throw ParameterError("constellation: truncated point list");
    return Constellation(name, std::move(pts), std::move(lab), std::move(pri), false);
}

Constellation build_qam(int order)
{
    if (order != 4 && order != 16 && order != 64 && order != 256)
        throw ParameterError("build_qam: order must be 4, 16, 64 or 256");
    const int side = static_cast<int>(std::lround(std::sqrt(order)));
    const int half_bits = std::countr_zero(static_cast<unsigned>(side));
    CVec pts;
    std::vector<std::uint32_t> labels;
    for (int i = 0; i < side; ++i) {
        for (int q = 0; q < side; ++q) {
            pts.emplace_back(2.0 * i - (side - 1), 2.0 * q - (side - 1));
            labels.push_back((gray(static_cast<std::uint32_t>(i)) << half_bits) | gray(static_cast<std::uint32_t>(q)));
        }
    }
    RVec pri(pts.size(), 1.0 / static_cast<double>(pts.size()));
    return Constellation(std::to_string(order) + "QAM", std::move(pts), std::move(labels), std::move(pri));
}

Constellation build_pam(int order)
{
    if (order != 2 && order != 4 && order != 8)
        throw ParameterError("build_pam: order must be 2, 4 or 8");
    CVec pts;
    std::vector<std::uint32_t> labels;
    for (int i = 0; i < order; ++i) {
        pts.emplace_back(2.0 * i - (order - 1), 0.0);
        labels.push_back(gray(static_cast<std::uint32_t>(i)));
    }
    RVec pri(pts.size(), 1.0 / order);
    return Constellation(std::to_string(order) + "PAM", std::move(pts), std::move(labels), std::move(pri));
}

ShapingResult pcs_shape(const Constellation& base, double target, double tol)
{
    const double h_max = std::log2(static_cast<double>(base.size()));
    if (!(target > 0.0) || target > h_max + 1e-12)
        throw ParameterError("pcs_shape: target entropy outside (0, log2(M)]");
    const CVec& pts = base.points();
    auto make = [&](double lambda, int iters) {
        std::string name = base.name() + "-PCS";
        return ShapingResult{Constellation(name, pts, base.labels(), mb_priors(pts, lambda)), lambda, iters};
    };
    if (target >= h_max - tol)
        return make(0.0, 0);

    // entropy decreases monotonically in lambda; grow the bracket first
    double lo = 0.0;
    double hi = 1.0;
    while (entropy_of(mb_priors(pts, hi)) > target) {
        lo = hi;
        hi *= 2.0;
        if (hi > 1e6)
            throw NumericalError("pcs_shape: could not bracket lambda");
    }
    for (int it = 1; it <= 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        const double h = entropy_of(mb_priors(pts, mid));
        if (std::abs(h - target) <= tol)
            return make(mid, it);
        if (h > target)
            lo = mid;
        else
            hi = mid;
    }
    throw NumericalError("pcs_shape: bisection did not converge in 200 iterations");
}

SymbolDraw sample_symbols(const Constellation& c, std::size_t n, RngStream& rng)
{
    if (n == 0)
        throw ParameterError("sample_symbols: n must be at least 1");
    RVec cdf(c.size());
    std::partial_sum(c.priors().begin(), c.priors().end(), cdf.begin());
    cdf.back() = 1.0;
    SymbolDraw out;
    out.indices.resize(n);
    out.symbols.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double u = rng.uniform();
        auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
        auto k = static_cast<std::size_t>(std::distance(cdf.begin(), it));
        k = std::min(k, c.size() - 1);
        // skip zero-probability points that share a cdf value
        while (c.priors()[k] == 0.0 && k + 1 < c.size())
            ++k;
        out.indices[i] = static_cast<int>(k);
        out.symbols[i] = c.points()[k];
    }
    return out;
}

PosteriorBlock soft_demap(std::span<const cplx> y, const Constellation& c, double noise_var)
{
    if (!(noise_var > 0.0))
        throw ParameterError("soft_demap: noise_var must be positive");
    PosteriorBlock out{y.size(), c.size(), RVec(y.size() * c.size())};
    kernels::soft_demap(y, c.points(), c.log_priors(), noise_var, out.q);
    return out;
}

std::vector<int> hard_decide(std::span<const cplx> y, const Constellation& c)
{
    std::vector<int> d(y.size());
    for (std::size_t i = 0; i < y.size(); ++i)
        d[i] = c.nearest(y[i]);
    return d;
}

double bit_error_rate(std::span<const int> decisions, std::span<const int> reference, const Constellation& c,
                      int lag, int quarter_turns)
{
    std::vector<int> rot;
    if (quarter_turns % 4 != 0) {
        rot = c.rotation_map(quarter_turns);
        if (rot.empty())
            throw EvaluationError("bit_error_rate: constellation not closed under rotation");
    }
    const auto nd = static_cast<std::ptrdiff_t>(decisions.size());
    const auto nr = static_cast<std::ptrdiff_t>(reference.size());
    std::size_t errors = 0;
    std::size_t compared = 0;
    for (std::ptrdiff_t n = 0; n < nr; ++n) {
        const std::ptrdiff_t m = n + lag;
        if (m < 0 || m >= nd)
            continue;
        int d = decisions[static_cast<std::size_t>(m)];
        if (!rot.empty())
            d = rot[static_cast<std::size_t>(d)];
        errors += static_cast<std::size_t>(std::popcount(c.labels()[static_cast<std::size_t>(d)] ^
                                                         c.labels()[static_cast<std::size_t>(reference[static_cast<std::size_t>(n)])]));
        ++compared;
    }
    if (compared == 0)
        throw EvaluationError("bit_error_rate: no overlap");
    return static_cast<double>(errors) / static_cast<double>(compared * static_cast<std::size_t>(c.bits_per_symbol()));
}

} // namespace eqlab
