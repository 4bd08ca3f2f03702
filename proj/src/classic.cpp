#include "eqlab/classic.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Dense>

#include "eqlab/error.hpp"

namespace eqlab::classic {

namespace {

// sum_k w[k] * s[base - k] with zero outside the block
inline cplx tap_dot(const CVec& w, const CVec& s, std::ptrdiff_t base)
{
    cplx acc{};
    const auto n = static_cast<std::ptrdiff_t>(s.size());
    for (std::size_t k = 0; k < w.size(); ++k) {
        const std::ptrdiff_t i = base - static_cast<std::ptrdiff_t>(k);
        if (i >= 0 && i < n)
            acc += w[k] * s[static_cast<std::size_t>(i)];
    }
    return acc;
}

inline void tap_update(CVec& w, const CVec& s, std::ptrdiff_t base, cplx g)
{
    const auto n = static_cast<std::ptrdiff_t>(s.size());
    for (std::size_t k = 0; k < w.size(); ++k) {
        const std::ptrdiff_t i = base - static_cast<std::ptrdiff_t>(k);
        if (i >= 0 && i < n)
            w[k] -= g * std::conj(s[static_cast<std::size_t>(i)]);
    }
}

double max_lane_correlation(const CVec& a, const CVec& b, int max_lag)
{
    double ea = 0.0, eb = 0.0;
    for (const auto& v : a)
        ea += std::norm(v);
    for (const auto& v : b)
        eb += std::norm(v);
    if (ea == 0.0 || eb == 0.0)
        return 0.0;
    double best = 0.0;
    const auto n = static_cast<std::ptrdiff_t>(a.size());
    for (int lag = -max_lag; lag <= max_lag; ++lag) {
        cplx acc{};
        for (std::ptrdiff_t i = 0; i < n; ++i) {
            const std::ptrdiff_t j = i + lag;
            if (j >= 0 && j < n)
                acc += a[static_cast<std::size_t>(i)] * std::conj(b[static_cast<std::size_t>(j)]);
        }
        best = std::max(best, std::abs(acc) / std::sqrt(ea * eb));
    }
    return best;
}

} // namespace

ButterflyFir ButterflyFir::identity(std::size_t n_taps, int sps_in)
{
    if (n_taps % 2 == 0)
        throw ParameterError("ButterflyFir: tap count must be odd");
    ButterflyFir w;
    w.sps_in = sps_in;
    for (auto* t : {&w.w_xx, &w.w_xy, &w.w_yx, &w.w_yy})
        t->assign(n_taps, cplx{});
    w.w_xx[n_taps / 2] = 1.0;
    w.w_yy[n_taps / 2] = 1.0;
    return w;
}

void ButterflyFir::validate() const
{
    const std::size_t n = w_xx.size();
    if (n == 0 || n % 2 == 0)
        throw ParameterError("ButterflyFir: tap count must be odd and positive");
    if (w_xy.size() != n || w_yx.size() != n || w_yy.size() != n)
        throw ParameterError("ButterflyFir: lanes differ in length");
    if (sps_in < 1)
        throw ParameterError("ButterflyFir: sps_in must be positive");
    for (const auto* t : {&w_xx, &w_xy, &w_yx, &w_yy})
        for (const auto& v : *t)
            if (!std::isfinite(v.real()) || !std::isfinite(v.imag()))
                throw ParameterError("ButterflyFir: non-finite tap");
}

CVec& ButterflyFir::lane(int q, int p)
{
    return q == 0 ? (p == 0 ? w_xx : w_xy) : (p == 0 ? w_yx : w_yy);
}

const CVec& ButterflyFir::lane(int q, int p) const
{
    return q == 0 ? (p == 0 ? w_xx : w_xy) : (p == 0 ? w_yx : w_yy);
}

DualPolBlock butterfly_apply(const DualPolBlock& rx, const ButterflyFir& w)
{
    w.validate();
    if (rx.sps() != w.sps_in)
        throw ParameterError("butterfly_apply: input sps does not match the equalizer");
    const std::size_t n_sym = rx.x.num_symbols();
    const auto c = static_cast<std::ptrdiff_t>(w.n_taps() / 2);
    CVec zx(n_sym), zy(n_sym);
    const auto n = static_cast<std::ptrdiff_t>(n_sym);
#pragma omp parallel for schedule(static) if (n_sym >= 8192)
    for (std::ptrdiff_t i = 0; i < n; ++i) {
        const std::ptrdiff_t base = i * w.sps_in + c;
        zx[static_cast<std::size_t>(i)] = tap_dot(w.w_xx, rx.x.samples, base) + tap_dot(w.w_xy, rx.y.samples, base);
        zy[static_cast<std::size_t>(i)] = tap_dot(w.w_yx, rx.x.samples, base) + tap_dot(w.w_yy, rx.y.samples, base);
    }
    return DualPolBlock(SignalBlock(std::move(zx), 1, rx.x.symbol_rate), SignalBlock(std::move(zy), 1, rx.y.symbol_rate));
}

double cma_radius(const Constellation& c)
{
    return c.fourth_moment() / c.mean_energy();
}

double cma_loss(const DualPolBlock& rx, const ButterflyFir& w, double R)
{
    const DualPolBlock z = butterfly_apply(rx, w);
    double acc = 0.0;
    for (const auto* lane : {&z.x.samples, &z.y.samples})
        for (const auto& v : *lane) {
            const double e = std::norm(v) - R;
            acc += e * e;
        }
    return acc / static_cast<double>(2 * z.size());
}

CmaResult cma_train(const DualPolBlock& rx, const ButterflyFir& w0, double R, std::size_t n_updates,
                    const CmaOptions& opt, bool keep_snapshots)
{
    rx.validate();
    w0.validate();
    if (!(opt.step > 0.0))
        throw ParameterError("cma_train: step must be positive");
    if (rx.sps() != w0.sps_in)
        throw ParameterError("cma_train: input sps does not match the equalizer");

    const double power = 0.5 * (rx.x.mean_power() + rx.y.mean_power());
    const double mu = opt.scale_by_power && power > 0.0 ? opt.step / power : opt.step;
    const std::size_t n_sym = rx.x.num_symbols();
    const auto c = static_cast<std::ptrdiff_t>(w0.n_taps() / 2);
    const std::size_t block = std::max<std::size_t>(1, opt.trace_block);

    CmaResult res{w0, {}, false, {}};
    ButterflyFir& w = res.taps;
    const CVec& sx = rx.x.samples;
    const CVec& sy = rx.y.samples;
    CVec recent_x, recent_y;
    recent_x.reserve(block);
    recent_y.reserve(block);
    double acc = 0.0;

    for (std::size_t u = 0; u < n_updates; ++u) {
        const auto sym = static_cast<std::ptrdiff_t>(u % n_sym);
        const std::ptrdiff_t base = sym * w.sps_in + c;
        const cplx zx = tap_dot(w.w_xx, sx, base) + tap_dot(w.w_xy, sy, base);
        const cplx zy = tap_dot(w.w_yx, sx, base) + tap_dot(w.w_yy, sy, base);
        const double ex = std::norm(zx) - R;
        const double ey = std::norm(zy) - R;
        acc += 0.5 * (ex * ex + ey * ey);
        recent_x.push_back(zx);
        recent_y.push_back(zy);

        const cplx gx = mu * ex * zx;
        const cplx gy = mu * ey * zy;
        tap_update(w.w_xx, sx, base, gx);
        tap_update(w.w_xy, sy, base, gx);
        tap_update(w.w_yx, sx, base, gy);
        tap_update(w.w_yy, sy, base, gy);

        if ((u + 1) % block == 0 || u + 1 == n_updates) {
            const double loss = acc / static_cast<double>(recent_x.size());
            res.loss_trace.push_back(loss);
            if (!std::isfinite(loss) || loss > opt.divergence_limit)
                throw TrainingError("cma_train: diverged", res.loss_trace);
            if (opt.singularity_guard && !res.reinitialized &&
                max_lane_correlation(recent_x, recent_y, static_cast<int>(w.n_taps())) > 0.9) {
                // orthogonal restart of lane y from lane x
                const std::size_t n = w.n_taps();
                for (std::size_t k = 0; k < n; ++k) {
                    w.w_yx[k] = -std::conj(w.w_xy[n - 1 - k]);
                    w.w_yy[k] = std::conj(w.w_xx[n - 1 - k]);
                }
                res.reinitialized = true;
            }
            if (keep_snapshots)
                res.snapshots.push_back(w);
            acc = 0.0;
            recent_x.clear();
            recent_y.clear();
        }
    }
    return res;
}

FeatureMatrix window_matrix(std::span<const double> samples, std::size_t first_center, std::size_t stride,
                            std::size_t count, std::size_t n_taps)
{
    FeatureMatrix m{count, n_taps, std::vector<double>(count * n_taps)};
    const auto half = static_cast<std::ptrdiff_t>(n_taps / 2);
    const auto ns = static_cast<std::ptrdiff_t>(samples.size());
    for (std::size_t r = 0; r < count; ++r) {
        const auto center = static_cast<std::ptrdiff_t>(first_center + r * stride);
        // even windows put the extra sample before the center
        const std::ptrdiff_t start = center - half + (n_taps % 2 == 0 ? 1 : 0);
        for (std::size_t k = 0; k < n_taps; ++k) {
            const std::ptrdiff_t i = start + static_cast<std::ptrdiff_t>(k);
            m.data[r * n_taps + k] = (i >= 0 && i < ns) ? samples[static_cast<std::size_t>(i)] : 0.0;
        }
    }
    return m;
}

RVec ffe_train_ls(const FeatureMatrix& features, std::span<const double> targets, double ridge_scale)
{
    if (features.rows != targets.size())
        throw ParameterError("ffe_train_ls: feature rows and targets differ");
    if (features.rows < 10 * features.cols)
        throw ParameterError("ffe_train_ls: need at least 10 training symbols per tap");
    using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    Eigen::Map<const Mat> X(features.data.data(), static_cast<Eigen::Index>(features.rows),
                            static_cast<Eigen::Index>(features.cols));
    Eigen::Map<const Eigen::VectorXd> t(targets.data(), static_cast<Eigen::Index>(targets.size()));
    Eigen::MatrixXd gram = X.transpose() * X;
    const Eigen::VectorXd rhs = X.transpose() * t;
    const double lambda = ridge_scale * gram.trace() / static_cast<double>(features.cols);
    gram.diagonal().array() += lambda;
    Eigen::LLT<Eigen::MatrixXd> llt(gram);
    if (llt.info() != Eigen::Success || gram.trace() == 0.0)
        throw NumericalError("ffe_train_ls: normal equations are singular");
    const Eigen::VectorXd w = llt.solve(rhs);
    if (!w.allFinite())
        throw NumericalError("ffe_train_ls: non-finite solution");
    return RVec(w.data(), w.data() + w.size());
}

RVec ffe_train_lms(const FeatureMatrix& features, std::span<const double> targets, double step, std::size_t epochs)
{
    if (features.rows != targets.size())
        throw ParameterError("ffe_train_lms: feature rows and targets differ");
    RVec w(features.cols, 0.0);
    for (std::size_t e = 0; e < epochs; ++e) {
        for (std::size_t r = 0; r < features.rows; ++r) {
            const auto x = features.row(r);
            double y = 0.0, p = 1e-9;
            for (std::size_t k = 0; k < w.size(); ++k) {
                y += w[k] * x[k];
                p += x[k] * x[k];
            }
            const double g = step * (targets[r] - y) / p;
            for (std::size_t k = 0; k < w.size(); ++k)
                w[k] += g * x[k];
        }
    }
    return w;
}

double ffe_apply(std::span<const double> taps, std::span<const double> window)
{
    if (taps.size() != window.size())
        throw ParameterError("ffe_apply: window length differs from tap count");
    double y = 0.0;
    for (std::size_t k = 0; k < taps.size(); ++k)
        y += taps[k] * window[k];
    return y;
}

void VolterraModel::validate() const
{
    if (m1 == 0 || m2 > m1)
        throw ParameterError("VolterraModel: need 0 < m1 and m2 <= m1");
    if (kernel1.size() != m1 || kernel2.size() != m2 * (m2 + 1) / 2)
        throw ParameterError("VolterraModel: kernel sizes do not match m1/m2");
    for (double v : kernel1)
        if (!std::isfinite(v))
            throw ParameterError("VolterraModel: non-finite kernel");
    for (double v : kernel2)
        if (!std::isfinite(v))
            throw ParameterError("VolterraModel: non-finite kernel");
}

std::size_t volterra_feature_count(std::size_t m1, std::size_t m2)
{
    return m1 + m2 * (m2 + 1) / 2;
}

RVec volterra_features(std::span<const double> window, std::size_t m1, std::size_t m2)
{
    if (m2 > m1)
        throw ParameterError("volterra_features: m2 must not exceed m1");
    if (window.size() < m1)
        throw ParameterError("volterra_features: window shorter than the memory");
    RVec f;
    f.reserve(volterra_feature_count(m1, m2));
    const std::size_t s1 = (window.size() - m1) / 2;
    for (std::size_t i = 0; i < m1; ++i)
        f.push_back(window[s1 + i]);
    const std::size_t s2 = (window.size() - m2) / 2;
    for (std::size_t i = 0; i < m2; ++i)
        for (std::size_t j = i; j < m2; ++j)
            f.push_back(window[s2 + i] * window[s2 + j]);
    return f;
}

double volterra_apply(const VolterraModel& model, std::span<const double> window)
{
    const RVec f = volterra_features(window, model.m1, model.m2);
    double y = model.bias;
    for (std::size_t i = 0; i < model.m1; ++i)
        y += model.kernel1[i] * f[i];
    for (std::size_t i = 0; i < model.kernel2.size(); ++i)
        y += model.kernel2[i] * f[model.m1 + i];
    return y;
}

VolterraModel volterra_train_ls(const FeatureMatrix& windows, std::span<const double> targets, std::size_t m2,
                                double ridge_scale)
{
    const std::size_t m1 = windows.cols;
    if (m2 > m1)
        throw ParameterError("volterra_train_ls: m2 must not exceed m1");
    const std::size_t nf = volterra_feature_count(m1, m2) + 1;
    FeatureMatrix feats{windows.rows, nf, std::vector<double>(windows.rows * nf)};
    for (std::size_t r = 0; r < windows.rows; ++r) {
        const RVec f = volterra_features(windows.row(r), m1, m2);
        auto dst = feats.row(r);
        std::copy(f.begin(), f.end(), dst.begin());
        dst[nf - 1] = 1.0;
    }
    const RVec w = ffe_train_ls(feats, targets, ridge_scale);
    VolterraModel v;
    v.m1 = m1;
    v.m2 = m2;
    v.kernel1.assign(w.begin(), w.begin() + static_cast<std::ptrdiff_t>(m1));
    v.kernel2.assign(w.begin() + static_cast<std::ptrdiff_t>(m1), w.end() - 1);
    v.bias = w.back();
    return v;
}

std::size_t macs_per_symbol(const ButterflyFir& w)
{
    // 4 complex FIRs of N taps per dual-pol symbol, 4 real MACs each, halved per polarization
    return 8 * w.n_taps();
}

std::size_t macs_per_symbol_ffe(std::size_t n_taps) { return n_taps; }

std::size_t macs_per_symbol(const VolterraModel& v) { return macs_per_symbol_volterra(v.m1, v.m2); }

std::size_t macs_per_symbol_volterra(std::size_t m1, std::size_t m2)
{
    // kernel MACs over all features plus one MAC per quadratic product
    return m1 + m2 * (m2 + 1);
}

} // namespace eqlab::classic
