#include <doctest.h>

#include <cmath>
#include <numbers>

#include "eqlab/channel.hpp"
#include "eqlab/classic.hpp"
#include "eqlab/error.hpp"
#include "eqlab/signal.hpp"

using namespace eqlab;
using namespace eqlab::classic;

TEST_CASE("ffe least squares inverts a known short channel")
{
    RngStream rng(1, 0);
    const std::size_t n = 4000;
    std::vector<double> s(n), r(n, 0.0);
    for (auto& v : s)
        v = rng.index(2) ? 1.0 : -1.0;
    for (std::size_t i = 1; i < n; ++i)
        r[i] = s[i] + 0.4 * s[i - 1];
    const auto X = window_matrix(r, 0, 1, n, 15);
    const auto taps = ffe_train_ls(X, s);
    double mse = 0.0;
    for (std::size_t i = 20; i + 20 < n; ++i)
        mse += std::pow(ffe_apply(taps, X.row(i)) - s[i], 2);
    CHECK(mse / static_cast<double>(n - 40) < 1e-4);
}

TEST_CASE("ffe lms approaches the least squares solution")
{
    RngStream rng(2, 0);
    const std::size_t n = 3000;
    std::vector<double> s(n), r(n, 0.0);
    for (auto& v : s)
        v = rng.index(2) ? 1.0 : -1.0;
    for (std::size_t i = 1; i < n; ++i)
        r[i] = s[i] + 0.3 * s[i - 1];
    const auto X = window_matrix(r, 0, 1, n, 9);
    const auto ls = ffe_train_ls(X, s);
    const auto lms = ffe_train_lms(X, s, 0.05, 20);
    for (std::size_t k = 0; k < ls.size(); ++k)
        CHECK(lms[k] == doctest::Approx(ls[k]).epsilon(0.02).scale(1.0));
}

TEST_CASE("volterra recovers a quadratic system exactly")
{
    RngStream rng(3, 0);
    const std::size_t n = 3000, m1 = 5, m2 = 3;
    std::vector<double> x(n);
    for (auto& v : x)
        v = rng.normal();
    const auto X = window_matrix(x, 0, 1, n, m1);
    VolterraModel truth{m1, m2, {0.1, -0.2, 1.0, 0.3, 0.05}, {0.2, 0.0, -0.1, 0.4, 0.0, 0.1}, 0.7};
    std::vector<double> y(n);
    for (std::size_t i = 0; i < n; ++i)
        y[i] = volterra_apply(truth, X.row(i));
    const auto fit = volterra_train_ls(X, y, m2, 1e-12);
    for (std::size_t k = 0; k < m1; ++k)
        CHECK(fit.kernel1[k] == doctest::Approx(truth.kernel1[k]).epsilon(1e-6));
    for (std::size_t k = 0; k < truth.kernel2.size(); ++k)
        CHECK(fit.kernel2[k] == doctest::Approx(truth.kernel2[k]).epsilon(1e-6).scale(1.0));
    CHECK(fit.bias == doctest::Approx(0.7).epsilon(1e-6));
    CHECK(volterra_feature_count(m1, m2) == 11);
    CHECK_THROWS_AS(volterra_features(std::vector<double>(5), 5, 6), ParameterError);
}

TEST_CASE("mac conventions")
{
    CHECK(macs_per_symbol_ffe(21) == 21);
    CHECK(macs_per_symbol_volterra(9, 5) == 9 + 2 * 15);
    // four complex taps of 4 real MACs, reported per polarization
    CHECK(macs_per_symbol(ButterflyFir::identity(11)) == 4 * 11 * 4 / 2);
}

TEST_CASE("cma radius matches the closed forms")
{
    CHECK(cma_radius(build_qam(16)) == doctest::Approx(1.32));
    CHECK(cma_radius(build_qam(4)) == doctest::Approx(1.0));
}

TEST_CASE("cma undoes a polarization rotation on QPSK")
{
    RngStream rng(4, 0);
    const auto c = build_qam(4);
    const auto dx = sample_symbols(c, 20000, rng), dy = sample_symbols(c, 20000, rng);
    channel::CoherentChannelConfig cfg;
    cfg.pol.theta = 0.5;
    cfg.snr_db = 25.0;
    const auto out = channel::coherent_channel_apply(
        DualPolBlock(SignalBlock(dx.symbols, 1), SignalBlock(dy.symbols, 1)), cfg, rng);
    const double R = cma_radius(c);
    const auto w0 = ButterflyFir::identity(7);
    const double before = cma_loss(out.rx, w0, R);
    const auto res = cma_train(out.rx, w0, R, 40000);
    CHECK(cma_loss(out.rx, res.taps, R) < 0.2 * before);
    CHECK(!res.loss_trace.empty());
}

TEST_CASE("butterfly identity is a pass-through")
{
    CVec x(50), y(50);
    for (std::size_t i = 0; i < 50; ++i) {
        x[i] = {static_cast<double>(i), 1.0};
        y[i] = {-1.0, static_cast<double>(i)};
    }
    const auto out = butterfly_apply(DualPolBlock(SignalBlock(x, 1), SignalBlock(y, 1)), ButterflyFir::identity(5));
    CHECK(out.x.samples == x);
    CHECK(out.y.samples == y);
}

TEST_CASE("butterfly cross taps swap lanes and the filter is linear")
{
    RngStream rng(12, 0);
    CVec x(60), y(60), u(60), v(60);
    for (auto* vec : {&x, &y, &u, &v})
        for (auto& s : *vec)
            s = rng.complex_normal(1.0);
    ButterflyFir sw = ButterflyFir::identity(5);
    std::swap(sw.w_xx, sw.w_xy);
    std::swap(sw.w_yy, sw.w_yx);
    const auto out = butterfly_apply(DualPolBlock(SignalBlock(x, 1), SignalBlock(y, 1)), sw);
    CHECK(out.x.samples == y);
    CHECK(out.y.samples == x);

    ButterflyFir w = ButterflyFir::identity(5);
    for (int q = 0; q < 2; ++q)
        for (int p = 0; p < 2; ++p)
            for (auto& t : w.lane(q, p))
                t += rng.complex_normal(0.1);
    const cplx a{0.3, -0.8}, b{1.2, 0.1};
    CVec mx(60), my(60);
    for (std::size_t i = 0; i < 60; ++i) {
        mx[i] = a * x[i] + b * u[i];
        my[i] = a * y[i] + b * v[i];
    }
    const auto o1 = butterfly_apply(DualPolBlock(SignalBlock(x, 1), SignalBlock(y, 1)), w);
    const auto o2 = butterfly_apply(DualPolBlock(SignalBlock(u, 1), SignalBlock(v, 1)), w);
    const auto om = butterfly_apply(DualPolBlock(SignalBlock(mx, 1), SignalBlock(my, 1)), w);
    for (std::size_t i = 0; i < 60; ++i) {
        CHECK(std::abs(om.x.samples[i] - (a * o1.x.samples[i] + b * o2.x.samples[i])) < 1e-12);
        CHECK(std::abs(om.y.samples[i] - (a * o1.y.samples[i] + b * o2.y.samples[i])) < 1e-12);
    }
    CHECK_THROWS_AS(butterfly_apply(DualPolBlock(SignalBlock(x, 1), SignalBlock(y, 1)), ButterflyFir::identity(5, 2)),
                    ParameterError);
}

TEST_CASE("cma radius of the shaped constellation by enumeration")
{
    const auto c = pcs_shape(build_qam(64), 4.6).constellation;
    double m2 = 0.0, m4 = 0.0;
    for (std::size_t k = 0; k < c.size(); ++k) {
        m2 += c.priors()[k] * std::norm(c.points()[k]);
        m4 += c.priors()[k] * std::pow(std::norm(c.points()[k]), 2);
    }
    CHECK(cma_radius(c) == doctest::Approx(m4 / m2).epsilon(1e-12));
    CHECK(cma_radius(c) == doctest::Approx(1.9628881953929587).epsilon(1e-5));
}

TEST_CASE("cma loss ignores a global phase on the taps")
{
    RngStream rng(13, 0);
    CVec x(200), y(200);
    for (auto& s : x)
        s = rng.complex_normal(1.0);
    for (auto& s : y)
        s = rng.complex_normal(1.0);
    const DualPolBlock rx(SignalBlock(x, 1), SignalBlock(y, 1));
    ButterflyFir w = ButterflyFir::identity(7);
    for (int q = 0; q < 2; ++q)
        for (int p = 0; p < 2; ++p)
            for (auto& t : w.lane(q, p))
                t += rng.complex_normal(0.05);
    ButterflyFir r = w;
    const cplx ph = std::polar(1.0, 1.234);
    for (int q = 0; q < 2; ++q)
        for (int p = 0; p < 2; ++p)
            for (auto& t : r.lane(q, p))
                t *= ph;
    CHECK(cma_loss(rx, r, 1.32) == doctest::Approx(cma_loss(rx, w, 1.32)).epsilon(1e-12));
}

TEST_CASE("cma at its fixed point stays put")
{
    RngStream rng(14, 0);
    const auto c = build_qam(4);
    const auto dx = sample_symbols(c, 5000, rng), dy = sample_symbols(c, 5000, rng);
    const DualPolBlock rx(SignalBlock(dx.symbols, 1), SignalBlock(dy.symbols, 1));
    const auto w0 = ButterflyFir::identity(9);
    const double l0 = cma_loss(rx, w0, 1.0);
    const auto res = cma_train(rx, w0, 1.0, 5000);
    CHECK(cma_loss(rx, res.taps, 1.0) <= 2.0 * l0 + 1e-12);
    double moved = 0.0;
    for (int q = 0; q < 2; ++q)
        for (int p = 0; p < 2; ++p)
            for (std::size_t k = 0; k < 9; ++k)
                moved = std::max(moved, std::abs(res.taps.lane(q, p)[k] - w0.lane(q, p)[k]));
    CHECK(moved < 1e-3);
}

TEST_CASE("cma equalizes QPSK over a short rotated channel")
{
    RngStream rng(15, 0);
    const auto c = build_qam(4);
    const std::size_t n = 30000;
    const auto dx = sample_symbols(c, n, rng), dy = sample_symbols(c, n, rng);
    // three-tap dispersive channel per lane after a rotation
    const CVec h{{0.2, 0.1}, {1.0, 0.0}, {-0.25, 0.15}};
    const double th = std::numbers::pi / 5;
    CVec x(n, 0.0), y(n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t k = 0; k < 3; ++k) {
            if (i + 1 < k || i + 1 - k >= n)
                continue;
            const std::size_t j = i + 1 - k;
            const cplx mx = std::cos(th) * dx.symbols[j] - std::sin(th) * dy.symbols[j];
            const cplx my = std::sin(th) * dx.symbols[j] + std::cos(th) * dy.symbols[j];
            x[i] += h[k] * mx;
            y[i] += h[k] * my;
        }
    double p = 0.0;
    for (auto v : h)
        p += std::norm(v);
    for (auto& v : x)
        v /= std::sqrt(p);
    for (auto& v : y)
        v /= std::sqrt(p);
    const auto noisy_x = awgn_add(SignalBlock(x, 1), 20.0, rng).signal;
    const auto noisy_y = awgn_add(SignalBlock(y, 1), 20.0, rng).signal;
    const DualPolBlock rx(noisy_x, noisy_y);
    const auto res = cma_train(rx, ButterflyFir::identity(11), cma_radius(c), 120000);
    const auto z = butterfly_apply(rx, res.taps);
    const auto tail = [&](const CVec& s) { return CVec(s.begin() + 10000, s.end()); };
    const auto ix = hard_decide(tail(z.x.samples), c), iy = hard_decide(tail(z.y.samples), c);
    const std::vector<int> rx_ref(dx.indices.begin() + 10000, dx.indices.end());
    const std::vector<int> ry_ref(dy.indices.begin() + 10000, dy.indices.end());
    // either output may carry either source
    const double sxx = symbol_error_rate(ix, rx_ref, Ambiguity::qam_rotations, &c, 8).rate;
    const double syy = symbol_error_rate(iy, ry_ref, Ambiguity::qam_rotations, &c, 8).rate;
    const double sxy = symbol_error_rate(ix, ry_ref, Ambiguity::qam_rotations, &c, 8).rate;
    const double syx = symbol_error_rate(iy, rx_ref, Ambiguity::qam_rotations, &c, 8).rate;
    const double ser = std::min(0.5 * (sxx + syy), 0.5 * (sxy + syx));
    MESSAGE("cma ser " << ser);
    CHECK(ser < 1e-3);
}

TEST_CASE("ffe least squares special cases")
{
    RngStream rng(16, 0);
    const std::size_t n = 2000;
    std::vector<double> s(n), noise(n);
    for (auto& v : s)
        v = rng.normal();
    for (auto& v : noise)
        v = rng.normal();
    const auto X = window_matrix(s, 0, 1, n, 11);
    const auto id = ffe_train_ls(X, s);
    // the default ridge shrinks the center tap by 1 / (1 + 1e-6)
    for (std::size_t k = 0; k < id.size(); ++k)
        CHECK(std::abs(id[k] - (k == 5 ? 1.0 : 0.0)) < 1.01e-6);
    CHECK(std::abs(ffe_train_ls(X, s, 0.0)[5] - 1.0) < 1e-9);

    // targets independent of the features: the fit shrinks toward zero as
    // the data grows, sqrt(taps / n) on average
    {
        const std::size_t big = 500000;
        std::vector<double> f(big), t(big);
        for (auto& v : f)
            v = rng.normal();
        for (auto& v : t)
            v = rng.normal();
        const auto zero = ffe_train_ls(window_matrix(f, 0, 1, big, 11), t);
        double norm = 0.0;
        for (double w : zero)
            norm += w * w;
        MESSAGE("taps norm on pure noise " << std::sqrt(norm));
        CHECK(std::sqrt(norm) < 1e-2);
    }

    // growing a centered window never raises the training residual
    std::vector<double> r(n, 0.0);
    for (std::size_t i = 2; i < n; ++i)
        r[i] = s[i] + 0.5 * s[i - 1] - 0.2 * s[i - 2] + 0.1 * noise[i];
    double last = 1e9;
    for (std::size_t taps = 1; taps <= 31; taps += 2) {
        const auto W = window_matrix(r, 0, 1, n, taps);
        const auto w = ffe_train_ls(W, s, 0.0);
        double res = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            res += std::pow(ffe_apply(w, W.row(i)) - s[i], 2);
        CHECK(res <= last + 1e-9);
        last = res;
    }
}

TEST_CASE("volterra features by hand")
{
    CHECK(volterra_feature_count(7, 3) == 13);
    CHECK(macs_per_symbol_volterra(7, 3) == 19);
    CHECK(macs_per_symbol_ffe(25) == 25);
    CHECK(macs_per_symbol(ButterflyFir::identity(25)) == 200);
    const auto f = volterra_features(std::vector<double>{2.5}, 1, 1);
    REQUIRE(f.size() == 2);
    CHECK(f[0] == 2.5);
    CHECK(f[1] == 6.25);
    for (double v : volterra_features(std::vector<double>(9, 0.0), 9, 4))
        CHECK(v == 0.0);

    // a zero quadratic kernel is the linear FFE
    RngStream rng(17, 0);
    std::vector<double> win(7);
    for (auto& v : win)
        v = rng.normal();
    VolterraModel m{7, 3, {0.1, -0.3, 0.2, 1.0, 0.4, -0.1, 0.05}, RVec(6, 0.0), 0.0};
    CHECK(volterra_apply(m, win) == doctest::Approx(ffe_apply(m.kernel1, win)).epsilon(1e-15));
}
