#include <doctest.h>

#include <cmath>

#include "eqlab/cnn.hpp"
#include "eqlab/error.hpp"
#include "eqlab/selftest.hpp"

using namespace eqlab;
using namespace eqlab::cnn;

TEST_CASE("tape gradients on a small expression")
{
    nn::Tape<double> t;
    nn::Param<double> p({2});
    p.value = {3.0, -2.0};
    p.zero_grad();
    auto x = t.param(p);
    auto y = t.sum(t.mul(x, x));
    t.backward(y);
    CHECK(p.grad[0] == doctest::Approx(6.0));
    CHECK(p.grad[1] == doctest::Approx(-4.0));
    t.clear();
    CHECK_THROWS_AS(t.backward(y), UsageError);
}

TEST_CASE("relu subgradient at zero is zero")
{
    nn::Tape<double> t;
    nn::Param<double> p({3});
    p.value = {-1.0, 0.0, 2.0};
    p.zero_grad();
    t.backward(t.sum(t.relu(t.param(p))));
    CHECK(p.grad == std::vector<double>{0.0, 0.0, 1.0});
}

TEST_CASE("cnn gradients match finite differences")
{
    const auto c = selftest::cnn_gradients(30, 5, 1e-5);
    INFO(c.detail);
    CHECK(c.pass);
}

TEST_CASE("cnn shapes and macs")
{
    CnnConfig cfg;
    cfg.input_window = 40;
    cfg.layers = {LayerSpec::conv(1, 8, 8, 2), LayerSpec::relu(), LayerSpec::dense(8 * 17, 2)};
    cfg.validate();
    const auto sh = cfg.shapes();
    CHECK(sh[0] == std::pair<std::size_t, std::size_t>{8, 17});
    CHECK(macs_per_symbol_cnn(cfg) == 17 * 8 * 8 + 8 * 17 * 2);
    cfg.symbols_per_window = 2;
    cfg.layers.back() = LayerSpec::dense(8 * 17, 4);
    CHECK(macs_per_symbol_cnn(cfg) == doctest::Approx((17 * 8 * 8 + 8 * 17 * 4) / 2.0));
    cfg.layers.back() = LayerSpec::dense(10, 4);
    CHECK_THROWS_AS(cfg.validate(), ParameterError);
}

TEST_CASE("frame_windows centers each window on its symbol")
{
    std::vector<double> rx(40);
    for (std::size_t i = 0; i < rx.size(); ++i)
        rx[i] = static_cast<double>(i);
    std::vector<int> labels(20);
    for (int i = 0; i < 20; ++i)
        labels[static_cast<std::size_t>(i)] = i % 2;
    const auto w = frame_windows(rx, labels, 2, 6, 1, 5, 15);
    CHECK(w.count == 10);
    CHECK(w.labels[0] == 1);
    // symbol 5 sits at sample 10, the window straddles it
    bool has_center = false;
    for (double v : w.row(0))
        has_center = has_center || v == 10.0;
    CHECK(has_center);
}

TEST_CASE("cnn training separates an easy problem deterministically")
{
    RngStream rng(7, 0);
    const auto c = build_pam(2);
    auto make = [&](std::size_t n) {
        std::vector<double> rx(2 * n);
        std::vector<int> lab(n);
        for (std::size_t i = 0; i < n; ++i) {
            lab[i] = static_cast<int>(rng.index(2));
            const double a = c.points()[static_cast<std::size_t>(lab[i])].real();
            rx[2 * i] = a + 0.3 * rng.normal();
            rx[2 * i + 1] = a;
        }
        return frame_windows(rx, lab, 2, 8, 1, 4, n - 4);
    };
    const auto tr = make(3000), va = make(1000);
    CnnConfig cfg;
    cfg.input_window = 8;
    cfg.layers = {LayerSpec::conv(1, 2, 4, 2), LayerSpec::relu(), LayerSpec::dense(6, 2)};
    TrainOptions opt;
    opt.epochs = 5;
    opt.adam.lr = 1e-2;
    const auto a = cnn_train<double>(tr, va, cfg, c, opt);
    const auto b = cnn_train<double>(tr, va, cfg, c, opt);
    CHECK(a.report.checksum == b.report.checksum);
    CHECK(a.report.val_ber_trace.back() < 0.01);
    auto m = a.model;
    const auto dec = cnn_predict(m, va, c);
    std::size_t err = 0;
    for (std::size_t i = 0; i < dec.size(); ++i)
        err += dec[i] != va.labels[i];
    CHECK(static_cast<double>(err) / static_cast<double>(dec.size()) < 0.01);
}

TEST_CASE("conv1d identity, shift and composition")
{
    RngStream rng(11, 0);
    std::vector<double> x(30);
    for (auto& v : x)
        v = rng.normal();
    auto run = [&](const std::vector<double>& in, std::vector<double> k) {
        nn::Tape<double> t;
        nn::Param<double> w({1, 1, k.size()}), b({1});
        w.value = std::move(k);
        b.value = {0.0};
        return t.value(t.conv1d(t.input({1, 1, in.size()}, in), t.param(w), t.param(b), 1));
    };
    CHECK(run(x, {1.0}) == x);
    const auto s = run(x, {0.0, 1.0});
    REQUIRE(s.size() == 29);
    for (std::size_t i = 0; i < 29; ++i)
        CHECK(s[i] == x[i + 1]);
    // two stacked cross-correlations equal one with the composed kernel
    const std::vector<double> k1{0.3, -1.0, 0.5}, k2{1.2, 0.4};
    std::vector<double> k12(4, 0.0);
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 2; ++j)
            k12[i + j] += k1[i] * k2[j];
    const auto two = run(run(x, k1), k2), one = run(x, k12);
    REQUIRE(two.size() == one.size());
    for (std::size_t i = 0; i < one.size(); ++i)
        CHECK(std::abs(two[i] - one[i]) < 1e-9);
}

TEST_CASE("constant loss gives zero gradients and dense quadratic loss matches the formula")
{
    nn::Tape<double> t;
    nn::Param<double> p({3});
    p.value = {1.0, -2.0, 0.5};
    p.zero_grad();
    t.backward(t.mul(t.sum(t.param(p)), t.constant(0.0)));
    CHECK(p.grad == std::vector<double>(3, 0.0));

    // L = mean((W x - y)^2) over 2 outputs: dL/dW = (Wx - y) x^T
    nn::Param<double> w({2, 3}), b({2});
    w.value = {0.2, -0.1, 0.4, 1.0, 0.3, -0.5};
    b.value = {0.0, 0.0};
    w.zero_grad();
    b.zero_grad();
    const std::vector<double> x{0.5, -1.0, 2.0}, y{0.3, -0.7};
    nn::Tape<double> t2;
    t2.backward(t2.mse(t2.dense(t2.input({1, 3}, x), t2.param(w), t2.param(b)), y));
    for (std::size_t o = 0; o < 2; ++o) {
        double r = -y[o];
        for (std::size_t i = 0; i < 3; ++i)
            r += w.value[o * 3 + i] * x[i];
        for (std::size_t i = 0; i < 3; ++i)
            CHECK(w.grad[o * 3 + i] == doctest::Approx(r * x[i]).epsilon(1e-12));
    }
}

TEST_CASE("mac examples by convention")
{
    CnnConfig d;
    d.input_window = 16;
    d.output = OutputMode::regression;  // one real estimate per symbol
    d.layers = {LayerSpec::dense(16, 1)};
    CHECK(macs_per_symbol_cnn(d) == 16);
    CnnConfig c;
    c.input_window = 32;
    c.classes = 2;
    c.layers = {LayerSpec::conv(1, 4, 8, 2), LayerSpec::relu(), LayerSpec::dense(4 * 13, 2)};
    CHECK(c.shapes()[0] == std::pair<std::size_t, std::size_t>{4, 13});
    CHECK(macs_per_symbol_cnn(c) == 4 * 8 * 13 + 4 * 13 * 2);
    CnnConfig e;
    e.input_window = 8;
    CHECK(macs_per_symbol_cnn(e) == 0);
}

TEST_CASE("full-batch gradient descent on a convex toy problem never raises the loss")
{
    RngStream rng(12, 0);
    std::vector<double> x(64 * 4), y(64);
    for (auto& v : x)
        v = rng.normal();
    for (std::size_t n = 0; n < 64; ++n)
        y[n] = 0.5 * x[4 * n] - x[4 * n + 2] + 0.1 * rng.normal();
    nn::Param<double> w({1, 4}), b({1});
    w.value = {0.0, 0.0, 0.0, 0.0};
    b.value = {0.0};
    double last = 1e9;
    for (int step = 0; step < 100; ++step) {
        w.zero_grad();
        b.zero_grad();
        nn::Tape<double> t;
        auto loss = t.mse(t.dense(t.input({64, 4}, x), t.param(w), t.param(b)), y);
        const double l = t.value(loss)[0];
        CHECK(l <= last + 1e-9);
        last = l;
        t.backward(loss);
        for (std::size_t i = 0; i < 4; ++i)
            w.value[i] -= 0.05 * w.grad[i];
        b.value[0] -= 0.05 * b.grad[0];
    }
    CHECK(last < 0.05);
}

TEST_CASE("tiny cnn reaches full training accuracy on separable data")
{
    RngStream rng(13, 0);
    const auto c = build_pam(2);
    std::vector<double> rx(2 * 500);
    std::vector<int> lab(500);
    for (std::size_t i = 0; i < 500; ++i) {
        lab[i] = static_cast<int>(rng.index(2));
        rx[2 * i] = rx[2 * i + 1] = c.points()[static_cast<std::size_t>(lab[i])].real() + 0.1 * rng.normal();
    }
    const auto tr = frame_windows(rx, lab, 2, 4, 1, 2, 498);
    CnnConfig cfg;
    cfg.input_window = 4;
    cfg.layers = {LayerSpec::conv(1, 2, 2, 2), LayerSpec::relu(), LayerSpec::dense(4, 2)};
    TrainOptions opt;
    opt.epochs = 50;
    opt.patience = 50;
    opt.adam.lr = 1e-2;
    auto res = cnn_train<double>(tr, tr, cfg, c, opt);
    const auto dec = cnn_predict(res.model, tr, c);
    std::size_t err = 0;
    for (std::size_t i = 0; i < dec.size(); ++i)
        err += dec[i] != tr.labels[i];
    CHECK(err == 0);
}
