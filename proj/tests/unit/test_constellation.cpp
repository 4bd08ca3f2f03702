#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "eqlab/constellation.hpp"
#include "eqlab/error.hpp"

using namespace eqlab;

TEST_CASE("qam and pam are unit energy with Gray neighbours")
{
    for (int m : {4, 16, 64}) {
        const auto c = build_qam(m);
        CHECK(c.size() == static_cast<std::size_t>(m));
        CHECK(c.mean_energy() == doctest::Approx(1.0).epsilon(1e-12));
        // points at the minimum distance differ in exactly one bit
        double step = 1e9;
        for (std::size_t i = 0; i < c.size(); ++i)
            for (std::size_t j = i + 1; j < c.size(); ++j)
                step = std::min(step, std::abs(c.points()[i] - c.points()[j]));
        for (std::size_t i = 0; i < c.size(); ++i)
            for (std::size_t j = i + 1; j < c.size(); ++j)
                if (std::abs(c.points()[i] - c.points()[j]) < step + 1e-9)
                    CHECK(__builtin_popcount(c.labels()[i] ^ c.labels()[j]) == 1);
    }
    for (int m : {2, 4, 8}) {
        const auto c = build_pam(m);
        CHECK(c.is_real());
        CHECK(c.mean_energy() == doctest::Approx(1.0).epsilon(1e-12));
    }
    CHECK_THROWS_AS(build_qam(32), ParameterError);
    CHECK_THROWS_AS(build_pam(3), ParameterError);
}

TEST_CASE("pcs_shape hits the entropy target with the oracle lambda")
{
    const auto base = build_qam(64);
    // lambda and CMA radius from tests/oracles/frozen_values.py
    const auto r = pcs_shape(base, 4.6);
    CHECK(std::abs(r.constellation.entropy_bits() - 4.6) < 1e-6);
    CHECK(r.constellation.mean_energy() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(r.lambda == doctest::Approx(3.664262079355806).epsilon(1e-5));
    CHECK(r.constellation.fourth_moment() / r.constellation.mean_energy() ==
          doctest::Approx(1.9628881953929587).epsilon(1e-5));
    const auto r2 = pcs_shape(base, 5.5);
    CHECK(r2.lambda == doctest::Approx(1.6263367843012475).epsilon(1e-5));
    CHECK(std::abs(r2.constellation.entropy_bits() - 5.5) < 1e-6);
}

TEST_CASE("pcs_shape edge cases")
{
    const auto base = build_qam(16);
    CHECK(pcs_shape(base, 4.0).lambda == doctest::Approx(0.0).epsilon(1e-6));
    CHECK_THROWS_AS(pcs_shape(base, 4.5), ParameterError);
    CHECK_THROWS_AS(pcs_shape(base, 0.0), ParameterError);
}

TEST_CASE("sampling follows the priors")
{
    const auto c = pcs_shape(build_qam(16), 3.2).constellation;
    RngStream rng(9, 1);
    const auto d = sample_symbols(c, 200000, rng);
    std::vector<double> hist(c.size(), 0.0);
    for (int i : d.indices)
        hist[static_cast<std::size_t>(i)] += 1.0 / 200000.0;
    for (std::size_t k = 0; k < c.size(); ++k)
        CHECK(hist[k] == doctest::Approx(c.priors()[k]).epsilon(0.05));
}

TEST_CASE("soft demapper rows are distributions and peak at the sent point")
{
    const auto c = build_qam(16);
    const auto q = soft_demap(c.points(), c, 0.01);
    for (std::size_t n = 0; n < q.rows; ++n) {
        double s = 0.0;
        std::size_t arg = 0;
        for (std::size_t k = 0; k < q.cols; ++k) {
            s += q.row(n)[k];
            if (q.row(n)[k] > q.row(n)[arg])
                arg = k;
        }
        CHECK(s == doctest::Approx(1.0));
        CHECK(arg == n);
    }
    CHECK(hard_decide(c.points(), c)[5] == 5);
}

TEST_CASE("constellation save and load")
{
    const auto c = pcs_shape(build_qam(64), 4.6).constellation;
    std::stringstream ss;
    c.save(ss);
    const auto back = Constellation::load(ss);
    CHECK(back.points() == c.points());
    CHECK(back.priors() == c.priors());
    CHECK(back.labels() == c.labels());
}

TEST_CASE("bit_error_rate counts label differences")
{
    const auto c = build_pam(4);
    std::vector<int> ref{0, 1, 2, 3}, dec{0, 1, 2, 3};
    CHECK(bit_error_rate(dec, ref, c) == 0.0);
    dec[0] = 1;  // Gray neighbours: one bit of eight
    CHECK(bit_error_rate(dec, ref, c) == doctest::Approx(1.0 / 8.0));
}

TEST_CASE("small constellations have the textbook points")
{
    const auto q = build_qam(4);
    const double a = 1.0 / std::sqrt(2.0);
    for (auto p : q.points()) {
        CHECK(std::abs(std::abs(p.real()) - a) < 1e-12);
        CHECK(std::abs(std::abs(p.imag()) - a) < 1e-12);
    }
    CHECK(build_qam(64).entropy_bits() == doctest::Approx(6.0));
    CHECK(std::abs(build_qam(64).mean_energy() - 1.0) < 1e-9);
    RVec p2, p4;
    const auto pam2 = build_pam(2), pam4 = build_pam(4);
    for (auto p : pam2.points())
        p2.push_back(p.real());
    for (auto p : pam4.points())
        p4.push_back(p.real());
    std::sort(p2.begin(), p2.end());
    std::sort(p4.begin(), p4.end());
    CHECK(p2 == RVec{-1.0, 1.0});
    const double s5 = std::sqrt(5.0);
    const RVec want{-3 / s5, -1 / s5, 1 / s5, 3 / s5};
    for (std::size_t k = 0; k < 4; ++k)
        CHECK(p4[k] == doctest::Approx(want[k]).epsilon(1e-12));
    CHECK(build_pam(8).entropy_bits() == doctest::Approx(3.0));
}

TEST_CASE("pcs_shape over a grid of targets")
{
    const auto base = build_qam(64);
    double last_lambda = 1e9;
    for (double target = 2.1; target < 5.9; target += 0.2) {
        const auto r = pcs_shape(base, target);
        CHECK(std::abs(r.constellation.entropy_bits() - target) < 1e-6);
        CHECK(std::abs(r.constellation.mean_energy() - 1.0) < 1e-12);
        // lower entropy needs stronger shaping
        CHECK(r.lambda < last_lambda);
        last_lambda = r.lambda;
    }
    const auto u = pcs_shape(base, 6.0);
    for (double p : u.constellation.priors())
        CHECK(p == doctest::Approx(1.0 / 64.0).epsilon(1e-9));
}

TEST_CASE("sample statistics of large draws")
{
    RngStream rng(21, 0);
    const auto q = build_qam(4);
    const auto d = sample_symbols(q, 4000000, rng);
    std::vector<double> f(4, 0.0);
    for (int i : d.indices)
        f[static_cast<std::size_t>(i)] += 1.0 / 4e6;
    for (double v : f)
        CHECK(std::abs(v - 0.25) < 0.002);

    const auto pcs = pcs_shape(build_qam(64), 4.6).constellation;
    const auto e = sample_symbols(pcs, 1000000, rng);
    std::vector<double> h(64, 0.0);
    for (int i : e.indices)
        h[static_cast<std::size_t>(i)] += 1e-6;
    double ent = 0.0;
    for (double p : h)
        if (p > 0)
            ent -= p * std::log2(p);
    CHECK(std::abs(ent - 4.6) < 0.01);

    const auto one = sample_symbols(pcs, 1, rng);
    REQUIRE(one.indices.size() == 1);
    CHECK(one.indices[0] >= 0);
    CHECK(one.indices[0] < 64);
    CHECK(one.symbols[0] == pcs.points()[static_cast<std::size_t>(one.indices[0])]);
}

TEST_CASE("soft demapper limits, symmetry and scaling")
{
    const auto c = build_qam(16);
    const auto sharp = soft_demap(c.points(), c, 1e-12);
    for (std::size_t n = 0; n < sharp.rows; ++n)
        CHECK(sharp.row(n)[n] > 1.0 - 1e-9);
    const auto pcs = pcs_shape(build_qam(16), 3.5).constellation;
    const auto flat = soft_demap(CVec{{0.3, -0.2}, {2.0, 1.0}}, pcs, 1e9);
    for (std::size_t n = 0; n < flat.rows; ++n)
        for (std::size_t k = 0; k < flat.cols; ++k)
            CHECK(std::abs(flat.row(n)[k] - pcs.priors()[k]) < 1e-6);
    // halfway between two equal-prior points
    const cplx mid = 0.5 * (c.points()[0] + c.points()[1]);
    const auto q = soft_demap(CVec{mid}, c, 0.05);
    CHECK(std::abs(q.row(0)[0] - q.row(0)[1]) < 1e-12);
    CHECK_THROWS_AS(soft_demap(CVec{mid}, c, 0.0), ParameterError);

    RngStream rng(22, 0);
    CVec y(10000);
    for (auto& v : y)
        v = rng.complex_normal(1.5);
    const auto rows = soft_demap(y, pcs, 0.07);
    double worst = 0.0;
    for (std::size_t n = 0; n < rows.rows; ++n) {
        double s = 0.0;
        for (double v : rows.row(n)) {
            CHECK(v >= 0.0);
            s += v;
        }
        worst = std::max(worst, std::abs(s - 1.0));
    }
    CHECK(worst < 1e-12);

    // scaling y, the points and the noise variance together changes nothing
    const cplx alpha{0.6, -1.3};
    CVec pts = pcs.points(), ys(y.begin(), y.begin() + 200);
    for (auto& p : pts)
        p *= alpha;
    const Constellation scaled("scaled", pts, pcs.labels(), pcs.priors(), false);
    const auto base = soft_demap(ys, pcs, 0.07);
    for (auto& v : ys)
        v *= alpha;
    const auto sc = soft_demap(ys, scaled, 0.07 * std::norm(alpha));
    for (std::size_t i = 0; i < base.q.size(); ++i)
        CHECK(std::abs(base.q[i] - sc.q[i]) < 1e-9);
}
