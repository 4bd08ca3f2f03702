#include <doctest.h>

#include <cmath>
#include <algorithm>
#include <limits>
#include <numeric>

#include "eqlab/constellation.hpp"
#include "eqlab/error.hpp"
#include "eqlab/signal.hpp"

using namespace eqlab;

namespace {

// Matched-filter cascade sampled at symbol spacing.
std::pair<double, double> cascade_isi(const RVec& h, int sps)
{
    const int n = static_cast<int>(h.size());
    std::vector<double> c(2 * h.size() - 1, 0.0);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            c[static_cast<std::size_t>(i + (n - 1 - j))] += h[static_cast<std::size_t>(i)] * h[static_cast<std::size_t>(j)];
    const int mid = n - 1;
    double worst = 0.0;
    for (int k = mid % sps; k < static_cast<int>(c.size()); k += sps)
        if (k != mid)
            worst = std::max(worst, std::abs(c[static_cast<std::size_t>(k)]));
    return {c[static_cast<std::size_t>(mid)], worst};
}

} // namespace

TEST_CASE("rrc taps are unit energy and the cascade matches the oracle")
{
    // values from tests/oracles/frozen_values.py
    struct Row {
        double beta;
        int span, sps;
        double isi;
    };
    for (const auto& r : {Row{0.1, 16, 2, 0.007992116316189252}, Row{0.25, 16, 2, 0.001551458851160438},
                          Row{0.5, 8, 4, 0.0009516567995584493}}) {
        const auto h = rrc_taps(r.beta, r.span, r.sps);
        CHECK(h.size() == static_cast<std::size_t>(r.span * r.sps + 1));
        const double e = std::inner_product(h.begin(), h.end(), h.begin(), 0.0);
        CHECK(e == doctest::Approx(1.0).epsilon(1e-12));
        const auto [center, isi] = cascade_isi(h, r.sps);
        CHECK(center == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(isi == doctest::Approx(r.isi).epsilon(1e-6));
    }
}

TEST_CASE("rrc rejects bad arguments")
{
    CHECK_THROWS_AS(rrc_taps(0.0, 8, 2), ParameterError);
    CHECK_THROWS_AS(rrc_taps(0.2, 8, 0), ParameterError);
}

TEST_CASE("fir_apply same mode keeps the length and centers the response")
{
    CVec x(9, 0.0);
    x[4] = 1.0;
    const RVec h{0.25, 0.5, 0.25};
    const auto y = fir_apply(SignalBlock(x, 1), h);
    REQUIRE(y.size() == 9);
    CHECK(y.samples[3].real() == doctest::Approx(0.25));
    CHECK(y.samples[4].real() == doctest::Approx(0.5));
    CHECK(y.samples[5].real() == doctest::Approx(0.25));
    CHECK(fir_apply(SignalBlock(x, 1), h, FirMode::full).size() == 11);
}

TEST_CASE("theory_ber_2pam frozen values")
{
    CHECK(theory_ber_2pam(0.0) == doctest::Approx(0.07864960352514258).epsilon(1e-12));
    CHECK(theory_ber_2pam(9.59) == doctest::Approx(9.953002176773313e-06).epsilon(1e-9));
}

TEST_CASE("awgn_add noise variance follows the per-complex-sample convention")
{
    RngStream rng(3, 0);
    const SignalBlock s(CVec(200000, cplx{1.0, 0.0}), 1);
    const auto out = awgn_add(s, 10.0, rng);
    CHECK(out.noise_var == doctest::Approx(0.1));
    double e = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i)
        e += std::norm(out.signal.samples[i] - s.samples[i]);
    CHECK(e / static_cast<double>(s.size()) == doctest::Approx(0.1).epsilon(0.02));
    RngStream r2(3, 0);
    CHECK(awgn_add(s, kNoiseOff, r2).signal.samples == s.samples);
}

TEST_CASE("symbol_error_rate finds the lag and the quarter turn")
{
    const auto c = build_qam(16);
    RngStream rng(5, 0);
    const auto d = sample_symbols(c, 2000, rng);
    const auto rot = c.rotation_map(1);
    std::vector<int> dec(d.indices.size() + 3, 0);
    for (std::size_t i = 0; i < d.indices.size(); ++i)
        dec[i + 3] = rot[static_cast<std::size_t>(d.indices[i])];
    const auto r = symbol_error_rate(dec, d.indices, Ambiguity::qam_rotations, &c, 8);
    CHECK(r.rate == 0.0);
    CHECK(r.lag == 3);
    CHECK(r.rotation != 0);
    CHECK(symbol_error_rate(d.indices, d.indices).rate == 0.0);
}

TEST_CASE("fir_apply identity, shift and linearity")
{
    RngStream rng(6, 0);
    CVec x(40), y(40);
    for (auto& v : x)
        v = rng.complex_normal(1.0);
    for (auto& v : y)
        v = rng.complex_normal(1.0);
    const SignalBlock sx(x, 1), sy(y, 1);
    CHECK(fir_apply(sx, RVec{1.0}).samples == x);
    // [0, 1] in full mode delays by one sample
    const auto shifted = fir_apply(sx, RVec{0.0, 1.0}, FirMode::full);
    REQUIRE(shifted.size() == 41);
    CHECK(shifted.samples[0] == cplx{0.0, 0.0});
    for (std::size_t i = 0; i < 40; ++i)
        CHECK(shifted.samples[i + 1] == x[i]);
    const CVec h{{0.3, -0.1}, {1.0, 0.2}, {-0.4, 0.5}};
    const cplx a{0.7, -1.2}, b{-0.3, 0.4};
    CVec mix(40);
    for (std::size_t i = 0; i < 40; ++i)
        mix[i] = a * x[i] + b * y[i];
    const auto lhs = fir_apply(SignalBlock(mix, 1), h);
    const auto hx = fir_apply(sx, h), hy = fir_apply(sy, h);
    for (std::size_t i = 0; i < 40; ++i)
        CHECK(std::abs(lhs.samples[i] - (a * hx.samples[i] + b * hy.samples[i])) < 1e-12);
}

TEST_CASE("rrc center tap is the largest")
{
    const auto h = rrc_taps(0.5, 8, 4);
    const auto peak = std::max_element(h.begin(), h.end(), [](double p, double q) { return std::abs(p) < std::abs(q); });
    CHECK(peak - h.begin() == 16);
}

TEST_CASE("awgn at 0 dB has unit noise power")
{
    RngStream rng(8, 0);
    const SignalBlock s(CVec(100000, cplx{0.0, 1.0}), 1);
    const auto out = awgn_add(s, 0.0, rng);
    CHECK(out.noise_var == doctest::Approx(1.0));
    double e = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i)
        e += std::norm(out.signal.samples[i] - s.samples[i]);
    CHECK(e / static_cast<double>(s.size()) == doctest::Approx(1.0).epsilon(0.02));
}

TEST_CASE("symbol_error_rate extremes and symmetry")
{
    std::vector<int> a{0, 1, 2, 3, 0, 1, 2, 3}, b{1, 2, 3, 0, 1, 2, 3, 0}, c{0, 1, 3, 3, 0, 2, 2, 3};
    CHECK(symbol_error_rate(b, a, Ambiguity::none, nullptr, 0).rate == 1.0);
    CHECK(symbol_error_rate(c, a, Ambiguity::none, nullptr, 0).rate ==
          symbol_error_rate(a, c, Ambiguity::none, nullptr, 0).rate);
    CHECK(symbol_error_rate(c, a, Ambiguity::none, nullptr, 0).rate == doctest::Approx(0.25));
}

TEST_CASE("theory_ber_2pam at vanishing snr is one half")
{
    CHECK(theory_ber_2pam(-std::numeric_limits<double>::infinity()) == doctest::Approx(0.5));
    CHECK(theory_ber_2pam(-80.0) == doctest::Approx(0.5).epsilon(1e-3));
}
