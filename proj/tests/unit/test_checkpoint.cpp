#include <doctest.h>

#include <sstream>

#include "eqlab/checkpoint.hpp"
#include "eqlab/error.hpp"
#include "eqlab/selftest.hpp"

using namespace eqlab;

TEST_CASE("every model kind survives save and load")
{
    const auto c = selftest::checkpoint_roundtrip(2);
    INFO(c.detail);
    CHECK(c.pass);
}

TEST_CASE("ffe checkpoint values are exact")
{
    RVec taps{0.1, -1.0 / 3.0, 2.5e-17};
    std::stringstream ss;
    ckpt::save(ss, ckpt::from_ffe(taps));
    CHECK(ss.str().rfind("eqlab-model v1", 0) == 0);
    CHECK(ckpt::to_ffe(ckpt::load(ss)) == taps);
}

TEST_CASE("malformed checkpoints are rejected")
{
    std::istringstream wrong_version("eqlab-model v9\nkind ffe\nend\n");
    CHECK_THROWS_AS(ckpt::load(wrong_version), ParameterError);
    std::istringstream truncated("eqlab-model v1\nkind ffe\ntensor taps 1 3\n0.1 0.2\n");
    CHECK_THROWS_AS(ckpt::load(truncated), ParameterError);
    std::stringstream ss;
    ckpt::save(ss, ckpt::from_ffe({1.0}));
    CHECK_THROWS_AS(ckpt::to_volterra(ckpt::load(ss)), ParameterError);
}
