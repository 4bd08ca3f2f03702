#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace eqlab::selftest {

struct Check {
    std::string name;
    bool pass = false;
    std::string detail;
    double value = 0.0;  // the measured quantity behind the verdict
};

/// pareto_front and budget_optimal against an O(n^2) dominance oracle on
/// random instances with n up to max_n (ties included).
Check pareto_oracle(std::size_t instances, std::size_t max_n, std::uint64_t seed);

/// MAC counts of random FFE, Volterra, butterfly, CNN and SNN models against
/// a recount from the shapes the forward pass actually produces, and
/// invariance of the counts to the weight values.
Check mac_accounting(std::size_t models, std::uint64_t seed);

/// Worst relative error of analytic gradients against central differences.
/// The denominator is floored at 1e-3; coordinates where the loss is not
/// smooth (difference quotients at h and h/4 disagree) are skipped.
Check elbo_gradients(std::size_t instances, std::uint64_t seed, double tol);
Check cnn_gradients(std::size_t instances, std::uint64_t seed, double tol);
Check snn_gradients(std::size_t instances, std::uint64_t seed, double tol);

/// lif_forward against a scalar re-implementation of the recurrence, plus the
/// sub/supra-threshold and boundedness properties.
Check lif_oracle(std::uint64_t seed);

/// Serial and OpenMP kernels produce bit-identical outputs.
Check kernels_match(std::uint64_t seed);

/// save -> load -> save is byte-identical for every model kind.
Check checkpoint_roundtrip(std::uint64_t seed);

/// All of the above; `quick` shrinks the instance counts.
std::vector<Check> run_all(std::uint64_t seed, bool quick);

} // namespace eqlab::selftest
