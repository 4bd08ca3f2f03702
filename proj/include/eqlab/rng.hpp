#pragma once

#include <complex>
#include <cstdint>
#include <random>

namespace eqlab {

/// Reproducible random stream keyed by (seed, stream_id).
///
/// The engine is std::mt19937_64 seeded through std::seed_seq, both of which
/// are fully specified by the standard. Uniform and Gaussian draws are derived
/// here rather than through std::*_distribution, whose algorithms are
/// implementation-defined, so draws are bit-identical across toolchains.
class RngStream {
public:
    RngStream(std::uint64_t seed, std::uint64_t stream_id);

    std::uint64_t seed() const noexcept { return seed_; }
    std::uint64_t stream_id() const noexcept { return stream_id_; }

    /// Independent child stream; substream(k) of equal parents are equal.
    RngStream substream(std::uint64_t k) const;

    std::uint64_t next_u64() { return engine_(); }
    /// Uniform in [0, 1) with 53 random bits.
    double uniform();
    /// Uniform in (0, 1].
    double uniform_open0();
    double normal();
    /// Circularly-symmetric complex Gaussian with E|z|^2 = variance.
    std::complex<double> complex_normal(double variance);
    std::size_t index(std::size_t n);

private:
    std::uint64_t seed_;
    std::uint64_t stream_id_;
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

} // namespace eqlab
