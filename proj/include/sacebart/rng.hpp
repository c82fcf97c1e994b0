#pragma once

#include <cstdint>
#include <random>
#include <string>

namespace sacebart {

// Deterministic random source.  Every distribution is a pure function of
// mt19937_64 output, so serializing the engine state captures the whole
// stream: a chain restored from a checkpoint consumes exactly the draws the
// uninterrupted chain would have.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    // Uniform on (0, 1); never returns 0 or 1.
    double uniform();

    // Uniform integer on {0, ..., n-1} by rejection (unbiased).
    int uniform_int(int n);

    // Standard normal via the inverse CDF (single uniform per draw).
    double normal();

    double exponential();

    // Gamma(shape, rate), Marsaglia-Tsang squeeze; shape < 1 handled by
    // boosting.
    double gamma(double shape, double rate);

    // Inverse gamma with density b^a/Gamma(a) x^{-a-1} exp(-b/x).
    double inverse_gamma(double shape, double rate);

    // N(mean, 1) conditioned on X >= lower (resp. X <= upper).  Inverse-CDF
    // when the standardized bound is within 4 of the mean, exponential
    // rejection (Robert) beyond that.
    double trunc_normal_lower(double mean, double lower);
    double trunc_normal_upper(double mean, double upper);

    std::string serialize() const;
    void deserialize(const std::string& state);

private:
    std::mt19937_64 engine_;
};

}  // namespace sacebart
