#include "sacebart/rng.hpp"

#include <cmath>
#include <sstream>

#include "sacebart/errors.hpp"
#include "sacebart/math.hpp"

namespace sacebart {

double Rng::uniform() {
    // 53-bit mantissa scaling; reject the single zero outcome so the open
    // interval is honest (norm_quantile rejects the endpoints).
    for (;;) {
        const double u = static_cast<double>(engine_() >> 11) * 0x1.0p-53;
        if (u > 0.0) return u;
    }
}

int Rng::uniform_int(int n) {
    if (n <= 0) throw NumericError("uniform_int: n must be positive");
    const std::uint64_t un = static_cast<std::uint64_t>(n);
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % un;
    for (;;) {
        const std::uint64_t x = engine_();
        if (x < limit) return static_cast<int>(x % un);
    }
}

double Rng::normal() { return norm_quantile(uniform()); }

double Rng::exponential() { return -std::log(uniform()); }

double Rng::gamma(double shape, double rate) {
    if (!(shape > 0.0) || !(rate > 0.0)) throw NumericError("gamma: shape and rate must be positive");
    if (shape < 1.0) {
        // G(a) = G(a+1) * U^{1/a}
        const double g = gamma(shape + 1.0, 1.0);
        const double u = uniform();
        return g * std::pow(u, 1.0 / shape) / rate;
    }
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
        double x, v;
        do {
            x = normal();
            v = 1.0 + c * x;
        } while (v <= 0.0);
        v = v * v * v;
        const double u = uniform();
        if (u < 1.0 - 0.0331 * x * x * x * x) return d * v / rate;
        if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v / rate;
    }
}

double Rng::inverse_gamma(double shape, double rate) { return 1.0 / gamma(shape, rate); }

namespace {

// Standardized lower truncation: X ~ N(0,1) | X >= alpha.
double trunc_std_lower(Rng& rng, double alpha) {
    if (alpha <= 4.0) {
        // u uniform on (Phi(alpha), 1); the lower tail is wide enough here
        // that the CDF interval is well separated from 1.
        const double lo = norm_cdf(alpha);
        double u;
        // Rejection keeps u in the open interval even when lo rounds up.
        do {
            u = lo + (1.0 - lo) * rng.uniform();
        } while (!(u > 0.0 && u < 1.0) || u <= lo);
        return norm_quantile(u);
    }
    // Exponential proposal with optimal tilt (Robert 1995).
    const double lambda = 0.5 * (alpha + std::sqrt(alpha * alpha + 4.0));
    for (;;) {
        const double z = alpha + rng.exponential() / lambda;
        const double d = z - lambda;
        if (std::log(rng.uniform()) <= -0.5 * d * d) return z;
    }
}

}  // namespace

double Rng::trunc_normal_lower(double mean, double lower) {
    return mean + trunc_std_lower(*this, lower - mean);
}

double Rng::trunc_normal_upper(double mean, double upper) {
    return mean - trunc_std_lower(*this, mean - upper);
}

std::string Rng::serialize() const {
    std::ostringstream oss;
    oss << engine_;
    return oss.str();
}

void Rng::deserialize(const std::string& state) {
    std::istringstream iss(state);
    iss >> engine_;
    if (iss.fail()) throw DataError("Rng::deserialize: malformed engine state");
}

}  // namespace sacebart
