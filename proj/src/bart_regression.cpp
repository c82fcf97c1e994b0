#include "sacebart/bart_regression.hpp"

#include <algorithm>
#include <cmath>

#include "sacebart/errors.hpp"
#include "sacebart/math.hpp"

namespace sacebart {

OutcomeScaler OutcomeScaler::fit(const std::vector<double>& observed) {
    if (observed.empty()) throw DataError("OutcomeScaler: no observed outcomes");
    OutcomeScaler s;
    s.y_min = *std::min_element(observed.begin(), observed.end());
    const double y_max = *std::max_element(observed.begin(), observed.end());
    s.range = y_max - s.y_min;
    if (s.range <= 0.0) s.range = 1.0;  // constant outcome: centered, unit scale
    return s;
}

BartRegressionResult fit_bart_regression(const double* x_colmajor, std::size_t n, std::size_t k,
                                         const std::vector<double>& y, const double* x_test,
                                         std::size_t n_test, const BartConfig& config, int n_iter,
                                         int burn_in, double a0, double b0, Rng& rng,
                                         const OutcomeScaler* fixed_scaler) {
    if (y.size() != n) throw DataError("fit_bart_regression: response length mismatch");
    if (n == 0) throw DataError("fit_bart_regression: empty training set");
    if (burn_in >= n_iter) throw UsageError("fit_bart_regression: burn_in must be < n_iter");

    BartRegressionResult out;
    out.fit.scaler = fixed_scaler ? *fixed_scaler : OutcomeScaler::fit(y);
    const OutcomeScaler& scaler = out.fit.scaler;

    std::vector<double> y_int(n);
    for (std::size_t i = 0; i < n; ++i) y_int[i] = scaler.to_internal(y[i]);

    ForestSampler sampler(x_colmajor, n, k, config);
    std::vector<int> all(n);
    for (std::size_t i = 0; i < n; ++i) all[i] = static_cast<int>(i);

    double sigma2 = n >= 2 ? sample_variance(y_int) : 1.0;
    if (!(sigma2 > 0.0)) sigma2 = 1.0;

    std::vector<double> test_acc(n_test, 0.0);
    int kept = 0;
    for (int it = 0; it < n_iter; ++it) {
        sampler.sweep(all, y_int.data(), sigma2, rng);
        double ss = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double r = y_int[i] - sampler.value(static_cast<int>(i));
            ss += r * r;
        }
        sigma2 = rng.inverse_gamma(a0 + 0.5 * static_cast<double>(n), b0 + 0.5 * ss);
        if (it >= burn_in && x_test != nullptr) {
            for (std::size_t j = 0; j < n_test; ++j) {
                double m = 0.0;
                for (const Tree& t : sampler.forest().trees)
                    m += t.node(t.route_unit(x_test, static_cast<int>(n_test),
                                             static_cast<int>(j)))
                             .leaf;
                test_acc[j] += m;
            }
            ++kept;
        }
        if (it >= burn_in && x_test == nullptr) ++kept;
    }

    out.fit.forest = sampler.forest();
    out.fit.sigma2 = sigma2;
    out.fit.moves = sampler.move_stats();
    if (x_test != nullptr) {
        out.test_mean.resize(n_test);
        for (std::size_t j = 0; j < n_test; ++j)
            out.test_mean[j] = scaler.to_original(test_acc[j] / std::max(kept, 1));
    }
    return out;
}

}  // namespace sacebart
