#pragma once

#include <cstddef>
#include <vector>

#include "sacebart/bart.hpp"
#include "sacebart/rng.hpp"

namespace sacebart {

// Affine map between the original outcome scale and the internal [-0.5, 0.5]
// fitting scale shared by all continuous-outcome mean models of one chain.
// Probit latents never pass through this.
struct OutcomeScaler {
    double y_min = 0.0;
    double range = 1.0;

    static OutcomeScaler fit(const std::vector<double>& observed);
    double to_internal(double y) const { return (y - y_min) / range - 0.5; }
    double to_original(double m) const { return (m + 0.5) * range + y_min; }
    double var_to_original(double s2) const { return s2 * range * range; }
    double var_to_internal(double s2) const { return s2 / (range * range); }
};

struct BartRegressionFit {
    Forest forest;          // final state, internal scale
    double sigma2 = 1.0;    // internal scale
    OutcomeScaler scaler;
    MoveStats moves;
};

struct BartRegressionResult {
    BartRegressionFit fit;
    std::vector<double> test_mean;  // posterior mean prediction, original scale
};

// Plain sum-of-trees regression of y on X with an inverse-gamma variance
// update each sweep.  When x_test is non-null, predictions on it are averaged
// over the post-burn-in sweeps.  A caller-supplied scaler pins the internal
// scale (used when the fit seeds a larger model that owns the scaling).
BartRegressionResult fit_bart_regression(const double* x_colmajor, std::size_t n, std::size_t k,
                                         const std::vector<double>& y, const double* x_test,
                                         std::size_t n_test, const BartConfig& config, int n_iter,
                                         int burn_in, double a0, double b0, Rng& rng,
                                         const OutcomeScaler* fixed_scaler = nullptr);

}  // namespace sacebart
