#pragma once

#include <cstdint>
#include <vector>

#include "sacebart/dataset.hpp"
#include "sacebart/rng.hpp"
#include "sacebart/sampler.hpp"

namespace sacebart {

// Linear-model baseline: the same Gibbs skeleton as the forest sampler with
// every mean function replaced by x'beta under a N(0, prior_variance * I)
// prior (design includes an intercept). Probit latent steps are unchanged.
struct ParametricChainConfig {
    int n_iter = 10000;
    int burn_in = 5000;
    int thin = 1;
    std::uint64_t seed = 0;
    double a0 = 0.001;
    double b0 = 0.001;
    double prior_variance = 100.0;

    void check() const;
};

struct ParametricState {
    std::vector<std::uint8_t> strata;
    std::vector<ObservedGroup> groups;
    std::vector<double> z;
    std::vector<double> w;
    std::vector<double> y_int;
    OutcomeScaler scaler;
    // Coefficient vectors are length n_covariates + 1 (intercept first).
    std::vector<double> beta_111, beta_110, beta_101, beta_z, beta_w;
    double sigma2_111 = 1.0, sigma2_110 = 1.0, sigma2_101 = 1.0;
    int iteration = 0;
};

// Draws coefficients from the conjugate normal full conditional for the
// regression of response[u] on [1, x_u] over `subset` with noise variance
// sigma2. An empty subset yields a draw from the prior.
std::vector<double> draw_linear_coefficients(const TrialDataset& ds, const std::vector<int>& subset,
                                             const std::vector<double>& response, double sigma2,
                                             double prior_variance, Rng& rng);

// Linear predictor x_i'beta evaluated at every unit.
std::vector<double> linear_values(const TrialDataset& ds, const std::vector<double>& beta);

PosteriorDraws run_chain_parametric(const TrialDataset& ds, const ParametricChainConfig& config,
                                    int chain_id = 0);

}  // namespace sacebart
