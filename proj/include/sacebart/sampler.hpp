#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "sacebart/bart.hpp"
#include "sacebart/bart_regression.hpp"
#include "sacebart/dataset.hpp"
#include "sacebart/rng.hpp"

#include "json.hpp"

namespace sacebart {

// Principal strata under monotonicity: never-survivor, protected,
// always-survivor.  The harmed stratum is excluded by assumption.
enum Stratum : std::uint8_t { s00 = 0, s10 = 1, s11 = 2 };

struct ChainConfig {
    int n_iter = 10000;
    int burn_in = 5000;
    int thin = 1;
    std::uint64_t seed = 0;
    double a0 = 0.001;  // inverse-gamma shape hyperparameter
    double b0 = 0.001;  // inverse-gamma rate hyperparameter
    BartConfig bart;    // shared by all five forests

    // Warm-start controls (initialization only).
    int init_iters = 100;
    int init_retry_cap = 100;

    // Runtime-only fields, excluded from output metadata echoes.
    int checkpoint_every = 0;  // iterations between checkpoints; 0 = off
    std::string checkpoint_path;

    void check() const;
};

// Retained posterior draws, row-major over iterations.  m-evaluations and
// variances are on the original outcome scale.
struct PosteriorDraws {
    std::size_t n_units = 0;
    std::size_t n_retained = 0;
    std::vector<std::uint8_t> strata;  // n_retained x n_units
    std::vector<double> m111;          // n_retained x n_units
    std::vector<double> m110;          // n_retained x n_units
    std::vector<double> sigma2;        // n_retained x 3, order (111, 110, 101)
    nlohmann::json meta;

    std::uint8_t stratum(std::size_t r, std::size_t i) const { return strata[r * n_units + i]; }
    double m111_at(std::size_t r, std::size_t i) const { return m111[r * n_units + i]; }
    double m110_at(std::size_t r, std::size_t i) const { return m110[r * n_units + i]; }
    double sigma2_at(std::size_t r, int which) const { return sigma2[r * 3 + which]; }
};

// Full Gibbs state.  The forest samplers hold a pointer into the dataset's
// covariate storage, so the dataset must outlive the state.
struct SamplerState {
    std::vector<std::uint8_t> strata;
    std::vector<ObservedGroup> groups;
    std::vector<double> z;      // all units
    std::vector<double> w;      // defined for S in {10,11}, NaN otherwise
    std::vector<double> y_int;  // outcome on the internal scale, NaN for dead
    OutcomeScaler scaler;
    ForestSampler f111, f110, f101, fz, fw;
    double sigma2_111 = 1.0, sigma2_110 = 1.0, sigma2_101 = 1.0;  // internal scale
    int iteration = 0;

    std::vector<int> subset_111() const;  // S=11, T=1, D=1
    std::vector<int> subset_110() const;  // S=11, T=0, D=1 (= observed O(0,1))
    std::vector<int> subset_101() const;  // S=10, T=1, D=1
    std::vector<int> subset_w() const;    // S in {10, 11}
};

// Stratum probabilities under the adopted nested-probit convention.
std::array<double, 3> strata_probabilities(double mz, double mw);

SamplerState initialize(const TrialDataset& ds, const ChainConfig& config, Rng& rng);
void update_variances(SamplerState& state, const TrialDataset& ds, const ChainConfig& config,
                      Rng& rng);
void impute_strata(SamplerState& state, const TrialDataset& ds, Rng& rng);
void sample_latents(SamplerState& state, const TrialDataset& ds, Rng& rng);
void gibbs_iteration(SamplerState& state, const TrialDataset& ds, const ChainConfig& config,
                     Rng& rng);

PosteriorDraws run_chain(const TrialDataset& ds, const ChainConfig& config, int chain_id = 0);
// Continues a checkpointed chain to completion; the resulting draws are
// bitwise identical to an uninterrupted run with the same config and seed.
PosteriorDraws resume_chain(const TrialDataset& ds, const ChainConfig& config,
                            const std::string& checkpoint_path, int chain_id = 0);

struct CvCell {
    double w = 0.0;
    int num_trees = 0;
    double rmse = 0.0;
};
struct CvResult {
    std::vector<CvCell> table;
    double best_w = 0.0;
    int best_num_trees = 0;
};

// K-fold cross-validated (w, J) selection: standalone BART regression of
// observed survivor outcomes on covariates, scored by held-out RMSE averaged
// over folds.  Ties break to the smallest J, then the smallest w.
CvResult cross_validate(const TrialDataset& ds, const std::vector<double>& w_grid,
                        const std::vector<int>& j_grid, int folds, std::uint64_t seed,
                        const BartConfig& base, int cv_iters = 400, int cv_burn = 200,
                        double a0 = 0.001, double b0 = 0.001);

namespace detail {

// Shared mixture-augmentation steps, parameterized by plain mean-value
// arrays so both the sum-of-trees and the linear chains use the same code.
void impute_strata_values(std::vector<std::uint8_t>& strata,
                          const std::vector<ObservedGroup>& groups,
                          const std::vector<double>& y_int, const std::vector<double>& mz,
                          const std::vector<double>& mw, const std::vector<double>& m111,
                          const std::vector<double>& m101, double sigma2_111, double sigma2_101,
                          Rng& rng);
void sample_latent_values(const std::vector<std::uint8_t>& strata, std::vector<double>& z,
                          std::vector<double>& w, const std::vector<double>& mz,
                          const std::vector<double>& mw, Rng& rng);
double variance_update(const std::vector<int>& subset, const std::vector<double>& y_int,
                       const std::vector<double>& m_values, double a0, double b0, Rng& rng);
std::vector<int> stratum_treatment_subset(const std::vector<std::uint8_t>& strata,
                                          const TrialDataset& ds, Stratum s, int treat_arm);

// Initial strata with the deterministic cells pinned and ambiguous cells
// randomized; enforces non-empty (11,1) and (10,1) cells when O(1,1) exists.
std::vector<std::uint8_t> initial_strata(const TrialDataset& ds,
                                         const std::vector<ObservedGroup>& groups, int retry_cap,
                                         Rng& rng);

// Probit GLM linear predictor via iteratively reweighted least squares;
// returns fitted values at all units, or all-zero on non-convergence.
std::vector<double> probit_glm_values(const TrialDataset& ds, const std::vector<int>& subset,
                                      const std::vector<int>& response01);

nlohmann::json chain_meta(const TrialDataset& ds, const ChainConfig& config, int chain_id,
                          const std::string& model);

}  // namespace detail

}  // namespace sacebart
