#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "sacebart/dataset.hpp"
#include "sacebart/sampler.hpp"

namespace sacebart {

// Per-draw, per-unit survivor effect m111(X_i) - m110(X_i), row-major by
// draw; column order matches dataset row order.
struct CsaceDraws {
    std::size_t n_units = 0;
    std::size_t n_retained = 0;
    std::vector<double> delta;

    double at(std::size_t r, std::size_t i) const { return delta[r * n_units + i]; }
};

CsaceDraws csace_draws(const PosteriorDraws& draws);

struct SaceDraws {
    std::vector<double> values;   // one per retained draw with >= 1 always-survivor
    std::size_t n_skipped = 0;    // draws with no always-survivors
};

SaceDraws sace_draws(const PosteriorDraws& draws);

struct SaceSummary {
    double mean = 0.0;
    double sd = 0.0;
    double q025 = 0.0;
    double median = 0.0;
    double q975 = 0.0;
    std::size_t n_draws = 0;
    std::size_t n_skipped = 0;
};

SaceSummary summarize_sace(const SaceDraws& draws);

struct MembershipPosterior {
    std::vector<double> p11, p10, p00;     // per unit, fractions over retained draws
    std::vector<ObservedGroup> groups;
    double marginal_p11 = 0.0;             // mean over units of P(S=11)
};

MembershipPosterior membership_posterior(const PosteriorDraws& draws, const TrialDataset& ds);

// Observed always-survivors plus ambiguous units whose posterior membership
// clears the threshold.
struct LikelySet {
    std::vector<int> units;
    double p = 0.0;
    std::size_t size() const { return units.size(); }
};

LikelySet likely_survivor_set(const MembershipPosterior& membership, double p);

// Largest grid p whose likely-set share of the sample is closest to the
// marginal always-survivor proportion.
double choose_p(const MembershipPosterior& membership);

// |mean_a - mean_b| / sqrt((var_a + var_b)/2). Zero pooled variance yields 0
// for equal means and +inf (the degeneracy flag) otherwise.
double asd(const std::vector<double>& sample_a, const std::vector<double>& sample_b);

struct BalanceRow {
    std::string name;
    double likely_mean = 0.0;       // direct covariate mean over the likely set
    double latent_s11_mean = 0.0;   // posterior mean of per-draw always-survivor means
    double asd_likely_vs_latent = 0.0;
    double mean_s11 = 0.0, mean_s10 = 0.0, mean_s00 = 0.0;
    double max_pairwise_asd = 0.0;  // posterior mean of the per-draw max across strata pairs
};

struct BalanceReport {
    std::vector<BalanceRow> rows;
    // Draws skipped because a stratum was empty (per stratum, and for the
    // pairwise statistic which needs all three populated).
    std::size_t skipped_s11 = 0, skipped_s10 = 0, skipped_s00 = 0, skipped_pairwise = 0;
};

BalanceReport balance_report(const PosteriorDraws& draws, const LikelySet& likely,
                             const TrialDataset& ds);

// H(u): average over likely units of the fraction of draws at or below u.
double csace_cdf(const CsaceDraws& csace, const LikelySet& likely, double u);

struct KdeBandwidth {
    double lambda = 0.0;
    bool spike_fallback = false;  // all draws identical; a narrow fixed width is used
};

// 0.9 * min(sd, iqr) / (1.34 * n^(1/5)), with the spike fallback applied
// when that is not positive.
KdeBandwidth kde_bandwidth_from(double sd_hat, double iqr_hat, std::size_t n11);

KdeBandwidth kde_bandwidth(const CsaceDraws& csace, const LikelySet& likely);

// h(u) on the grid: Gaussian kernel mixture over every (draw, likely unit).
std::vector<double> csace_density(const CsaceDraws& csace, const LikelySet& likely,
                                  const std::vector<double>& grid);

std::vector<double> default_density_grid(const CsaceDraws& csace, const LikelySet& likely,
                                         std::size_t n_points = 512);

struct DifferentialEffects {
    std::vector<int> units;      // likely-set units, in set order
    std::vector<double> d;       // P(delta_i <= likely-set average)
    std::vector<double> d_star;  // max(1-2D, 2D-1)
    // Fractions of likely units past each evidence band.
    double share_above_09 = 0.0, share_above_08 = 0.0, share_above_07 = 0.0;
};

// per_draw_reference=true compares each unit's draw against that draw's
// likely-set average; false compares against the fixed posterior mean of
// those averages.
DifferentialEffects differential_effects(const CsaceDraws& csace, const LikelySet& likely,
                                         bool per_draw_reference = true);

struct BenefitProbabilities {
    std::vector<int> units;         // likely-set units, in set order
    std::vector<double> q;          // per-unit P(delta_i < 0)
    std::vector<double> q_draws;    // per-draw fraction of likely units with delta < 0
    std::vector<double> thresholds;
    std::vector<double> share_above;  // fraction of likely units with q_i > threshold
};

BenefitProbabilities benefit_probabilities(const CsaceDraws& csace, const LikelySet& likely,
                                           const std::vector<double>& thresholds = {0.99, 0.95,
                                                                                    0.90, 0.80});

}  // namespace sacebart
