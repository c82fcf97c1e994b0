#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "sacebart/dataset.hpp"
#include "sacebart/estimands.hpp"

#include "json.hpp"

namespace sacebart {

struct CartParams {
    std::size_t min_leaf = 20;
    int max_depth = 4;
    // Minimum SSE reduction for a split, as a fraction of the root SST.
    double min_improvement = 0.01;

    void check() const;
};

struct CartNode {
    int var = -1;       // dataset covariate column of the split
    double cut = 0.0;   // x <= cut goes left
    int left = -1, right = -1;
    double mean = 0.0;  // mean response over the node's units
    std::size_t count = 0;
    int depth = 0;
    bool is_leaf() const { return left < 0; }
};

struct RegressionTree {
    std::vector<CartNode> nodes;   // node 0 is the root
    std::vector<int> var_columns;  // dataset columns the tree was fit on

    std::vector<int> leaf_ids() const;
    // Routes a unit by its dataset row; thresholds are in the scale the tree
    // was fit on, so `ds` must be that same dataset.
    int leaf_of(const TrialDataset& ds, int unit) const;
    double sse(const std::vector<double>& y, const std::vector<int>& leaf_assign) const;
};

// Greedy SSE-minimizing CART of y on the given covariate columns over
// `units`. Ties in (variable, cutpoint) resolve to the lowest column, then
// the smallest cut.
RegressionTree fit_cart(const std::vector<double>& y, const TrialDataset& ds,
                        const std::vector<int>& units, const std::vector<int>& columns,
                        const CartParams& params);

struct LeafEffect {
    int node = -1;
    std::size_t count = 0;
    double fit_mean = 0.0;   // leaf mean of per-unit posterior-mean effects
    double post_mean = 0.0;  // mean of per-draw leaf means
    double q025 = 0.0, q975 = 0.0;
};

struct LeafContrast {
    int node_a = -1, node_b = -1;
    double mean = 0.0, q025 = 0.0, q975 = 0.0;
};

struct LeafProjection {
    std::vector<int> leaf_nodes;
    std::vector<double> per_draw_means;  // row-major: n_retained x leaf count
    std::vector<LeafEffect> effects;
    std::vector<LeafContrast> contrasts;
};

LeafProjection project_posterior(const CsaceDraws& csace, const LikelySet& likely,
                                 const RegressionTree& tree, const TrialDataset& ds);

struct StandardizedCoefficient {
    std::string name;
    double value = 0.0;  // coefficient with unit-variance response and covariate
};

struct SubgroupParams {
    CartParams cart;
    double stepwise_min_gain = 0.01;
};

struct SubgroupReport {
    RegressionTree tree;
    std::vector<int> selected_columns;       // dataset columns, selection order
    std::vector<std::string> selected_names;
    std::vector<double> r2_trajectory;       // R^2 after each accepted covariate
    double final_r2 = 0.0;
    bool constant_response = false;
    bool no_moderation = false;              // nothing cleared the first-step gain
    LeafProjection projection;
    std::vector<StandardizedCoefficient> linear_summary;  // sorted by |value|, descending
    // The spec the tree's thresholds refer to (covariates may have been
    // standardized internally); used to report cuts in natural units.
    CovariateSpec spec_used;
};

// Forward stepwise "fit-the-fit": regress per-unit posterior-mean effects on
// covariates via CART, adding the covariate with the largest R^2 gain until
// the gain drops below stepwise_min_gain. Covariates are standardized
// internally when the dataset is not already standardized.
SubgroupReport stepwise_fit_the_fit(const CsaceDraws& csace, const LikelySet& likely,
                                    const TrialDataset& ds, const SubgroupParams& params);

// JSON form of a report: selection trajectory, the tree with cuts in both
// natural and fitted units, leaf effects, contrasts, and the standardized
// linear summary.  Shared by the file commands and the language bindings.
nlohmann::json report_json(const SubgroupReport& report);

}  // namespace sacebart
