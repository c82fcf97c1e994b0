#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <vector>

#include "sacebart/rng.hpp"

#include "json.hpp"

namespace sacebart {

struct BartConfig {
    double tau = 0.95;         // split probability scale
    double gamma = 2.0;        // split probability depth decay
    double w = 2.0;            // leaf prior spread control
    int num_trees = 50;        // J
    double p_grow = 0.25;
    double p_prune = 0.25;
    double p_change = 0.50;
    int max_cutpoints = 0;     // 0 = every observed unique value at the node

    // Leaf prior mu ~ Normal(0, (4 w^2 J)^{-1}).
    double leaf_prior_variance() const { return 1.0 / (4.0 * w * w * num_trees); }
    void check() const;
};

// Probability that a node at the given depth splits: tau (1+depth)^{-gamma}.
double split_probability(int depth, const BartConfig& config);

// Nodes live in a slab; children/parent are slab indices, -1 when absent.
// Freed slots are recycled so serialized node order stays deterministic.
struct TreeNode {
    int parent = -1;
    int left = -1;
    int right = -1;
    int var = -1;       // split variable when internal
    double cut = 0.0;   // rule: x[var] <= cut goes left
    double leaf = 0.0;  // leaf value when terminal
    int depth = 0;
    bool in_use = true;

    bool is_leaf() const { return left < 0; }
};

class Tree {
public:
    Tree() { nodes_.push_back(TreeNode{}); }

    const TreeNode& node(int idx) const { return nodes_[idx]; }
    TreeNode& node(int idx) { return nodes_[idx]; }
    int slab_size() const { return static_cast<int>(nodes_.size()); }

    int n_leaves() const;
    int max_depth() const;
    // Ascending slab order for determinism.
    std::vector<int> leaf_indices() const;
    // Internal nodes whose both children are terminal ("no grandchildren").
    std::vector<int> nog_indices() const;

    // Splits the leaf; returns {left, right} slab indices.
    std::array<int, 2> grow(int leaf_idx, int var, double cut);
    // Collapses a no-grandchildren node back to a leaf.
    void prune(int nog_idx);

    // Routes one unit of a column-major matrix with n rows.
    int route_unit(const double* x_colmajor, int n, int unit) const;
    // Routes a contiguous covariate row of length K.
    int route_row(const double* xrow, int k) const;

    nlohmann::json to_json() const;
    static Tree from_json(const nlohmann::json& j);

    // Exact-state form for checkpoints: keeps slab order and the free-slot
    // stack so a restored tree enumerates proposal targets (and recycles
    // slots) identically to the live one.  to_json, by contrast, compacts
    // to canonical breadth-first order.
    nlohmann::json to_slab_json() const;
    static Tree from_slab_json(const nlohmann::json& j);

private:
    std::vector<TreeNode> nodes_;
    std::vector<int> free_slots_;
    int alloc_node();
};

struct Forest {
    std::vector<Tree> trees;

    nlohmann::json to_json() const;
    static Forest from_json(const nlohmann::json& j);

    nlohmann::json to_slab_json() const;
    static Forest from_slab_json(const nlohmann::json& j);
};

// Sum over trees of the leaf value the row routes to.
double predict(const Forest& forest, const double* xrow, std::size_t k);
double predict(const Forest& forest, const std::vector<double>& xrow);

enum class TreeMove { grow = 0, prune = 1, change = 2 };

struct MoveStats {
    std::array<std::uint64_t, 3> proposed{0, 0, 0};
    std::array<std::uint64_t, 3> accepted{0, 0, 0};
    double acceptance_rate(TreeMove m) const {
        const auto i = static_cast<int>(m);
        return proposed[i] == 0 ? 0.0 : static_cast<double>(accepted[i]) / static_cast<double>(proposed[i]);
    }
};

// Integrated likelihood of residuals with the leaf values marginalized out:
// one Normal(0, leaf_var) prior per leaf, additive over leaves.
double leaf_log_marginal(double n, double sum, double sum_sq, double sigma2, double leaf_var);

// Gibbs-updates one sum-of-trees mean function over a fixed covariate matrix.
// Keeps per-tree routing and fit caches for every row of the matrix so that
// training subsets may change between sweeps while predictions stay O(1).
class ForestSampler {
public:
    ForestSampler() = default;
    // x_colmajor must outlive the sampler; column k occupies [k*n, (k+1)*n).
    ForestSampler(const double* x_colmajor, std::size_t n, std::size_t k, const BartConfig& config);

    // One backfitting sweep: every tree gets one Metropolis-Hastings
    // structure step against its partial residuals followed by conjugate
    // draws of all leaf values.  `response_by_unit` is indexed by global unit
    // id; only `subset` entries are read.
    void sweep(const std::vector<int>& subset, const double* response_by_unit, double sigma2,
               Rng& rng);
    // Probit variant: identical sweep with the variance pinned to 1.
    void probit_sweep(const std::vector<int>& subset, const double* latent_by_unit, Rng& rng) {
        sweep(subset, latent_by_unit, 1.0, rng);
    }

    // Current fit at a training row (sum over trees), O(1).
    double value(int unit) const { return total_fit_[unit]; }
    const std::vector<double>& values() const { return total_fit_; }

    // Routes an external row through the current forest.
    double predict_row(const double* xrow, std::size_t k) const;

    const Forest& forest() const { return forest_; }
    const BartConfig& config() const { return config_; }
    const MoveStats& move_stats() const { return stats_; }
    void set_move_stats(const MoveStats& s) { stats_ = s; }
    std::size_t n_units() const { return n_; }

    // Replaces the forest (warm start / checkpoint restore) and rebuilds all
    // routing and fit caches deterministically.
    void set_forest(const Forest& forest);

    // Recomputes per-tree assignments and fits from tree structures alone.
    void rebuild_caches();

private:
    const double* x_ = nullptr;
    std::size_t n_ = 0;
    std::size_t k_ = 0;
    BartConfig config_;
    Forest forest_;
    std::vector<std::vector<int>> leaf_of_;      // tree -> unit -> slab index
    std::vector<std::vector<double>> tree_fit_;  // tree -> unit -> contribution
    std::vector<double> total_fit_;
    MoveStats stats_;

    struct LeafStats {
        double n = 0.0, sum = 0.0, sum_sq = 0.0;
    };

    void update_one_tree(int t, const std::vector<int>& subset, const double* response,
                         double sigma2, Rng& rng);
    std::vector<double> cut_candidates(const std::vector<int>& region_units, int var) const;
};

// Convenience wrapper for the spec'd single-tree update used by tests:
// applies one MH structure step plus leaf draws to tree t of the sampler.
// (Exposed through ForestSampler::sweep with J=1 in normal use.)

}  // namespace sacebart
