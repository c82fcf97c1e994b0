#include "sacebart/bart.hpp"

#include <algorithm>
#include <cmath>

#include "sacebart/errors.hpp"
#include "sacebart/math.hpp"

namespace sacebart {

void BartConfig::check() const {
    if (!(tau >= 0.0 && tau < 1.0)) throw UsageError("BartConfig: tau must be in [0,1)");
    if (!(gamma >= 0.0)) throw UsageError("BartConfig: gamma must be >= 0");
    if (!(w > 0.0)) throw UsageError("BartConfig: w must be > 0");
    if (num_trees < 1) throw UsageError("BartConfig: num_trees must be >= 1");
    const double s = p_grow + p_prune + p_change;
    if (p_grow < 0.0 || p_prune < 0.0 || p_change < 0.0 || std::fabs(s - 1.0) > 1e-12)
        throw UsageError("BartConfig: move probabilities must be a simplex");
}

double split_probability(int depth, const BartConfig& config) {
    if (depth < 0) throw UsageError("split_probability: depth must be >= 0");
    return config.tau * std::pow(1.0 + static_cast<double>(depth), -config.gamma);
}

int Tree::alloc_node() {
    if (!free_slots_.empty()) {
        const int idx = free_slots_.back();
        free_slots_.pop_back();
        nodes_[idx] = TreeNode{};
        return idx;
    }
    nodes_.push_back(TreeNode{});
    return static_cast<int>(nodes_.size()) - 1;
}

int Tree::n_leaves() const {
    int c = 0;
    for (const TreeNode& nd : nodes_)
        if (nd.in_use && nd.is_leaf()) ++c;
    return c;
}

int Tree::max_depth() const {
    int d = 0;
    for (const TreeNode& nd : nodes_)
        if (nd.in_use) d = std::max(d, nd.depth);
    return d;
}

std::vector<int> Tree::leaf_indices() const {
    std::vector<int> out;
    for (int i = 0; i < slab_size(); ++i)
        if (nodes_[i].in_use && nodes_[i].is_leaf()) out.push_back(i);
    return out;
}

std::vector<int> Tree::nog_indices() const {
    std::vector<int> out;
    for (int i = 0; i < slab_size(); ++i) {
        const TreeNode& nd = nodes_[i];
        if (nd.in_use && !nd.is_leaf() && nodes_[nd.left].is_leaf() && nodes_[nd.right].is_leaf())
            out.push_back(i);
    }
    return out;
}

std::array<int, 2> Tree::grow(int leaf_idx, int var, double cut) {
    TreeNode& parent_probe = nodes_[leaf_idx];
    if (!parent_probe.in_use || !parent_probe.is_leaf()) throw DataError("grow: target is not a leaf");
    const int l = alloc_node();
    const int r = alloc_node();
    TreeNode& parent = nodes_[leaf_idx];  // alloc_node may reallocate the slab
    parent.left = l;
    parent.right = r;
    parent.var = var;
    parent.cut = cut;
    nodes_[l].parent = leaf_idx;
    nodes_[r].parent = leaf_idx;
    nodes_[l].depth = parent.depth + 1;
    nodes_[r].depth = parent.depth + 1;
    return {l, r};
}

void Tree::prune(int nog_idx) {
    TreeNode& nd = nodes_[nog_idx];
    if (nd.is_leaf() || !nodes_[nd.left].is_leaf() || !nodes_[nd.right].is_leaf())
        throw DataError("prune: target has grandchildren");
    nodes_[nd.left].in_use = false;
    nodes_[nd.right].in_use = false;
    free_slots_.push_back(nd.right);
    free_slots_.push_back(nd.left);
    nd.left = -1;
    nd.right = -1;
    nd.var = -1;
    nd.leaf = 0.0;
}

int Tree::route_unit(const double* x_colmajor, int n, int unit) const {
    int idx = 0;
    const TreeNode* nd = &nodes_[idx];
    while (!nd->is_leaf()) {
        idx = x_colmajor[static_cast<std::size_t>(nd->var) * n + unit] <= nd->cut ? nd->left
                                                                                  : nd->right;
        nd = &nodes_[idx];
    }
    return idx;
}

int Tree::route_row(const double* xrow, int k) const {
    int idx = 0;
    const TreeNode* nd = &nodes_[idx];
    while (!nd->is_leaf()) {
        if (nd->var >= k) throw DataError("route_row: split variable index exceeds row length");
        idx = xrow[nd->var] <= nd->cut ? nd->left : nd->right;
        nd = &nodes_[idx];
    }
    return idx;
}

nlohmann::json Tree::to_json() const {
    // Compact the slab: breadth-first renumbering so free slots never leak
    // into the serialized form.
    std::vector<int> order;
    std::vector<int> remap(nodes_.size(), -1);
    order.push_back(0);
    for (std::size_t q = 0; q < order.size(); ++q) {
        const TreeNode& nd = nodes_[order[q]];
        if (!nd.is_leaf()) {
            order.push_back(nd.left);
            order.push_back(nd.right);
        }
    }
    for (std::size_t i = 0; i < order.size(); ++i) remap[order[i]] = static_cast<int>(i);
    nlohmann::json nodes = nlohmann::json::array();
    for (int idx : order) {
        const TreeNode& nd = nodes_[idx];
        if (nd.is_leaf())
            nodes.push_back({{"leaf", nd.leaf}});
        else
            nodes.push_back({{"var", nd.var},
                             {"cut", nd.cut},
                             {"left", remap[nd.left]},
                             {"right", remap[nd.right]}});
    }
    return {{"nodes", nodes}};
}

Tree Tree::from_json(const nlohmann::json& j) {
    const auto& nodes = j.at("nodes");
    if (!nodes.is_array() || nodes.empty()) throw DataError("tree: empty node list");
    Tree t;
    t.nodes_.assign(nodes.size(), TreeNode{});
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        const auto& nj = nodes[i];
        TreeNode& nd = t.nodes_[i];
        if (nj.contains("var")) {
            nd.var = nj.at("var").get<int>();
            nd.cut = nj.at("cut").get<double>();
            nd.left = nj.at("left").get<int>();
            nd.right = nj.at("right").get<int>();
            if (nd.left < 0 || nd.right < 0 || nd.left >= static_cast<int>(nodes.size()) ||
                nd.right >= static_cast<int>(nodes.size()))
                throw DataError("tree: child index out of range");
        } else {
            nd.leaf = nj.at("leaf").get<double>();
        }
    }
    // Rebuild parents/depths from structure.
    for (std::size_t i = 0; i < t.nodes_.size(); ++i) {
        TreeNode& nd = t.nodes_[i];
        if (!nd.is_leaf()) {
            t.nodes_[nd.left].parent = static_cast<int>(i);
            t.nodes_[nd.right].parent = static_cast<int>(i);
        }
    }
    for (std::size_t i = 1; i < t.nodes_.size(); ++i) {
        TreeNode& nd = t.nodes_[i];
        if (nd.parent < 0) throw DataError("tree: unreachable node in serialized form");
        nd.depth = t.nodes_[nd.parent].depth + 1;
    }
    return t;
}

nlohmann::json Tree::to_slab_json() const {
    nlohmann::json nodes = nlohmann::json::array();
    for (const TreeNode& nd : nodes_) {
        if (!nd.in_use)
            nodes.push_back(nullptr);
        else if (nd.is_leaf())
            nodes.push_back({{"leaf", nd.leaf}});
        else
            nodes.push_back(
                {{"var", nd.var}, {"cut", nd.cut}, {"left", nd.left}, {"right", nd.right}});
    }
    return {{"nodes", nodes}, {"free", free_slots_}};
}

Tree Tree::from_slab_json(const nlohmann::json& j) {
    const auto& nodes = j.at("nodes");
    if (!nodes.is_array() || nodes.empty()) throw DataError("tree: empty node list");
    if (nodes[0].is_null()) throw DataError("tree: root slot is free");
    Tree t;
    t.nodes_.assign(nodes.size(), TreeNode{});
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        const auto& nj = nodes[i];
        TreeNode& nd = t.nodes_[i];
        if (nj.is_null()) {
            nd.in_use = false;
        } else if (nj.contains("var")) {
            nd.var = nj.at("var").get<int>();
            nd.cut = nj.at("cut").get<double>();
            nd.left = nj.at("left").get<int>();
            nd.right = nj.at("right").get<int>();
            if (nd.left < 0 || nd.right < 0 || nd.left >= static_cast<int>(nodes.size()) ||
                nd.right >= static_cast<int>(nodes.size()))
                throw DataError("tree: child index out of range");
        } else {
            nd.leaf = nj.at("leaf").get<double>();
        }
    }
    // Rebuild parents/depths by traversal: with recycled slots a child index
    // may be lower than its parent's, so ascending-index passes do not work.
    std::vector<int> stack{0};
    while (!stack.empty()) {
        const int idx = stack.back();
        stack.pop_back();
        const TreeNode& nd = t.nodes_[idx];
        if (nd.is_leaf()) continue;
        for (const int c : {nd.left, nd.right}) {
            TreeNode& child = t.nodes_[c];
            if (!child.in_use || child.parent >= 0)
                throw DataError("tree: child slot freed or claimed twice");
            child.parent = idx;
            child.depth = nd.depth + 1;
            stack.push_back(c);
        }
    }
    for (std::size_t i = 1; i < t.nodes_.size(); ++i) {
        const TreeNode& nd = t.nodes_[i];
        if (nd.in_use && nd.parent < 0) throw DataError("tree: unreachable node in serialized form");
    }
    t.free_slots_ = j.at("free").get<std::vector<int>>();
    for (const int s : t.free_slots_) {
        if (s < 0 || s >= t.slab_size() || t.nodes_[s].in_use)
            throw DataError("tree: free list names an in-use slot");
    }
    return t;
}

nlohmann::json Forest::to_json() const {
    nlohmann::json jt = nlohmann::json::array();
    for (const Tree& t : trees) jt.push_back(t.to_json());
    return {{"format", "sacebart-forest"}, {"version", 1}, {"trees", jt}};
}

Forest Forest::from_json(const nlohmann::json& j) {
    if (j.value("format", "") != std::string("sacebart-forest") || j.value("version", 0) != 1)
        throw DataError("forest: unrecognized serialized format");
    Forest f;
    for (const auto& jt : j.at("trees")) f.trees.push_back(Tree::from_json(jt));
    return f;
}

nlohmann::json Forest::to_slab_json() const {
    nlohmann::json jt = nlohmann::json::array();
    for (const Tree& t : trees) jt.push_back(t.to_slab_json());
    return {{"format", "sacebart-forest-slab"}, {"version", 1}, {"trees", jt}};
}

Forest Forest::from_slab_json(const nlohmann::json& j) {
    if (j.value("format", "") != std::string("sacebart-forest-slab") || j.value("version", 0) != 1)
        throw DataError("forest: unrecognized serialized format");
    Forest f;
    for (const auto& jt : j.at("trees")) f.trees.push_back(Tree::from_slab_json(jt));
    return f;
}

double predict(const Forest& forest, const double* xrow, std::size_t k) {
    double s = 0.0;
    for (const Tree& t : forest.trees) s += t.node(t.route_row(xrow, static_cast<int>(k))).leaf;
    return s;
}

double predict(const Forest& forest, const std::vector<double>& xrow) {
    return predict(forest, xrow.data(), xrow.size());
}

double leaf_log_marginal(double n, double sum, double sum_sq, double sigma2, double leaf_var) {
    if (n <= 0.0) return 0.0;
    const double v = 1.0 / (n / sigma2 + 1.0 / leaf_var);
    const double b = sum / sigma2;
    return -0.5 * n * (std::log(sigma2) + 2.0 * kLogSqrt2Pi) - 0.5 * sum_sq / sigma2 +
           0.5 * std::log(v / leaf_var) + 0.5 * v * b * b;
}

ForestSampler::ForestSampler(const double* x_colmajor, std::size_t n, std::size_t k,
                             const BartConfig& config)
    : x_(x_colmajor), n_(n), k_(k), config_(config) {
    config_.check();
    if (n_ == 0 || k_ == 0) throw DataError("ForestSampler: empty covariate matrix");
    forest_.trees.assign(config_.num_trees, Tree{});
    leaf_of_.assign(config_.num_trees, std::vector<int>(n_, 0));
    tree_fit_.assign(config_.num_trees, std::vector<double>(n_, 0.0));
    total_fit_.assign(n_, 0.0);
}

void ForestSampler::set_forest(const Forest& forest) {
    if (static_cast<int>(forest.trees.size()) != config_.num_trees)
        throw DataError("set_forest: tree count differs from configuration");
    forest_ = forest;
    rebuild_caches();
}

void ForestSampler::rebuild_caches() {
    const int nt = config_.num_trees;
    leaf_of_.assign(nt, std::vector<int>(n_, 0));
    tree_fit_.assign(nt, std::vector<double>(n_, 0.0));
    for (int t = 0; t < nt; ++t) {
        const Tree& tree = forest_.trees[t];
        for (std::size_t i = 0; i < n_; ++i) {
            const int leaf = tree.route_unit(x_, static_cast<int>(n_), static_cast<int>(i));
            leaf_of_[t][i] = leaf;
            tree_fit_[t][i] = tree.node(leaf).leaf;
        }
    }
    total_fit_.assign(n_, 0.0);
    for (std::size_t i = 0; i < n_; ++i) {
        double s = 0.0;
        for (int t = 0; t < nt; ++t) s += tree_fit_[t][i];
        total_fit_[i] = s;
    }
}

double ForestSampler::predict_row(const double* xrow, std::size_t k) const {
    return predict(forest_, xrow, k);
}

std::vector<double> ForestSampler::cut_candidates(const std::vector<int>& region_units,
                                                  int var) const {
    std::vector<double> vals;
    vals.reserve(region_units.size());
    const double* col = x_ + static_cast<std::size_t>(var) * n_;
    for (int u : region_units) vals.push_back(col[u]);
    std::sort(vals.begin(), vals.end());
    vals.erase(std::unique(vals.begin(), vals.end()), vals.end());
    if (config_.max_cutpoints > 0 && static_cast<int>(vals.size()) > config_.max_cutpoints) {
        const int m = static_cast<int>(vals.size());
        const int c = config_.max_cutpoints;
        std::vector<double> thin(c);
        for (int i = 0; i < c; ++i)
            thin[i] = vals[static_cast<int>(std::llround(
                static_cast<double>(i) * static_cast<double>(m - 1) / static_cast<double>(c - 1)))];
        thin.erase(std::unique(thin.begin(), thin.end()), thin.end());
        return thin;
    }
    return vals;
}

void ForestSampler::sweep(const std::vector<int>& subset, const double* response_by_unit,
                          double sigma2, Rng& rng) {
    if (!(sigma2 > 0.0) || !std::isfinite(sigma2)) throw NumericError("sweep: sigma2 must be positive and finite");
    for (int t = 0; t < config_.num_trees; ++t)
        update_one_tree(t, subset, response_by_unit, sigma2, rng);
    // Iteration-boundary canonical form: the totals are a pure function of
    // the per-tree fits, summed in tree order, so a checkpoint restore
    // reproduces them bitwise.
    for (std::size_t i = 0; i < n_; ++i) {
        double s = 0.0;
        for (int t = 0; t < config_.num_trees; ++t) s += tree_fit_[t][i];
        total_fit_[i] = s;
    }
}

void ForestSampler::update_one_tree(int t, const std::vector<int>& subset, const double* response,
                                    double sigma2, Rng& rng) {
    Tree& tree = forest_.trees[t];
    std::vector<int>& leaf_of = leaf_of_[t];
    const std::vector<double>& fit = tree_fit_[t];
    const double leaf_var = config_.leaf_prior_variance();

    auto residual = [&](int u) { return response[u] - (total_fit_[u] - fit[u]); };

    std::vector<LeafStats> stats(tree.slab_size());
    for (int u : subset) {
        const double r = residual(u);
        LeafStats& s = stats[leaf_of[u]];
        s.n += 1.0;
        s.sum += r;
        s.sum_sq += r * r;
    }

    auto region_units = [&](int a, int b) {
        std::vector<int> out;
        for (int u : subset)
            if (leaf_of[u] == a || leaf_of[u] == b) out.push_back(u);
        return out;
    };
    auto lml = [&](const LeafStats& s) {
        return leaf_log_marginal(s.n, s.sum, s.sum_sq, sigma2, leaf_var);
    };
    // Structure prior contribution of turning a depth-d leaf into a split
    // with two terminal children.
    auto split_structure_log = [&](int d) {
        const double pd = split_probability(d, config_);
        const double pc = split_probability(d + 1, config_);
        return std::log(pd) + 2.0 * std::log(1.0 - pc) - std::log(1.0 - pd);
    };

    const double u_move = rng.uniform();
    const TreeMove move = u_move < config_.p_grow ? TreeMove::grow
                          : u_move < config_.p_grow + config_.p_prune ? TreeMove::prune
                                                                      : TreeMove::change;
    stats_.proposed[static_cast<int>(move)] += 1;
    bool structure_changed = false;

    if (move == TreeMove::grow) {
        const std::vector<int> leaves = tree.leaf_indices();
        const int target = leaves[rng.uniform_int(static_cast<int>(leaves.size()))];
        const int var = rng.uniform_int(static_cast<int>(k_));
        std::vector<int> region;
        for (int u : subset)
            if (leaf_of[u] == target) region.push_back(u);
        if (!region.empty()) {
            const std::vector<double> cands = cut_candidates(region, var);
            const int pick = rng.uniform_int(static_cast<int>(cands.size()));
            const double cut = cands[pick];
            if (cut != cands.back()) {  // a cut at the max would route nothing right
                const double* col = x_ + static_cast<std::size_t>(var) * n_;
                LeafStats sl, sr;
                for (int u : region) {
                    const double r = residual(u);
                    LeafStats& s = col[u] <= cut ? sl : sr;
                    s.n += 1.0;
                    s.sum += r;
                    s.sum_sq += r * r;
                }
                // Rule prior (uniform var, uniform cut) cancels against the
                // identically distributed proposal draw.
                const TreeNode& tn = tree.node(target);
                int nog_after = static_cast<int>(tree.nog_indices().size()) + 1;
                if (tn.parent >= 0) {
                    const TreeNode& par = tree.node(tn.parent);
                    const int sib = par.left == target ? par.right : par.left;
                    if (tree.node(sib).is_leaf()) nog_after -= 1;  // parent was a nog before
                }
                const double log_alpha = std::log(config_.p_prune) - std::log(config_.p_grow) +
                                         std::log(static_cast<double>(leaves.size())) -
                                         std::log(static_cast<double>(nog_after)) +
                                         split_structure_log(tn.depth) + lml(sl) + lml(sr) -
                                         lml(stats[target]);
                if (std::log(rng.uniform()) < log_alpha) {
                    const std::array<int, 2> ch = tree.grow(target, var, cut);
                    for (std::size_t i = 0; i < n_; ++i)
                        if (leaf_of[i] == target) leaf_of[i] = col[i] <= cut ? ch[0] : ch[1];
                    stats_.accepted[static_cast<int>(move)] += 1;
                    structure_changed = true;
                }
            }
        }
    } else if (move == TreeMove::prune) {
        const std::vector<int> nogs = tree.nog_indices();
        if (!nogs.empty()) {
            const int target = nogs[rng.uniform_int(static_cast<int>(nogs.size()))];
            const TreeNode& tn = tree.node(target);
            const int l = tn.left, r = tn.right;
            LeafStats merged;
            merged.n = stats[l].n + stats[r].n;
            merged.sum = stats[l].sum + stats[r].sum;
            merged.sum_sq = stats[l].sum_sq + stats[r].sum_sq;
            // The reverse-grow rule probability cancels against the rule
            // prior of the removed split (both are uniform over the same
            // candidate set), so neither appears below.
            const double log_alpha =
                std::log(config_.p_grow) - std::log(config_.p_prune) +
                std::log(static_cast<double>(nogs.size())) -
                std::log(static_cast<double>(tree.n_leaves() - 1)) - split_structure_log(tn.depth) +
                lml(merged) - lml(stats[l]) - lml(stats[r]);
            if (std::log(rng.uniform()) < log_alpha) {
                tree.prune(target);
                for (std::size_t i = 0; i < n_; ++i)
                    if (leaf_of[i] == l || leaf_of[i] == r) leaf_of[i] = target;
                stats_.accepted[static_cast<int>(move)] += 1;
                structure_changed = true;
            }
        }
    } else {
        const std::vector<int> nogs = tree.nog_indices();
        if (!nogs.empty()) {
            const int target = nogs[rng.uniform_int(static_cast<int>(nogs.size()))];
            const TreeNode& tn = tree.node(target);
            const int l = tn.left, r = tn.right;
            const int var = rng.uniform_int(static_cast<int>(k_));
            const std::vector<int> region = region_units(l, r);
            if (!region.empty()) {
                const std::vector<double> cands = cut_candidates(region, var);
                const int pick = rng.uniform_int(static_cast<int>(cands.size()));
                const double cut = cands[pick];
                if (cut != cands.back()) {
                    const double* col = x_ + static_cast<std::size_t>(var) * n_;
                    LeafStats sl, sr;
                    for (int u : region) {
                        const double rs = residual(u);
                        LeafStats& s = col[u] <= cut ? sl : sr;
                        s.n += 1.0;
                        s.sum += rs;
                        s.sum_sq += rs * rs;
                    }
                    // Rule prior and symmetric rule proposal cancel exactly;
                    // only the children marginal likelihoods remain.
                    const double log_alpha = lml(sl) + lml(sr) - lml(stats[l]) - lml(stats[r]);
                    if (std::log(rng.uniform()) < log_alpha) {
                        TreeNode& mut = tree.node(target);
                        mut.var = var;
                        mut.cut = cut;
                        for (std::size_t i = 0; i < n_; ++i)
                            if (leaf_of[i] == l || leaf_of[i] == r)
                                leaf_of[i] = col[i] <= cut ? l : r;
                        stats_.accepted[static_cast<int>(move)] += 1;
                        structure_changed = true;
                    }
                }
            }
        }
    }

    if (structure_changed) {
        stats.assign(tree.slab_size(), LeafStats{});
        for (int u : subset) {
            const double r = residual(u);
            LeafStats& s = stats[leaf_of[u]];
            s.n += 1.0;
            s.sum += r;
            s.sum_sq += r * r;
        }
    }

    // Conjugate Gibbs draw of every leaf value; empty leaves fall back to the
    // prior.  Slab order keeps the draw sequence deterministic.
    for (int idx = 0; idx < tree.slab_size(); ++idx) {
        TreeNode& nd = tree.node(idx);
        if (!nd.in_use || !nd.is_leaf()) continue;
        const LeafStats& s = stats[idx];
        const double v = 1.0 / (s.n / sigma2 + 1.0 / leaf_var);
        const double mean = v * s.sum / sigma2;
        nd.leaf = mean + std::sqrt(v) * rng.normal();
    }

    std::vector<double>& fitm = tree_fit_[t];
    for (std::size_t i = 0; i < n_; ++i) {
        const double nv = tree.node(leaf_of[i]).leaf;
        total_fit_[i] += nv - fitm[i];
        fitm[i] = nv;
    }
}

}  // namespace sacebart
