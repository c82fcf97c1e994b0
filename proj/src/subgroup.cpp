#include "sacebart/subgroup.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>

#include <Eigen/Dense>

#include "sacebart/errors.hpp"
#include "sacebart/math.hpp"

namespace sacebart {

void CartParams::check() const {
    if (min_leaf < 1) throw UsageError("CartParams: min_leaf must be >= 1");
    if (max_depth < 0) throw UsageError("CartParams: max_depth must be >= 0");
    if (!(min_improvement >= 0.0)) throw UsageError("CartParams: min_improvement must be >= 0");
}

std::vector<int> RegressionTree::leaf_ids() const {
    std::vector<int> out;
    for (std::size_t i = 0; i < nodes.size(); ++i)
        if (nodes[i].is_leaf()) out.push_back(static_cast<int>(i));
    return out;
}

int RegressionTree::leaf_of(const TrialDataset& ds, int unit) const {
    int node = 0;
    while (!nodes[node].is_leaf()) {
        const CartNode& nd = nodes[node];
        node = ds.x(unit, static_cast<std::size_t>(nd.var)) <= nd.cut ? nd.left : nd.right;
    }
    return node;
}

double RegressionTree::sse(const std::vector<double>& y,
                           const std::vector<int>& leaf_assign) const {
    double total = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        const double r = y[i] - nodes[leaf_assign[i]].mean;
        total += r * r;
    }
    return total;
}

namespace {

double sse_of(const std::vector<double>& y, const std::vector<int>& idx) {
    double sum = 0.0;
    for (int i : idx) sum += y[i];
    const double mean = sum / static_cast<double>(idx.size());
    double sse = 0.0;
    for (int i : idx) {
        const double r = y[i] - mean;
        sse += r * r;
    }
    return sse;
}

struct BestSplit {
    bool found = false;
    int column = -1;  // dataset column
    double cut = 0.0;
    double children_sse = 0.0;
};

// Scans columns in ascending order and cutpoints in ascending order; only a
// strictly smaller child SSE replaces the incumbent, so ties resolve to the
// lowest column and smallest cut.
BestSplit best_split(const std::vector<double>& y, const TrialDataset& ds,
                     const std::vector<int>& units, const std::vector<int>& idx,
                     const std::vector<int>& columns, std::size_t min_leaf) {
    BestSplit best;
    best.children_sse = std::numeric_limits<double>::infinity();
    const std::size_t m = idx.size();
    if (m < 2 * min_leaf) return best;

    std::vector<std::pair<double, int>> order(m);  // (x value, idx position)
    for (int col : columns) {
        for (std::size_t r = 0; r < m; ++r)
            order[r] = {ds.x(units[idx[r]], static_cast<std::size_t>(col)), idx[r]};
        std::sort(order.begin(), order.end());

        double left_sum = 0.0, left_sq = 0.0;
        double total_sum = 0.0, total_sq = 0.0;
        for (std::size_t r = 0; r < m; ++r) {
            total_sum += y[order[r].second];
            total_sq += y[order[r].second] * y[order[r].second];
        }
        for (std::size_t r = 0; r + 1 < m; ++r) {
            const double yi = y[order[r].second];
            left_sum += yi;
            left_sq += yi * yi;
            if (order[r].first == order[r + 1].first) continue;  // not a boundary
            const std::size_t nl = r + 1, nr = m - nl;
            if (nl < min_leaf || nr < min_leaf) continue;
            const double right_sum = total_sum - left_sum;
            const double right_sq = total_sq - left_sq;
            const double sse = (left_sq - left_sum * left_sum / static_cast<double>(nl)) +
                               (right_sq - right_sum * right_sum / static_cast<double>(nr));
            if (sse < best.children_sse) {
                best.found = true;
                best.column = col;
                best.cut = 0.5 * (order[r].first + order[r + 1].first);
                best.children_sse = sse;
            }
        }
    }
    return best;
}

}  // namespace

RegressionTree fit_cart(const std::vector<double>& y, const TrialDataset& ds,
                        const std::vector<int>& units, const std::vector<int>& columns,
                        const CartParams& params) {
    params.check();
    if (units.empty()) throw DataError("fit_cart: no units");
    if (y.size() != units.size()) throw UsageError("fit_cart: response length mismatch");

    RegressionTree tree;
    tree.var_columns = columns;
    std::vector<int> root_idx(units.size());
    std::iota(root_idx.begin(), root_idx.end(), 0);
    const double sst_root = sse_of(y, root_idx);

    CartNode root;
    root.count = units.size();
    root.mean = mean_of(y);
    tree.nodes.push_back(root);

    // Depth-first expansion; each frame owns its node's unit positions.
    struct Frame {
        int node;
        std::vector<int> idx;
    };
    std::vector<Frame> stack;
    stack.push_back({0, std::move(root_idx)});
    while (!stack.empty()) {
        Frame frame = std::move(stack.back());
        stack.pop_back();
        CartNode& node = tree.nodes[frame.node];
        if (node.depth >= params.max_depth) continue;
        if (frame.idx.size() < 2 * params.min_leaf) continue;

        const double parent_sse = sse_of(y, frame.idx);
        const BestSplit split =
            best_split(y, ds, units, frame.idx, columns, params.min_leaf);
        if (!split.found) continue;
        const double gain = parent_sse - split.children_sse;
        if (!(gain > 0.0) || gain < params.min_improvement * sst_root) continue;

        std::vector<int> left_idx, right_idx;
        for (int i : frame.idx) {
            if (ds.x(units[i], static_cast<std::size_t>(split.column)) <= split.cut)
                left_idx.push_back(i);
            else
                right_idx.push_back(i);
        }
        CartNode left, right;
        left.depth = right.depth = node.depth + 1;
        left.count = left_idx.size();
        right.count = right_idx.size();
        double lsum = 0.0, rsum = 0.0;
        for (int i : left_idx) lsum += y[i];
        for (int i : right_idx) rsum += y[i];
        left.mean = lsum / static_cast<double>(left_idx.size());
        right.mean = rsum / static_cast<double>(right_idx.size());

        node.var = split.column;
        node.cut = split.cut;
        node.left = static_cast<int>(tree.nodes.size());
        node.right = node.left + 1;
        const int left_id = node.left, right_id = node.right;
        tree.nodes.push_back(left);
        tree.nodes.push_back(right);
        stack.push_back({right_id, std::move(right_idx)});
        stack.push_back({left_id, std::move(left_idx)});
    }
    return tree;
}

LeafProjection project_posterior(const CsaceDraws& csace, const LikelySet& likely,
                                 const RegressionTree& tree, const TrialDataset& ds) {
    if (likely.units.empty()) throw DataError("project_posterior: empty likely set");
    if (csace.n_retained == 0) throw DataError("project_posterior: no retained draws");

    LeafProjection proj;
    proj.leaf_nodes = tree.leaf_ids();
    const std::size_t n_leaves = proj.leaf_nodes.size();
    std::vector<int> leaf_slot(tree.nodes.size(), -1);
    for (std::size_t l = 0; l < n_leaves; ++l) leaf_slot[proj.leaf_nodes[l]] = static_cast<int>(l);

    const std::size_t n11 = likely.units.size();
    std::vector<int> slot_of(n11);
    std::vector<std::size_t> leaf_count(n_leaves, 0);
    for (std::size_t u = 0; u < n11; ++u) {
        slot_of[u] = leaf_slot[tree.leaf_of(ds, likely.units[u])];
        leaf_count[slot_of[u]] += 1;
    }
    for (std::size_t l = 0; l < n_leaves; ++l)
        if (leaf_count[l] == 0) throw DataError("project_posterior: a leaf covers no likely unit");

    const std::size_t nr = csace.n_retained;
    proj.per_draw_means.assign(nr * n_leaves, 0.0);
    for (std::size_t r = 0; r < nr; ++r) {
        double* row = proj.per_draw_means.data() + r * n_leaves;
        for (std::size_t u = 0; u < n11; ++u)
            row[slot_of[u]] += csace.at(r, static_cast<std::size_t>(likely.units[u]));
        for (std::size_t l = 0; l < n_leaves; ++l) row[l] /= static_cast<double>(leaf_count[l]);
    }

    proj.effects.resize(n_leaves);
    std::vector<double> column(nr);
    for (std::size_t l = 0; l < n_leaves; ++l) {
        for (std::size_t r = 0; r < nr; ++r) column[r] = proj.per_draw_means[r * n_leaves + l];
        LeafEffect& e = proj.effects[l];
        e.node = proj.leaf_nodes[l];
        e.count = leaf_count[l];
        e.post_mean = mean_of(column);
        e.q025 = quantile_of(column, 0.025);
        e.q975 = quantile_of(column, 0.975);
        double fit_sum = 0.0;
        for (std::size_t u = 0; u < n11; ++u) {
            if (slot_of[u] != static_cast<int>(l)) continue;
            double unit_mean = 0.0;
            for (std::size_t r = 0; r < nr; ++r)
                unit_mean += csace.at(r, static_cast<std::size_t>(likely.units[u]));
            fit_sum += unit_mean / static_cast<double>(nr);
        }
        e.fit_mean = fit_sum / static_cast<double>(leaf_count[l]);
    }

    std::vector<double> diff(nr);
    for (std::size_t a = 0; a < n_leaves; ++a) {
        for (std::size_t b = a + 1; b < n_leaves; ++b) {
            for (std::size_t r = 0; r < nr; ++r)
                diff[r] = proj.per_draw_means[r * n_leaves + a] -
                          proj.per_draw_means[r * n_leaves + b];
            LeafContrast c;
            c.node_a = proj.leaf_nodes[a];
            c.node_b = proj.leaf_nodes[b];
            c.mean = mean_of(diff);
            c.q025 = quantile_of(diff, 0.025);
            c.q975 = quantile_of(diff, 0.975);
            proj.contrasts.push_back(c);
        }
    }
    return proj;
}

namespace {

std::vector<StandardizedCoefficient> linear_summary_of(const std::vector<double>& y,
                                                       const TrialDataset& ds,
                                                       const std::vector<int>& units,
                                                       const std::vector<int>& columns) {
    std::vector<StandardizedCoefficient> out;
    if (columns.empty()) return out;
    const double sd_y = sample_sd(y);
    if (!(sd_y > 0.0)) return out;
    const std::size_t m = units.size();
    const std::size_t p = columns.size() + 1;

    Eigen::MatrixXd x(m, p);
    Eigen::VectorXd yz(m);
    const double mean_y = mean_of(y);
    for (std::size_t r = 0; r < m; ++r) {
        x(r, 0) = 1.0;
        yz(r) = (y[r] - mean_y) / sd_y;
        for (std::size_t c = 0; c < columns.size(); ++c)
            x(r, c + 1) = ds.x(units[r], static_cast<std::size_t>(columns[c]));
    }
    Eigen::MatrixXd xtx = x.transpose() * x;
    xtx.diagonal().array() += 1e-10;
    const Eigen::VectorXd beta = xtx.llt().solve(x.transpose() * yz);
    if (!beta.allFinite()) return out;
    for (std::size_t c = 0; c < columns.size(); ++c)
        out.push_back({ds.spec.names[columns[c]], beta(c + 1)});
    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
        return std::abs(a.value) > std::abs(b.value);
    });
    return out;
}

}  // namespace

SubgroupReport stepwise_fit_the_fit(const CsaceDraws& csace, const LikelySet& likely,
                                    const TrialDataset& ds, const SubgroupParams& params) {
    params.cart.check();
    if (!(params.stepwise_min_gain >= 0.0))
        throw UsageError("stepwise_fit_the_fit: stepwise_min_gain must be >= 0");
    if (likely.units.empty()) throw DataError("stepwise_fit_the_fit: empty likely set");
    if (csace.n_retained == 0) throw DataError("stepwise_fit_the_fit: no retained draws");

    std::optional<TrialDataset> standardized_copy;
    const TrialDataset* work = &ds;
    if (!ds.spec.standardized) {
        standardized_copy = standardize(ds);
        work = &*standardized_copy;
    }

    const std::size_t n11 = likely.units.size();
    const std::size_t nr = csace.n_retained;
    std::vector<double> y(n11, 0.0);
    for (std::size_t u = 0; u < n11; ++u) {
        for (std::size_t r = 0; r < nr; ++r)
            y[u] += csace.at(r, static_cast<std::size_t>(likely.units[u]));
        y[u] /= static_cast<double>(nr);
    }

    SubgroupReport report;
    report.spec_used = work->spec;
    const double sst = sse_of(y, [&] {
        std::vector<int> all(n11);
        std::iota(all.begin(), all.end(), 0);
        return all;
    }());

    if (!(sst > 0.0)) {
        report.constant_response = true;
        report.tree = fit_cart(y, *work, likely.units, {}, params.cart);
        report.final_r2 = 0.0;
        report.projection = project_posterior(csace, likely, report.tree, *work);
        return report;
    }

    const std::size_t k = work->n_covariates();
    double current_r2 = 0.0;
    report.tree = fit_cart(y, *work, likely.units, {}, params.cart);
    std::vector<bool> used(k, false);
    std::vector<int> all_pos(n11);
    std::iota(all_pos.begin(), all_pos.end(), 0);
    for (;;) {
        double best_r2 = -std::numeric_limits<double>::infinity();
        int best_col = -1;
        RegressionTree best_tree;
        for (std::size_t c = 0; c < k; ++c) {
            if (used[c]) continue;
            std::vector<int> cols = report.selected_columns;
            cols.push_back(static_cast<int>(c));
            RegressionTree candidate = fit_cart(y, *work, likely.units, cols, params.cart);
            std::vector<int> assign(n11);
            for (std::size_t u = 0; u < n11; ++u)
                assign[u] = candidate.leaf_of(*work, likely.units[u]);
            const double r2 = 1.0 - candidate.sse(y, assign) / sst;
            if (r2 > best_r2) {  // ties keep the lowest column
                best_r2 = r2;
                best_col = static_cast<int>(c);
                best_tree = std::move(candidate);
            }
        }
        if (best_col < 0 || best_r2 - current_r2 < params.stepwise_min_gain) {
            if (report.selected_columns.empty()) report.no_moderation = true;
            break;
        }
        used[best_col] = true;
        report.selected_columns.push_back(best_col);
        report.selected_names.push_back(work->spec.names[best_col]);
        report.r2_trajectory.push_back(best_r2);
        report.tree = std::move(best_tree);
        current_r2 = best_r2;
    }
    report.final_r2 = current_r2;
    report.projection = project_posterior(csace, likely, report.tree, *work);
    report.linear_summary = linear_summary_of(y, *work, likely.units, report.selected_columns);
    return report;
}

namespace {

nlohmann::json tree_json(const RegressionTree& tree, int node, const CovariateSpec& spec,
                         const LeafProjection& proj) {
    const CartNode& nd = tree.nodes[node];
    if (nd.is_leaf()) {
        nlohmann::json leaf = {{"leaf", true}, {"count", nd.count}, {"mean", nd.mean}};
        for (const auto& e : proj.effects) {
            if (e.node == node) {
                leaf["post_mean"] = e.post_mean;
                leaf["q025"] = e.q025;
                leaf["q975"] = e.q975;
                break;
            }
        }
        return leaf;
    }
    return {{"var", spec.names[nd.var]},
            {"column", nd.var},
            {"cut", spec.to_original(static_cast<std::size_t>(nd.var), nd.cut)},
            {"cut_standardized", nd.cut},
            {"left", tree_json(tree, nd.left, spec, proj)},
            {"right", tree_json(tree, nd.right, spec, proj)}};
}

}  // namespace

nlohmann::json report_json(const SubgroupReport& report) {
    nlohmann::json j;
    j["selected"] = report.selected_names;
    j["selected_columns"] = report.selected_columns;
    j["r2_trajectory"] = report.r2_trajectory;
    j["final_r2"] = report.final_r2;
    j["constant_response"] = report.constant_response;
    j["no_moderation"] = report.no_moderation;
    j["tree"] = tree_json(report.tree, 0, report.spec_used, report.projection);
    nlohmann::json leaves = nlohmann::json::array();
    for (const auto& e : report.projection.effects)
        leaves.push_back({{"node", e.node},
                          {"count", e.count},
                          {"fit_mean", e.fit_mean},
                          {"post_mean", e.post_mean},
                          {"q025", e.q025},
                          {"q975", e.q975}});
    j["leaves"] = leaves;
    nlohmann::json contrasts = nlohmann::json::array();
    for (const auto& c : report.projection.contrasts)
        contrasts.push_back({{"node_a", c.node_a},
                             {"node_b", c.node_b},
                             {"mean", c.mean},
                             {"q025", c.q025},
                             {"q975", c.q975}});
    j["contrasts"] = contrasts;
    nlohmann::json lin = nlohmann::json::array();
    for (const auto& coef : report.linear_summary)
        lin.push_back({{"name", coef.name}, {"coefficient", coef.value}});
    j["linear_summary"] = lin;
    return j;
}

}  // namespace sacebart
