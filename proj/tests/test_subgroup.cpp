#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "doctest.h"
#include "sacebart/dataset.hpp"
#include "sacebart/errors.hpp"
#include "sacebart/estimands.hpp"
#include "sacebart/math.hpp"
#include "sacebart/rng.hpp"
#include "sacebart/subgroup.hpp"

using namespace sacebart;

namespace {

TrialDataset covariate_dataset(const std::vector<std::vector<double>>& columns,
                               const std::vector<std::string>& names, bool standardized = false) {
    TrialDataset ds;
    const std::size_t n = columns[0].size();
    ds.spec.names = names;
    ds.spec.kinds.assign(names.size(), CovariateKind::continuous);
    ds.spec.center.assign(names.size(), 0.0);
    ds.spec.scale.assign(names.size(), 1.0);
    ds.spec.standardized = standardized;
    for (std::size_t i = 0; i < n; ++i) {
        ds.ids.push_back("u" + std::to_string(i + 1));
        ds.treat.push_back(0);
        ds.survive.push_back(1);
        ds.outcome.push_back(0.0);
    }
    for (const auto& col : columns) ds.covariates.insert(ds.covariates.end(), col.begin(), col.end());
    return ds;
}

CsaceDraws constant_draws(const std::vector<double>& unit_values, std::size_t n_retained) {
    CsaceDraws c;
    c.n_units = unit_values.size();
    c.n_retained = n_retained;
    for (std::size_t r = 0; r < n_retained; ++r)
        c.delta.insert(c.delta.end(), unit_values.begin(), unit_values.end());
    return c;
}

LikelySet all_units_likely(std::size_t n) {
    LikelySet set;
    set.units.resize(n);
    std::iota(set.units.begin(), set.units.end(), 0);
    set.p = 0.5;
    return set;
}

}  // namespace

TEST_CASE("cart separates a binary moderator exactly") {
    const std::size_t n = 40;
    std::vector<double> x(n), y(n);
    for (std::size_t i = 0; i < n; ++i) {
        x[i] = i % 2 == 0 ? 0.0 : 1.0;
        y[i] = x[i] == 0.0 ? 2.0 : 5.0;
    }
    TrialDataset ds = covariate_dataset({x}, {"flag"});
    std::vector<int> units(n);
    std::iota(units.begin(), units.end(), 0);
    CartParams params;
    params.min_leaf = 5;
    const RegressionTree tree = fit_cart(y, ds, units, {0}, params);

    REQUIRE(tree.nodes.size() == 3);
    CHECK(tree.nodes[0].var == 0);
    CHECK(tree.nodes[0].cut == doctest::Approx(0.5).epsilon(1e-15));  // midpoint rule
    CHECK(tree.nodes[1].mean == doctest::Approx(2.0).epsilon(1e-15));
    CHECK(tree.nodes[2].mean == doctest::Approx(5.0).epsilon(1e-15));
    CHECK(tree.nodes[1].count == 20);
    CHECK(tree.nodes[2].count == 20);

    std::vector<int> assign(n);
    for (std::size_t i = 0; i < n; ++i) assign[i] = tree.leaf_of(ds, static_cast<int>(i));
    CHECK(tree.sse(y, assign) == 0.0);
}

TEST_CASE("constant response never splits") {
    const std::size_t n = 60;
    std::vector<double> x(n), y(n, 3.25);
    for (std::size_t i = 0; i < n; ++i) x[i] = static_cast<double>(i);
    TrialDataset ds = covariate_dataset({x}, {"x1"});
    std::vector<int> units(n);
    std::iota(units.begin(), units.end(), 0);
    CartParams params;
    params.min_leaf = 5;
    const RegressionTree tree = fit_cart(y, ds, units, {0}, params);
    CHECK(tree.nodes.size() == 1);
    CHECK(tree.nodes[0].mean == doctest::Approx(3.25).epsilon(1e-15));
}

TEST_CASE("cart localizes a step and respects leaf-size and depth limits") {
    for (unsigned seed : {1u, 2u, 3u, 4u, 5u, 6u, 7u, 8u, 9u, 10u}) {
        Rng rng(seed);
        const std::size_t n = 300;
        std::vector<double> x(n), y(n);
        for (std::size_t i = 0; i < n; ++i) {
            x[i] = 2.0 * rng.uniform() - 1.0;
            y[i] = x[i] > 0.3 ? 2.0 : 0.0;
        }
        TrialDataset ds = covariate_dataset({x}, {"x1"});
        std::vector<int> units(n);
        std::iota(units.begin(), units.end(), 0);
        CartParams params;
        params.min_leaf = 20;
        const RegressionTree tree = fit_cart(y, ds, units, {0}, params);
        REQUIRE(tree.nodes.size() >= 3);
        CHECK(std::fabs(tree.nodes[0].cut - 0.3) < 0.05);
        for (int leaf : tree.leaf_ids()) {
            CHECK(tree.nodes[leaf].count >= params.min_leaf);
            CHECK(tree.nodes[leaf].depth <= params.max_depth);
        }
    }

    SUBCASE("zero depth forces the root") {
        std::vector<double> x{0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
        std::vector<double> y{0, 0, 0, 0, 0, 5, 5, 5, 5, 5};
        TrialDataset ds = covariate_dataset({x}, {"x1"});
        std::vector<int> units(10);
        std::iota(units.begin(), units.end(), 0);
        CartParams params;
        params.min_leaf = 2;
        params.max_depth = 0;
        CHECK(fit_cart(y, ds, units, {0}, params).nodes.size() == 1);
    }
}

TEST_CASE("split choice is invariant to monotone covariate transforms") {
    Rng rng(14);
    const std::size_t n = 120;
    std::vector<double> x(n), xe(n), y(n);
    for (std::size_t i = 0; i < n; ++i) {
        x[i] = 3.0 * rng.uniform() - 1.5;
        xe[i] = std::exp(x[i]);
        y[i] = (x[i] > 0.4 ? 1.0 : 0.0) + 0.05 * rng.normal();
    }
    TrialDataset raw = covariate_dataset({x}, {"x1"});
    TrialDataset warped = covariate_dataset({xe}, {"x1"});
    std::vector<int> units(n);
    std::iota(units.begin(), units.end(), 0);
    CartParams params;
    params.min_leaf = 15;
    const RegressionTree t_raw = fit_cart(y, raw, units, {0}, params);
    const RegressionTree t_warp = fit_cart(y, warped, units, {0}, params);
    REQUIRE(t_raw.nodes.size() == t_warp.nodes.size());
    // Same partition of units even though the thresholds differ.
    for (std::size_t i = 0; i < n; ++i)
        CHECK(t_raw.leaf_of(raw, static_cast<int>(i)) ==
              t_warp.leaf_of(warped, static_cast<int>(i)));
}

TEST_CASE("split ties break to the lowest column") {
    Rng rng(8);
    const std::size_t n = 80;
    std::vector<double> x(n), y(n);
    for (std::size_t i = 0; i < n; ++i) {
        x[i] = rng.normal();
        y[i] = x[i] > 0.0 ? 1.0 : -1.0;
    }
    TrialDataset ds = covariate_dataset({x, x}, {"a", "b"});  // identical columns
    std::vector<int> units(n);
    std::iota(units.begin(), units.end(), 0);
    CartParams params;
    params.min_leaf = 10;
    const RegressionTree tree = fit_cart(y, ds, units, {0, 1}, params);
    REQUIRE(!tree.nodes[0].is_leaf());
    CHECK(tree.nodes[0].var == 0);
}

TEST_CASE("posterior projection through a root-only tree recovers the set average") {
    Rng rng(6);
    const std::size_t n = 12, nr = 40;
    CsaceDraws c;
    c.n_units = n;
    c.n_retained = nr;
    for (std::size_t r = 0; r < nr; ++r)
        for (std::size_t i = 0; i < n; ++i) c.delta.push_back(rng.normal() + 0.5);
    TrialDataset ds = covariate_dataset({std::vector<double>(n, 0.0)}, {"x1"});
    LikelySet likely = all_units_likely(n);

    RegressionTree root;
    CartNode nd;
    nd.count = n;
    root.nodes.push_back(nd);

    const LeafProjection proj = project_posterior(c, likely, root, ds);
    REQUIRE(proj.leaf_nodes.size() == 1);
    CHECK(proj.contrasts.empty());
    for (std::size_t r = 0; r < nr; ++r) {
        double avg = 0.0;
        for (std::size_t i = 0; i < n; ++i) avg += c.at(r, i);
        avg /= static_cast<double>(n);
        CHECK(proj.per_draw_means[r] == doctest::Approx(avg).epsilon(1e-14));
    }
    CHECK(proj.effects[0].count == n);
}

TEST_CASE("disjoint constant leaves give a degenerate contrast") {
    const std::size_t n = 30;
    std::vector<double> x(n), vals(n);
    for (std::size_t i = 0; i < n; ++i) {
        x[i] = i < 15 ? 0.0 : 1.0;
        vals[i] = i < 15 ? 1.0 : 5.0;
    }
    TrialDataset ds = covariate_dataset({x}, {"flag"});
    const CsaceDraws c = constant_draws(vals, 25);
    LikelySet likely = all_units_likely(n);
    std::vector<double> y(vals);
    std::vector<int> units(n);
    std::iota(units.begin(), units.end(), 0);
    CartParams params;
    params.min_leaf = 5;
    const RegressionTree tree = fit_cart(y, ds, units, {0}, params);
    REQUIRE(tree.nodes.size() == 3);

    const LeafProjection proj = project_posterior(c, likely, tree, ds);
    REQUIRE(proj.contrasts.size() == 1);
    CHECK(proj.contrasts[0].mean == doctest::Approx(-4.0).epsilon(1e-14));
    CHECK(proj.contrasts[0].q025 == doctest::Approx(-4.0).epsilon(1e-14));
    CHECK(proj.contrasts[0].q975 == doctest::Approx(-4.0).epsilon(1e-14));
    CHECK(proj.effects[0].post_mean == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(proj.effects[1].post_mean == doctest::Approx(5.0).epsilon(1e-14));
    CHECK(proj.effects[0].fit_mean == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("projection preserves the grand mean") {
    Rng rng(23);
    const std::size_t n = 90, nr = 30;
    std::vector<double> x(n);
    CsaceDraws c;
    c.n_units = n;
    c.n_retained = nr;
    for (std::size_t i = 0; i < n; ++i) x[i] = rng.normal();
    for (std::size_t r = 0; r < nr; ++r)
        for (std::size_t i = 0; i < n; ++i)
            c.delta.push_back((x[i] > 0 ? 2.0 : -1.0) + 0.3 * rng.normal());
    TrialDataset ds = covariate_dataset({x}, {"x1"});
    LikelySet likely = all_units_likely(n);

    std::vector<double> y(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t r = 0; r < nr; ++r) y[i] += c.at(r, i);
        y[i] /= static_cast<double>(nr);
    }
    std::vector<int> units(n);
    std::iota(units.begin(), units.end(), 0);
    CartParams params;
    params.min_leaf = 10;
    const RegressionTree tree = fit_cart(y, ds, units, {0}, params);
    const LeafProjection proj = project_posterior(c, likely, tree, ds);

    // Size-weighted leaf fit means reproduce the overall mean effect.
    double weighted = 0.0;
    std::size_t total = 0;
    for (const LeafEffect& e : proj.effects) {
        weighted += e.fit_mean * static_cast<double>(e.count);
        total += e.count;
    }
    CHECK(total == n);
    CHECK(weighted / static_cast<double>(n) == doctest::Approx(mean_of(y)).epsilon(1e-10));

    // The same identity holds draw by draw.
    for (std::size_t r = 0; r < nr; ++r) {
        double draw_avg = 0.0;
        for (std::size_t i = 0; i < n; ++i) draw_avg += c.at(r, i);
        draw_avg /= static_cast<double>(n);
        double leaf_weighted = 0.0;
        for (std::size_t l = 0; l < proj.leaf_nodes.size(); ++l)
            leaf_weighted += proj.per_draw_means[r * proj.leaf_nodes.size() + l] *
                             static_cast<double>(proj.effects[l].count);
        CHECK(leaf_weighted / static_cast<double>(n) == doctest::Approx(draw_avg).epsilon(1e-10));
    }
}

TEST_CASE("stepwise search finds a planted moderator and stops") {
    Rng rng(41);
    const std::size_t n = 200, nr = 4;
    std::vector<double> x1(n), x2(n);
    for (std::size_t i = 0; i < n; ++i) {
        x1[i] = 2.0 * rng.uniform() - 1.0;
        x2[i] = rng.normal();
    }
    CsaceDraws c;
    c.n_units = n;
    c.n_retained = nr;
    // Per-draw wobble cancels over the four draws, leaving the step exactly.
    const double wobble[4] = {0.01, -0.01, 0.02, -0.02};
    for (std::size_t r = 0; r < nr; ++r)
        for (std::size_t i = 0; i < n; ++i)
            c.delta.push_back((x1[i] > 0.0 ? 5.0 : 2.0) + wobble[r]);
    TrialDataset ds = covariate_dataset({x1, x2}, {"x1", "x2"});
    LikelySet likely = all_units_likely(n);

    SubgroupParams params;
    params.cart.min_leaf = 20;
    const SubgroupReport rep = stepwise_fit_the_fit(c, likely, ds, params);

    REQUIRE(rep.selected_columns == std::vector<int>{0});
    CHECK(rep.selected_names == std::vector<std::string>{"x1"});
    REQUIRE(rep.r2_trajectory.size() == 1);
    CHECK(rep.final_r2 > 0.99);
    CHECK_FALSE(rep.no_moderation);
    CHECK_FALSE(rep.constant_response);

    REQUIRE(!rep.tree.nodes[0].is_leaf());
    CHECK(rep.tree.nodes[0].var == 0);
    // Thresholds live on the internal standardized scale; translate back.
    const double natural_cut = rep.spec_used.to_original(0, rep.tree.nodes[0].cut);
    CHECK(std::fabs(natural_cut) < 0.05);

    // Leaf effects bracket the two plateau values.
    for (const LeafEffect& e : rep.projection.effects) {
        const bool low = std::fabs(e.post_mean - 2.0) < 0.1;
        const bool high = std::fabs(e.post_mean - 5.0) < 0.1;
        CHECK((low || high));
    }
    REQUIRE(!rep.linear_summary.empty());
    CHECK(rep.linear_summary[0].name == "x1");
}

TEST_CASE("stepwise trajectory is non-decreasing with two moderators") {
    Rng rng(52);
    const std::size_t n = 400;
    std::vector<double> x1(n), x2(n), x3(n);
    std::vector<double> mean_effect(n);
    for (std::size_t i = 0; i < n; ++i) {
        x1[i] = rng.normal();
        x2[i] = rng.normal();
        x3[i] = rng.normal();
        mean_effect[i] = (x1[i] > 0.0 ? 4.0 : 0.0) + (x2[i] > 0.5 ? 1.5 : 0.0);
    }
    const CsaceDraws c = constant_draws(mean_effect, 3);
    TrialDataset ds = covariate_dataset({x1, x2, x3}, {"x1", "x2", "x3"});
    LikelySet likely = all_units_likely(n);

    SubgroupParams params;
    params.cart.min_leaf = 20;
    const SubgroupReport rep = stepwise_fit_the_fit(c, likely, ds, params);

    REQUIRE(rep.selected_columns.size() >= 2);
    CHECK(rep.selected_columns[0] == 0);
    CHECK(rep.selected_columns[1] == 1);
    for (std::size_t s = 1; s < rep.r2_trajectory.size(); ++s)
        CHECK(rep.r2_trajectory[s] >= rep.r2_trajectory[s - 1]);
    CHECK(rep.final_r2 == doctest::Approx(rep.r2_trajectory.back()).epsilon(1e-15));
    CHECK(rep.final_r2 > 0.95);

    // The linear summary ranks the stronger moderator first.
    REQUIRE(rep.linear_summary.size() == 2);
    CHECK(rep.linear_summary[0].name == "x1");
    CHECK(std::fabs(rep.linear_summary[0].value) > std::fabs(rep.linear_summary[1].value));
}

TEST_CASE("stepwise flags the degenerate outcomes") {
    SUBCASE("constant response") {
        const std::size_t n = 50;
        std::vector<double> x(n);
        for (std::size_t i = 0; i < n; ++i) x[i] = static_cast<double>(i);
        const CsaceDraws c = constant_draws(std::vector<double>(n, 2.5), 10);
        TrialDataset ds = covariate_dataset({x}, {"x1"});
        const SubgroupReport rep = stepwise_fit_the_fit(c, all_units_likely(n), ds, SubgroupParams{});
        CHECK(rep.constant_response);
        CHECK(rep.tree.nodes.size() == 1);
        CHECK(rep.final_r2 == 0.0);
        CHECK(rep.projection.effects[0].post_mean == doctest::Approx(2.5).epsilon(1e-14));
    }
    SUBCASE("no admissible split means no moderation") {
        // 39 units with min_leaf 20: every candidate tree is a bare root.
        const std::size_t n = 39;
        Rng rng(3);
        std::vector<double> x(n), vals(n);
        for (std::size_t i = 0; i < n; ++i) {
            x[i] = rng.normal();
            vals[i] = rng.normal();
        }
        const CsaceDraws c = constant_draws(vals, 5);
        TrialDataset ds = covariate_dataset({x}, {"x1"});
        SubgroupParams params;
        params.cart.min_leaf = 20;
        const SubgroupReport rep = stepwise_fit_the_fit(c, all_units_likely(n), ds, params);
        CHECK(rep.no_moderation);
        CHECK(rep.selected_columns.empty());
        CHECK(rep.tree.nodes.size() == 1);
        CHECK(rep.final_r2 == 0.0);
    }
}

TEST_CASE("linear summary recovers standardized coefficients on a linear response") {
    Rng rng(61);
    const std::size_t n = 150;
    std::vector<double> x1(n), x2(n), vals(n);
    for (std::size_t i = 0; i < n; ++i) {
        x1[i] = rng.normal();
        x2[i] = rng.normal();
        vals[i] = 2.0 * x1[i] - 1.0 * x2[i] + 3.0;
    }
    const CsaceDraws c = constant_draws(vals, 6);
    // Mark the dataset standardized so the covariates pass through untouched.
    TrialDataset ds = covariate_dataset({x1, x2}, {"x1", "x2"}, true);
    LikelySet likely = all_units_likely(n);

    SubgroupParams params;
    params.cart.min_leaf = 15;
    const SubgroupReport rep = stepwise_fit_the_fit(c, likely, ds, params);
    REQUIRE(rep.selected_columns.size() == 2);
    REQUIRE(rep.linear_summary.size() == 2);
    CHECK(rep.linear_summary[0].name == "x1");
    CHECK(rep.linear_summary[1].name == "x2");
    // Exact linear response: coefficients scale by 1/sd(y), ratio is exact.
    CHECK(rep.linear_summary[0].value / rep.linear_summary[1].value ==
          doctest::Approx(-2.0).epsilon(1e-6));
    CHECK(rep.linear_summary[0].value > 0.0);
    CHECK(rep.spec_used.standardized);
}
