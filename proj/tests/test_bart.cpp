#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "doctest.h"
#include "sacebart/bart.hpp"
#include "sacebart/bart_regression.hpp"
#include "sacebart/errors.hpp"
#include "sacebart/math.hpp"
#include "sacebart/rng.hpp"

using namespace sacebart;

TEST_CASE("split probability follows the depth decay") {
    BartConfig cfg;
    cfg.tau = 0.95;
    cfg.gamma = 2.0;
    CHECK(split_probability(0, cfg) == doctest::Approx(0.95).epsilon(1e-15));
    CHECK(split_probability(1, cfg) == doctest::Approx(0.95 / 4.0).epsilon(1e-15));
    CHECK(split_probability(2, cfg) == doctest::Approx(0.95 / 9.0).epsilon(1e-15));
    CHECK_THROWS_AS(split_probability(-1, cfg), UsageError);

    BartConfig bad;
    bad.p_grow = 0.5;
    bad.p_prune = 0.5;
    bad.p_change = 0.5;
    CHECK_THROWS_AS(bad.check(), UsageError);
    BartConfig bad_tau;
    bad_tau.tau = 1.0;
    CHECK_THROWS_AS(bad_tau.check(), UsageError);
    CHECK(BartConfig{}.leaf_prior_variance() == doctest::Approx(1.0 / (4.0 * 4.0 * 50.0)));
}

TEST_CASE("leaf marginal likelihood matches numerical integration") {
    // Independent oracle: Simpson quadrature of
    //   integral over mu of prod_i N(r_i; mu, sigma2) * N(mu; 0, leaf_var).
    auto quadrature = [](const std::vector<double>& r, double sigma2, double leaf_var) {
        double n = static_cast<double>(r.size());
        double sum = 0.0;
        for (double v : r) sum += v;
        const double v_post = 1.0 / (n / sigma2 + 1.0 / leaf_var);
        const double center = v_post * sum / sigma2;
        const double half = 14.0 * std::sqrt(v_post);
        const int m = 40000;  // even
        const double h = 2.0 * half / m;
        auto logf = [&](double mu) {
            double lf = log_norm_pdf(mu, 0.0, leaf_var);
            for (double v : r) lf += log_norm_pdf(v, mu, sigma2);
            return lf;
        };
        double peak = logf(center);
        double acc = 0.0;
        for (int i = 0; i <= m; ++i) {
            const double mu = center - half + i * h;
            const double wgt = (i == 0 || i == m) ? 1.0 : (i % 2 == 1 ? 4.0 : 2.0);
            acc += wgt * std::exp(logf(mu) - peak);
        }
        return peak + std::log(acc * h / 3.0);
    };

    auto stats = [](const std::vector<double>& r) {
        double s = 0.0, ss = 0.0;
        for (double v : r) { s += v; ss += v * v; }
        return std::pair<double, double>(s, ss);
    };

    {
        std::vector<double> r{0.3, -0.1, 0.25, 0.05, -0.4, 0.2, 0.1};
        auto [s, ss] = stats(r);
        CHECK(leaf_log_marginal(7.0, s, ss, 0.8, 0.05) ==
              doctest::Approx(quadrature(r, 0.8, 0.05)).epsilon(1e-9));
    }
    {
        std::vector<double> r{1.7};
        auto [s, ss] = stats(r);
        CHECK(leaf_log_marginal(1.0, s, ss, 2.0, 1.0) ==
              doctest::Approx(quadrature(r, 2.0, 1.0)).epsilon(1e-9));
    }
    {
        Rng rng(3);
        std::vector<double> r;
        for (int i = 0; i < 25; ++i) r.push_back(0.1 * rng.normal() - 0.05);
        auto [s, ss] = stats(r);
        CHECK(leaf_log_marginal(25.0, s, ss, 0.3, 0.01) ==
              doctest::Approx(quadrature(r, 0.3, 0.01)).epsilon(1e-9));
    }
    CHECK(leaf_log_marginal(0.0, 0.0, 0.0, 1.0, 0.5) == 0.0);
}

TEST_CASE("tree mechanics: grow, prune, routing, serialization") {
    Tree t;
    CHECK(t.n_leaves() == 1);
    const auto [l, r] = t.grow(0, 0, 0.5);
    CHECK(t.n_leaves() == 2);
    CHECK(t.node(0).var == 0);
    CHECK(t.node(l).depth == 1);
    const auto [ll, lr] = t.grow(l, 1, -0.3);
    CHECK(t.n_leaves() == 3);
    CHECK(t.max_depth() == 2);
    CHECK(t.nog_indices() == std::vector<int>{l});

    t.node(ll).leaf = 1.0;
    t.node(lr).leaf = 2.0;
    t.node(r).leaf = 3.0;
    {
        const double row_a[2] = {0.4, -0.5};  // left then left
        const double row_b[2] = {0.4, 0.0};   // left then right
        const double row_c[2] = {0.6, 0.0};   // right
        CHECK(t.node(t.route_row(row_a, 2)).leaf == 1.0);
        CHECK(t.node(t.route_row(row_b, 2)).leaf == 2.0);
        CHECK(t.node(t.route_row(row_c, 2)).leaf == 3.0);
        // Boundary goes left.
        const double row_d[2] = {0.5, 0.0};
        CHECK(t.node(t.route_row(row_d, 2)).leaf == 2.0);
    }

    const nlohmann::json j = t.to_json();
    Tree back = Tree::from_json(j);
    CHECK(back.to_json() == j);  // canonical breadth-first form is a fixed point
    CHECK(back.n_leaves() == 3);
    {
        const double row_b[2] = {0.4, 0.0};
        CHECK(back.node(back.route_row(row_b, 2)).leaf == 2.0);
    }

    CHECK_THROWS_AS(t.grow(0, 0, 0.1), DataError);   // not a leaf
    CHECK_THROWS_AS(t.prune(0), DataError);          // has grandchildren
    t.prune(l);
    CHECK(t.n_leaves() == 2);
    CHECK(t.node(l).is_leaf());

    // Freed slots recycle without disturbing serialization.
    const auto [l2, r2] = t.grow(l, 0, 0.2);
    CHECK(t.n_leaves() == 3);
    Tree again = Tree::from_json(t.to_json());
    CHECK(again.to_json() == t.to_json());
    (void)l2;
    (void)r2;

    Forest f;
    f.trees.push_back(t);
    f.trees.push_back(Tree{});
    f.trees[1].node(0).leaf = 10.0;
    const nlohmann::json fj = f.to_json();
    Forest fback = Forest::from_json(fj);
    CHECK(fback.trees.size() == 2);
    const std::vector<double> row{0.6, 0.0};
    CHECK(predict(fback, row) == predict(f, row));
    nlohmann::json tampered = fj;
    tampered["format"] = "other";
    CHECK_THROWS_AS(Forest::from_json(tampered), DataError);
}

TEST_CASE("slab serialization preserves node order and the free-slot stack") {
    // Build a tree whose slab order differs from breadth-first order by
    // recycling pruned slots under a different parent.
    Tree t;
    t.grow(0, 0, 0.5);    // nodes 1, 2
    t.grow(1, 1, 0.0);    // nodes 3, 4
    t.grow(2, 0, 0.8);    // nodes 5, 6
    t.prune(1);           // frees 4, 3
    t.grow(5, 1, -0.2);   // recycles 3, 4 under node 5
    for (const int i : t.leaf_indices()) t.node(i).leaf = static_cast<double>(i);

    // Canonical form renumbers, so proposal enumeration order changes.
    const Tree canonical = Tree::from_json(t.to_json());
    CHECK(canonical.leaf_indices() != t.leaf_indices());

    t.prune(5);  // leave a nonempty free stack: [4, 3]
    const nlohmann::json slab = t.to_slab_json();
    Tree back = Tree::from_slab_json(slab);
    CHECK(back.to_slab_json() == slab);
    CHECK(back.slab_size() == t.slab_size());
    CHECK(back.leaf_indices() == t.leaf_indices());
    CHECK(back.nog_indices() == t.nog_indices());
    for (int i = 0; i < t.slab_size(); ++i) {
        CHECK(back.node(i).in_use == t.node(i).in_use);
        if (!t.node(i).in_use) continue;
        CHECK(back.node(i).is_leaf() == t.node(i).is_leaf());
        CHECK(back.node(i).parent == t.node(i).parent);
        CHECK(back.node(i).depth == t.node(i).depth);
        if (t.node(i).is_leaf()) {
            CHECK(back.node(i).leaf == t.node(i).leaf);
        } else {
            CHECK(back.node(i).var == t.node(i).var);
            CHECK(back.node(i).cut == t.node(i).cut);
            CHECK(back.node(i).left == t.node(i).left);
            CHECK(back.node(i).right == t.node(i).right);
        }
    }
    // The restored tree recycles slots in the same order as the live one.
    const auto grew_live = t.grow(6, 0, 0.1);
    const auto grew_back = back.grow(6, 0, 0.1);
    CHECK(grew_live == grew_back);
    CHECK(back.slab_size() == t.slab_size());

    Forest f;
    f.trees.push_back(t);
    Forest fb = Forest::from_slab_json(f.to_slab_json());
    CHECK(fb.trees.size() == 1);
    CHECK(fb.trees[0].to_slab_json() == t.to_slab_json());
    nlohmann::json tampered = f.to_slab_json();
    tampered["format"] = "sacebart-forest";
    CHECK_THROWS_AS(Forest::from_slab_json(tampered), DataError);
    nlohmann::json bad_free = t.to_slab_json();
    bad_free["free"] = {0};
    CHECK_THROWS_AS(Tree::from_slab_json(bad_free), DataError);
}

namespace {

// Exhaustive stationary distribution for a single-tree sampler over one
// covariate with distinct values x[0..n): every tree structure corresponds to
// a recursive partition of the sorted value range, cut strictly below the
// region maximum.  Weight = structure prior x rule prior x marginal
// likelihood, matching what the accept ratios leave invariant.
struct TreeAtom {
    std::string sig;
    double logw;
};

struct Enumerator {
    const std::vector<double>& x;
    const std::vector<double>& y;
    double sigma2;
    const BartConfig& cfg;

    std::vector<TreeAtom> region(int a, int b, int depth) const {
        std::vector<TreeAtom> out;
        const double ps = split_probability(depth, cfg);
        double s = 0.0, ss = 0.0;
        for (int i = a; i < b; ++i) {
            s += y[i];
            ss += y[i] * y[i];
        }
        out.push_back({"L", std::log(1.0 - ps) +
                                leaf_log_marginal(static_cast<double>(b - a), s, ss, sigma2,
                                                  cfg.leaf_prior_variance())});
        if (b - a >= 2 && ps > 0.0) {
            const double log_rule = -std::log(static_cast<double>(b - a));  // uniform cut incl. max
            for (int c = a; c < b - 1; ++c) {
                const auto lefts = region(a, c + 1, depth + 1);
                const auto rights = region(c + 1, b, depth + 1);
                for (const TreeAtom& lt : lefts)
                    for (const TreeAtom& rt : rights)
                        out.push_back({"(" + std::to_string(c) + " " + lt.sig + " " + rt.sig + ")",
                                       std::log(ps) + log_rule + lt.logw + rt.logw});
            }
        }
        return out;
    }
};

std::string tree_signature(const Tree& t, int idx, const std::vector<double>& x) {
    const TreeNode& nd = t.node(idx);
    if (nd.is_leaf()) return "L";
    int cut_index = -1;
    for (std::size_t i = 0; i < x.size(); ++i)
        if (x[i] == nd.cut) cut_index = static_cast<int>(i);
    REQUIRE(cut_index >= 0);
    return "(" + std::to_string(cut_index) + " " + tree_signature(t, nd.left, x) + " " +
           tree_signature(t, nd.right, x) + ")";
}

}  // namespace

TEST_CASE("single-tree chain converges to the enumerated stationary distribution") {
    const std::vector<double> x{0.10, 0.35, 0.50, 0.72, 0.90};
    const std::vector<double> y{0.10, -0.20, 0.05, 0.30, -0.10};
    const double sigma2 = 1.0;

    BartConfig cfg;
    cfg.num_trees = 1;
    cfg.tau = 0.5;
    cfg.gamma = 3.0;
    cfg.w = 2.0;

    Enumerator en{x, y, sigma2, cfg};
    const std::vector<TreeAtom> atoms = en.region(0, 5, 0);
    REQUIRE(atoms.size() == 51);

    double max_logw = atoms[0].logw;
    for (const TreeAtom& a : atoms) max_logw = std::max(max_logw, a.logw);
    std::map<std::string, double> target;
    double norm = 0.0;
    for (const TreeAtom& a : atoms) {
        const double wgt = std::exp(a.logw - max_logw);
        target[a.sig] += wgt;
        norm += wgt;
    }
    for (auto& [sig, wgt] : target) wgt /= norm;

    ForestSampler sampler(x.data(), x.size(), 1, cfg);
    std::vector<int> all{0, 1, 2, 3, 4};
    Rng rng(20240816);
    const int burn = 5000, keep = 200000;
    for (int it = 0; it < burn; ++it) sampler.sweep(all, y.data(), sigma2, rng);
    std::map<std::string, double> freq;
    for (int it = 0; it < keep; ++it) {
        sampler.sweep(all, y.data(), sigma2, rng);
        freq[tree_signature(sampler.forest().trees[0], 0, x)] += 1.0;
    }
    for (auto& [sig, count] : freq) {
        REQUIRE_MESSAGE(target.count(sig) == 1, "sampled structure outside enumerated support");
        count /= keep;
    }
    double tv = 0.0;
    for (const auto& [sig, p] : target) {
        const double q = freq.count(sig) ? freq.at(sig) : 0.0;
        tv += std::fabs(p - q);
    }
    tv *= 0.5;
    CHECK_MESSAGE(tv <= 0.05, "total variation ", tv);

    // Sanity on the oracle itself: deeper structures are rarer, root is modal.
    CHECK(target.at("L") > 0.2);
}

TEST_CASE("zero split probability reduces sweeps to conjugate leaf draws") {
    BartConfig cfg;
    cfg.num_trees = 1;
    cfg.tau = 0.0;  // never splits: the tree stays a root leaf

    Rng data_rng(9);
    const std::size_t n = 40;
    std::vector<double> x(n), y(n);
    std::vector<int> all(n);
    for (std::size_t i = 0; i < n; ++i) {
        x[i] = data_rng.normal();
        y[i] = 0.08 * data_rng.normal() + 0.03;
        all[i] = static_cast<int>(i);
    }
    const double sigma2 = 0.25;
    const double leaf_var = cfg.leaf_prior_variance();
    double sum = 0.0;
    for (double v : y) sum += v;
    const double v_post = 1.0 / (static_cast<double>(n) / sigma2 + 1.0 / leaf_var);
    const double mean_post = v_post * sum / sigma2;

    ForestSampler sampler(x.data(), n, 1, cfg);
    Rng rng(77);
    const int draws = 30000;
    double acc = 0.0, acc_sq = 0.0;
    for (int it = 0; it < draws; ++it) {
        sampler.sweep(all, y.data(), sigma2, rng);
        CHECK(sampler.forest().trees[0].n_leaves() == 1);
        const double leaf = sampler.value(0);
        acc += leaf;
        acc_sq += leaf * leaf;
    }
    const double emp_mean = acc / draws;
    const double emp_var = acc_sq / draws - emp_mean * emp_mean;
    CHECK(std::fabs(emp_mean - mean_post) <= 5.0 * std::sqrt(v_post / draws));
    CHECK(emp_var == doctest::Approx(v_post).epsilon(0.05));
    CHECK(sampler.move_stats().accepted[static_cast<int>(TreeMove::grow)] == 0);
}

TEST_CASE("forest sampler fits a smooth signal") {
    Rng data_rng(4);
    const std::size_t n = 300;
    std::vector<double> x(n), y(n);
    for (std::size_t i = 0; i < n; ++i) {
        x[i] = 4.0 * data_rng.uniform() - 2.0;
        y[i] = std::sin(2.0 * x[i]) + 0.1 * data_rng.normal();
    }
    BartConfig cfg;
    cfg.num_trees = 30;
    Rng rng(5);
    BartRegressionResult res =
        fit_bart_regression(x.data(), n, 1, y, x.data(), n, cfg, 600, 300, 0.001, 0.001, rng);
    REQUIRE(res.test_mean.size() == n);
    double sse = 0.0, sst = 0.0;
    const double ybar = mean_of(y);
    for (std::size_t i = 0; i < n; ++i) {
        sse += (res.test_mean[i] - std::sin(2.0 * x[i])) * (res.test_mean[i] - std::sin(2.0 * x[i]));
        sst += (y[i] - ybar) * (y[i] - ybar);
    }
    // The fit explains most of the signal: mean-squared error against the
    // true curve is far below the response variance.
    CHECK(sse / n < 0.1 * sst / n);

    // Acceptance statistics were actually collected.
    const MoveStats& ms = res.fit.moves;
    CHECK(ms.proposed[0] + ms.proposed[1] + ms.proposed[2] == 600ull * 30ull);
    CHECK(ms.acceptance_rate(TreeMove::grow) > 0.0);
}

TEST_CASE("outcome scaler maps the observed range onto the unit interval") {
    OutcomeScaler s = OutcomeScaler::fit({2.0, 4.0, 10.0});
    CHECK(s.to_internal(2.0) == doctest::Approx(-0.5));
    CHECK(s.to_internal(10.0) == doctest::Approx(0.5));
    CHECK(s.to_original(s.to_internal(7.3)) == doctest::Approx(7.3).epsilon(1e-14));
    CHECK(s.var_to_original(0.01) == doctest::Approx(0.01 * 64.0));
    CHECK(s.var_to_internal(s.var_to_original(0.37)) == doctest::Approx(0.37).epsilon(1e-14));

    OutcomeScaler c = OutcomeScaler::fit({5.0, 5.0});
    CHECK(c.range == 1.0);
    CHECK(c.to_internal(5.0) == doctest::Approx(-0.5));
    CHECK_THROWS_AS(OutcomeScaler::fit({}), DataError);
}

TEST_CASE("sampler caches survive forest replacement") {
    Rng data_rng(12);
    const std::size_t n = 50;
    std::vector<double> x(n);
    std::vector<double> y(n);
    std::vector<int> all(n);
    for (std::size_t i = 0; i < n; ++i) {
        x[i] = data_rng.normal();
        y[i] = 0.2 * x[i] + 0.05 * data_rng.normal();
        all[i] = static_cast<int>(i);
    }
    BartConfig cfg;
    cfg.num_trees = 5;
    ForestSampler a(x.data(), n, 1, cfg);
    Rng rng(3);
    for (int it = 0; it < 50; ++it) a.sweep(all, y.data(), 0.1, rng);

    ForestSampler b(x.data(), n, 1, cfg);
    b.set_forest(a.forest());
    for (std::size_t i = 0; i < n; ++i) CHECK(b.value(static_cast<int>(i)) == a.value(static_cast<int>(i)));
    const double probe[1] = {0.33};
    CHECK(b.predict_row(probe, 1) == a.predict_row(probe, 1));

    BartConfig other = cfg;
    other.num_trees = 7;
    ForestSampler c(x.data(), n, 1, other);
    CHECK_THROWS_AS(c.set_forest(a.forest()), DataError);
}
