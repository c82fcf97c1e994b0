#include "sacebart/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <Eigen/Dense>

#include "sacebart/draws_io.hpp"
#include "sacebart/errors.hpp"
#include "sacebart/math.hpp"
#include "sacebart/version.hpp"

namespace sacebart {

void ChainConfig::check() const {
    if (n_iter < 1) throw UsageError("ChainConfig: n_iter must be >= 1");
    if (burn_in < 0 || burn_in >= n_iter) throw UsageError("ChainConfig: need 0 <= burn_in < n_iter");
    if (thin < 1) throw UsageError("ChainConfig: thin must be >= 1");
    if (!(a0 > 0.0) || !(b0 > 0.0)) throw UsageError("ChainConfig: a0 and b0 must be > 0");
    if (init_iters < 1) throw UsageError("ChainConfig: init_iters must be >= 1");
    if (init_retry_cap < 1) throw UsageError("ChainConfig: init_retry_cap must be >= 1");
    if (checkpoint_every < 0) throw UsageError("ChainConfig: checkpoint_every must be >= 0");
    if (checkpoint_every > 0 && checkpoint_path.empty())
        throw UsageError("ChainConfig: checkpointing requires a checkpoint path");
    bart.check();
}

std::array<double, 3> strata_probabilities(double mz, double mw) {
    if (!std::isfinite(mz) || !std::isfinite(mw))
        throw NumericError("strata_probabilities: non-finite input");
    const double pz = norm_cdf(mz);
    const double pw = norm_cdf(mw);
    return {pz, (1.0 - pz) * pw, (1.0 - pz) * (1.0 - pw)};
}

namespace {

std::vector<int> filter_units(const TrialDataset& ds, const std::vector<std::uint8_t>& strata,
                              Stratum s, int treat_arm, int survive_flag) {
    std::vector<int> out;
    for (std::size_t i = 0; i < ds.n_units(); ++i)
        if (strata[i] == s && ds.treat[i] == treat_arm && ds.survive[i] == survive_flag)
            out.push_back(static_cast<int>(i));
    return out;
}

}  // namespace

std::vector<int> SamplerState::subset_111() const {
    std::vector<int> out;
    for (std::size_t i = 0; i < strata.size(); ++i)
        if (strata[i] == s11 && groups[i] == ObservedGroup::t1d1) out.push_back(static_cast<int>(i));
    return out;
}

std::vector<int> SamplerState::subset_110() const {
    std::vector<int> out;
    for (std::size_t i = 0; i < strata.size(); ++i)
        if (groups[i] == ObservedGroup::t0d1) out.push_back(static_cast<int>(i));
    return out;
}

std::vector<int> SamplerState::subset_101() const {
    std::vector<int> out;
    for (std::size_t i = 0; i < strata.size(); ++i)
        if (strata[i] == s10 && groups[i] == ObservedGroup::t1d1) out.push_back(static_cast<int>(i));
    return out;
}

std::vector<int> SamplerState::subset_w() const {
    std::vector<int> out;
    for (std::size_t i = 0; i < strata.size(); ++i)
        if (strata[i] == s10 || strata[i] == s11) out.push_back(static_cast<int>(i));
    return out;
}

namespace detail {

std::vector<int> stratum_treatment_subset(const std::vector<std::uint8_t>& strata,
                                          const TrialDataset& ds, Stratum s, int treat_arm) {
    return filter_units(ds, strata, s, treat_arm, 1);
}

std::vector<std::uint8_t> initial_strata(const TrialDataset& ds,
                                         const std::vector<ObservedGroup>& groups, int retry_cap,
                                         Rng& rng) {
    const std::size_t n = ds.n_units();
    const std::size_t k = ds.n_covariates();
    std::vector<int> cell;
    for (std::size_t i = 0; i < n; ++i)
        if (groups[i] == ObservedGroup::t1d1) cell.push_back(static_cast<int>(i));

    // Informed start for the ambiguous cells.  Randomization identifies the
    // always-survivor share among treated survivors from the observable
    // survival margins, pi11/(pi10+pi11) = P(D=1|T=0,x)/P(D=1|T=1,x), and the
    // protected share among control deaths from the complements.  Those
    // shares then anchor the labels of a two-component mixture of linear
    // outcome regressions fit by EM inside the treated-survivor cell, which
    // breaks the symmetry between the (11,1) and (10,1) surfaces.  A chain
    // started in the mirror labeling self-reinforces within a few sweeps and
    // takes far longer than any practical run to escape under single-site
    // membership updates; starting from the EM labels puts it in the basin
    // the survival margins favor.  The stationary distribution is untouched.
    std::vector<int> arm1_units, arm0_units, arm1_resp, arm0_resp;
    for (std::size_t i = 0; i < n; ++i) {
        if (ds.treat[i] == 1) {
            arm1_units.push_back(static_cast<int>(i));
            arm1_resp.push_back(ds.survive[i]);
        } else {
            arm0_units.push_back(static_cast<int>(i));
            arm0_resp.push_back(ds.survive[i]);
        }
    }
    const std::vector<double> eta1 = probit_glm_values(ds, arm1_units, arm1_resp);
    const std::vector<double> eta0 = probit_glm_values(ds, arm0_units, arm0_resp);
    const auto nonzero = [](const std::vector<double>& v) {
        return std::any_of(v.begin(), v.end(), [](double x) { return x != 0.0; });
    };
    const bool informed = nonzero(eta1) && nonzero(eta0);

    std::vector<double> q11(n, 0.5), q00(n, 0.5);
    if (informed) {
        for (std::size_t i = 0; i < n; ++i) {
            const double s1 = std::clamp(norm_cdf(eta1[i]), 1e-3, 1.0 - 1e-3);
            const double s0 = std::clamp(norm_cdf(eta0[i]), 1e-3, 1.0 - 1e-3);
            q11[i] = std::clamp(s0 / s1, 0.02, 0.98);
            q00[i] = std::clamp((1.0 - s1) / (1.0 - s0), 0.02, 0.98);
        }
    }

    // EM refinement: responsibilities replace the share prior where the two
    // outcome components separate.  The EM itself has the same two labelings
    // as fixed points, so it runs from both mirrored starts and the
    // share-anchored mixture log-likelihood picks the winner: the mirror
    // labeling pays the prior log-odds on nearly every unit.  Deterministic
    // given the data; falls back to the shares on degeneracy (component
    // collapse, non-finite solve).
    bool have_em = false;
    const std::size_t p = k + 1;
    if (informed && cell.size() >= 2 * p) {
        const std::size_t m = cell.size();
        Eigen::MatrixXd x(m, p);
        Eigen::VectorXd y(m);
        Eigen::ArrayXd prior(m);
        for (std::size_t r = 0; r < m; ++r) {
            x(r, 0) = 1.0;
            for (std::size_t c = 0; c < k; ++c) x(r, c + 1) = ds.x(cell[r], c);
            y(r) = ds.outcome[cell[r]];
            prior(r) = q11[cell[r]];
        }
        const double y_var =
            (y.array() - y.mean()).square().sum() / static_cast<double>(m) + 1e-12;

        // The two starts must differ in outcome space: near-constant prior
        // weights give proportional WLS weights and hence one shared
        // attractor.  Pooled-fit residuals orient them instead.
        Eigen::MatrixXd xtx = x.transpose() * x;
        xtx.diagonal().array() += 1e-6 * (1.0 + xtx.trace() / static_cast<double>(p));
        const Eigen::VectorXd beta0 = xtx.ldlt().solve(x.transpose() * y);
        const Eigen::ArrayXd res = (y - x * beta0).array();
        const double res_scale =
            std::sqrt(res.square().sum() / static_cast<double>(m)) + 1e-12;

        const auto run_em = [&](bool mirrored) {
            struct EmRun {
                bool valid = false;
                double objective = -std::numeric_limits<double>::infinity();
                Eigen::VectorXd gam;
            } run;
            Eigen::VectorXd gam(m);
            for (std::size_t r = 0; r < m; ++r) {
                const double tilt = 0.5 + 0.45 * std::tanh(res(r) / res_scale);
                gam(r) = mirrored ? 1.0 - tilt : tilt;
            }
            Eigen::VectorXd f_hi = Eigen::VectorXd::Constant(m, y.mean());
            Eigen::VectorXd f_lo = f_hi;
            double sig2 = y_var;
            bool ok = true;
            const auto wls = [&](const Eigen::ArrayXd& wgt, Eigen::VectorXd& fit) {
                Eigen::MatrixXd xtwx = x.transpose() * wgt.matrix().asDiagonal() * x;
                xtwx.diagonal().array() += 1e-6 * (1.0 + xtwx.trace() / static_cast<double>(p));
                const Eigen::VectorXd beta =
                    xtwx.ldlt().solve(x.transpose() * (wgt * y.array()).matrix());
                if (!beta.allFinite()) {
                    ok = false;
                    return;
                }
                fit = x * beta;
            };
            for (int it = 0; it < 100 && ok; ++it) {
                wls(gam.array(), f_hi);
                wls(1.0 - gam.array(), f_lo);
                if (!ok) break;
                const Eigen::ArrayXd r_hi = (y - f_hi).array();
                const Eigen::ArrayXd r_lo = (y - f_lo).array();
                sig2 = (gam.array() * r_hi.square() + (1.0 - gam.array()) * r_lo.square()).sum() /
                       static_cast<double>(m);
                sig2 = std::max(sig2, 1e-10 * (y_var + 1.0));
                double delta = 0.0;
                for (std::size_t r = 0; r < m; ++r) {
                    const double d = std::log(prior(r) / (1.0 - prior(r))) +
                                     (r_lo(r) * r_lo(r) - r_hi(r) * r_hi(r)) / (2.0 * sig2);
                    const double g = 1.0 / (1.0 + std::exp(-std::clamp(d, -40.0, 40.0)));
                    delta = std::max(delta, std::abs(g - gam(r)));
                    gam(r) = g;
                }
                if (delta < 1e-10) break;
            }
            const double mass = gam.sum();
            if (!ok || !gam.allFinite() || !(mass > 1.0) ||
                !(static_cast<double>(m) - mass > 1.0))
                return run;
            double obj = -0.5 * static_cast<double>(m) * std::log(sig2);
            for (std::size_t r = 0; r < m; ++r) {
                const double a = -(y(r) - f_hi(r)) * (y(r) - f_hi(r)) / (2.0 * sig2);
                const double b = -(y(r) - f_lo(r)) * (y(r) - f_lo(r)) / (2.0 * sig2);
                const double top = std::max(a, b);
                obj += top + std::log(prior(r) * std::exp(a - top) +
                                      (1.0 - prior(r)) * std::exp(b - top));
            }
            if (!std::isfinite(obj)) return run;
            run.valid = true;
            run.objective = obj;
            run.gam = std::move(gam);
            return run;
        };

        const auto straight = run_em(false);
        const auto mirrored = run_em(true);
        const auto* best = straight.valid ? &straight : nullptr;
        if (mirrored.valid && (!best || mirrored.objective > best->objective)) best = &mirrored;
        if (best) {
            for (std::size_t r = 0; r < m; ++r) q11[cell[r]] = best->gam(r);
            have_em = true;
        }
    }

    std::vector<std::uint8_t> strata(n);
    for (int attempt = 0; attempt < retry_cap; ++attempt) {
        // The first pass takes the maximum-responsibility labels (purest warm
        // start); retries resample so sparse cells can still be populated.
        const bool hard = have_em && attempt == 0;
        std::size_t c111 = 0, c101 = 0;
        for (std::size_t i = 0; i < n; ++i) {
            switch (groups[i]) {
                case ObservedGroup::t1d0: strata[i] = s00; break;
                case ObservedGroup::t0d1: strata[i] = s11; break;
                case ObservedGroup::t1d1: {
                    const bool is11 = hard ? q11[i] >= 0.5
                                           : rng.uniform() < std::clamp(q11[i], 0.02, 0.98);
                    strata[i] = is11 ? s11 : s10;
                    (is11 ? c111 : c101) += 1;
                    break;
                }
                case ObservedGroup::t0d0:
                    strata[i] = rng.uniform() < q00[i] ? s00 : s10;
                    break;
            }
        }
        if (cell.empty() || (c111 > 0 && c101 > 0)) return strata;
    }
    throw DataError("initialization: could not populate the (11,1) and (10,1) cells after " +
                    std::to_string(retry_cap) + " attempts");
}

std::vector<double> probit_glm_values(const TrialDataset& ds, const std::vector<int>& subset,
                                      const std::vector<int>& response01) {
    const std::size_t n = ds.n_units();
    const std::size_t k = ds.n_covariates();
    const std::size_t p = k + 1;
    std::vector<double> zero(n, 0.0);
    if (subset.size() < p) return zero;

    Eigen::MatrixXd x(subset.size(), p);
    Eigen::VectorXd y(subset.size());
    for (std::size_t r = 0; r < subset.size(); ++r) {
        x(r, 0) = 1.0;
        for (std::size_t c = 0; c < k; ++c) x(r, c + 1) = ds.x(subset[r], c);
        y(r) = static_cast<double>(response01[r]);
    }

    Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
    bool converged = false;
    for (int it = 0; it < 50; ++it) {
        Eigen::MatrixXd xtwx = Eigen::MatrixXd::Zero(p, p);
        Eigen::VectorXd xtwz = Eigen::VectorXd::Zero(p);
        for (std::size_t r = 0; r < subset.size(); ++r) {
            double eta = x.row(r) * beta;
            eta = std::clamp(eta, -7.0, 7.0);
            const double phi = norm_pdf(eta);
            const double mu = norm_cdf(eta);
            const double denom = std::max(mu * (1.0 - mu), 1e-10);
            const double wgt = phi * phi / denom;
            const double zwork = eta + (y(r) - mu) / std::max(phi, 1e-10);
            xtwx += wgt * (x.row(r).transpose() * x.row(r));
            xtwz += wgt * zwork * x.row(r).transpose();
        }
        xtwx.diagonal().array() += 1e-8;
        const Eigen::VectorXd next = xtwx.ldlt().solve(xtwz);
        if (!next.allFinite()) return zero;
        const double step = (next - beta).cwiseAbs().maxCoeff();
        beta = next;
        if (step < 1e-8) {
            converged = true;
            break;
        }
    }
    if (!converged) return zero;

    std::vector<double> values(n);
    for (std::size_t i = 0; i < n; ++i) {
        double v = beta(0);
        for (std::size_t c = 0; c < k; ++c) v += beta(c + 1) * ds.x(i, c);
        if (!std::isfinite(v)) return zero;
        values[i] = v;
    }
    return values;
}

double variance_update(const std::vector<int>& subset, const std::vector<double>& y_int,
                       const std::vector<double>& m_values, double a0, double b0, Rng& rng) {
    double ss = 0.0;
    for (int u : subset) {
        const double r = y_int[u] - m_values[u];
        ss += r * r;
    }
    return rng.inverse_gamma(a0 + 0.5 * static_cast<double>(subset.size()), b0 + 0.5 * ss);
}

void impute_strata_values(std::vector<std::uint8_t>& strata,
                          const std::vector<ObservedGroup>& groups,
                          const std::vector<double>& y_int, const std::vector<double>& mz,
                          const std::vector<double>& mw, const std::vector<double>& m111,
                          const std::vector<double>& m101, double sigma2_111, double sigma2_101,
                          Rng& rng) {
    for (std::size_t i = 0; i < strata.size(); ++i) {
        switch (groups[i]) {
            case ObservedGroup::t1d0:
                strata[i] = s00;
                break;
            case ObservedGroup::t0d1:
                strata[i] = s11;
                break;
            case ObservedGroup::t0d0: {
                // S=00 vs S=10 given death under control; log-space ratio.
                const double l00 = log_norm_cdf(mz[i]);
                const double l10 = log_norm_cdf(-mz[i]) + log_norm_cdf(mw[i]);
                const double p00 = 1.0 / (1.0 + std::exp(l10 - l00));
                if (std::isnan(p00))
                    throw NumericError("stratum imputation: zero posterior mass at unit " +
                                       std::to_string(i));
                strata[i] = rng.uniform() < p00 ? s00 : s10;
                break;
            }
            case ObservedGroup::t1d1: {
                // S=10 vs S=11 given survival under treatment; the outcome
                // densities enter here (internal scale; the Jacobian cancels).
                const double l10 = log_norm_cdf(mw[i]) + log_norm_pdf(y_int[i], m101[i], sigma2_101);
                const double l11 =
                    log_norm_cdf(-mw[i]) + log_norm_pdf(y_int[i], m111[i], sigma2_111);
                const double p10 = 1.0 / (1.0 + std::exp(l11 - l10));
                if (std::isnan(p10))
                    throw NumericError("stratum imputation: zero posterior mass at unit " +
                                       std::to_string(i));
                strata[i] = rng.uniform() < p10 ? s10 : s11;
                break;
            }
        }
    }
}

void sample_latent_values(const std::vector<std::uint8_t>& strata, std::vector<double>& z,
                          std::vector<double>& w, const std::vector<double>& mz,
                          const std::vector<double>& mw, Rng& rng) {
    for (std::size_t i = 0; i < strata.size(); ++i)
        z[i] = strata[i] == s00 ? rng.trunc_normal_lower(mz[i], 0.0)
                                : rng.trunc_normal_upper(mz[i], 0.0);
    for (std::size_t i = 0; i < strata.size(); ++i) {
        if (strata[i] == s10)
            w[i] = rng.trunc_normal_lower(mw[i], 0.0);
        else if (strata[i] == s11)
            w[i] = rng.trunc_normal_upper(mw[i], 0.0);
        else
            w[i] = std::nan("");
    }
}

nlohmann::json chain_meta(const TrialDataset& ds, const ChainConfig& config, int chain_id,
                          const std::string& model) {
    nlohmann::json bart = {{"tau", config.bart.tau},
                           {"gamma", config.bart.gamma},
                           {"w", config.bart.w},
                           {"num_trees", config.bart.num_trees},
                           {"p_grow", config.bart.p_grow},
                           {"p_prune", config.bart.p_prune},
                           {"p_change", config.bart.p_change},
                           {"max_cutpoints", config.bart.max_cutpoints}};
    return {{"format_version", 1},
            {"model", model},
            {"code_version", kVersion},
            {"convention", kStratumConventionNote},
            {"seed", config.seed},
            {"chain_id", chain_id},
            {"chain_seed", config.seed + static_cast<std::uint64_t>(chain_id)},
            {"n_iter", config.n_iter},
            {"burn_in", config.burn_in},
            {"thin", config.thin},
            {"a0", config.a0},
            {"b0", config.b0},
            {"bart", bart},
            {"covariates", ds.spec.names}};
}

}  // namespace detail

SamplerState initialize(const TrialDataset& ds, const ChainConfig& config, Rng& rng) {
    config.check();
    validate(ds);
    const std::size_t n = ds.n_units();
    const std::size_t k = ds.n_covariates();
    if (k == 0) throw DataError("initialize: dataset has no covariates");

    SamplerState st;
    st.groups = classify_groups(ds);
    if (std::count(st.groups.begin(), st.groups.end(), ObservedGroup::t0d1) == 0)
        throw DataError("initialize: no units observed surviving under control (the (11,0) cell)");
    st.strata = detail::initial_strata(ds, st.groups, config.init_retry_cap, rng);

    std::vector<double> observed;
    for (std::size_t i = 0; i < n; ++i)
        if (ds.survive[i] == 1) observed.push_back(ds.outcome[i]);
    st.scaler = OutcomeScaler::fit(observed);

    st.y_int.assign(n, std::nan(""));
    for (std::size_t i = 0; i < n; ++i)
        if (ds.survive[i] == 1) st.y_int[i] = st.scaler.to_internal(ds.outcome[i]);

    const double* x = ds.covariates.data();
    st.f111 = ForestSampler(x, n, k, config.bart);
    st.f110 = ForestSampler(x, n, k, config.bart);
    st.f101 = ForestSampler(x, n, k, config.bart);
    st.fz = ForestSampler(x, n, k, config.bart);
    st.fw = ForestSampler(x, n, k, config.bart);

    std::vector<double> y_int_obs;
    for (double v : st.y_int)
        if (!std::isnan(v)) y_int_obs.push_back(v);
    double fallback_var = y_int_obs.size() >= 2 ? sample_variance(y_int_obs) : 1.0;
    if (!(fallback_var > 0.0)) fallback_var = 1.0;

    // Warm-start each outcome forest from a standalone fit on its initial
    // stratum-treatment cell (shared outcome scale pins sigma2 consistently).
    auto warm_start = [&](ForestSampler& f, const std::vector<int>& subset, double& sigma2_out) {
        if (subset.empty()) {
            sigma2_out = fallback_var;
            return;
        }
        std::vector<double> xs(subset.size() * k);
        std::vector<double> ys(subset.size());
        for (std::size_t r = 0; r < subset.size(); ++r) {
            ys[r] = ds.outcome[subset[r]];
            for (std::size_t c = 0; c < k; ++c) xs[c * subset.size() + r] = ds.x(subset[r], c);
        }
        const int iters = config.init_iters;
        const BartRegressionResult res =
            fit_bart_regression(xs.data(), subset.size(), k, ys, nullptr, 0, config.bart, iters,
                                iters > 1 ? iters / 2 : 0, config.a0, config.b0, rng, &st.scaler);
        f.set_forest(res.fit.forest);
        sigma2_out = res.fit.sigma2;
    };
    warm_start(st.f111, detail::stratum_treatment_subset(st.strata, ds, s11, 1), st.sigma2_111);
    warm_start(st.f110, detail::stratum_treatment_subset(st.strata, ds, s11, 0), st.sigma2_110);
    warm_start(st.f101, detail::stratum_treatment_subset(st.strata, ds, s10, 1), st.sigma2_101);

    // Probit GLM linear predictors seed the latent draws; the Z/W forests
    // start at zero and take over from the first iteration's sweeps.
    std::vector<int> all_units(n);
    for (std::size_t i = 0; i < n; ++i) all_units[i] = static_cast<int>(i);
    std::vector<int> z_resp(n);
    for (std::size_t i = 0; i < n; ++i) z_resp[i] = st.strata[i] == s00 ? 1 : 0;
    const std::vector<double> mz0 = detail::probit_glm_values(ds, all_units, z_resp);

    std::vector<int> w_subset;
    std::vector<int> w_resp;
    for (std::size_t i = 0; i < n; ++i) {
        if (st.strata[i] == s10 || st.strata[i] == s11) {
            w_subset.push_back(static_cast<int>(i));
            w_resp.push_back(st.strata[i] == s10 ? 1 : 0);
        }
    }
    const std::vector<double> mw0 = detail::probit_glm_values(ds, w_subset, w_resp);

    st.z.assign(n, 0.0);
    st.w.assign(n, 0.0);
    detail::sample_latent_values(st.strata, st.z, st.w, mz0, mw0, rng);
    st.iteration = 0;
    return st;
}

void update_variances(SamplerState& state, const TrialDataset& ds, const ChainConfig& config,
                      Rng& rng) {
    (void)ds;
    state.sigma2_111 = detail::variance_update(state.subset_111(), state.y_int,
                                               state.f111.values(), config.a0, config.b0, rng);
    state.sigma2_110 = detail::variance_update(state.subset_110(), state.y_int,
                                               state.f110.values(), config.a0, config.b0, rng);
    state.sigma2_101 = detail::variance_update(state.subset_101(), state.y_int,
                                               state.f101.values(), config.a0, config.b0, rng);
}

void impute_strata(SamplerState& state, const TrialDataset& ds, Rng& rng) {
    (void)ds;
    detail::impute_strata_values(state.strata, state.groups, state.y_int, state.fz.values(),
                                 state.fw.values(), state.f111.values(), state.f101.values(),
                                 state.sigma2_111, state.sigma2_101, rng);
}

void sample_latents(SamplerState& state, const TrialDataset& ds, Rng& rng) {
    (void)ds;
    detail::sample_latent_values(state.strata, state.z, state.w, state.fz.values(),
                                 state.fw.values(), rng);
}

void gibbs_iteration(SamplerState& state, const TrialDataset& ds, const ChainConfig& config,
                     Rng& rng) {
    const std::size_t n = ds.n_units();
    // Step 1: outcome forests on their current stratum-treatment cells.
    state.f111.sweep(state.subset_111(), state.y_int.data(), state.sigma2_111, rng);
    state.f110.sweep(state.subset_110(), state.y_int.data(), state.sigma2_110, rng);
    state.f101.sweep(state.subset_101(), state.y_int.data(), state.sigma2_101, rng);
    // Step 2: component variances.
    update_variances(state, ds, config, rng);
    // Steps 3-4: probit forests on the current latents.
    std::vector<int> all_units(n);
    for (std::size_t i = 0; i < n; ++i) all_units[i] = static_cast<int>(i);
    state.fz.probit_sweep(all_units, state.z.data(), rng);
    state.fw.probit_sweep(state.subset_w(), state.w.data(), rng);
    // Step 5: stratum membership.
    impute_strata(state, ds, rng);
    // Steps 6-7: truncated-normal latents under the new strata.
    sample_latents(state, ds, rng);
    ++state.iteration;
}

namespace {

nlohmann::json move_stats_json(const MoveStats& s) {
    return {{"proposed", {s.proposed[0], s.proposed[1], s.proposed[2]}},
            {"accepted", {s.accepted[0], s.accepted[1], s.accepted[2]}}};
}

MoveStats move_stats_from_json(const nlohmann::json& j) {
    MoveStats s;
    for (int i = 0; i < 3; ++i) {
        s.proposed[i] = j.at("proposed")[i].get<std::uint64_t>();
        s.accepted[i] = j.at("accepted")[i].get<std::uint64_t>();
    }
    return s;
}

void finalize_meta(PosteriorDraws& draws, const SamplerState& st) {
    nlohmann::json acc;
    const std::array<std::pair<const char*, const ForestSampler*>, 5> forests = {
        {{"f111", &st.f111}, {"f110", &st.f110}, {"f101", &st.f101}, {"fz", &st.fz}, {"fw", &st.fw}}};
    for (const auto& [name, f] : forests) {
        const MoveStats& ms = f->move_stats();
        acc[name] = {{"grow", ms.acceptance_rate(TreeMove::grow)},
                     {"prune", ms.acceptance_rate(TreeMove::prune)},
                     {"change", ms.acceptance_rate(TreeMove::change)}};
    }
    draws.meta["acceptance"] = acc;
    draws.meta["scaler"] = {{"y_min", st.scaler.y_min}, {"range", st.scaler.range}};
}

void record_draw(PosteriorDraws& draws, const SamplerState& st) {
    const std::size_t n = st.strata.size();
    draws.strata.insert(draws.strata.end(), st.strata.begin(), st.strata.end());
    for (std::size_t i = 0; i < n; ++i)
        draws.m111.push_back(st.scaler.to_original(st.f111.value(static_cast<int>(i))));
    for (std::size_t i = 0; i < n; ++i)
        draws.m110.push_back(st.scaler.to_original(st.f110.value(static_cast<int>(i))));
    draws.sigma2.push_back(st.scaler.var_to_original(st.sigma2_111));
    draws.sigma2.push_back(st.scaler.var_to_original(st.sigma2_110));
    draws.sigma2.push_back(st.scaler.var_to_original(st.sigma2_101));
    draws.n_retained += 1;
}

void write_checkpoint(const std::string& path, const SamplerState& st, const ChainConfig& config,
                      int chain_id, const Rng& rng, const PosteriorDraws& partial) {
    nlohmann::json j;
    j["format"] = "sacebart-checkpoint";
    j["version"] = 1;
    j["model"] = "bart";
    j["iteration"] = st.iteration;
    j["chain_id"] = chain_id;
    j["seed"] = config.seed;
    j["n_iter"] = config.n_iter;
    j["burn_in"] = config.burn_in;
    j["thin"] = config.thin;
    j["n_units"] = st.strata.size();
    j["rng"] = rng.serialize();
    j["strata"] = st.strata;
    j["z"] = st.z;
    nlohmann::json wmasked = nlohmann::json::array();
    for (std::size_t i = 0; i < st.w.size(); ++i)
        wmasked.push_back(st.strata[i] == s00 ? 0.0 : st.w[i]);
    j["w"] = wmasked;
    j["sigma2"] = {st.sigma2_111, st.sigma2_110, st.sigma2_101};
    j["scaler"] = {{"y_min", st.scaler.y_min}, {"range", st.scaler.range}};
    j["forests"] = {{"f111", st.f111.forest().to_slab_json()},
                    {"f110", st.f110.forest().to_slab_json()},
                    {"f101", st.f101.forest().to_slab_json()},
                    {"fz", st.fz.forest().to_slab_json()},
                    {"fw", st.fw.forest().to_slab_json()}};
    j["moves"] = {{"f111", move_stats_json(st.f111.move_stats())},
                  {"f110", move_stats_json(st.f110.move_stats())},
                  {"f101", move_stats_json(st.f101.move_stats())},
                  {"fz", move_stats_json(st.fz.move_stats())},
                  {"fw", move_stats_json(st.fw.move_stats())}};
    std::ofstream out(path);
    if (!out) throw DataError("cannot open checkpoint '" + path + "' for writing");
    out << j.dump();
    if (!out) throw DataError("checkpoint write failed for '" + path + "'");
    write_draws(path + ".draws", partial);
}

PosteriorDraws run_loop(const TrialDataset& ds, const ChainConfig& config, int chain_id,
                        SamplerState& st, Rng& rng, PosteriorDraws draws) {
    const std::size_t n = ds.n_units();
    const std::size_t expect =
        static_cast<std::size_t>((config.n_iter - config.burn_in) / config.thin);
    draws.n_units = n;
    draws.strata.reserve(expect * n);
    draws.m111.reserve(expect * n);
    draws.m110.reserve(expect * n);
    draws.sigma2.reserve(expect * 3);
    for (int t = st.iteration + 1; t <= config.n_iter; ++t) {
        gibbs_iteration(st, ds, config, rng);
        if (t > config.burn_in && (t - config.burn_in) % config.thin == 0) record_draw(draws, st);
        if (config.checkpoint_every > 0 && t % config.checkpoint_every == 0 && t < config.n_iter)
            write_checkpoint(config.checkpoint_path, st, config, chain_id, rng, draws);
    }
    finalize_meta(draws, st);
    return draws;
}

}  // namespace

PosteriorDraws run_chain(const TrialDataset& ds, const ChainConfig& config, int chain_id) {
    config.check();
    Rng rng(config.seed + static_cast<std::uint64_t>(chain_id));
    SamplerState st = initialize(ds, config, rng);
    PosteriorDraws draws;
    draws.meta = detail::chain_meta(ds, config, chain_id, "bart");
    return run_loop(ds, config, chain_id, st, rng, std::move(draws));
}

PosteriorDraws resume_chain(const TrialDataset& ds, const ChainConfig& config,
                            const std::string& checkpoint_path, int chain_id) {
    config.check();
    validate(ds);
    std::ifstream in(checkpoint_path);
    if (!in) throw DataError("cannot open checkpoint '" + checkpoint_path + "'");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("malformed checkpoint: ") + e.what());
    }
    if (j.value("format", "") != std::string("sacebart-checkpoint") || j.value("version", 0) != 1)
        throw DataError("unrecognized checkpoint format");
    if (j.value("model", "") != std::string("bart"))
        throw UsageError("checkpoint was written by a different model");
    if (j.at("seed").get<std::uint64_t>() != config.seed ||
        j.at("n_iter").get<int>() != config.n_iter ||
        j.at("burn_in").get<int>() != config.burn_in || j.at("thin").get<int>() != config.thin ||
        j.at("chain_id").get<int>() != chain_id)
        throw UsageError("checkpoint configuration does not match the requested run");
    if (j.at("n_units").get<std::size_t>() != ds.n_units())
        throw DataError("checkpoint unit count does not match the dataset");

    SamplerState st;
    st.groups = classify_groups(ds);
    st.strata = j.at("strata").get<std::vector<std::uint8_t>>();
    st.z = j.at("z").get<std::vector<double>>();
    st.w = j.at("w").get<std::vector<double>>();
    for (std::size_t i = 0; i < st.w.size(); ++i)
        if (st.strata[i] == s00) st.w[i] = std::nan("");
    st.scaler.y_min = j.at("scaler").at("y_min").get<double>();
    st.scaler.range = j.at("scaler").at("range").get<double>();
    st.y_int.assign(ds.n_units(), std::nan(""));
    for (std::size_t i = 0; i < ds.n_units(); ++i)
        if (ds.survive[i] == 1) st.y_int[i] = st.scaler.to_internal(ds.outcome[i]);
    st.sigma2_111 = j.at("sigma2")[0].get<double>();
    st.sigma2_110 = j.at("sigma2")[1].get<double>();
    st.sigma2_101 = j.at("sigma2")[2].get<double>();
    st.iteration = j.at("iteration").get<int>();

    const double* x = ds.covariates.data();
    const std::size_t n = ds.n_units();
    const std::size_t k = ds.n_covariates();
    st.f111 = ForestSampler(x, n, k, config.bart);
    st.f110 = ForestSampler(x, n, k, config.bart);
    st.f101 = ForestSampler(x, n, k, config.bart);
    st.fz = ForestSampler(x, n, k, config.bart);
    st.fw = ForestSampler(x, n, k, config.bart);
    st.f111.set_forest(Forest::from_slab_json(j.at("forests").at("f111")));
    st.f110.set_forest(Forest::from_slab_json(j.at("forests").at("f110")));
    st.f101.set_forest(Forest::from_slab_json(j.at("forests").at("f101")));
    st.fz.set_forest(Forest::from_slab_json(j.at("forests").at("fz")));
    st.fw.set_forest(Forest::from_slab_json(j.at("forests").at("fw")));
    st.f111.set_move_stats(move_stats_from_json(j.at("moves").at("f111")));
    st.f110.set_move_stats(move_stats_from_json(j.at("moves").at("f110")));
    st.f101.set_move_stats(move_stats_from_json(j.at("moves").at("f101")));
    st.fz.set_move_stats(move_stats_from_json(j.at("moves").at("fz")));
    st.fw.set_move_stats(move_stats_from_json(j.at("moves").at("fw")));

    Rng rng(0);
    rng.deserialize(j.at("rng").get<std::string>());
    PosteriorDraws partial = read_draws(checkpoint_path + ".draws");
    return run_loop(ds, config, chain_id, st, rng, std::move(partial));
}

CvResult cross_validate(const TrialDataset& ds, const std::vector<double>& w_grid,
                        const std::vector<int>& j_grid, int folds, std::uint64_t seed,
                        const BartConfig& base, int cv_iters, int cv_burn, double a0, double b0) {
    validate(ds);
    if (folds < 2) throw UsageError("cross_validate: folds must be >= 2");
    if (w_grid.empty() || j_grid.empty()) throw UsageError("cross_validate: empty grid");
    if (cv_burn >= cv_iters) throw UsageError("cross_validate: cv_burn must be < cv_iters");
    const std::size_t n = ds.n_units();
    const std::size_t k = ds.n_covariates();

    std::vector<int> survivors;
    for (std::size_t i = 0; i < n; ++i)
        if (ds.survive[i] == 1) survivors.push_back(static_cast<int>(i));
    if (static_cast<int>(survivors.size()) < folds)
        throw DataError("cross_validate: fewer survivors than folds");

    Rng rng(seed);
    auto shuffled = [&](std::vector<int> v) {
        for (std::size_t i = v.size(); i > 1; --i)
            std::swap(v[i - 1], v[rng.uniform_int(static_cast<int>(i))]);
        return v;
    };

    std::vector<int> fold_of(n, -1);
    {
        std::vector<int> perm(n);
        for (std::size_t i = 0; i < n; ++i) perm[i] = static_cast<int>(i);
        perm = shuffled(perm);
        for (std::size_t i = 0; i < n; ++i) fold_of[perm[i]] = static_cast<int>(i % folds);
        std::vector<int> surv_per_fold(folds, 0);
        for (int u : survivors) surv_per_fold[fold_of[u]] += 1;
        if (std::any_of(surv_per_fold.begin(), surv_per_fold.end(), [](int c) { return c == 0; })) {
            // Survivor-stratified retry.
            const std::vector<int> sperm = shuffled(survivors);
            for (std::size_t i = 0; i < sperm.size(); ++i)
                fold_of[sperm[i]] = static_cast<int>(i % folds);
        }
    }

    // Sorted grids give the documented tie-break: first strict improvement
    // wins while scanning J ascending, then w ascending.
    std::vector<int> js(j_grid);
    std::sort(js.begin(), js.end());
    std::vector<double> ws(w_grid);
    std::sort(ws.begin(), ws.end());

    CvResult result;
    double best = std::numeric_limits<double>::infinity();
    for (int jv : js) {
        for (double wv : ws) {
            BartConfig cfg = base;
            cfg.w = wv;
            cfg.num_trees = jv;
            double total = 0.0;
            for (int f = 0; f < folds; ++f) {
                std::vector<int> train, test;
                for (int u : survivors) (fold_of[u] == f ? test : train).push_back(u);
                if (train.empty() || test.empty())
                    throw DataError("cross_validate: a fold has no survivors");
                std::vector<double> xtr(train.size() * k), xte(test.size() * k);
                std::vector<double> ytr(train.size()), yte(test.size());
                for (std::size_t r = 0; r < train.size(); ++r) {
                    ytr[r] = ds.outcome[train[r]];
                    for (std::size_t c = 0; c < k; ++c) xtr[c * train.size() + r] = ds.x(train[r], c);
                }
                for (std::size_t r = 0; r < test.size(); ++r) {
                    yte[r] = ds.outcome[test[r]];
                    for (std::size_t c = 0; c < k; ++c) xte[c * test.size() + r] = ds.x(test[r], c);
                }
                const BartRegressionResult res =
                    fit_bart_regression(xtr.data(), train.size(), k, ytr, xte.data(), test.size(),
                                        cfg, cv_iters, cv_burn, a0, b0, rng);
                double se = 0.0;
                for (std::size_t r = 0; r < test.size(); ++r) {
                    const double d = res.test_mean[r] - yte[r];
                    se += d * d;
                }
                total += std::sqrt(se / static_cast<double>(test.size()));
            }
            const double score = total / folds;
            result.table.push_back({wv, jv, score});
            if (score < best) {
                best = score;
                result.best_w = wv;
                result.best_num_trees = jv;
            }
        }
    }
    return result;
}

}  // namespace sacebart
