#include "sacebart/parametric.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Dense>

#include "sacebart/errors.hpp"
#include "sacebart/math.hpp"
#include "sacebart/version.hpp"

namespace sacebart {

void ParametricChainConfig::check() const {
    if (n_iter < 1) throw UsageError("ParametricChainConfig: n_iter must be >= 1");
    if (burn_in < 0 || burn_in >= n_iter)
        throw UsageError("ParametricChainConfig: need 0 <= burn_in < n_iter");
    if (thin < 1) throw UsageError("ParametricChainConfig: thin must be >= 1");
    if (!(a0 > 0.0) || !(b0 > 0.0)) throw UsageError("ParametricChainConfig: a0 and b0 must be > 0");
    if (!(prior_variance > 0.0))
        throw UsageError("ParametricChainConfig: prior_variance must be > 0");
}

std::vector<double> draw_linear_coefficients(const TrialDataset& ds, const std::vector<int>& subset,
                                             const std::vector<double>& response, double sigma2,
                                             double prior_variance, Rng& rng) {
    const std::size_t k = ds.n_covariates();
    const std::size_t p = k + 1;
    if (!(sigma2 > 0.0) || !std::isfinite(sigma2))
        throw NumericError("draw_linear_coefficients: invalid noise variance");

    // Precision P = X'X / sigma2 + I / v0, mean solves P mu = X'y / sigma2.
    Eigen::MatrixXd prec = Eigen::MatrixXd::Identity(p, p) / prior_variance;
    Eigen::VectorXd xty = Eigen::VectorXd::Zero(p);
    Eigen::VectorXd row(p);
    for (int u : subset) {
        row(0) = 1.0;
        for (std::size_t c = 0; c < k; ++c) row(c + 1) = ds.x(u, c);
        prec += (row * row.transpose()) / sigma2;
        xty += row * (response[u] / sigma2);
    }
    const Eigen::LLT<Eigen::MatrixXd> llt(prec);
    if (llt.info() != Eigen::Success)
        throw NumericError("draw_linear_coefficients: precision matrix is not positive definite");
    const Eigen::VectorXd mean = llt.solve(xty);
    Eigen::VectorXd u(p);
    for (std::size_t i = 0; i < p; ++i) u(i) = rng.normal();
    // With P = L L', solving L' x = u gives x ~ N(0, P^{-1}).
    const Eigen::VectorXd draw = mean + llt.matrixU().solve(u);
    if (!draw.allFinite()) throw NumericError("draw_linear_coefficients: non-finite draw");
    return std::vector<double>(draw.data(), draw.data() + p);
}

std::vector<double> linear_values(const TrialDataset& ds, const std::vector<double>& beta) {
    const std::size_t n = ds.n_units();
    const std::size_t k = ds.n_covariates();
    if (beta.size() != k + 1) throw UsageError("linear_values: coefficient length mismatch");
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        double v = beta[0];
        for (std::size_t c = 0; c < k; ++c) v += beta[c + 1] * ds.x(i, c);
        out[i] = v;
    }
    return out;
}

namespace {

std::vector<int> strata_subset(const ParametricState& st, Stratum s, ObservedGroup g) {
    std::vector<int> out;
    for (std::size_t i = 0; i < st.strata.size(); ++i)
        if (st.strata[i] == s && st.groups[i] == g) out.push_back(static_cast<int>(i));
    return out;
}

std::vector<int> w_subset_of(const ParametricState& st) {
    std::vector<int> out;
    for (std::size_t i = 0; i < st.strata.size(); ++i)
        if (st.strata[i] == s10 || st.strata[i] == s11) out.push_back(static_cast<int>(i));
    return out;
}

void parametric_iteration(ParametricState& st, const TrialDataset& ds,
                          const ParametricChainConfig& config, Rng& rng) {
    const std::size_t n = ds.n_units();
    const auto sub111 = strata_subset(st, s11, ObservedGroup::t1d1);
    const auto sub110 = strata_subset(st, s11, ObservedGroup::t0d1);
    const auto sub101 = strata_subset(st, s10, ObservedGroup::t1d1);
    // Outcome coefficients, then variances, mirroring the forest sweep order.
    st.beta_111 = draw_linear_coefficients(ds, sub111, st.y_int, st.sigma2_111,
                                           config.prior_variance, rng);
    st.beta_110 = draw_linear_coefficients(ds, sub110, st.y_int, st.sigma2_110,
                                           config.prior_variance, rng);
    st.beta_101 = draw_linear_coefficients(ds, sub101, st.y_int, st.sigma2_101,
                                           config.prior_variance, rng);
    st.sigma2_111 =
        detail::variance_update(sub111, st.y_int, linear_values(ds, st.beta_111), config.a0,
                                config.b0, rng);
    st.sigma2_110 =
        detail::variance_update(sub110, st.y_int, linear_values(ds, st.beta_110), config.a0,
                                config.b0, rng);
    st.sigma2_101 =
        detail::variance_update(sub101, st.y_int, linear_values(ds, st.beta_101), config.a0,
                                config.b0, rng);
    // Probit coefficients regress the latents (unit noise variance).
    std::vector<int> all_units(n);
    for (std::size_t i = 0; i < n; ++i) all_units[i] = static_cast<int>(i);
    st.beta_z = draw_linear_coefficients(ds, all_units, st.z, 1.0, config.prior_variance, rng);
    st.beta_w = draw_linear_coefficients(ds, w_subset_of(st), st.w, 1.0, config.prior_variance, rng);
    // Membership and latent refresh share the forest sampler's cores.
    detail::impute_strata_values(st.strata, st.groups, st.y_int, linear_values(ds, st.beta_z),
                                 linear_values(ds, st.beta_w), linear_values(ds, st.beta_111),
                                 linear_values(ds, st.beta_101), st.sigma2_111, st.sigma2_101, rng);
    detail::sample_latent_values(st.strata, st.z, st.w, linear_values(ds, st.beta_z),
                                 linear_values(ds, st.beta_w), rng);
    ++st.iteration;
}

void record_parametric(PosteriorDraws& draws, const ParametricState& st, const TrialDataset& ds) {
    draws.strata.insert(draws.strata.end(), st.strata.begin(), st.strata.end());
    for (double v : linear_values(ds, st.beta_111)) draws.m111.push_back(st.scaler.to_original(v));
    for (double v : linear_values(ds, st.beta_110)) draws.m110.push_back(st.scaler.to_original(v));
    draws.sigma2.push_back(st.scaler.var_to_original(st.sigma2_111));
    draws.sigma2.push_back(st.scaler.var_to_original(st.sigma2_110));
    draws.sigma2.push_back(st.scaler.var_to_original(st.sigma2_101));
    draws.n_retained += 1;
}

}  // namespace

PosteriorDraws run_chain_parametric(const TrialDataset& ds, const ParametricChainConfig& config,
                                    int chain_id) {
    config.check();
    validate(ds);
    const std::size_t n = ds.n_units();
    const std::size_t k = ds.n_covariates();
    if (k == 0) throw DataError("run_chain_parametric: dataset has no covariates");

    Rng rng(config.seed + static_cast<std::uint64_t>(chain_id));
    ParametricState st;
    st.groups = classify_groups(ds);
    if (std::count(st.groups.begin(), st.groups.end(), ObservedGroup::t0d1) == 0)
        throw DataError(
            "run_chain_parametric: no units observed surviving under control (the (11,0) cell)");
    st.strata = detail::initial_strata(ds, st.groups, 100, rng);

    std::vector<double> observed;
    for (std::size_t i = 0; i < n; ++i)
        if (ds.survive[i] == 1) observed.push_back(ds.outcome[i]);
    st.scaler = OutcomeScaler::fit(observed);
    st.y_int.assign(n, std::nan(""));
    for (std::size_t i = 0; i < n; ++i)
        if (ds.survive[i] == 1) st.y_int[i] = st.scaler.to_internal(ds.outcome[i]);

    // Coefficients start at zero; residual variance of the scaled outcomes
    // seeds sigma2 and the probit GLM seeds the latents, as in the forest run.
    st.beta_111.assign(k + 1, 0.0);
    st.beta_110.assign(k + 1, 0.0);
    st.beta_101.assign(k + 1, 0.0);
    st.beta_z.assign(k + 1, 0.0);
    st.beta_w.assign(k + 1, 0.0);
    std::vector<double> y_obs_int;
    for (double v : st.y_int)
        if (!std::isnan(v)) y_obs_int.push_back(v);
    double var0 = y_obs_int.size() >= 2 ? sample_variance(y_obs_int) : 1.0;
    if (!(var0 > 0.0)) var0 = 1.0;
    st.sigma2_111 = st.sigma2_110 = st.sigma2_101 = var0;

    std::vector<int> all_units(n);
    for (std::size_t i = 0; i < n; ++i) all_units[i] = static_cast<int>(i);
    std::vector<int> z_resp(n);
    for (std::size_t i = 0; i < n; ++i) z_resp[i] = st.strata[i] == s00 ? 1 : 0;
    const std::vector<double> mz0 = detail::probit_glm_values(ds, all_units, z_resp);
    std::vector<int> wsub;
    std::vector<int> w_resp;
    for (std::size_t i = 0; i < n; ++i) {
        if (st.strata[i] == s10 || st.strata[i] == s11) {
            wsub.push_back(static_cast<int>(i));
            w_resp.push_back(st.strata[i] == s10 ? 1 : 0);
        }
    }
    const std::vector<double> mw0 = detail::probit_glm_values(ds, wsub, w_resp);
    st.z.assign(n, 0.0);
    st.w.assign(n, 0.0);
    detail::sample_latent_values(st.strata, st.z, st.w, mz0, mw0, rng);
    st.iteration = 0;

    PosteriorDraws draws;
    draws.n_units = n;
    draws.meta = {{"format_version", 1},
                  {"model", "parametric"},
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
                  {"prior_variance", config.prior_variance},
                  {"covariates", ds.spec.names}};
    const std::size_t expect =
        static_cast<std::size_t>((config.n_iter - config.burn_in) / config.thin);
    draws.strata.reserve(expect * n);
    draws.m111.reserve(expect * n);
    draws.m110.reserve(expect * n);
    for (int t = 1; t <= config.n_iter; ++t) {
        parametric_iteration(st, ds, config, rng);
        if (t > config.burn_in && (t - config.burn_in) % config.thin == 0)
            record_parametric(draws, st, ds);
    }
    draws.meta["scaler"] = {{"y_min", st.scaler.y_min}, {"range", st.scaler.range}};
    return draws;
}

}  // namespace sacebart
