#include "sacebart/synth.hpp"

#include <cmath>

#include "sacebart/errors.hpp"
#include "sacebart/rng.hpp"
#include "sacebart/sampler.hpp"

namespace sacebart {

void DgpSpec::check() const {
    if (n_units == 0) throw UsageError("DgpSpec: n_units must be positive");
    if (kinds.empty()) throw UsageError("DgpSpec: at least one covariate");
    if (covariate_names.size() != kinds.size())
        throw UsageError("DgpSpec: covariate name/kind count mismatch");
    if (!m_z || !m_w || !mu_111 || !mu_110 || !mu_101)
        throw UsageError("DgpSpec: all five mean maps must be set");
    if (!(sd_111 > 0.0) || !(sd_110 > 0.0) || !(sd_101 > 0.0))
        throw UsageError("DgpSpec: noise sds must be positive");
    if (!(treat_prob > 0.0 && treat_prob < 1.0))
        throw UsageError("DgpSpec: treat_prob must lie in (0,1)");
}

namespace {

std::vector<double> draw_covariates(const DgpSpec& spec, Rng& rng) {
    std::vector<double> x(spec.kinds.size());
    for (std::size_t c = 0; c < spec.kinds.size(); ++c)
        x[c] = spec.kinds[c] == CovariateKind::continuous
                   ? rng.normal()
                   : (rng.uniform() < 0.5 ? 1.0 : 0.0);
    return x;
}

std::uint8_t draw_stratum(const DgpSpec& spec, const std::vector<double>& x, Rng& rng) {
    const double z = spec.m_z(x) + rng.normal();
    if (z >= 0.0) return s00;
    const double w = spec.m_w(x) + rng.normal();
    return w >= 0.0 ? s10 : s11;
}

}  // namespace

GeneratedTrial generate(const DgpSpec& spec) {
    spec.check();
    Rng rng(spec.seed);
    const std::size_t n = spec.n_units;
    const std::size_t k = spec.kinds.size();

    GeneratedTrial out;
    out.data.spec.names = spec.covariate_names;
    out.data.spec.kinds = spec.kinds;
    out.data.spec.center.assign(k, 0.0);
    out.data.spec.scale.assign(k, 1.0);
    out.data.ids.resize(n);
    out.data.treat.resize(n);
    out.data.survive.resize(n);
    out.data.outcome.resize(n);
    out.data.covariates.resize(n * k);
    out.truth.strata.resize(n);
    out.truth.y1.assign(n, std::nan(""));
    out.truth.y0.assign(n, std::nan(""));
    out.truth.csace.resize(n);

    for (std::size_t i = 0; i < n; ++i) {
        const std::vector<double> x = draw_covariates(spec, rng);
        for (std::size_t c = 0; c < k; ++c) out.data.covariates[c * n + i] = x[c];
        const std::uint8_t s = draw_stratum(spec, x, rng);
        out.truth.strata[i] = s;
        out.truth.csace[i] = spec.mu_111(x) - spec.mu_110(x);
        if (s == s11) {
            out.truth.y1[i] = spec.mu_111(x) + spec.sd_111 * rng.normal();
            out.truth.y0[i] = spec.mu_110(x) + spec.sd_110 * rng.normal();
        } else if (s == s10) {
            out.truth.y1[i] = spec.mu_101(x) + spec.sd_101 * rng.normal();
        }
        const int t = rng.uniform() < spec.treat_prob ? 1 : 0;
        const int d = s == s11 ? 1 : (s == s10 ? t : 0);
        out.data.ids[i] = std::to_string(i + 1);
        out.data.treat[i] = t;
        out.data.survive[i] = d;
        out.data.outcome[i] =
            d == 1 ? (t == 1 ? out.truth.y1[i] : out.truth.y0[i]) : std::nan("");
    }
    validate(out.data);
    return out;
}

nlohmann::json TruthRecord::to_json() const {
    auto masked = [](const std::vector<double>& v) {
        nlohmann::json arr = nlohmann::json::array();
        for (double d : v) {
            if (std::isnan(d))
                arr.push_back(nullptr);
            else
                arr.push_back(d);
        }
        return arr;
    };
    return {{"strata", strata}, {"y1", masked(y1)}, {"y0", masked(y0)}, {"csace", csace}};
}

SaceOracle oracle_sace(const DgpSpec& spec, std::size_t n_mc) {
    spec.check();
    if (n_mc == 0) throw UsageError("oracle_sace: n_mc must be positive");
    // Golden-ratio offset keeps this stream distinct from generate's.
    Rng rng(spec.seed ^ 0x9E3779B97F4A7C15ull);
    double sum = 0.0, sum_sq = 0.0;
    std::size_t count = 0;
    for (std::size_t i = 0; i < n_mc; ++i) {
        const std::vector<double> x = draw_covariates(spec, rng);
        if (draw_stratum(spec, x, rng) != s11) continue;
        const double effect = spec.mu_111(x) - spec.mu_110(x);
        sum += effect;
        sum_sq += effect * effect;
        ++count;
    }
    if (count == 0) throw DataError("oracle_sace: no simulated always-survivors");
    SaceOracle oracle;
    oracle.n_always = count;
    oracle.value = sum / static_cast<double>(count);
    const double var =
        count >= 2 ? (sum_sq - sum * sum / static_cast<double>(count)) /
                         static_cast<double>(count - 1)
                   : 0.0;
    oracle.se = std::sqrt(std::max(var, 0.0) / static_cast<double>(count));
    return oracle;
}

double oracle_csace(const DgpSpec& spec, const std::vector<double>& x) {
    if (x.size() != spec.kinds.size()) throw UsageError("oracle_csace: covariate length mismatch");
    return spec.mu_111(x) - spec.mu_110(x);
}

DgpSpec named_dgp(const std::string& name, std::size_t n_units, std::uint64_t seed) {
    DgpSpec spec;
    spec.name = name;
    spec.n_units = n_units;
    spec.seed = seed;
    using X = const std::vector<double>&;
    if (name == "dgp-a") {
        // Linear maps everywhere; survivor effect 2 + x1.
        spec.kinds = {CovariateKind::continuous, CovariateKind::continuous,
                      CovariateKind::continuous, CovariateKind::binary};
        spec.covariate_names = {"x1", "x2", "x3", "x4"};
        spec.m_z = [](X x) { return -0.8 + 0.3 * x[0] - 0.2 * x[1]; };
        spec.m_w = [](X x) { return -0.4 + 0.25 * x[1] + 0.2 * x[3]; };
        spec.mu_110 = [](X x) { return 20.0 + 2.0 * x[0] + x[1] - x[2] + x[3]; };
        spec.mu_111 = [](X x) { return 22.0 + 3.0 * x[0] + x[1] - x[2] + x[3]; };
        spec.mu_101 = [](X x) { return 18.0 + x[0] - 0.5 * x[2]; };
    } else if (name == "dgp-b") {
        // Nonlinear means with sin and product terms; survivor effect
        // 2 + 2 * x1 * x4.
        spec.kinds = {CovariateKind::continuous, CovariateKind::continuous,
                      CovariateKind::continuous, CovariateKind::binary};
        spec.covariate_names = {"x1", "x2", "x3", "x4"};
        spec.m_z = [](X x) { return -0.9 + 0.4 * std::sin(x[0]) + 0.3 * x[1] * x[3]; };
        spec.m_w = [](X x) { return -0.5 + 0.3 * std::cos(x[1]) + 0.25 * x[0] * x[3]; };
        spec.mu_110 = [](X x) { return 18.0 + 3.0 * std::sin(x[0]) + 2.0 * x[1] * x[2] + x[3]; };
        spec.mu_111 = [](X x) {
            return 20.0 + 3.0 * std::sin(x[0]) + 2.0 * x[1] * x[2] + 2.0 * x[0] * x[3] + x[3];
        };
        spec.mu_101 = [](X x) { return 16.0 + 2.0 * std::sin(x[2]) + x[0]; };
    } else if (name == "moderated") {
        // Effect +5 for x1 > 0 and -5 otherwise; x2, x3 carry no signal.
        spec.kinds = {CovariateKind::continuous, CovariateKind::continuous, CovariateKind::binary};
        spec.covariate_names = {"x1", "x2", "x3"};
        spec.m_z = [](X) { return -1.2; };
        spec.m_w = [](X) { return -0.6; };
        spec.mu_110 = [](X) { return 10.0; };
        spec.mu_111 = [](X x) { return x[0] > 0.0 ? 15.0 : 5.0; };
        spec.mu_101 = [](X x) { return 8.0 + 0.5 * x[1]; };
    } else if (name == "constant") {
        // Homogeneous survivor effect of 3 on a heterogeneous baseline.
        spec.kinds = {CovariateKind::continuous, CovariateKind::continuous, CovariateKind::binary};
        spec.covariate_names = {"x1", "x2", "x3"};
        spec.m_z = [](X x) { return -1.0 + 0.2 * x[1]; };
        spec.m_w = [](X) { return -0.5; };
        spec.mu_110 = [](X x) { return 12.0 + x[0] + 0.5 * x[1]; };
        spec.mu_111 = [](X x) { return 15.0 + x[0] + 0.5 * x[1]; };
        spec.mu_101 = [](X x) { return 10.0 + x[0]; };
    } else {
        throw UsageError("unknown DGP '" + name + "'; expected one of dgp-a, dgp-b, moderated, constant");
    }
    return spec;
}

std::vector<std::string> dgp_names() { return {"dgp-a", "dgp-b", "moderated", "constant"}; }

}  // namespace sacebart
