#include "sacebart/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "sacebart/errors.hpp"
#include "sacebart/estimands.hpp"
#include "sacebart/math.hpp"

namespace sacebart {

double geyer_ess(const std::vector<double>& series) {
    const std::size_t n = series.size();
    if (n == 0) throw DataError("geyer_ess: empty series");
    if (n == 1) return 1.0;
    const double mean = mean_of(series);
    std::vector<double> centered(n);
    for (std::size_t i = 0; i < n; ++i) centered[i] = series[i] - mean;
    auto gamma = [&](std::size_t lag) {
        double sum = 0.0;
        for (std::size_t i = 0; i + lag < n; ++i) sum += centered[i] * centered[i + lag];
        return sum / static_cast<double>(n);
    };
    const double g0 = gamma(0);
    if (!(g0 > 0.0)) return static_cast<double>(n);  // constant series mixes trivially

    // Sum consecutive-lag pairs while they stay positive, enforcing the
    // monotone non-increasing envelope.
    double tau = -g0;  // pairs below include gamma(0); subtract it once
    double prev_pair = std::numeric_limits<double>::infinity();
    for (std::size_t m = 0; 2 * m + 1 < n; ++m) {
        double pair = gamma(2 * m) + gamma(2 * m + 1);
        if (pair <= 0.0) break;
        pair = std::min(pair, prev_pair);
        tau += 2.0 * pair;
        prev_pair = pair;
    }
    tau /= g0;
    const double ess = static_cast<double>(n) / std::max(tau, 1e-12);
    return std::clamp(ess, 1.0, static_cast<double>(n));
}

double split_rhat(const std::vector<std::vector<double>>& chains) {
    if (chains.empty()) throw DataError("split_rhat: no chains");
    std::size_t len = std::numeric_limits<std::size_t>::max();
    for (const auto& c : chains) len = std::min(len, c.size());
    len -= len % 2;
    if (len < 4) throw DataError("split_rhat: chains too short to split");

    const std::size_t half = len / 2;
    std::vector<std::vector<double>> halves;
    for (const auto& c : chains) {
        halves.emplace_back(c.begin(), c.begin() + half);
        halves.emplace_back(c.begin() + half, c.begin() + len);
    }
    const std::size_t m = halves.size();
    std::vector<double> means(m), vars(m);
    for (std::size_t j = 0; j < m; ++j) {
        means[j] = mean_of(halves[j]);
        vars[j] = sample_variance(halves[j]);
    }
    const double grand = mean_of(means);
    double b = 0.0;
    for (double mu : means) b += (mu - grand) * (mu - grand);
    b *= static_cast<double>(half) / static_cast<double>(m - 1);
    const double w = mean_of(vars);
    if (!(w > 0.0)) return b > 0.0 ? std::numeric_limits<double>::infinity() : 1.0;
    const double var_plus =
        (static_cast<double>(half - 1) / static_cast<double>(half)) * w + b / static_cast<double>(half);
    return std::sqrt(var_plus / w);
}

namespace {

std::vector<double> marginal_p11_series(const PosteriorDraws& d) {
    std::vector<double> out(d.n_retained);
    for (std::size_t r = 0; r < d.n_retained; ++r) {
        std::size_t count = 0;
        for (std::size_t i = 0; i < d.n_units; ++i)
            if (d.stratum(r, i) == s11) ++count;
        out[r] = static_cast<double>(count) / static_cast<double>(d.n_units);
    }
    return out;
}

std::vector<double> sigma2_series(const PosteriorDraws& d, int which) {
    std::vector<double> out(d.n_retained);
    for (std::size_t r = 0; r < d.n_retained; ++r) out[r] = d.sigma2_at(r, which);
    return out;
}

SeriesDiagnostic diagnose_series(const std::string& name,
                                 const std::vector<std::vector<double>>& per_chain) {
    SeriesDiagnostic s;
    s.name = name;
    std::size_t total = 0;
    for (const auto& c : per_chain) {
        s.ess += geyer_ess(c);
        total += c.size();
    }
    s.ess = std::min(s.ess, static_cast<double>(total));
    s.n_draws = total;
    s.rhat = split_rhat(per_chain);
    return s;
}

}  // namespace

nlohmann::json DiagnosticsReport::to_json() const {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& s : series)
        rows.push_back({{"series", s.name}, {"ess", s.ess}, {"rhat", s.rhat}, {"draws", s.n_draws}});
    return {{"series", rows}, {"sace_skipped_draws", sace_skipped}, {"acceptance", acceptance}};
}

DiagnosticsReport diagnose_chains(const std::vector<PosteriorDraws>& chains) {
    if (chains.empty()) throw DataError("diagnose_chains: no chains");
    for (const auto& c : chains) {
        if (c.n_retained == 0) throw DataError("diagnose_chains: a chain has no retained draws");
        if (c.n_units != chains.front().n_units)
            throw DataError("diagnose_chains: chains disagree on unit count");
    }

    DiagnosticsReport report;
    std::vector<std::vector<double>> sace, s111, s110, s101, p11;
    for (const auto& c : chains) {
        const SaceDraws sd = sace_draws(c);
        report.sace_skipped += sd.n_skipped;
        if (sd.values.empty())
            throw DataError("diagnose_chains: a chain has no draws with always-survivors");
        sace.push_back(sd.values);
        s111.push_back(sigma2_series(c, 0));
        s110.push_back(sigma2_series(c, 1));
        s101.push_back(sigma2_series(c, 2));
        p11.push_back(marginal_p11_series(c));
        if (c.meta.contains("acceptance")) report.acceptance.push_back(c.meta.at("acceptance"));
    }
    report.series.push_back(diagnose_series("sace", sace));
    report.series.push_back(diagnose_series("sigma2_111", s111));
    report.series.push_back(diagnose_series("sigma2_110", s110));
    report.series.push_back(diagnose_series("sigma2_101", s101));
    report.series.push_back(diagnose_series("marginal_p11", p11));
    return report;
}

}  // namespace sacebart
