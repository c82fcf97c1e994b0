#include "sacebart/estimands.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "sacebart/errors.hpp"
#include "sacebart/math.hpp"

namespace sacebart {

CsaceDraws csace_draws(const PosteriorDraws& draws) {
    CsaceDraws out;
    out.n_units = draws.n_units;
    out.n_retained = draws.n_retained;
    out.delta.resize(draws.m111.size());
    for (std::size_t i = 0; i < out.delta.size(); ++i)
        out.delta[i] = draws.m111[i] - draws.m110[i];
    return out;
}

SaceDraws sace_draws(const PosteriorDraws& draws) {
    const std::size_t n = draws.n_units;
    SaceDraws out;
    out.values.reserve(draws.n_retained);
    for (std::size_t r = 0; r < draws.n_retained; ++r) {
        double sum = 0.0;
        std::size_t count = 0;
        for (std::size_t i = 0; i < n; ++i) {
            if (draws.stratum(r, i) == s11) {
                sum += draws.m111_at(r, i) - draws.m110_at(r, i);
                ++count;
            }
        }
        if (count == 0)
            out.n_skipped += 1;
        else
            out.values.push_back(sum / static_cast<double>(count));
    }
    return out;
}

SaceSummary summarize_sace(const SaceDraws& draws) {
    if (draws.values.empty()) throw DataError("summarize_sace: no usable draws");
    SaceSummary s;
    s.mean = mean_of(draws.values);
    s.sd = sample_sd(draws.values);
    s.q025 = quantile_of(draws.values, 0.025);
    s.median = quantile_of(draws.values, 0.5);
    s.q975 = quantile_of(draws.values, 0.975);
    s.n_draws = draws.values.size();
    s.n_skipped = draws.n_skipped;
    return s;
}

MembershipPosterior membership_posterior(const PosteriorDraws& draws, const TrialDataset& ds) {
    if (draws.n_retained == 0) throw DataError("membership_posterior: no retained draws");
    if (draws.n_units != ds.n_units())
        throw DataError("membership_posterior: draws and dataset disagree on unit count");
    const std::size_t n = draws.n_units;
    MembershipPosterior m;
    m.p11.assign(n, 0.0);
    m.p10.assign(n, 0.0);
    m.p00.assign(n, 0.0);
    m.groups = classify_groups(ds);
    for (std::size_t r = 0; r < draws.n_retained; ++r) {
        for (std::size_t i = 0; i < n; ++i) {
            switch (draws.stratum(r, i)) {
                case s00: m.p00[i] += 1.0; break;
                case s10: m.p10[i] += 1.0; break;
                default: m.p11[i] += 1.0; break;
            }
        }
    }
    const double denom = static_cast<double>(draws.n_retained);
    for (std::size_t i = 0; i < n; ++i) {
        m.p11[i] /= denom;
        m.p10[i] /= denom;
        m.p00[i] /= denom;
        m.marginal_p11 += m.p11[i];
    }
    m.marginal_p11 /= static_cast<double>(n);
    return m;
}

LikelySet likely_survivor_set(const MembershipPosterior& membership, double p) {
    if (!(p >= 0.0 && p <= 1.0)) throw UsageError("likely_survivor_set: p must lie in [0,1]");
    LikelySet set;
    set.p = p;
    for (std::size_t i = 0; i < membership.groups.size(); ++i) {
        if (membership.groups[i] == ObservedGroup::t0d1)
            set.units.push_back(static_cast<int>(i));
        else if (membership.groups[i] == ObservedGroup::t1d1 && membership.p11[i] >= p)
            set.units.push_back(static_cast<int>(i));
    }
    return set;
}

double choose_p(const MembershipPosterior& membership) {
    const double n = static_cast<double>(membership.groups.size());
    double best_p = 0.50;
    double best_gap = std::numeric_limits<double>::infinity();
    for (int step = 0; step <= 49; ++step) {
        const double p = 0.50 + 0.01 * step;
        const LikelySet set = likely_survivor_set(membership, p);
        const double gap = std::abs(static_cast<double>(set.size()) / n - membership.marginal_p11);
        if (gap <= best_gap) {  // ties resolve toward the larger p
            best_gap = gap;
            best_p = p;
        }
    }
    return best_p;
}

double asd(const std::vector<double>& sample_a, const std::vector<double>& sample_b) {
    if (sample_a.empty() || sample_b.empty()) throw UsageError("asd: empty sample");
    const double ma = mean_of(sample_a);
    const double mb = mean_of(sample_b);
    const double va = sample_a.size() >= 2 ? sample_variance(sample_a) : 0.0;
    const double vb = sample_b.size() >= 2 ? sample_variance(sample_b) : 0.0;
    const double pooled = (va + vb) / 2.0;
    if (pooled == 0.0)
        return ma == mb ? 0.0 : std::numeric_limits<double>::infinity();
    return std::abs(ma - mb) / std::sqrt(pooled);
}

BalanceReport balance_report(const PosteriorDraws& draws, const LikelySet& likely,
                             const TrialDataset& ds) {
    if (draws.n_retained == 0) throw DataError("balance_report: no retained draws");
    if (likely.units.empty()) throw DataError("balance_report: empty likely set");
    const std::size_t n = draws.n_units;
    const std::size_t k = ds.n_covariates();
    const std::size_t nr = draws.n_retained;

    BalanceReport report;
    report.rows.resize(k);
    std::vector<double> likely_vals(likely.units.size());
    std::vector<std::size_t> kept_s11(k, 0), kept_s10(k, 0), kept_s00(k, 0), kept_pair(k, 0);

    for (std::size_t c = 0; c < k; ++c) {
        BalanceRow& row = report.rows[c];
        row.name = ds.spec.names[c];
        for (std::size_t u = 0; u < likely.units.size(); ++u)
            likely_vals[u] = ds.x(likely.units[u], c);
        row.likely_mean = mean_of(likely_vals);

        double sum_latent = 0.0, sum_asd = 0.0;
        double sum_m11 = 0.0, sum_m10 = 0.0, sum_m00 = 0.0, sum_pair = 0.0;
        std::vector<double> v11, v10, v00;
        for (std::size_t r = 0; r < nr; ++r) {
            v11.clear();
            v10.clear();
            v00.clear();
            for (std::size_t i = 0; i < n; ++i) {
                const double x = ds.x(i, c);
                switch (draws.stratum(r, i)) {
                    case s11: v11.push_back(x); break;
                    case s10: v10.push_back(x); break;
                    default: v00.push_back(x); break;
                }
            }
            if (!v11.empty()) {
                sum_latent += mean_of(v11);
                sum_asd += asd(likely_vals, v11);
                sum_m11 += mean_of(v11);
                kept_s11[c] += 1;
            }
            if (!v10.empty()) {
                sum_m10 += mean_of(v10);
                kept_s10[c] += 1;
            }
            if (!v00.empty()) {
                sum_m00 += mean_of(v00);
                kept_s00[c] += 1;
            }
            if (!v11.empty() && !v10.empty() && !v00.empty()) {
                const double pairwise =
                    std::max({asd(v11, v10), asd(v11, v00), asd(v10, v00)});
                sum_pair += pairwise;
                kept_pair[c] += 1;
            }
        }
        const double nan = std::nan("");
        row.latent_s11_mean = kept_s11[c] ? sum_latent / kept_s11[c] : nan;
        row.asd_likely_vs_latent = kept_s11[c] ? sum_asd / kept_s11[c] : nan;
        row.mean_s11 = kept_s11[c] ? sum_m11 / kept_s11[c] : nan;
        row.mean_s10 = kept_s10[c] ? sum_m10 / kept_s10[c] : nan;
        row.mean_s00 = kept_s00[c] ? sum_m00 / kept_s00[c] : nan;
        row.max_pairwise_asd = kept_pair[c] ? sum_pair / kept_pair[c] : nan;
    }
    // Stratum occupancy does not depend on the covariate, so the skip counts
    // from any column apply to all of them.
    report.skipped_s11 = nr - kept_s11[0];
    report.skipped_s10 = nr - kept_s10[0];
    report.skipped_s00 = nr - kept_s00[0];
    report.skipped_pairwise = nr - kept_pair[0];
    return report;
}

double csace_cdf(const CsaceDraws& csace, const LikelySet& likely, double u) {
    if (std::isnan(u)) throw UsageError("csace_cdf: u must not be NaN");
    if (likely.units.empty()) throw DataError("csace_cdf: empty likely set");
    if (csace.n_retained == 0) throw DataError("csace_cdf: no retained draws");
    double total = 0.0;
    for (int unit : likely.units) {
        std::size_t below = 0;
        for (std::size_t r = 0; r < csace.n_retained; ++r)
            if (csace.at(r, static_cast<std::size_t>(unit)) <= u) ++below;
        total += static_cast<double>(below) / static_cast<double>(csace.n_retained);
    }
    return total / static_cast<double>(likely.units.size());
}

KdeBandwidth kde_bandwidth(const CsaceDraws& csace, const LikelySet& likely) {
    if (likely.units.empty()) throw DataError("kde_bandwidth: empty likely set");
    if (csace.n_retained == 0) throw DataError("kde_bandwidth: no retained draws");
    const std::size_t n11 = likely.units.size();
    std::vector<double> vals(n11);
    double sum_sd = 0.0, sum_iqr = 0.0;
    for (std::size_t r = 0; r < csace.n_retained; ++r) {
        for (std::size_t u = 0; u < n11; ++u)
            vals[u] = csace.at(r, static_cast<std::size_t>(likely.units[u]));
        sum_sd += n11 >= 2 ? sample_sd(vals) : 0.0;
        sum_iqr += iqr_of(vals);
    }
    const double sd_hat = sum_sd / static_cast<double>(csace.n_retained);
    const double iqr_hat = sum_iqr / static_cast<double>(csace.n_retained);
    return kde_bandwidth_from(sd_hat, iqr_hat, n11);
}

KdeBandwidth kde_bandwidth_from(double sd_hat, double iqr_hat, std::size_t n11) {
    if (n11 == 0) throw UsageError("kde_bandwidth_from: n11 must be positive");
    KdeBandwidth bw;
    bw.lambda = 0.9 * std::min(sd_hat, iqr_hat) /
                (1.34 * std::pow(static_cast<double>(n11), 0.2));
    if (!(bw.lambda > 0.0)) {
        // Degenerate draws: keep a narrow positive width so the density still
        // integrates to one on a fine grid.
        bw.lambda = 1e-3;
        bw.spike_fallback = true;
    }
    return bw;
}

std::vector<double> csace_density(const CsaceDraws& csace, const LikelySet& likely,
                                  const std::vector<double>& grid) {
    const KdeBandwidth bw = kde_bandwidth(csace, likely);
    const double lam = bw.lambda;
    const std::size_t n11 = likely.units.size();
    const double weight = 1.0 / (static_cast<double>(n11) * static_cast<double>(csace.n_retained));
    std::vector<double> density(grid.size(), 0.0);
    for (int unit : likely.units) {
        for (std::size_t r = 0; r < csace.n_retained; ++r) {
            const double center = csace.at(r, static_cast<std::size_t>(unit));
            for (std::size_t g = 0; g < grid.size(); ++g)
                density[g] += weight * norm_pdf((grid[g] - center) / lam) / lam;
        }
    }
    return density;
}

std::vector<double> default_density_grid(const CsaceDraws& csace, const LikelySet& likely,
                                         std::size_t n_points) {
    if (n_points < 2) throw UsageError("default_density_grid: need at least 2 points");
    const KdeBandwidth bw = kde_bandwidth(csace, likely);
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    for (int unit : likely.units) {
        for (std::size_t r = 0; r < csace.n_retained; ++r) {
            const double v = csace.at(r, static_cast<std::size_t>(unit));
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
    }
    lo -= 4.0 * bw.lambda;
    hi += 4.0 * bw.lambda;
    std::vector<double> grid(n_points);
    const double step = (hi - lo) / static_cast<double>(n_points - 1);
    for (std::size_t g = 0; g < n_points; ++g) grid[g] = lo + step * static_cast<double>(g);
    return grid;
}

DifferentialEffects differential_effects(const CsaceDraws& csace, const LikelySet& likely,
                                         bool per_draw_reference) {
    if (likely.units.empty()) throw DataError("differential_effects: empty likely set");
    if (csace.n_retained == 0) throw DataError("differential_effects: no retained draws");
    const std::size_t n11 = likely.units.size();
    const std::size_t nr = csace.n_retained;

    std::vector<double> reference(nr, 0.0);
    for (std::size_t r = 0; r < nr; ++r) {
        double sum = 0.0;
        for (int unit : likely.units) sum += csace.at(r, static_cast<std::size_t>(unit));
        reference[r] = sum / static_cast<double>(n11);
    }
    if (!per_draw_reference) {
        const double fixed = mean_of(reference);
        std::fill(reference.begin(), reference.end(), fixed);
    }

    DifferentialEffects out;
    out.units = likely.units;
    out.d.resize(n11);
    out.d_star.resize(n11);
    for (std::size_t u = 0; u < n11; ++u) {
        std::size_t below = 0;
        for (std::size_t r = 0; r < nr; ++r)
            if (csace.at(r, static_cast<std::size_t>(likely.units[u])) <= reference[r]) ++below;
        const double d = static_cast<double>(below) / static_cast<double>(nr);
        out.d[u] = d;
        out.d_star[u] = std::max(1.0 - 2.0 * d, 2.0 * d - 1.0);
        if (out.d_star[u] > 0.9) out.share_above_09 += 1.0;
        if (out.d_star[u] > 0.8) out.share_above_08 += 1.0;
        if (out.d_star[u] > 0.7) out.share_above_07 += 1.0;
    }
    out.share_above_09 /= static_cast<double>(n11);
    out.share_above_08 /= static_cast<double>(n11);
    out.share_above_07 /= static_cast<double>(n11);
    return out;
}

BenefitProbabilities benefit_probabilities(const CsaceDraws& csace, const LikelySet& likely,
                                           const std::vector<double>& thresholds) {
    if (likely.units.empty()) throw DataError("benefit_probabilities: empty likely set");
    if (csace.n_retained == 0) throw DataError("benefit_probabilities: no retained draws");
    const std::size_t n11 = likely.units.size();
    const std::size_t nr = csace.n_retained;

    BenefitProbabilities out;
    out.units = likely.units;
    out.q.assign(n11, 0.0);
    out.q_draws.assign(nr, 0.0);
    for (std::size_t u = 0; u < n11; ++u) {
        const std::size_t col = static_cast<std::size_t>(likely.units[u]);
        for (std::size_t r = 0; r < nr; ++r) {
            if (csace.at(r, col) < 0.0) {
                out.q[u] += 1.0;
                out.q_draws[r] += 1.0;
            }
        }
        out.q[u] /= static_cast<double>(nr);
    }
    for (std::size_t r = 0; r < nr; ++r) out.q_draws[r] /= static_cast<double>(n11);
    out.thresholds = thresholds;
    out.share_above.assign(thresholds.size(), 0.0);
    for (std::size_t t = 0; t < thresholds.size(); ++t) {
        std::size_t count = 0;
        for (double qi : out.q)
            if (qi > thresholds[t]) ++count;
        out.share_above[t] = static_cast<double>(count) / static_cast<double>(n11);
    }
    return out;
}

}  // namespace sacebart
