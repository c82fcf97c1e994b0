#pragma once

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sacebart/sampler.hpp"

namespace sacebart {

// Effective sample size via Geyer's initial monotone positive sequence on a
// single series. Returns a value in [1, length].
double geyer_ess(const std::vector<double>& series);

// Split-chain potential scale reduction: each chain is halved and the
// standard between/within ratio is computed over the half-chains. Chains are
// truncated to a common even length first.
double split_rhat(const std::vector<std::vector<double>>& chains);

struct SeriesDiagnostic {
    std::string name;
    double ess = 0.0;   // summed across chains, capped at total retained draws
    double rhat = 0.0;
    std::size_t n_draws = 0;
};

struct DiagnosticsReport {
    std::vector<SeriesDiagnostic> series;  // sace, sigma2 components, marginal p11
    std::size_t sace_skipped = 0;          // draws without always-survivors, all chains
    nlohmann::json acceptance;             // per-chain tree-move acceptance rates

    nlohmann::json to_json() const;
};

// Scalar summaries tracked per retained draw across one or more chains.
DiagnosticsReport diagnose_chains(const std::vector<PosteriorDraws>& chains);

}  // namespace sacebart
