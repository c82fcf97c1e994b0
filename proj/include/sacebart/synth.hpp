#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sacebart/dataset.hpp"

namespace sacebart {

// Synthetic trial generator with monotone strata by construction: latent
// Z ~ N(m_z, 1) sends S=00 when Z >= 0, otherwise W ~ N(m_w, 1) sends S=10
// when W >= 0 and S=11 when W < 0.
struct DgpSpec {
    std::string name;
    std::size_t n_units = 0;
    std::vector<CovariateKind> kinds;  // standard normal or Bernoulli(0.5)
    std::vector<std::string> covariate_names;
    std::function<double(const std::vector<double>&)> m_z;
    std::function<double(const std::vector<double>&)> m_w;
    std::function<double(const std::vector<double>&)> mu_111;
    std::function<double(const std::vector<double>&)> mu_110;
    std::function<double(const std::vector<double>&)> mu_101;
    double sd_111 = 1.0, sd_110 = 1.0, sd_101 = 1.0;
    double treat_prob = 0.5;
    std::uint64_t seed = 0;

    void check() const;
};

// Sealed ground truth kept apart from the observable dataset. Potential
// outcomes are NaN where death makes them undefined.
struct TruthRecord {
    std::vector<std::uint8_t> strata;
    std::vector<double> y1;     // defined for S in {10, 11}
    std::vector<double> y0;     // defined for S = 11
    std::vector<double> csace;  // mu_111(x) - mu_110(x) at every unit

    nlohmann::json to_json() const;
};

struct GeneratedTrial {
    TrialDataset data;
    TruthRecord truth;
};

GeneratedTrial generate(const DgpSpec& spec);

struct SaceOracle {
    double value = 0.0;
    double se = 0.0;
    std::size_t n_always = 0;  // simulated units landing in S=11
};

// Monte Carlo ground truth: mean effect among simulated always-survivors.
// The stream is derived from spec.seed but distinct from generate's.
SaceOracle oracle_sace(const DgpSpec& spec, std::size_t n_mc);

double oracle_csace(const DgpSpec& spec, const std::vector<double>& x);

// Catalogue: "dgp-a" (linear maps, effect 2 + x1), "dgp-b" (sin and product
// terms), "moderated" (effect +/-5 by sign of x1), "constant" (effect 3).
DgpSpec named_dgp(const std::string& name, std::size_t n_units, std::uint64_t seed);

std::vector<std::string> dgp_names();

}  // namespace sacebart
