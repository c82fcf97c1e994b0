#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <vector>

namespace sacebart {

enum class CovariateKind { continuous, binary };

// Per-covariate affine transform bookkeeping: standardized = (x - center)/scale.
// Binary columns keep center 0, scale 1.
struct CovariateSpec {
    std::vector<std::string> names;
    std::vector<CovariateKind> kinds;
    std::vector<double> center;
    std::vector<double> scale;
    bool standardized = false;

    std::size_t size() const { return names.size(); }
    double to_original(std::size_t k, double standardized_value) const {
        return standardized_value * scale[k] + center[k];
    }
};

// One randomized trial with a survival indicator and an outcome observed only
// for survivors.  Covariates are stored column-major (column k occupies
// [k*n, (k+1)*n)); dead units carry NaN in `outcome`.
struct TrialDataset {
    std::vector<std::string> ids;
    std::vector<int> treat;
    std::vector<int> survive;
    std::vector<double> outcome;
    std::vector<double> covariates;
    CovariateSpec spec;

    std::size_t n_units() const { return ids.size(); }
    std::size_t n_covariates() const { return spec.names.size(); }
    double x(std::size_t unit, std::size_t k) const { return covariates[k * n_units() + unit]; }
    const double* column(std::size_t k) const { return covariates.data() + k * n_units(); }
};

// Observed (treatment, survival) cell.  Group indices follow the order
// (1,1), (1,0), (0,1), (0,0).
enum class ObservedGroup { t1d1 = 0, t1d0 = 1, t0d1 = 2, t0d0 = 3 };

std::vector<ObservedGroup> classify_groups(const TrialDataset& ds);
std::array<std::size_t, 4> group_counts(const TrialDataset& ds);

// Throws DataError with the offending row/column on any violation: flags
// outside {0,1}, outcome missingness inconsistent with survival, non-finite
// covariates, duplicate ids.
void validate(const TrialDataset& ds);

// Centers and scales continuous covariates by mean and sample (n-1) standard
// deviation; binary covariates pass through.  A constant continuous column is
// centered with scale 1.
TrialDataset standardize(const TrialDataset& ds);

// CSV with header id,treat,survive,outcome,<covariate names...>; the outcome
// field is empty for non-survivors.  Lines starting with '#' are skipped.
TrialDataset load_dataset(const std::string& path);
void write_dataset(const std::string& path, const TrialDataset& ds,
                   const std::vector<std::string>& comment_lines = {});

// Infers covariate kinds from values: a column whose values are all 0 or 1 is
// binary, anything else continuous.
std::vector<CovariateKind> infer_kinds(const TrialDataset& ds);

}  // namespace sacebart
