#include "sacebart/dataset.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <unordered_set>

#include "sacebart/errors.hpp"
#include "sacebart/math.hpp"

namespace sacebart {

namespace {

std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string field;
    std::istringstream iss(line);
    while (std::getline(iss, field, ',')) out.push_back(trim(field));
    if (!line.empty() && line.back() == ',') out.push_back("");
    return out;
}

double parse_double(const std::string& s, const std::string& where) {
    double v = 0.0;
    const char* b = s.data();
    const char* e = b + s.size();
    auto [p, ec] = std::from_chars(b, e, v);
    if (ec != std::errc() || p != e) throw DataError("malformed number '" + s + "' at " + where);
    return v;
}

int parse_flag(const std::string& s, const std::string& where) {
    if (s == "0") return 0;
    if (s == "1") return 1;
    throw DataError("flag must be 0 or 1, got '" + s + "' at " + where);
}

std::string format_double(double v) {
    char buf[40];
    auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    if (ec != std::errc()) throw NumericError("format_double failed");
    return std::string(buf, p);
}

}  // namespace

std::vector<ObservedGroup> classify_groups(const TrialDataset& ds) {
    std::vector<ObservedGroup> g(ds.n_units());
    for (std::size_t i = 0; i < ds.n_units(); ++i) {
        if (ds.treat[i] == 1)
            g[i] = ds.survive[i] == 1 ? ObservedGroup::t1d1 : ObservedGroup::t1d0;
        else
            g[i] = ds.survive[i] == 1 ? ObservedGroup::t0d1 : ObservedGroup::t0d0;
    }
    return g;
}

std::array<std::size_t, 4> group_counts(const TrialDataset& ds) {
    std::array<std::size_t, 4> counts{0, 0, 0, 0};
    for (ObservedGroup g : classify_groups(ds)) counts[static_cast<int>(g)]++;
    return counts;
}

void validate(const TrialDataset& ds) {
    const std::size_t n = ds.n_units();
    if (n == 0) throw DataError("dataset has no rows");
    if (ds.treat.size() != n || ds.survive.size() != n || ds.outcome.size() != n)
        throw DataError("dataset column lengths disagree");
    const std::size_t k = ds.n_covariates();
    if (ds.covariates.size() != n * k) throw DataError("covariate matrix size disagrees with spec");
    if (ds.spec.kinds.size() != k || ds.spec.center.size() != k || ds.spec.scale.size() != k)
        throw DataError("covariate spec fields have inconsistent lengths");
    std::unordered_set<std::string> seen;
    for (std::size_t i = 0; i < n; ++i) {
        const std::string where = "row " + std::to_string(i + 1) + " (id '" + ds.ids[i] + "')";
        if (!seen.insert(ds.ids[i]).second) throw DataError("duplicate id at " + where);
        if (ds.treat[i] != 0 && ds.treat[i] != 1) throw DataError("treat outside {0,1} at " + where);
        if (ds.survive[i] != 0 && ds.survive[i] != 1)
            throw DataError("survive outside {0,1} at " + where);
        const bool has_outcome = !std::isnan(ds.outcome[i]);
        if (ds.survive[i] == 1 && !has_outcome)
            throw DataError("survivor missing outcome at " + where);
        if (ds.survive[i] == 0 && has_outcome)
            throw DataError("non-survivor carries an outcome at " + where);
        if (has_outcome && !std::isfinite(ds.outcome[i]))
            throw DataError("non-finite outcome at " + where);
        for (std::size_t c = 0; c < k; ++c) {
            if (!std::isfinite(ds.x(i, c)))
                throw DataError("non-finite covariate '" + ds.spec.names[c] + "' at " + where);
        }
    }
}

std::vector<CovariateKind> infer_kinds(const TrialDataset& ds) {
    const std::size_t n = ds.n_units();
    std::vector<CovariateKind> kinds(ds.n_covariates(), CovariateKind::binary);
    for (std::size_t c = 0; c < ds.n_covariates(); ++c) {
        for (std::size_t i = 0; i < n; ++i) {
            const double v = ds.x(i, c);
            if (v != 0.0 && v != 1.0) {
                kinds[c] = CovariateKind::continuous;
                break;
            }
        }
    }
    return kinds;
}

TrialDataset standardize(const TrialDataset& ds) {
    if (ds.spec.standardized) throw DataError("standardize: dataset is already standardized");
    TrialDataset out = ds;
    const std::size_t n = ds.n_units();
    for (std::size_t c = 0; c < ds.n_covariates(); ++c) {
        if (ds.spec.kinds[c] == CovariateKind::binary) {
            out.spec.center[c] = 0.0;
            out.spec.scale[c] = 1.0;
            continue;
        }
        std::vector<double> col(ds.column(c), ds.column(c) + n);
        const double m = mean_of(col);
        double sd = sample_sd(col);
        if (sd == 0.0) sd = 1.0;
        out.spec.center[c] = m;
        out.spec.scale[c] = sd;
        double* dst = out.covariates.data() + c * n;
        for (std::size_t i = 0; i < n; ++i) dst[i] = (col[i] - m) / sd;
    }
    out.spec.standardized = true;
    return out;
}

TrialDataset load_dataset(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open dataset file '" + path + "'");
    std::string line;
    std::vector<std::string> header;
    while (std::getline(in, line)) {
        if (trim(line).empty() || trim(line)[0] == '#') continue;
        header = split_csv_line(line);
        break;
    }
    if (header.size() < 4 || header[0] != "id" || header[1] != "treat" || header[2] != "survive" ||
        header[3] != "outcome")
        throw DataError("dataset header must start with id,treat,survive,outcome");

    TrialDataset ds;
    ds.spec.names.assign(header.begin() + 4, header.end());
    const std::size_t k = ds.spec.names.size();
    std::vector<std::vector<double>> cols(k);
    std::size_t row = 1;
    while (std::getline(in, line)) {
        ++row;
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        const std::vector<std::string> f = split_csv_line(line);
        if (f.size() != 4 + k)
            throw DataError("row " + std::to_string(row) + " has " + std::to_string(f.size()) +
                            " fields, expected " + std::to_string(4 + k));
        const std::string where = "row " + std::to_string(row);
        ds.ids.push_back(f[0]);
        ds.treat.push_back(parse_flag(f[1], where));
        ds.survive.push_back(parse_flag(f[2], where));
        ds.outcome.push_back(f[3].empty() ? std::nan("") : parse_double(f[3], where));
        for (std::size_t c = 0; c < k; ++c) cols[c].push_back(parse_double(f[4 + c], where));
    }
    const std::size_t n = ds.ids.size();
    ds.covariates.resize(n * k);
    for (std::size_t c = 0; c < k; ++c)
        std::copy(cols[c].begin(), cols[c].end(), ds.covariates.begin() + c * n);
    ds.spec.kinds = infer_kinds(ds);
    ds.spec.center.assign(k, 0.0);
    ds.spec.scale.assign(k, 1.0);
    validate(ds);
    return ds;
}

void write_dataset(const std::string& path, const TrialDataset& ds,
                   const std::vector<std::string>& comment_lines) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot open '" + path + "' for writing");
    for (const std::string& c : comment_lines) out << "# " << c << "\n";
    out << "id,treat,survive,outcome";
    for (const std::string& name : ds.spec.names) out << "," << name;
    out << "\n";
    for (std::size_t i = 0; i < ds.n_units(); ++i) {
        out << ds.ids[i] << "," << ds.treat[i] << "," << ds.survive[i] << ",";
        if (!std::isnan(ds.outcome[i])) out << format_double(ds.outcome[i]);
        for (std::size_t c = 0; c < ds.n_covariates(); ++c) out << "," << format_double(ds.x(i, c));
        out << "\n";
    }
    if (!out) throw DataError("write failed for '" + path + "'");
}

}  // namespace sacebart
