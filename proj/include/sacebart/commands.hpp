#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sacebart/sampler.hpp"
#include "sacebart/subgroup.hpp"

namespace sacebart {

// Command implementations shared by the CLI and the language bindings. Each
// writes its files under out_dir (created if missing) and throws the error
// taxonomy on failure. Every output carries the config echo, seed, code
// version, and stratum-convention note; timestamps appear only in meta.json
// and only when `timestamps` is set.

struct SimulateOptions {
    std::string dgp = "dgp-a";
    std::size_t n = 1000;
    std::uint64_t seed = 0;
    std::size_t oracle_mc = 1000000;
    std::string out_dir;
    bool timestamps = true;

    nlohmann::json to_json() const;
};

void cmd_simulate(const SimulateOptions& opt);

struct CvOptions {
    std::string data_path;
    std::vector<double> w_grid = {1.0, 2.0, 3.0, 4.0};
    std::vector<int> trees_grid = {50, 75, 100, 200};
    int folds = 5;
    std::uint64_t seed = 0;
    int iters = 400;
    int burn = 200;
    double a0 = 0.001;
    double b0 = 0.001;
    BartConfig bart;  // non-grid fields reused across cells
    std::string out_dir;
    bool timestamps = true;

    nlohmann::json to_json() const;
};

void cmd_cv(const CvOptions& opt);

struct FitOptions {
    std::string data_path;
    std::string model = "bart";  // or "parametric"
    int chains = 1;
    ChainConfig chain;           // seed is the base; chain k runs at seed + k
    double prior_variance = 100.0;  // parametric model only
    int checkpoint_every = 0;    // bart only; per-chain files under out_dir
    bool resume = false;         // continue from existing per-chain checkpoints
    int threads = 1;
    std::string out_dir;
    bool timestamps = true;

    nlohmann::json to_json() const;
};

// Writes draws_chain<k>.bin per chain plus diagnostics.json and meta.json.
void cmd_fit(const FitOptions& opt);

struct SummarizeOptions {
    std::vector<std::string> draws_paths;
    std::string data_path;
    std::string p = "auto";  // or a numeric threshold in [0,1]
    std::vector<double> thresholds = {0.99, 0.95, 0.90, 0.80};
    std::size_t grid_points = 201;
    bool per_draw_reference = true;
    std::string out_dir;
    bool timestamps = true;

    nlohmann::json to_json() const;
};

// Writes summary.json, csace_units.csv, distribution.csv, balance.csv,
// q_draws.csv, likely_set.json, meta.json.
void cmd_summarize(const SummarizeOptions& opt);

struct SubgroupsOptions {
    std::vector<std::string> draws_paths;
    std::string data_path;
    std::string likely_path;  // likely_set.json produced by summarize
    SubgroupParams params;
    std::string out_dir;
    bool timestamps = true;

    nlohmann::json to_json() const;
};

// Writes subgroups.json and leaf_draws.csv plus meta.json.
void cmd_subgroups(const SubgroupsOptions& opt);

struct DiagnoseOptions {
    std::vector<std::string> draws_paths;
    std::string out_dir;
    bool timestamps = true;

    nlohmann::json to_json() const;
};

void cmd_diagnose(const DiagnoseOptions& opt);

// Retained draws from several chains concatenated in argument order; metas
// are kept per chain under "chains".
PosteriorDraws pool_draws(const std::vector<PosteriorDraws>& chains);

PosteriorDraws load_pooled_draws(const std::vector<std::string>& paths);

}  // namespace sacebart
