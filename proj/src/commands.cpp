#include "sacebart/commands.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <thread>

#include "sacebart/diagnostics.hpp"
#include "sacebart/draws_io.hpp"
#include "sacebart/errors.hpp"
#include "sacebart/estimands.hpp"
#include "sacebart/math.hpp"
#include "sacebart/parametric.hpp"
#include "sacebart/synth.hpp"
#include "sacebart/version.hpp"

namespace sacebart {

namespace {

namespace fs = std::filesystem;

void ensure_dir(const std::string& dir) {
    if (dir.empty()) throw UsageError("output directory must be given");
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw DataError("cannot create output directory '" + dir + "': " + ec.message());
}

std::string fmt_double(double v) {
    if (std::isnan(v)) return "";
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

std::string iso_now() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    char buf[32];
    std::tm tm_utc{};
    gmtime_r(&t, &tm_utc);
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm_utc);
    return buf;
}

void write_json_file(const std::string& path, const nlohmann::json& j) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot open '" + path + "' for writing");
    out << j.dump(2) << '\n';
    if (!out) throw DataError("write failed for '" + path + "'");
}

// Comment prelude stamped on every CSV: version, convention, config echo.
std::vector<std::string> csv_prelude(const nlohmann::json& config) {
    return {"version=" + std::string(kVersion), "convention=" + std::string(kStratumConventionNote),
            "config=" + config.dump()};
}

void write_csv(const std::string& path, const nlohmann::json& config, const std::string& header,
               const std::vector<std::string>& rows) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot open '" + path + "' for writing");
    for (const auto& line : csv_prelude(config)) out << "# " << line << '\n';
    out << header << '\n';
    for (const auto& row : rows) out << row << '\n';
    if (!out) throw DataError("write failed for '" + path + "'");
}

nlohmann::json stamped(const nlohmann::json& config) {
    return {{"version", kVersion}, {"convention", kStratumConventionNote}, {"config", config}};
}

void write_meta(const std::string& out_dir, const std::string& command,
                const nlohmann::json& config, bool timestamps,
                const nlohmann::json& extra = nlohmann::json::object()) {
    nlohmann::json meta = stamped(config);
    meta["command"] = command;
    for (const auto& [key, value] : extra.items()) meta[key] = value;
    if (timestamps) meta["generated_at"] = iso_now();
    write_json_file((fs::path(out_dir) / "meta.json").string(), meta);
}

nlohmann::json bart_config_json(const BartConfig& b) {
    return {{"tau", b.tau},       {"gamma", b.gamma},     {"w", b.w},
            {"num_trees", b.num_trees}, {"p_grow", b.p_grow},   {"p_prune", b.p_prune},
            {"p_change", b.p_change},   {"max_cutpoints", b.max_cutpoints}};
}

}  // namespace

nlohmann::json SimulateOptions::to_json() const {
    return {{"dgp", dgp},   {"n", n},           {"seed", seed},
            {"oracle_mc", oracle_mc}, {"out", out_dir}, {"timestamps", timestamps}};
}

nlohmann::json CvOptions::to_json() const {
    return {{"data", data_path}, {"w_grid", w_grid},   {"trees_grid", trees_grid},
            {"folds", folds},    {"seed", seed},       {"iters", iters},
            {"burn", burn},      {"a0", a0},           {"b0", b0},
            {"bart", bart_config_json(bart)}, {"out", out_dir}, {"timestamps", timestamps}};
}

nlohmann::json FitOptions::to_json() const {
    return {{"data", data_path},
            {"model", model},
            {"chains", chains},
            {"n_iter", chain.n_iter},
            {"burn_in", chain.burn_in},
            {"thin", chain.thin},
            {"seed", chain.seed},
            {"a0", chain.a0},
            {"b0", chain.b0},
            {"init_iters", chain.init_iters},
            {"bart", bart_config_json(chain.bart)},
            {"prior_variance", prior_variance},
            {"checkpoint_every", checkpoint_every},
            {"resume", resume},
            {"threads", threads},
            {"out", out_dir},
            {"timestamps", timestamps}};
}

nlohmann::json SummarizeOptions::to_json() const {
    return {{"draws", draws_paths},   {"data", data_path},         {"p", p},
            {"thresholds", thresholds}, {"grid_points", grid_points},
            {"per_draw_reference", per_draw_reference}, {"out", out_dir},
            {"timestamps", timestamps}};
}

nlohmann::json SubgroupsOptions::to_json() const {
    return {{"draws", draws_paths},
            {"data", data_path},
            {"likely", likely_path},
            {"min_leaf", params.cart.min_leaf},
            {"max_depth", params.cart.max_depth},
            {"min_improvement", params.cart.min_improvement},
            {"stepwise_min_gain", params.stepwise_min_gain},
            {"out", out_dir},
            {"timestamps", timestamps}};
}

nlohmann::json DiagnoseOptions::to_json() const {
    return {{"draws", draws_paths}, {"out", out_dir}, {"timestamps", timestamps}};
}

void cmd_simulate(const SimulateOptions& opt) {
    const DgpSpec spec = named_dgp(opt.dgp, opt.n, opt.seed);
    ensure_dir(opt.out_dir);
    const GeneratedTrial trial = generate(spec);
    const SaceOracle oracle = oracle_sace(spec, opt.oracle_mc);

    std::vector<std::string> comments;
    for (const auto& line : csv_prelude(opt.to_json())) comments.push_back(line);
    write_dataset((fs::path(opt.out_dir) / "data.csv").string(), trial.data, comments);

    nlohmann::json truth = stamped(opt.to_json());
    truth["dgp"] = opt.dgp;
    truth["seed"] = opt.seed;
    truth["truth"] = trial.truth.to_json();
    truth["oracle"] = {{"sace", oracle.value},
                       {"se", oracle.se},
                       {"n_always", oracle.n_always},
                       {"n_mc", opt.oracle_mc}};
    write_json_file((fs::path(opt.out_dir) / "truth.json").string(), truth);
    write_meta(opt.out_dir, "simulate", opt.to_json(), opt.timestamps,
               {{"files", {"data.csv", "truth.json"}}});
}

void cmd_cv(const CvOptions& opt) {
    const TrialDataset ds = load_dataset(opt.data_path);
    ensure_dir(opt.out_dir);
    const CvResult res = cross_validate(ds, opt.w_grid, opt.trees_grid, opt.folds, opt.seed,
                                        opt.bart, opt.iters, opt.burn, opt.a0, opt.b0);
    nlohmann::json j = stamped(opt.to_json());
    j["seed"] = opt.seed;
    nlohmann::json table = nlohmann::json::array();
    for (const auto& cell : res.table)
        table.push_back({{"w", cell.w}, {"trees", cell.num_trees}, {"rmse", cell.rmse}});
    j["table"] = table;
    j["best"] = {{"w", res.best_w}, {"trees", res.best_num_trees}};
    write_json_file((fs::path(opt.out_dir) / "cv.json").string(), j);
    write_meta(opt.out_dir, "cv", opt.to_json(), opt.timestamps, {{"files", {"cv.json"}}});
}

void cmd_fit(const FitOptions& opt) {
    if (opt.model != "bart" && opt.model != "parametric")
        throw UsageError("model must be 'bart' or 'parametric'");
    if (opt.chains < 1) throw UsageError("chains must be >= 1");
    if (opt.threads < 1) throw UsageError("threads must be >= 1");
    if (opt.model == "parametric" && (opt.checkpoint_every > 0 || opt.resume))
        throw UsageError("checkpointing is only supported for the bart model");

    const TrialDataset ds = load_dataset(opt.data_path);
    ensure_dir(opt.out_dir);

    std::vector<PosteriorDraws> all_draws(opt.chains);
    std::vector<std::string> files;
    if (opt.model == "bart") {
        std::vector<std::exception_ptr> errors(opt.chains);
        std::atomic<int> next{0};
        auto worker = [&]() {
            for (;;) {
                const int k = next.fetch_add(1);
                if (k >= opt.chains) return;
                try {
                    ChainConfig cfg = opt.chain;
                    cfg.checkpoint_every = opt.checkpoint_every;
                    const std::string ckpt =
                        (fs::path(opt.out_dir) / ("checkpoint_chain" + std::to_string(k) + ".json"))
                            .string();
                    if (opt.checkpoint_every > 0) cfg.checkpoint_path = ckpt;
                    if (opt.resume) {
                        if (!fs::exists(ckpt))
                            throw DataError("resume requested but checkpoint '" + ckpt +
                                            "' does not exist");
                        all_draws[k] = resume_chain(ds, cfg, ckpt, k);
                    } else {
                        all_draws[k] = run_chain(ds, cfg, k);
                    }
                } catch (...) {
                    errors[k] = std::current_exception();
                }
            }
        };
        const int n_workers = std::min(opt.threads, opt.chains);
        if (n_workers <= 1) {
            worker();
        } else {
            std::vector<std::thread> pool;
            for (int t = 0; t < n_workers; ++t) pool.emplace_back(worker);
            for (auto& th : pool) th.join();
        }
        for (const auto& err : errors)
            if (err) std::rethrow_exception(err);
    } else {
        ParametricChainConfig cfg;
        cfg.n_iter = opt.chain.n_iter;
        cfg.burn_in = opt.chain.burn_in;
        cfg.thin = opt.chain.thin;
        cfg.seed = opt.chain.seed;
        cfg.a0 = opt.chain.a0;
        cfg.b0 = opt.chain.b0;
        cfg.prior_variance = opt.prior_variance;
        for (int k = 0; k < opt.chains; ++k) all_draws[k] = run_chain_parametric(ds, cfg, k);
    }

    // Draws files must be byte-identical across runs that differ only in
    // execution details (threading, checkpointing, output location), so the
    // embedded echo carries the statistical configuration only; the full
    // echo lives in meta.json and diagnostics.json.
    nlohmann::json stat_config = opt.to_json();
    for (const auto& key : {"checkpoint_every", "resume", "threads", "out", "timestamps"})
        stat_config.erase(key);

    nlohmann::json chain_seeds = nlohmann::json::array();
    for (int k = 0; k < opt.chains; ++k) {
        const std::string name = "draws_chain" + std::to_string(k) + ".bin";
        all_draws[k].meta["config"] = stat_config;
        write_draws((fs::path(opt.out_dir) / name).string(), all_draws[k]);
        files.push_back(name);
        chain_seeds.push_back(opt.chain.seed + static_cast<std::uint64_t>(k));
    }

    nlohmann::json diag;
    try {
        diag = diagnose_chains(all_draws).to_json();
    } catch (const Error& e) {
        diag = {{"error", e.what()}};
    }
    nlohmann::json diag_file = stamped(opt.to_json());
    diag_file["diagnostics"] = diag;
    write_json_file((fs::path(opt.out_dir) / "diagnostics.json").string(), diag_file);
    files.push_back("diagnostics.json");

    write_meta(opt.out_dir, "fit", opt.to_json(), opt.timestamps,
               {{"files", files}, {"chain_seeds", chain_seeds}, {"model", opt.model}});
}

PosteriorDraws pool_draws(const std::vector<PosteriorDraws>& chains) {
    if (chains.empty()) throw UsageError("pool_draws: no chains");
    PosteriorDraws pooled;
    pooled.n_units = chains.front().n_units;
    pooled.meta = {{"pooled", true}, {"chains", nlohmann::json::array()}};
    for (const auto& c : chains) {
        if (c.n_units != pooled.n_units)
            throw DataError("pool_draws: chains disagree on unit count");
        pooled.n_retained += c.n_retained;
        pooled.strata.insert(pooled.strata.end(), c.strata.begin(), c.strata.end());
        pooled.m111.insert(pooled.m111.end(), c.m111.begin(), c.m111.end());
        pooled.m110.insert(pooled.m110.end(), c.m110.begin(), c.m110.end());
        pooled.sigma2.insert(pooled.sigma2.end(), c.sigma2.begin(), c.sigma2.end());
        pooled.meta["chains"].push_back(c.meta);
    }
    return pooled;
}

PosteriorDraws load_pooled_draws(const std::vector<std::string>& paths) {
    if (paths.empty()) throw UsageError("at least one draws file is required");
    std::vector<PosteriorDraws> chains;
    chains.reserve(paths.size());
    for (const auto& p : paths) chains.push_back(read_draws(p));
    return pool_draws(chains);
}

namespace {

double parse_threshold_p(const std::string& text) {
    double value = 0.0;
    const auto res = std::from_chars(text.data(), text.data() + text.size(), value);
    if (res.ec != std::errc() || res.ptr != text.data() + text.size())
        throw UsageError("p must be 'auto' or a number in [0,1], got '" + text + "'");
    if (!(value >= 0.0 && value <= 1.0)) throw UsageError("p must lie in [0,1]");
    return value;
}

// Per-grid-point CDF over sorted per-unit draw columns.
std::vector<double> cdf_on_grid(const CsaceDraws& csace, const LikelySet& likely,
                                const std::vector<double>& grid) {
    const std::size_t nr = csace.n_retained;
    std::vector<double> out(grid.size(), 0.0);
    std::vector<double> column(nr);
    for (int unit : likely.units) {
        for (std::size_t r = 0; r < nr; ++r) column[r] = csace.at(r, static_cast<std::size_t>(unit));
        std::sort(column.begin(), column.end());
        for (std::size_t g = 0; g < grid.size(); ++g) {
            const auto it = std::upper_bound(column.begin(), column.end(), grid[g]);
            out[g] += static_cast<double>(it - column.begin()) / static_cast<double>(nr);
        }
    }
    for (double& v : out) v /= static_cast<double>(likely.units.size());
    return out;
}

}  // namespace

void cmd_summarize(const SummarizeOptions& opt) {
    const TrialDataset ds = load_dataset(opt.data_path);
    const PosteriorDraws draws = load_pooled_draws(opt.draws_paths);
    if (draws.n_units != ds.n_units())
        throw DataError("draws and dataset disagree on unit count");
    ensure_dir(opt.out_dir);
    const nlohmann::json config = opt.to_json();

    const MembershipPosterior membership = membership_posterior(draws, ds);
    const bool auto_p = opt.p == "auto";
    const double p = auto_p ? choose_p(membership) : parse_threshold_p(opt.p);
    const LikelySet likely = likely_survivor_set(membership, p);
    if (likely.units.empty())
        throw DataError("likely always-survivor set is empty at p=" + fmt_double(p) +
                        "; no unit clears the membership threshold");

    const CsaceDraws csace = csace_draws(draws);
    const SaceDraws sace = sace_draws(draws);
    const SaceSummary sace_sum = summarize_sace(sace);
    const BalanceReport balance = balance_report(draws, likely, ds);
    const KdeBandwidth bw = kde_bandwidth(csace, likely);
    const DifferentialEffects diff = differential_effects(csace, likely, opt.per_draw_reference);
    const BenefitProbabilities benefit = benefit_probabilities(csace, likely, opt.thresholds);

    // summary.json
    nlohmann::json summary = stamped(config);
    summary["sace"] = {{"mean", sace_sum.mean},   {"sd", sace_sum.sd},
                       {"q025", sace_sum.q025},   {"median", sace_sum.median},
                       {"q975", sace_sum.q975},   {"n_draws", sace_sum.n_draws},
                       {"n_skipped", sace_sum.n_skipped}};
    summary["marginal_p11"] = membership.marginal_p11;
    summary["p"] = p;
    summary["p_mode"] = auto_p ? "auto" : "fixed";
    summary["n11"] = likely.size();
    summary["kde"] = {{"lambda", bw.lambda}, {"spike_fallback", bw.spike_fallback}};
    summary["differential"] = {{"reference", opt.per_draw_reference ? "per_draw" : "fixed_mean"},
                               {"share_dstar_above_0.9", diff.share_above_09},
                               {"share_dstar_above_0.8", diff.share_above_08},
                               {"share_dstar_above_0.7", diff.share_above_07}};
    nlohmann::json tab = nlohmann::json::array();
    for (std::size_t t = 0; t < benefit.thresholds.size(); ++t)
        tab.push_back({{"threshold", benefit.thresholds[t]}, {"share", benefit.share_above[t]}});
    summary["benefit"] = {{"q_mean", mean_of(benefit.q_draws)}, {"tabulation", tab}};
    summary["balance_skipped_draws"] = {{"s11", balance.skipped_s11},
                                        {"s10", balance.skipped_s10},
                                        {"s00", balance.skipped_s00},
                                        {"pairwise", balance.skipped_pairwise}};
    write_json_file((fs::path(opt.out_dir) / "summary.json").string(), summary);

    // likely_set.json (consumed by the subgroups command)
    nlohmann::json likely_json = stamped(config);
    likely_json["p"] = p;
    likely_json["p_mode"] = auto_p ? "auto" : "fixed";
    likely_json["n11"] = likely.size();
    likely_json["marginal_p11"] = membership.marginal_p11;
    likely_json["units"] = likely.units;
    nlohmann::json likely_ids = nlohmann::json::array();
    for (int u : likely.units) likely_ids.push_back(ds.ids[u]);
    likely_json["ids"] = likely_ids;
    write_json_file((fs::path(opt.out_dir) / "likely_set.json").string(), likely_json);

    // csace_units.csv: one row per unit; D/D*/q only exist for likely units.
    std::vector<int> likely_pos(ds.n_units(), -1);
    for (std::size_t u = 0; u < likely.units.size(); ++u) likely_pos[likely.units[u]] = static_cast<int>(u);
    std::vector<std::string> rows;
    rows.reserve(ds.n_units());
    std::vector<double> column(draws.n_retained);
    for (std::size_t i = 0; i < ds.n_units(); ++i) {
        for (std::size_t r = 0; r < draws.n_retained; ++r) column[r] = csace.at(r, i);
        const double mean = mean_of(column);
        const double q025 = quantile_of(column, 0.025);
        const double q975 = quantile_of(column, 0.975);
        const int pos = likely_pos[i];
        std::string row = ds.ids[i] + "," + fmt_double(membership.p11[i]) + "," +
                          fmt_double(membership.p10[i]) + "," + fmt_double(membership.p00[i]) +
                          "," + fmt_double(mean) + "," + fmt_double(q025) + "," +
                          fmt_double(q975) + "," + (pos >= 0 ? "1" : "0") + ",";
        if (pos >= 0)
            row += fmt_double(diff.d[pos]) + "," + fmt_double(diff.d_star[pos]) + "," +
                   fmt_double(benefit.q[pos]);
        else
            row += ",,";
        rows.push_back(row);
    }
    write_csv((fs::path(opt.out_dir) / "csace_units.csv").string(), config,
              "id,p11,p10,p00,csace_mean,csace_q025,csace_q975,in_likely,d,d_star,q", rows);

    // distribution.csv: plot-ready CDF and density grids.
    const std::vector<double> grid = default_density_grid(csace, likely, opt.grid_points);
    const std::vector<double> cdf = cdf_on_grid(csace, likely, grid);
    const std::vector<double> density = csace_density(csace, likely, grid);
    rows.clear();
    for (std::size_t g = 0; g < grid.size(); ++g)
        rows.push_back(fmt_double(grid[g]) + "," + fmt_double(cdf[g]) + "," +
                       fmt_double(density[g]));
    write_csv((fs::path(opt.out_dir) / "distribution.csv").string(), config, "u,cdf,density",
              rows);

    // balance.csv
    rows.clear();
    for (const auto& b : balance.rows)
        rows.push_back(b.name + "," + fmt_double(b.likely_mean) + "," +
                       fmt_double(b.latent_s11_mean) + "," + fmt_double(b.asd_likely_vs_latent) +
                       "," + fmt_double(b.mean_s11) + "," + fmt_double(b.mean_s10) + "," +
                       fmt_double(b.mean_s00) + "," + fmt_double(b.max_pairwise_asd));
    write_csv((fs::path(opt.out_dir) / "balance.csv").string(), config,
              "covariate,likely_mean,latent_s11_mean,asd,mean_s11,mean_s10,mean_s00,max_pairwise_asd",
              rows);

    // q_draws.csv: per-draw fraction of likely units benefiting.
    rows.clear();
    for (std::size_t r = 0; r < benefit.q_draws.size(); ++r)
        rows.push_back(std::to_string(r) + "," + fmt_double(benefit.q_draws[r]));
    write_csv((fs::path(opt.out_dir) / "q_draws.csv").string(), config, "draw,q", rows);

    write_meta(opt.out_dir, "summarize", config, opt.timestamps,
               {{"files",
                 {"summary.json", "likely_set.json", "csace_units.csv", "distribution.csv",
                  "balance.csv", "q_draws.csv"}}});
}

void cmd_subgroups(const SubgroupsOptions& opt) {
    const TrialDataset ds = load_dataset(opt.data_path);
    const PosteriorDraws draws = load_pooled_draws(opt.draws_paths);
    if (draws.n_units != ds.n_units())
        throw DataError("draws and dataset disagree on unit count");

    std::ifstream in(opt.likely_path);
    if (!in) throw DataError("cannot open likely-set file '" + opt.likely_path + "'");
    nlohmann::json likely_json;
    try {
        in >> likely_json;
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("malformed likely-set file: ") + e.what());
    }
    LikelySet likely;
    likely.p = likely_json.at("p").get<double>();
    likely.units = likely_json.at("units").get<std::vector<int>>();
    for (int u : likely.units)
        if (u < 0 || static_cast<std::size_t>(u) >= ds.n_units())
            throw DataError("likely-set unit index out of range");
    if (likely.units.empty()) throw DataError("likely-set file lists no units");

    ensure_dir(opt.out_dir);
    const nlohmann::json config = opt.to_json();
    const CsaceDraws csace = csace_draws(draws);
    const SubgroupReport report = stepwise_fit_the_fit(csace, likely, ds, opt.params);

    nlohmann::json j = stamped(config);
    j["p"] = likely.p;
    j["n11"] = likely.units.size();
    j.update(report_json(report));
    write_json_file((fs::path(opt.out_dir) / "subgroups.json").string(), j);

    // leaf_draws.csv: per-draw leaf means for external plotting.
    const std::size_t n_leaves = report.projection.leaf_nodes.size();
    std::string header = "draw";
    for (int node : report.projection.leaf_nodes) header += ",leaf_" + std::to_string(node);
    std::vector<std::string> rows;
    rows.reserve(csace.n_retained);
    for (std::size_t r = 0; r < csace.n_retained; ++r) {
        std::string row = std::to_string(r);
        for (std::size_t l = 0; l < n_leaves; ++l)
            row += "," + fmt_double(report.projection.per_draw_means[r * n_leaves + l]);
        rows.push_back(row);
    }
    write_csv((fs::path(opt.out_dir) / "leaf_draws.csv").string(), config, header, rows);

    write_meta(opt.out_dir, "subgroups", config, opt.timestamps,
               {{"files", {"subgroups.json", "leaf_draws.csv"}}});
}

void cmd_diagnose(const DiagnoseOptions& opt) {
    if (opt.draws_paths.empty()) throw UsageError("at least one draws file is required");
    std::vector<PosteriorDraws> chains;
    for (const auto& p : opt.draws_paths) chains.push_back(read_draws(p));
    ensure_dir(opt.out_dir);
    const DiagnosticsReport report = diagnose_chains(chains);
    nlohmann::json j = stamped(opt.to_json());
    j["diagnostics"] = report.to_json();
    write_json_file((fs::path(opt.out_dir) / "diagnostics.json").string(), j);
    write_meta(opt.out_dir, "diagnose", opt.to_json(), opt.timestamps,
               {{"files", {"diagnostics.json"}}});
}

}  // namespace sacebart
