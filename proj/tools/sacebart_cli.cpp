#include <cstdio>
#include <exception>
#include <fstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include <nlohmann/json.hpp>

#include "sacebart/commands.hpp"
#include "sacebart/errors.hpp"
#include "sacebart/version.hpp"

namespace {

using nlohmann::json;

json load_config_file(const std::string& path) {
    if (path.empty()) return json::object();
    std::ifstream in(path);
    if (!in) throw sacebart::UsageError("cannot open config file '" + path + "'");
    try {
        json j;
        in >> j;
        if (!j.is_object()) throw sacebart::UsageError("config file must hold a JSON object");
        return j;
    } catch (const json::exception& e) {
        throw sacebart::UsageError(std::string("malformed config file: ") + e.what());
    }
}

// Config-file values fill in only the flags the user did not pass.
template <typename T>
void fill(const CLI::App* sub, const char* flag, const json& cfg, const char* key, T& target) {
    if (sub->count(flag) == 0 && cfg.contains(key)) target = cfg.at(key).get<T>();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Survivor-effect estimation for outcomes truncated by death"};
    app.set_version_flag("--version", std::string(sacebart::kVersion));
    app.require_subcommand(1);

    sacebart::SimulateOptions sim;
    sacebart::CvOptions cv;
    sacebart::FitOptions fit;
    sacebart::SummarizeOptions sum;
    sacebart::SubgroupsOptions sub;
    sacebart::DiagnoseOptions diag;
    std::string sim_cfg, cv_cfg, fit_cfg, sum_cfg, sub_cfg, diag_cfg;
    bool sim_nots = false, cv_nots = false, fit_nots = false, sum_nots = false, sub_nots = false,
         diag_nots = false;

    CLI::App* c_sim = app.add_subcommand("simulate", "Generate a synthetic trial with sealed truth");
    c_sim->add_option("--dgp", sim.dgp, "DGP name: dgp-a, dgp-b, moderated, constant");
    c_sim->add_option("--n", sim.n, "Units to generate");
    c_sim->add_option("--seed", sim.seed, "Generator seed");
    c_sim->add_option("--oracle-mc", sim.oracle_mc, "Monte Carlo size for the truth oracle");
    c_sim->add_option("--out", sim.out_dir, "Output directory")->required();
    c_sim->add_flag("--no-timestamp", sim_nots, "Omit timestamps from metadata");
    c_sim->add_option("--config", sim_cfg, "JSON config file");
    c_sim->callback([&] {
        const json cfg = load_config_file(sim_cfg);
        fill(c_sim, "--dgp", cfg, "dgp", sim.dgp);
        fill(c_sim, "--n", cfg, "n", sim.n);
        fill(c_sim, "--seed", cfg, "seed", sim.seed);
        fill(c_sim, "--oracle-mc", cfg, "oracle_mc", sim.oracle_mc);
        sim.timestamps = !sim_nots;
        sacebart::cmd_simulate(sim);
        std::printf("simulate: wrote %s\n", sim.out_dir.c_str());
    });

    CLI::App* c_cv = app.add_subcommand("cv", "Cross-validate the tree prior width and count");
    c_cv->add_option("--data", cv.data_path, "Trial CSV")->required();
    c_cv->add_option("--w-grid", cv.w_grid, "Leaf-width grid")->delimiter(',');
    c_cv->add_option("--trees-grid", cv.trees_grid, "Tree-count grid")->delimiter(',');
    c_cv->add_option("--folds", cv.folds, "Fold count");
    c_cv->add_option("--seed", cv.seed, "Folding and fitting seed");
    c_cv->add_option("--iters", cv.iters, "Sampler iterations per cell");
    c_cv->add_option("--burn", cv.burn, "Burn-in per cell");
    c_cv->add_option("--a0", cv.a0, "Variance prior shape");
    c_cv->add_option("--b0", cv.b0, "Variance prior rate");
    c_cv->add_option("--out", cv.out_dir, "Output directory")->required();
    c_cv->add_flag("--no-timestamp", cv_nots, "Omit timestamps from metadata");
    c_cv->add_option("--config", cv_cfg, "JSON config file");
    c_cv->callback([&] {
        const json cfg = load_config_file(cv_cfg);
        fill(c_cv, "--w-grid", cfg, "w_grid", cv.w_grid);
        fill(c_cv, "--trees-grid", cfg, "trees_grid", cv.trees_grid);
        fill(c_cv, "--folds", cfg, "folds", cv.folds);
        fill(c_cv, "--seed", cfg, "seed", cv.seed);
        fill(c_cv, "--iters", cfg, "iters", cv.iters);
        fill(c_cv, "--burn", cfg, "burn", cv.burn);
        fill(c_cv, "--a0", cfg, "a0", cv.a0);
        fill(c_cv, "--b0", cfg, "b0", cv.b0);
        cv.timestamps = !cv_nots;
        sacebart::cmd_cv(cv);
        std::printf("cv: wrote %s\n", cv.out_dir.c_str());
    });

    CLI::App* c_fit = app.add_subcommand("fit", "Run posterior chains on a trial dataset");
    c_fit->add_option("--data", fit.data_path, "Trial CSV")->required();
    c_fit->add_option("--model", fit.model, "bart or parametric");
    c_fit->add_option("--chains", fit.chains, "Chain count");
    c_fit->add_option("--iters", fit.chain.n_iter, "Iterations per chain");
    c_fit->add_option("--burn", fit.chain.burn_in, "Burn-in iterations");
    c_fit->add_option("--thin", fit.chain.thin, "Thinning interval");
    c_fit->add_option("--seed", fit.chain.seed, "Seed base; chain k uses base + k");
    c_fit->add_option("--a0", fit.chain.a0, "Variance prior shape");
    c_fit->add_option("--b0", fit.chain.b0, "Variance prior rate");
    c_fit->add_option("--w", fit.chain.bart.w, "Leaf prior width multiplier");
    c_fit->add_option("--trees", fit.chain.bart.num_trees, "Trees per forest");
    c_fit->add_option("--tau", fit.chain.bart.tau, "Split probability base");
    c_fit->add_option("--split-gamma", fit.chain.bart.gamma, "Split probability depth power");
    c_fit->add_option("--prior-variance", fit.prior_variance,
                      "Coefficient prior variance (parametric model)");
    c_fit->add_option("--checkpoint-every", fit.checkpoint_every,
                      "Checkpoint interval in iterations (bart only; 0 disables)");
    c_fit->add_flag("--resume", fit.resume, "Resume chains from existing checkpoints");
    c_fit->add_option("--threads", fit.threads, "Worker threads across chains");
    c_fit->add_option("--out", fit.out_dir, "Output directory")->required();
    c_fit->add_flag("--no-timestamp", fit_nots, "Omit timestamps from metadata");
    c_fit->add_option("--config", fit_cfg, "JSON config file");
    c_fit->callback([&] {
        const json cfg = load_config_file(fit_cfg);
        fill(c_fit, "--model", cfg, "model", fit.model);
        fill(c_fit, "--chains", cfg, "chains", fit.chains);
        fill(c_fit, "--iters", cfg, "n_iter", fit.chain.n_iter);
        fill(c_fit, "--burn", cfg, "burn_in", fit.chain.burn_in);
        fill(c_fit, "--thin", cfg, "thin", fit.chain.thin);
        fill(c_fit, "--seed", cfg, "seed", fit.chain.seed);
        fill(c_fit, "--a0", cfg, "a0", fit.chain.a0);
        fill(c_fit, "--b0", cfg, "b0", fit.chain.b0);
        fill(c_fit, "--w", cfg, "w", fit.chain.bart.w);
        fill(c_fit, "--trees", cfg, "trees", fit.chain.bart.num_trees);
        fill(c_fit, "--tau", cfg, "tau", fit.chain.bart.tau);
        fill(c_fit, "--split-gamma", cfg, "split_gamma", fit.chain.bart.gamma);
        fill(c_fit, "--prior-variance", cfg, "prior_variance", fit.prior_variance);
        fill(c_fit, "--checkpoint-every", cfg, "checkpoint_every", fit.checkpoint_every);
        fill(c_fit, "--threads", cfg, "threads", fit.threads);
        fit.timestamps = !fit_nots;
        sacebart::cmd_fit(fit);
        std::printf("fit: wrote %s\n", fit.out_dir.c_str());
    });

    CLI::App* c_sum = app.add_subcommand("summarize", "Estimate survivor effects from draws");
    c_sum->add_option("--draws", sum.draws_paths, "Draws files (one per chain)")
        ->required()
        ->delimiter(',');
    c_sum->add_option("--data", sum.data_path, "Trial CSV")->required();
    c_sum->add_option("--p", sum.p, "Membership threshold in [0,1], or 'auto'");
    c_sum->add_option("--thresholds", sum.thresholds, "Benefit tabulation thresholds")
        ->delimiter(',');
    c_sum->add_option("--grid-points", sum.grid_points, "CDF/density grid resolution");
    bool fixed_reference = false;
    c_sum->add_flag("--fixed-reference", fixed_reference,
                    "Compare units against the fixed posterior-mean average effect");
    c_sum->add_option("--out", sum.out_dir, "Output directory")->required();
    c_sum->add_flag("--no-timestamp", sum_nots, "Omit timestamps from metadata");
    c_sum->add_option("--config", sum_cfg, "JSON config file");
    c_sum->callback([&] {
        const json cfg = load_config_file(sum_cfg);
        fill(c_sum, "--p", cfg, "p", sum.p);
        fill(c_sum, "--thresholds", cfg, "thresholds", sum.thresholds);
        fill(c_sum, "--grid-points", cfg, "grid_points", sum.grid_points);
        sum.per_draw_reference = !fixed_reference;
        sum.timestamps = !sum_nots;
        sacebart::cmd_summarize(sum);
        std::printf("summarize: wrote %s\n", sum.out_dir.c_str());
    });

    CLI::App* c_sub = app.add_subcommand("subgroups", "Fit-the-fit effect moderation discovery");
    c_sub->add_option("--draws", sub.draws_paths, "Draws files (one per chain)")
        ->required()
        ->delimiter(',');
    c_sub->add_option("--data", sub.data_path, "Trial CSV")->required();
    c_sub->add_option("--likely", sub.likely_path, "likely_set.json from summarize")->required();
    c_sub->add_option("--min-leaf", sub.params.cart.min_leaf, "Minimum units per leaf");
    c_sub->add_option("--max-depth", sub.params.cart.max_depth, "Maximum tree depth");
    c_sub->add_option("--min-improvement", sub.params.cart.min_improvement,
                      "Split SSE gain floor, fraction of root SST");
    c_sub->add_option("--min-gain", sub.params.stepwise_min_gain,
                      "Stepwise R^2 gain needed to keep adding covariates");
    c_sub->add_option("--out", sub.out_dir, "Output directory")->required();
    c_sub->add_flag("--no-timestamp", sub_nots, "Omit timestamps from metadata");
    c_sub->add_option("--config", sub_cfg, "JSON config file");
    c_sub->callback([&] {
        const json cfg = load_config_file(sub_cfg);
        fill(c_sub, "--min-leaf", cfg, "min_leaf", sub.params.cart.min_leaf);
        fill(c_sub, "--max-depth", cfg, "max_depth", sub.params.cart.max_depth);
        fill(c_sub, "--min-improvement", cfg, "min_improvement", sub.params.cart.min_improvement);
        fill(c_sub, "--min-gain", cfg, "stepwise_min_gain", sub.params.stepwise_min_gain);
        sub.timestamps = !sub_nots;
        sacebart::cmd_subgroups(sub);
        std::printf("subgroups: wrote %s\n", sub.out_dir.c_str());
    });

    CLI::App* c_diag = app.add_subcommand("diagnose", "Convergence diagnostics across chains");
    c_diag->add_option("--draws", diag.draws_paths, "Draws files (one per chain)")
        ->required()
        ->delimiter(',');
    c_diag->add_option("--out", diag.out_dir, "Output directory")->required();
    c_diag->add_flag("--no-timestamp", diag_nots, "Omit timestamps from metadata");
    c_diag->add_option("--config", diag_cfg, "JSON config file");
    c_diag->callback([&] {
        load_config_file(diag_cfg);  // validated for syntax; diagnose has no tunables
        diag.timestamps = !diag_nots;
        sacebart::cmd_diagnose(diag);
        std::printf("diagnose: wrote %s\n", diag.out_dir.c_str());
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    } catch (const sacebart::UsageError& e) {
        std::fprintf(stderr, "usage error: %s\n", e.what());
        return 2;
    } catch (const sacebart::DataError& e) {
        std::fprintf(stderr, "data error: %s\n", e.what());
        return 3;
    } catch (const sacebart::NumericError& e) {
        std::fprintf(stderr, "numerical error: %s\n", e.what());
        return 4;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
