#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "sacebart/commands.hpp"
#include "sacebart/dataset.hpp"
#include "sacebart/draws_io.hpp"
#include "sacebart/errors.hpp"
#include "sacebart/version.hpp"

using namespace sacebart;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / "sacebart_cli_tests" / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string slurp(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

nlohmann::json read_json(const fs::path& path) { return nlohmann::json::parse(slurp(path)); }

std::size_t csv_data_rows(const fs::path& path) {
    std::ifstream in(path);
    REQUIRE(in.good());
    std::size_t rows = 0;
    bool header_seen = false;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        if (!header_seen) {
            header_seen = true;
            continue;
        }
        ++rows;
    }
    return rows;
}

SimulateOptions small_sim(const fs::path& out, std::uint64_t seed = 5) {
    SimulateOptions opt;
    opt.dgp = "dgp-a";
    opt.n = 120;
    opt.seed = seed;
    opt.oracle_mc = 20000;
    opt.out_dir = out.string();
    opt.timestamps = false;
    return opt;
}

FitOptions small_fit(const std::string& data, const fs::path& out) {
    FitOptions opt;
    opt.data_path = data;
    opt.chains = 2;
    opt.chain.n_iter = 60;
    opt.chain.burn_in = 20;
    opt.chain.thin = 2;
    opt.chain.seed = 9;
    opt.chain.bart.num_trees = 10;
    opt.chain.init_iters = 10;
    opt.threads = 2;
    opt.out_dir = out.string();
    opt.timestamps = false;
    return opt;
}

// Shared pipeline artifacts, built once: simulate -> fit.
struct Pipeline {
    fs::path sim_dir, fit_dir;
    std::string data_path;
    std::vector<std::string> draws;

    Pipeline() {
        sim_dir = fresh_dir("pipeline_sim");
        fit_dir = fresh_dir("pipeline_fit");
        cmd_simulate(small_sim(sim_dir));
        data_path = (sim_dir / "data.csv").string();
        cmd_fit(small_fit(data_path, fit_dir));
        draws = {(fit_dir / "draws_chain0.bin").string(), (fit_dir / "draws_chain1.bin").string()};
    }
};

const Pipeline& pipeline() {
    static Pipeline p;
    return p;
}

}  // namespace

TEST_CASE("simulate writes the dataset, sealed truth, and metadata") {
    const fs::path dir = fresh_dir("sim_basic");
    cmd_simulate(small_sim(dir));

    const TrialDataset ds = load_dataset((dir / "data.csv").string());
    CHECK(ds.n_units() == 120);
    CHECK(ds.n_covariates() == 4);

    const nlohmann::json truth = read_json(dir / "truth.json");
    CHECK(truth.at("truth").at("strata").size() == 120);
    CHECK(truth.at("oracle").at("sace").get<double>() == doctest::Approx(1.887).epsilon(0.02));
    CHECK(truth.at("version") == kVersion);
    CHECK(truth.at("convention").get<std::string>().find("S=00") != std::string::npos);

    const nlohmann::json meta = read_json(dir / "meta.json");
    CHECK(meta.at("command") == "simulate");
    CHECK_FALSE(meta.contains("generated_at"));

    SUBCASE("timestamps appear only on request") {
        const fs::path dir2 = fresh_dir("sim_ts");
        SimulateOptions opt = small_sim(dir2);
        opt.timestamps = true;
        cmd_simulate(opt);
        CHECK(read_json(dir2 / "meta.json").contains("generated_at"));
    }
    SUBCASE("unknown generator or empty out dir is a usage error") {
        SimulateOptions opt = small_sim(fresh_dir("sim_bad"));
        opt.dgp = "nope";
        CHECK_THROWS_AS(cmd_simulate(opt), UsageError);
        SimulateOptions blank = small_sim(dir);
        blank.out_dir = "";
        CHECK_THROWS_AS(cmd_simulate(blank), UsageError);
    }
}

TEST_CASE("fit writes per-chain draws with diagnostics and seeds") {
    const Pipeline& p = pipeline();
    const PosteriorDraws d0 = read_draws(p.draws[0]);
    const PosteriorDraws d1 = read_draws(p.draws[1]);
    CHECK(d0.n_units == 120);
    CHECK(d0.n_retained == 20);  // (60 - 20) / 2
    CHECK(d1.n_retained == 20);
    CHECK(d0.meta.at("chain_id") == 0);
    CHECK(d1.meta.at("chain_id") == 1);
    CHECK(d0.m111 != d1.m111);

    const nlohmann::json meta = read_json(p.fit_dir / "meta.json");
    CHECK(meta.at("model") == "bart");
    CHECK(meta.at("chain_seeds") == nlohmann::json({9, 10}));

    const nlohmann::json diag = read_json(p.fit_dir / "diagnostics.json");
    REQUIRE(diag.at("diagnostics").contains("series"));
    CHECK(diag.at("diagnostics").at("series").size() == 5);
}

TEST_CASE("fit reruns are byte-identical regardless of threading") {
    const Pipeline& p = pipeline();
    const fs::path redo = fresh_dir("fit_redo");
    FitOptions opt = small_fit(p.data_path, redo);
    opt.threads = 1;  // scheduling must not leak into the draws
    cmd_fit(opt);
    CHECK(slurp(redo / "draws_chain0.bin") == slurp(p.fit_dir / "draws_chain0.bin"));
    CHECK(slurp(redo / "draws_chain1.bin") == slurp(p.fit_dir / "draws_chain1.bin"));
}

TEST_CASE("fit resumes from its own checkpoints to the same draws") {
    const Pipeline& p = pipeline();
    const fs::path dir = fresh_dir("fit_ckpt");
    FitOptions opt = small_fit(p.data_path, dir);
    opt.chains = 1;
    opt.checkpoint_every = 25;
    cmd_fit(opt);
    const std::string plain = slurp(dir / "draws_chain0.bin");
    REQUIRE(fs::exists(dir / "checkpoint_chain0.json"));

    FitOptions again = opt;
    again.resume = true;
    cmd_fit(again);
    CHECK(slurp(dir / "draws_chain0.bin") == plain);

    SUBCASE("resume without a checkpoint is a data error") {
        FitOptions missing = small_fit(p.data_path, fresh_dir("fit_ckpt_missing"));
        missing.chains = 1;
        missing.checkpoint_every = 25;
        missing.resume = true;
        CHECK_THROWS_AS(cmd_fit(missing), DataError);
    }
}

TEST_CASE("fit rejects bad options and missing data") {
    const Pipeline& p = pipeline();
    FitOptions opt = small_fit(p.data_path, fresh_dir("fit_bad"));
    SUBCASE("model") {
        opt.model = "banana";
        CHECK_THROWS_AS(cmd_fit(opt), UsageError);
    }
    SUBCASE("chains") {
        opt.chains = 0;
        CHECK_THROWS_AS(cmd_fit(opt), UsageError);
    }
    SUBCASE("threads") {
        opt.threads = 0;
        CHECK_THROWS_AS(cmd_fit(opt), UsageError);
    }
    SUBCASE("parametric cannot checkpoint") {
        opt.model = "parametric";
        opt.checkpoint_every = 10;
        CHECK_THROWS_AS(cmd_fit(opt), UsageError);
    }
    SUBCASE("data file") {
        opt.data_path = "/nonexistent/trial.csv";
        CHECK_THROWS_AS(cmd_fit(opt), DataError);
    }
}

TEST_CASE("parametric fit produces compatible draws") {
    const Pipeline& p = pipeline();
    const fs::path dir = fresh_dir("fit_param");
    FitOptions opt = small_fit(p.data_path, dir);
    opt.model = "parametric";
    opt.chains = 1;
    opt.chain.n_iter = 200;
    opt.chain.burn_in = 100;
    opt.chain.thin = 1;
    cmd_fit(opt);
    const PosteriorDraws d = read_draws((dir / "draws_chain0.bin").string());
    CHECK(d.n_retained == 100);
    CHECK(d.n_units == 120);
    CHECK(d.meta.at("model") == "parametric");
    CHECK(read_json(dir / "meta.json").at("model") == "parametric");
}

TEST_CASE("summarize writes the full report set") {
    const Pipeline& p = pipeline();
    const fs::path dir = fresh_dir("summarize_basic");
    SummarizeOptions opt;
    opt.draws_paths = p.draws;
    opt.data_path = p.data_path;
    opt.grid_points = 101;
    opt.out_dir = dir.string();
    opt.timestamps = false;
    cmd_summarize(opt);

    const nlohmann::json summary = read_json(dir / "summary.json");
    CHECK(std::isfinite(summary.at("sace").at("mean").get<double>()));
    CHECK(summary.at("sace").at("n_draws").get<int>() +
              summary.at("sace").at("n_skipped").get<int>() ==
          40);
    const double chosen_p = summary.at("p").get<double>();
    CHECK(chosen_p >= 0.5);
    CHECK(chosen_p <= 0.99);
    CHECK(summary.at("p_mode") == "auto");
    CHECK(summary.at("n11").get<int>() > 0);
    CHECK(summary.at("benefit").at("tabulation").size() == 4);

    const nlohmann::json likely = read_json(dir / "likely_set.json");
    const TrialDataset ds = load_dataset(p.data_path);
    REQUIRE(likely.at("units").size() == likely.at("ids").size());
    REQUIRE(likely.at("units").size() == summary.at("n11"));
    for (std::size_t k = 0; k < likely.at("units").size(); ++k)
        CHECK(ds.ids[likely.at("units")[k].get<int>()] == likely.at("ids")[k].get<std::string>());

    CHECK(csv_data_rows(dir / "csace_units.csv") == 120);
    CHECK(csv_data_rows(dir / "distribution.csv") == 101);
    CHECK(csv_data_rows(dir / "balance.csv") == 4);
    CHECK(csv_data_rows(dir / "q_draws.csv") == 40);

    // The in_likely flag column (8th field) matches the likely-set size.
    std::size_t flagged = 0;
    std::ifstream in(dir / "csace_units.csv");
    std::string line;
    bool header_seen = false;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        if (!header_seen) {
            header_seen = true;
            continue;
        }
        std::size_t pos = 0;
        for (int field = 0; field < 7; ++field) pos = line.find(',', pos) + 1;
        if (line.compare(pos, 2, "1,") == 0) ++flagged;
    }
    CHECK(flagged == summary.at("n11").get<std::size_t>());
}

TEST_CASE("summarize honors a fixed membership threshold") {
    const Pipeline& p = pipeline();
    const fs::path dir = fresh_dir("summarize_fixed");
    SummarizeOptions opt;
    opt.draws_paths = {p.draws[0]};
    opt.data_path = p.data_path;
    opt.p = "0.7";
    opt.grid_points = 51;
    opt.out_dir = dir.string();
    opt.timestamps = false;
    cmd_summarize(opt);
    const nlohmann::json summary = read_json(dir / "summary.json");
    CHECK(summary.at("p").get<double>() == 0.7);
    CHECK(summary.at("p_mode") == "fixed");
    CHECK(csv_data_rows(dir / "q_draws.csv") == 20);

    SUBCASE("threshold parsing is strict") {
        opt.p = "1.5";
        CHECK_THROWS_AS(cmd_summarize(opt), UsageError);
        opt.p = "abc";
        CHECK_THROWS_AS(cmd_summarize(opt), UsageError);
    }
    SUBCASE("draw and dataset sizes must agree") {
        const fs::path other = fresh_dir("summarize_mismatch");
        SimulateOptions sim = small_sim(other, 77);
        sim.n = 80;
        cmd_simulate(sim);
        opt.p = "auto";
        opt.data_path = (other / "data.csv").string();
        CHECK_THROWS_AS(cmd_summarize(opt), DataError);
    }
}

TEST_CASE("subgroups consumes the likely set and reports a tree") {
    const Pipeline& p = pipeline();
    const fs::path sum_dir = fresh_dir("subgroups_sum");
    SummarizeOptions sopt;
    sopt.draws_paths = p.draws;
    sopt.data_path = p.data_path;
    sopt.grid_points = 51;
    sopt.out_dir = sum_dir.string();
    sopt.timestamps = false;
    cmd_summarize(sopt);

    const fs::path dir = fresh_dir("subgroups_basic");
    SubgroupsOptions opt;
    opt.draws_paths = p.draws;
    opt.data_path = p.data_path;
    opt.likely_path = (sum_dir / "likely_set.json").string();
    opt.params.cart.min_leaf = 10;
    opt.out_dir = dir.string();
    opt.timestamps = false;
    cmd_subgroups(opt);

    const nlohmann::json j = read_json(dir / "subgroups.json");
    CHECK(j.contains("selected"));
    CHECK(j.contains("final_r2"));
    CHECK(j.at("tree").is_object());
    CHECK(j.at("leaves").size() >= 1);
    CHECK(j.at("n11") == read_json(sum_dir / "likely_set.json").at("n11"));
    CHECK(csv_data_rows(dir / "leaf_draws.csv") == 40);

    SUBCASE("missing or malformed likely file") {
        opt.likely_path = (dir / "absent.json").string();
        CHECK_THROWS_AS(cmd_subgroups(opt), DataError);
        const fs::path bad = dir / "bad.json";
        std::ofstream(bad) << "{not json";
        opt.likely_path = bad.string();
        CHECK_THROWS_AS(cmd_subgroups(opt), DataError);
    }
}

TEST_CASE("diagnose summarizes chains from disk") {
    const Pipeline& p = pipeline();
    const fs::path dir = fresh_dir("diagnose_basic");
    DiagnoseOptions opt;
    opt.draws_paths = p.draws;
    opt.out_dir = dir.string();
    opt.timestamps = false;
    cmd_diagnose(opt);
    const nlohmann::json j = read_json(dir / "diagnostics.json");
    REQUIRE(j.at("diagnostics").at("series").size() == 5);
    for (const auto& s : j.at("diagnostics").at("series")) {
        CHECK(s.at("ess").get<double>() >= 1.0);
        CHECK(s.at("draws").get<int>() == 40);
    }

    SUBCASE("at least one draws file is required") {
        opt.draws_paths = {};
        CHECK_THROWS_AS(cmd_diagnose(opt), UsageError);
    }
    SUBCASE("missing draws file") {
        opt.draws_paths = {"/nonexistent/draws.bin"};
        CHECK_THROWS_AS(cmd_diagnose(opt), DataError);
    }
}

TEST_CASE("cross-validation command reports the scored grid") {
    const Pipeline& p = pipeline();
    const fs::path dir = fresh_dir("cv_basic");
    CvOptions opt;
    opt.data_path = p.data_path;
    opt.w_grid = {2.0};
    opt.trees_grid = {10, 20};
    opt.folds = 2;
    opt.seed = 4;
    opt.iters = 40;
    opt.burn = 20;
    opt.out_dir = dir.string();
    opt.timestamps = false;
    cmd_cv(opt);
    const nlohmann::json j = read_json(dir / "cv.json");
    REQUIRE(j.at("table").size() == 2);
    CHECK((j.at("best").at("trees") == 10 || j.at("best").at("trees") == 20));
    CHECK(j.at("best").at("w") == 2.0);
    double best_rmse = std::numeric_limits<double>::infinity();
    for (const auto& cell : j.at("table"))
        best_rmse = std::min(best_rmse, cell.at("rmse").get<double>());
    for (const auto& cell : j.at("table"))
        if (cell.at("trees") == j.at("best").at("trees"))
            CHECK(cell.at("rmse").get<double>() == doctest::Approx(best_rmse));
}

TEST_CASE("pooling concatenates chains and records their metadata") {
    const Pipeline& p = pipeline();
    const PosteriorDraws pooled = load_pooled_draws(p.draws);
    CHECK(pooled.n_retained == 40);
    CHECK(pooled.n_units == 120);
    CHECK(pooled.meta.at("chains").size() == 2);
    CHECK(pooled.strata.size() == 40 * 120);

    CHECK_THROWS_AS((void)load_pooled_draws({}), UsageError);

    PosteriorDraws a = read_draws(p.draws[0]);
    PosteriorDraws b = read_draws(p.draws[1]);
    b.n_units -= 1;
    CHECK_THROWS_AS((void)pool_draws({a, b}), DataError);
}

#ifdef SACEBART_CLI_PATH

namespace {

int run_cli(const std::string& args) {
    const std::string cmd = std::string(SACEBART_CLI_PATH) + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    REQUIRE(status != -1);
    return WEXITSTATUS(status);
}

}  // namespace

TEST_CASE("binary end-to-end pipeline") {
    const fs::path root = fresh_dir("binary_pipeline");
    const std::string sim = (root / "sim").string();
    const std::string fit = (root / "fit").string();
    const std::string sum = (root / "sum").string();
    const std::string sub = (root / "sub").string();
    const std::string diag = (root / "diag").string();

    CHECK(run_cli("simulate --dgp dgp-a --n 100 --seed 3 --oracle-mc 10000 --no-timestamp --out " +
                  sim) == 0);
    CHECK(run_cli("fit --data " + sim + "/data.csv --chains 2 --threads 2 --iters 50 --burn 20 " +
                  "--thin 1 --seed 11 --trees 10 --no-timestamp --out " + fit) == 0);
    const std::string draws = fit + "/draws_chain0.bin," + fit + "/draws_chain1.bin";
    CHECK(run_cli("summarize --draws " + draws + " --data " + sim +
                  "/data.csv --grid-points 51 --no-timestamp --out " + sum) == 0);
    CHECK(run_cli("subgroups --draws " + draws + " --data " + sim + "/data.csv --likely " + sum +
                  "/likely_set.json --min-leaf 10 --no-timestamp --out " + sub) == 0);
    CHECK(run_cli("diagnose --draws " + draws + " --no-timestamp --out " + diag) == 0);

    CHECK(fs::exists(fs::path(sum) / "summary.json"));
    CHECK(fs::exists(fs::path(sub) / "subgroups.json"));
    CHECK(fs::exists(fs::path(diag) / "diagnostics.json"));
}

TEST_CASE("binary exit codes follow the error taxonomy") {
    const fs::path root = fresh_dir("binary_codes");
    CHECK(run_cli("--version") == 0);
    CHECK(run_cli("") == 2);                    // a subcommand is required
    CHECK(run_cli("fit --out x") == 2);         // missing required --data
    CHECK(run_cli("simulate --dgp nope --out " + (root / "a").string()) == 2);
    CHECK(run_cli("fit --data /nonexistent.csv --iters 30 --burn 10 --out " +
                  (root / "b").string()) == 3);
    CHECK(run_cli("diagnose --draws /nonexistent.bin --out " + (root / "c").string()) == 3);
}

TEST_CASE("config files fill in unset flags only") {
    const fs::path root = fresh_dir("binary_config");
    const fs::path cfg = root / "cfg.json";
    std::ofstream(cfg) << R"({"n": 25, "seed": 8})";

    const std::string out1 = (root / "one").string();
    CHECK(run_cli("simulate --config " + cfg.string() + " --no-timestamp --out " + out1) == 0);
    CHECK(load_dataset(out1 + "/data.csv").n_units() == 25);

    // An explicit flag outranks the config file.
    const std::string out2 = (root / "two").string();
    CHECK(run_cli("simulate --config " + cfg.string() + " --n 30 --no-timestamp --out " + out2) ==
          0);
    CHECK(load_dataset(out2 + "/data.csv").n_units() == 30);

    SUBCASE("malformed config is a usage error") {
        const fs::path bad = root / "bad.json";
        std::ofstream(bad) << "[1,2,3]";
        CHECK(run_cli("simulate --config " + bad.string() + " --out " + (root / "z").string()) ==
              2);
    }
}

#endif  // SACEBART_CLI_PATH
