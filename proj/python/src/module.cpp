// Python bindings over the sacebart core: dataset handling, synthetic data
// generation, chain fitting, estimand summaries, subgroup discovery, chain
// diagnostics, and the file-based pipeline commands.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cstdint>
#include <string>
#include <vector>

#include "sacebart/commands.hpp"
#include "sacebart/dataset.hpp"
#include "sacebart/diagnostics.hpp"
#include "sacebart/draws_io.hpp"
#include "sacebart/errors.hpp"
#include "sacebart/estimands.hpp"
#include "sacebart/parametric.hpp"
#include "sacebart/sampler.hpp"
#include "sacebart/subgroup.hpp"
#include "sacebart/synth.hpp"
#include "sacebart/version.hpp"

namespace py = pybind11;

namespace {

using namespace sacebart;

py::object json_to_py(const nlohmann::json& j) {
    using value_t = nlohmann::json::value_t;
    switch (j.type()) {
        case value_t::null:
            return py::none();
        case value_t::boolean:
            return py::bool_(j.get<bool>());
        case value_t::number_integer:
            return py::int_(j.get<std::int64_t>());
        case value_t::number_unsigned:
            return py::int_(j.get<std::uint64_t>());
        case value_t::number_float:
            return py::float_(j.get<double>());
        case value_t::string:
            return py::str(j.get<std::string>());
        case value_t::array: {
            py::list out;
            for (const auto& item : j) out.append(json_to_py(item));
            return out;
        }
        case value_t::object: {
            py::dict out;
            for (const auto& [key, value] : j.items()) out[py::str(key)] = json_to_py(value);
            return out;
        }
        default:
            return py::none();
    }
}

template <typename T>
py::array_t<T> to_array(const std::vector<T>& v) {
    py::array_t<T> out(static_cast<py::ssize_t>(v.size()));
    std::copy(v.begin(), v.end(), out.mutable_data());
    return out;
}

template <typename T>
py::array_t<T> to_matrix(const std::vector<T>& v, std::size_t rows, std::size_t cols) {
    py::array_t<T> out({static_cast<py::ssize_t>(rows), static_cast<py::ssize_t>(cols)});
    std::copy(v.begin(), v.end(), out.mutable_data());
    return out;
}

LikelySet make_likely(const std::vector<int>& units, double p, std::size_t n_units) {
    if (units.empty()) throw UsageError("likely set must list at least one unit");
    for (const int u : units)
        if (u < 0 || static_cast<std::size_t>(u) >= n_units)
            throw UsageError("likely-set unit index out of range");
    LikelySet likely;
    likely.units = units;
    likely.p = p;
    return likely;
}

ChainConfig make_chain_config(int n_iter, int burn_in, int thin, std::uint64_t seed, double a0,
                              double b0, double w, int trees, double tau, double split_gamma,
                              int init_iters) {
    ChainConfig cfg;
    cfg.n_iter = n_iter;
    cfg.burn_in = burn_in;
    cfg.thin = thin;
    cfg.seed = seed;
    cfg.a0 = a0;
    cfg.b0 = b0;
    cfg.bart.w = w;
    cfg.bart.num_trees = trees;
    cfg.bart.tau = tau;
    cfg.bart.gamma = split_gamma;
    cfg.init_iters = init_iters;
    return cfg;
}

TrialDataset dataset_from_arrays(const std::vector<int>& treat, const std::vector<int>& survive,
                                 const std::vector<double>& outcome,
                                 py::array_t<double, py::array::c_style | py::array::forcecast> x,
                                 const std::vector<std::string>& names,
                                 const std::vector<std::string>& ids) {
    if (x.ndim() != 2) throw UsageError("covariates must be a 2-D array of shape (n, k)");
    const auto n = static_cast<std::size_t>(x.shape(0));
    const auto k = static_cast<std::size_t>(x.shape(1));
    if (names.size() != k) throw UsageError("covariate name count must match array columns");
    if (treat.size() != n || survive.size() != n || outcome.size() != n)
        throw UsageError("treat, survive, and outcome must have one entry per row");
    TrialDataset ds;
    if (ids.empty()) {
        for (std::size_t i = 0; i < n; ++i) ds.ids.push_back(std::to_string(i + 1));
    } else {
        if (ids.size() != n) throw UsageError("ids must have one entry per row");
        ds.ids = ids;
    }
    ds.treat = treat;
    ds.survive = survive;
    ds.outcome = outcome;
    ds.covariates.resize(n * k);
    const auto view = x.unchecked<2>();
    for (std::size_t col = 0; col < k; ++col)
        for (std::size_t row = 0; row < n; ++row)
            ds.covariates[col * n + row] = view(static_cast<py::ssize_t>(row),
                                                static_cast<py::ssize_t>(col));
    ds.spec.names = names;
    ds.spec.center.assign(k, 0.0);
    ds.spec.scale.assign(k, 1.0);
    ds.spec.standardized = false;
    ds.spec.kinds = infer_kinds(ds);
    validate(ds);
    return ds;
}

py::array_t<double> dataset_covariates(const TrialDataset& ds) {
    const std::size_t n = ds.n_units();
    const std::size_t k = ds.n_covariates();
    py::array_t<double> out({static_cast<py::ssize_t>(n), static_cast<py::ssize_t>(k)});
    auto view = out.mutable_unchecked<2>();
    for (std::size_t col = 0; col < k; ++col)
        for (std::size_t row = 0; row < n; ++row)
            view(static_cast<py::ssize_t>(row), static_cast<py::ssize_t>(col)) = ds.x(row, col);
    return out;
}

std::vector<PosteriorDraws> fit_draws(const TrialDataset& ds, const std::string& model, int chains,
                                      int n_iter, int burn_in, int thin, std::uint64_t seed,
                                      double a0, double b0, double w, int trees, double tau,
                                      double split_gamma, int init_iters, double prior_variance) {
    if (chains < 1) throw UsageError("chains must be >= 1");
    std::vector<PosteriorDraws> out;
    if (model == "bart") {
        const ChainConfig cfg = make_chain_config(n_iter, burn_in, thin, seed, a0, b0, w, trees,
                                                  tau, split_gamma, init_iters);
        for (int k = 0; k < chains; ++k) out.push_back(run_chain(ds, cfg, k));
    } else if (model == "parametric") {
        ParametricChainConfig cfg;
        cfg.n_iter = n_iter;
        cfg.burn_in = burn_in;
        cfg.thin = thin;
        cfg.seed = seed;
        cfg.a0 = a0;
        cfg.b0 = b0;
        cfg.prior_variance = prior_variance;
        for (int k = 0; k < chains; ++k) out.push_back(run_chain_parametric(ds, cfg, k));
    } else {
        throw UsageError("model must be 'bart' or 'parametric'");
    }
    return out;
}

py::dict sace_dict(const PosteriorDraws& draws) {
    const SaceDraws s = sace_draws(draws);
    const SaceSummary sum = summarize_sace(s);
    py::dict out;
    out["mean"] = sum.mean;
    out["sd"] = sum.sd;
    out["q025"] = sum.q025;
    out["median"] = sum.median;
    out["q975"] = sum.q975;
    out["n_draws"] = sum.n_draws;
    out["n_skipped"] = sum.n_skipped;
    out["values"] = to_array(s.values);
    return out;
}

py::dict membership_dict(const PosteriorDraws& draws, const TrialDataset& ds) {
    const MembershipPosterior m = membership_posterior(draws, ds);
    py::dict out;
    out["p11"] = to_array(m.p11);
    out["p10"] = to_array(m.p10);
    out["p00"] = to_array(m.p00);
    out["marginal_p11"] = m.marginal_p11;
    return out;
}

py::dict likely_dict(const PosteriorDraws& draws, const TrialDataset& ds, py::object p) {
    const MembershipPosterior m = membership_posterior(draws, ds);
    const double threshold = p.is_none() ? choose_p(m) : p.cast<double>();
    const LikelySet likely = likely_survivor_set(m, threshold);
    py::dict out;
    out["units"] = to_array(likely.units);
    out["p"] = likely.p;
    return out;
}

py::dict differential_dict(const PosteriorDraws& draws, const std::vector<int>& units, double p,
                           bool per_draw_reference) {
    const CsaceDraws c = csace_draws(draws);
    const LikelySet likely = make_likely(units, p, draws.n_units);
    const DifferentialEffects d = differential_effects(c, likely, per_draw_reference);
    py::dict out;
    out["units"] = to_array(d.units);
    out["d"] = to_array(d.d);
    out["d_star"] = to_array(d.d_star);
    out["share_above_09"] = d.share_above_09;
    out["share_above_08"] = d.share_above_08;
    out["share_above_07"] = d.share_above_07;
    return out;
}

py::dict benefit_dict(const PosteriorDraws& draws, const std::vector<int>& units, double p,
                      const std::vector<double>& thresholds) {
    const CsaceDraws c = csace_draws(draws);
    const LikelySet likely = make_likely(units, p, draws.n_units);
    const BenefitProbabilities b = benefit_probabilities(c, likely, thresholds);
    py::dict out;
    out["units"] = to_array(b.units);
    out["q"] = to_array(b.q);
    out["q_draws"] = to_array(b.q_draws);
    out["thresholds"] = to_array(b.thresholds);
    out["share_above"] = to_array(b.share_above);
    return out;
}

py::dict density_dict(const PosteriorDraws& draws, const std::vector<int>& units, double p,
                      std::size_t n_points) {
    const CsaceDraws c = csace_draws(draws);
    const LikelySet likely = make_likely(units, p, draws.n_units);
    const std::vector<double> grid = default_density_grid(c, likely, n_points);
    const std::vector<double> h = csace_density(c, likely, grid);
    const KdeBandwidth bw = kde_bandwidth(c, likely);
    py::dict out;
    out["grid"] = to_array(grid);
    out["density"] = to_array(h);
    out["bandwidth"] = bw.lambda;
    out["spike_fallback"] = bw.spike_fallback;
    return out;
}

py::dict balance_dict(const PosteriorDraws& draws, const TrialDataset& ds,
                      const std::vector<int>& units, double p) {
    const LikelySet likely = make_likely(units, p, draws.n_units);
    const BalanceReport rep = balance_report(draws, likely, ds);
    py::list rows;
    for (const BalanceRow& r : rep.rows) {
        py::dict row;
        row["name"] = r.name;
        row["likely_mean"] = r.likely_mean;
        row["latent_s11_mean"] = r.latent_s11_mean;
        row["asd_likely_vs_latent"] = r.asd_likely_vs_latent;
        row["mean_s11"] = r.mean_s11;
        row["mean_s10"] = r.mean_s10;
        row["mean_s00"] = r.mean_s00;
        row["max_pairwise_asd"] = r.max_pairwise_asd;
        rows.append(row);
    }
    py::dict out;
    out["rows"] = rows;
    out["skipped_s11"] = rep.skipped_s11;
    out["skipped_s10"] = rep.skipped_s10;
    out["skipped_s00"] = rep.skipped_s00;
    out["skipped_pairwise"] = rep.skipped_pairwise;
    return out;
}

py::object subgroups_dict(const PosteriorDraws& draws, const TrialDataset& ds,
                          const std::vector<int>& units, double p, std::size_t min_leaf,
                          int max_depth, double min_improvement, double stepwise_min_gain) {
    const CsaceDraws c = csace_draws(draws);
    const LikelySet likely = make_likely(units, p, draws.n_units);
    SubgroupParams params;
    params.cart.min_leaf = min_leaf;
    params.cart.max_depth = max_depth;
    params.cart.min_improvement = min_improvement;
    params.stepwise_min_gain = stepwise_min_gain;
    const SubgroupReport report = stepwise_fit_the_fit(c, likely, ds, params);
    return json_to_py(report_json(report));
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Survivor average causal effects under truncation by death: "
              "mixture-of-BART posterior sampling, estimand summaries, subgroup "
              "discovery, and the file pipeline.";
    m.attr("__version__") = std::string(kVersion);
    m.attr("STRATUM_CONVENTION") = std::string(kStratumConventionNote);

    const auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
    py::register_exception<UsageError>(m, "UsageError", base.ptr());
    py::register_exception<DataError>(m, "DataError", base.ptr());
    py::register_exception<NumericError>(m, "NumericError", base.ptr());

    py::class_<TrialDataset>(m, "Dataset",
                             "Randomized trial with a survival indicator and an outcome observed "
                             "only for survivors. Non-survivors carry NaN outcomes.")
        .def_static("load", &load_dataset, py::arg("path"),
                    py::call_guard<py::gil_scoped_release>())
        .def_static("from_arrays", &dataset_from_arrays, py::arg("treat"), py::arg("survive"),
                    py::arg("outcome"), py::arg("covariates"), py::arg("names"),
                    py::arg("ids") = std::vector<std::string>{})
        .def("save",
             [](const TrialDataset& ds, const std::string& path) { write_dataset(path, ds); },
             py::arg("path"), py::call_guard<py::gil_scoped_release>())
        .def("standardized", &standardize,
             "Copy with continuous covariates centered and scaled.")
        .def("__len__", &TrialDataset::n_units)
        .def_property_readonly("n_units", &TrialDataset::n_units)
        .def_property_readonly("n_covariates", &TrialDataset::n_covariates)
        .def_property_readonly("ids", [](const TrialDataset& ds) { return ds.ids; })
        .def_property_readonly("treat", [](const TrialDataset& ds) { return to_array(ds.treat); })
        .def_property_readonly("survive",
                               [](const TrialDataset& ds) { return to_array(ds.survive); })
        .def_property_readonly("outcome",
                               [](const TrialDataset& ds) { return to_array(ds.outcome); })
        .def_property_readonly("covariates", &dataset_covariates)
        .def_property_readonly("names", [](const TrialDataset& ds) { return ds.spec.names; })
        .def_property_readonly("is_standardized",
                               [](const TrialDataset& ds) { return ds.spec.standardized; })
        .def("__repr__", [](const TrialDataset& ds) {
            return "Dataset(n_units=" + std::to_string(ds.n_units()) +
                   ", n_covariates=" + std::to_string(ds.n_covariates()) + ")";
        });

    py::class_<PosteriorDraws>(m, "Draws",
                               "Retained posterior draws from one chain (or a pooled set).")
        .def_static("load", &read_draws, py::arg("path"),
                    py::call_guard<py::gil_scoped_release>())
        .def("save",
             [](const PosteriorDraws& d, const std::string& path) { write_draws(path, d); },
             py::arg("path"), py::call_guard<py::gil_scoped_release>())
        .def_property_readonly("n_units", [](const PosteriorDraws& d) { return d.n_units; })
        .def_property_readonly("n_retained", [](const PosteriorDraws& d) { return d.n_retained; })
        .def_property_readonly("strata",
                               [](const PosteriorDraws& d) {
                                   return to_matrix(d.strata, d.n_retained, d.n_units);
                               })
        .def_property_readonly("m111",
                               [](const PosteriorDraws& d) {
                                   return to_matrix(d.m111, d.n_retained, d.n_units);
                               })
        .def_property_readonly("m110",
                               [](const PosteriorDraws& d) {
                                   return to_matrix(d.m110, d.n_retained, d.n_units);
                               })
        .def_property_readonly("sigma2",
                               [](const PosteriorDraws& d) {
                                   return to_matrix(d.sigma2, d.n_retained, 3);
                               })
        .def_property_readonly("meta", [](const PosteriorDraws& d) { return json_to_py(d.meta); })
        .def("__repr__", [](const PosteriorDraws& d) {
            return "Draws(n_retained=" + std::to_string(d.n_retained) +
                   ", n_units=" + std::to_string(d.n_units) + ")";
        });

    m.def("dgp_names", &dgp_names, "Names of the built-in synthetic data generators.");
    m.def(
        "generate",
        [](const std::string& name, std::size_t n, std::uint64_t seed) {
            const GeneratedTrial trial = generate(named_dgp(name, n, seed));
            return py::make_tuple(trial.data, json_to_py(trial.truth.to_json()));
        },
        py::arg("name"), py::arg("n"), py::arg("seed") = 0,
        "Generate a synthetic trial; returns (dataset, truth dict).");
    m.def(
        "oracle_sace",
        [](const std::string& name, std::uint64_t seed, std::size_t n_mc) {
            const SaceOracle o = oracle_sace(named_dgp(name, 1, seed), n_mc);
            py::dict out;
            out["value"] = o.value;
            out["se"] = o.se;
            out["n_always"] = o.n_always;
            return out;
        },
        py::arg("name"), py::arg("seed") = 0, py::arg("n_mc") = 1000000,
        "Monte Carlo ground-truth survivor effect for a named generator.");

    m.def("fit", &fit_draws, py::arg("dataset"), py::arg("model") = "bart", py::arg("chains") = 1,
          py::arg("n_iter") = 10000, py::arg("burn_in") = 5000, py::arg("thin") = 1,
          py::arg("seed") = 0, py::arg("a0") = 0.001, py::arg("b0") = 0.001, py::arg("w") = 2.0,
          py::arg("trees") = 50, py::arg("tau") = 0.95, py::arg("split_gamma") = 2.0,
          py::arg("init_iters") = 100, py::arg("prior_variance") = 100.0,
          py::call_guard<py::gil_scoped_release>(),
          "Run posterior chains; chain k uses seed + k. Returns a list of Draws.");
    m.def("pool", &pool_draws, py::arg("chains"), "Concatenate chains into one Draws object.");

    m.def("sace", &sace_dict, py::arg("draws"),
          "Survivor average effect summary over retained draws.");
    m.def(
        "csace",
        [](const PosteriorDraws& draws) {
            const CsaceDraws c = csace_draws(draws);
            return to_matrix(c.delta, c.n_retained, c.n_units);
        },
        py::arg("draws"), "Per-draw, per-unit conditional survivor effects.");
    m.def("membership", &membership_dict, py::arg("draws"), py::arg("dataset"),
          "Per-unit posterior stratum membership fractions.");
    m.def(
        "choose_p",
        [](const PosteriorDraws& draws, const TrialDataset& ds) {
            return choose_p(membership_posterior(draws, ds));
        },
        py::arg("draws"), py::arg("dataset"),
        "Membership threshold whose likely-set share best matches the marginal "
        "always-survivor proportion.");
    m.def("likely_set", &likely_dict, py::arg("draws"), py::arg("dataset"),
          py::arg("p") = py::none(),
          "Likely always-survivors at threshold p (chosen automatically when omitted).");
    m.def("differential_effects", &differential_dict, py::arg("draws"), py::arg("units"),
          py::arg("p"), py::arg("per_draw_reference") = true,
          "Evidence that units differ from the likely-set average effect.");
    m.def("benefit_probabilities", &benefit_dict, py::arg("draws"), py::arg("units"), py::arg("p"),
          py::arg("thresholds") = std::vector<double>{0.99, 0.95, 0.90, 0.80},
          "Per-unit posterior probability of a negative effect.");
    m.def("csace_density", &density_dict, py::arg("draws"), py::arg("units"), py::arg("p"),
          py::arg("n_points") = std::size_t{512},
          "Kernel density of the conditional effect distribution over the likely set.");
    m.def("balance", &balance_dict, py::arg("draws"), py::arg("dataset"), py::arg("units"),
          py::arg("p"), "Covariate balance between the likely set and the latent strata.");
    m.def("subgroups", &subgroups_dict, py::arg("draws"), py::arg("dataset"), py::arg("units"),
          py::arg("p"), py::arg("min_leaf") = std::size_t{20}, py::arg("max_depth") = 4,
          py::arg("min_improvement") = 0.01, py::arg("stepwise_min_gain") = 0.01,
          "Stepwise fit-the-fit subgroup discovery over the likely set.");
    m.def(
        "diagnose",
        [](const std::vector<PosteriorDraws>& chains) {
            return json_to_py(diagnose_chains(chains).to_json());
        },
        py::arg("chains"), "Effective sample sizes and split R-hat across chains.");

    // File pipeline, mirroring the command line tool.
    m.def(
        "run_simulate",
        [](const std::string& dgp, std::size_t n, std::uint64_t seed, const std::string& out,
           std::size_t oracle_mc, bool timestamps) {
            SimulateOptions opt;
            opt.dgp = dgp;
            opt.n = n;
            opt.seed = seed;
            opt.oracle_mc = oracle_mc;
            opt.out_dir = out;
            opt.timestamps = timestamps;
            cmd_simulate(opt);
        },
        py::arg("dgp"), py::arg("n"), py::arg("seed"), py::arg("out"),
        py::arg("oracle_mc") = std::size_t{1000000}, py::arg("timestamps") = true,
        py::call_guard<py::gil_scoped_release>(),
        "Write data.csv, truth.json, and meta.json for a named generator.");
    m.def(
        "run_fit",
        [](const std::string& data, const std::string& out, const std::string& model, int chains,
           int n_iter, int burn_in, int thin, std::uint64_t seed, double a0, double b0, double w,
           int trees, double tau, double split_gamma, double prior_variance, int checkpoint_every,
           bool resume, int threads, bool timestamps) {
            FitOptions opt;
            opt.data_path = data;
            opt.out_dir = out;
            opt.model = model;
            opt.chains = chains;
            opt.chain = make_chain_config(n_iter, burn_in, thin, seed, a0, b0, w, trees, tau,
                                          split_gamma, opt.chain.init_iters);
            opt.prior_variance = prior_variance;
            opt.checkpoint_every = checkpoint_every;
            opt.resume = resume;
            opt.threads = threads;
            opt.timestamps = timestamps;
            cmd_fit(opt);
        },
        py::arg("data"), py::arg("out"), py::arg("model") = "bart", py::arg("chains") = 1,
        py::arg("n_iter") = 10000, py::arg("burn_in") = 5000, py::arg("thin") = 1,
        py::arg("seed") = 0, py::arg("a0") = 0.001, py::arg("b0") = 0.001, py::arg("w") = 2.0,
        py::arg("trees") = 50, py::arg("tau") = 0.95, py::arg("split_gamma") = 2.0,
        py::arg("prior_variance") = 100.0, py::arg("checkpoint_every") = 0,
        py::arg("resume") = false, py::arg("threads") = 1, py::arg("timestamps") = true,
        py::call_guard<py::gil_scoped_release>(),
        "Fit chains against a trial CSV; writes draws, diagnostics, and metadata.");
    m.def(
        "run_summarize",
        [](const std::vector<std::string>& draws, const std::string& data, const std::string& out,
           const std::string& p, const std::vector<double>& thresholds, std::size_t grid_points,
           bool per_draw_reference, bool timestamps) {
            SummarizeOptions opt;
            opt.draws_paths = draws;
            opt.data_path = data;
            opt.out_dir = out;
            opt.p = p;
            opt.thresholds = thresholds;
            opt.grid_points = grid_points;
            opt.per_draw_reference = per_draw_reference;
            opt.timestamps = timestamps;
            cmd_summarize(opt);
        },
        py::arg("draws"), py::arg("data"), py::arg("out"), py::arg("p") = "auto",
        py::arg("thresholds") = std::vector<double>{0.99, 0.95, 0.90, 0.80},
        py::arg("grid_points") = std::size_t{201}, py::arg("per_draw_reference") = true,
        py::arg("timestamps") = true, py::call_guard<py::gil_scoped_release>(),
        "Estimand summaries, likely set, distribution, and balance files.");
    m.def(
        "run_subgroups",
        [](const std::vector<std::string>& draws, const std::string& data,
           const std::string& likely, const std::string& out, std::size_t min_leaf, int max_depth,
           double min_improvement, double stepwise_min_gain, bool timestamps) {
            SubgroupsOptions opt;
            opt.draws_paths = draws;
            opt.data_path = data;
            opt.likely_path = likely;
            opt.out_dir = out;
            opt.params.cart.min_leaf = min_leaf;
            opt.params.cart.max_depth = max_depth;
            opt.params.cart.min_improvement = min_improvement;
            opt.params.stepwise_min_gain = stepwise_min_gain;
            opt.timestamps = timestamps;
            cmd_subgroups(opt);
        },
        py::arg("draws"), py::arg("data"), py::arg("likely"), py::arg("out"),
        py::arg("min_leaf") = std::size_t{20}, py::arg("max_depth") = 4,
        py::arg("min_improvement") = 0.01, py::arg("stepwise_min_gain") = 0.01,
        py::arg("timestamps") = true, py::call_guard<py::gil_scoped_release>(),
        "Subgroup discovery against a likely-set file; writes subgroups.json.");
    m.def(
        "run_diagnose",
        [](const std::vector<std::string>& draws, const std::string& out, bool timestamps) {
            DiagnoseOptions opt;
            opt.draws_paths = draws;
            opt.out_dir = out;
            opt.timestamps = timestamps;
            cmd_diagnose(opt);
        },
        py::arg("draws"), py::arg("out"), py::arg("timestamps") = true,
        py::call_guard<py::gil_scoped_release>(),
        "Cross-chain diagnostics report from draws files.");
    m.def(
        "run_cv",
        [](const std::string& data, const std::string& out, const std::vector<double>& w_grid,
           const std::vector<int>& trees_grid, int folds, std::uint64_t seed, int iters, int burn,
           bool timestamps) {
            CvOptions opt;
            opt.data_path = data;
            opt.out_dir = out;
            opt.w_grid = w_grid;
            opt.trees_grid = trees_grid;
            opt.folds = folds;
            opt.seed = seed;
            opt.iters = iters;
            opt.burn = burn;
            opt.timestamps = timestamps;
            cmd_cv(opt);
        },
        py::arg("data"), py::arg("out"), py::arg("w_grid") = std::vector<double>{1.0, 2.0, 3.0, 4.0},
        py::arg("trees_grid") = std::vector<int>{50, 75, 100, 200}, py::arg("folds") = 5,
        py::arg("seed") = 0, py::arg("iters") = 400, py::arg("burn") = 200,
        py::arg("timestamps") = true, py::call_guard<py::gil_scoped_release>(),
        "Survivor-cell cross-validation over the (w, trees) grid.");
}
