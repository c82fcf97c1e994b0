"""End-to-end smoke tests for the python bindings."""

import json
import math

import numpy as np
import pytest

import sacebart as sb


@pytest.fixture(scope="module")
def trial():
    ds, truth = sb.generate("dgp-a", 100, seed=3)
    chains = sb.fit(
        ds,
        chains=2,
        n_iter=60,
        burn_in=20,
        thin=2,
        seed=11,
        trees=8,
        init_iters=10,
    )
    return ds, truth, chains, sb.pool(chains)


def test_version_and_convention():
    assert sb.__version__
    assert "pi11" in sb.STRATUM_CONVENTION and "S=00" in sb.STRATUM_CONVENTION


def test_generate_shapes_and_truth():
    ds, truth = sb.generate("dgp-a", 100, seed=3)
    assert len(ds) == 100
    assert ds.covariates.shape == (100, ds.n_covariates)
    assert set(truth) >= {"strata", "y1", "y0", "csace"}
    assert len(truth["strata"]) == 100
    # Potential outcomes are undefined (None) exactly where death removes them.
    for stratum, y1, y0 in zip(truth["strata"], truth["y1"], truth["y0"]):
        assert (y1 is None) == (stratum == 0)
        assert (y0 is None) == (stratum != 2)
    dead = ds.survive == 0
    assert np.isnan(ds.outcome[dead]).all()
    assert np.isfinite(ds.outcome[~dead]).all()


def test_dataset_roundtrip(tmp_path):
    ds, _ = sb.generate("dgp-b", 60, seed=9)
    path = str(tmp_path / "trial.csv")
    ds.save(path)
    back = sb.Dataset.load(path)
    assert back.n_units == ds.n_units
    assert back.names == ds.names
    np.testing.assert_array_equal(back.treat, ds.treat)
    np.testing.assert_allclose(back.covariates, ds.covariates, rtol=0, atol=1e-12)


def test_from_arrays_validation():
    x = np.array([[0.1, 1.0], [-0.4, 0.0], [1.2, 1.0], [0.3, 0.0]])
    ds = sb.Dataset.from_arrays(
        treat=[1, 0, 1, 0],
        survive=[1, 1, 0, 1],
        outcome=[2.0, 1.5, math.nan, 0.7],
        covariates=x,
        names=["x1", "x2"],
    )
    assert ds.n_units == 4
    assert ds.n_covariates == 2
    with pytest.raises(sb.UsageError):
        sb.Dataset.from_arrays(
            treat=[1, 0],
            survive=[1, 1],
            outcome=[1.0, 2.0],
            covariates=np.zeros((2, 2)),
            names=["only_one"],
        )
    with pytest.raises(sb.DataError):
        # Survivor with a missing outcome violates the data contract.
        sb.Dataset.from_arrays(
            treat=[1, 0],
            survive=[1, 1],
            outcome=[math.nan, 2.0],
            covariates=np.zeros((2, 2)),
            names=["x1", "x2"],
        )


def test_fit_is_deterministic(trial):
    ds, _, chains, _ = trial
    again = sb.fit(
        ds,
        chains=1,
        n_iter=60,
        burn_in=20,
        thin=2,
        seed=11,
        trees=8,
        init_iters=10,
    )
    np.testing.assert_array_equal(again[0].m111, chains[0].m111)
    np.testing.assert_array_equal(again[0].strata, chains[0].strata)


def test_draws_shapes_and_meta(trial):
    _, _, chains, pooled = trial
    d = chains[0]
    assert d.n_retained == 20
    assert d.strata.shape == (20, 100)
    assert d.m111.shape == (20, 100)
    assert d.sigma2.shape == (20, 3)
    assert d.meta["chain_id"] == 0
    assert chains[1].meta["chain_seed"] == 12
    assert pooled.n_retained == 40
    # No draw may place a unit in the excluded harmed stratum encoding.
    assert set(np.unique(pooled.strata)) <= {0, 1, 2}


def test_estimand_pipeline(trial):
    ds, _, _, pooled = trial
    summary = sb.sace(pooled)
    assert summary["n_draws"] + summary["n_skipped"] == 40
    assert math.isfinite(summary["mean"])
    assert summary["q025"] <= summary["median"] <= summary["q975"]

    likely = sb.likely_set(pooled, ds)
    units, p = list(likely["units"]), likely["p"]
    assert 0.5 <= p <= 0.99
    assert units, "likely set should not be empty"

    # Averaging by units then draws equals averaging by draws then units.
    delta = sb.csace(pooled)
    by_units = delta[:, units].mean(axis=0).mean()
    by_draws = delta[:, units].mean(axis=1).mean()
    assert abs(by_units - by_draws) < 1e-10

    diff = sb.differential_effects(pooled, units, p)
    assert len(diff["d_star"]) == len(units)
    assert np.all((0.0 <= diff["d_star"]) & (diff["d_star"] <= 1.0))

    bene = sb.benefit_probabilities(pooled, units, p)
    assert len(bene["q"]) == len(units)
    assert len(bene["q_draws"]) == 40

    dens = sb.csace_density(pooled, units, p, n_points=301)
    grid, h = dens["grid"], dens["density"]
    assert len(grid) == len(h) == 301
    integral = float(np.sum((h[1:] + h[:-1]) * np.diff(grid)) / 2.0)
    assert abs(integral - 1.0) < 5e-3

    bal = sb.balance(pooled, ds, units, p)
    assert [row["name"] for row in bal["rows"]] == ds.names


def test_subgroups_report(trial):
    ds, _, _, pooled = trial
    likely = sb.likely_set(pooled, ds)
    report = sb.subgroups(pooled, ds, list(likely["units"]), likely["p"], min_leaf=10)
    assert set(report) >= {"selected", "final_r2", "tree", "leaves", "linear_summary"}
    assert isinstance(report["leaves"], list) and report["leaves"]


def test_diagnose(trial):
    _, _, chains, _ = trial
    diag = sb.diagnose(chains)
    names = [s["series"] for s in diag["series"]]
    assert "sace" in names and "marginal_p11" in names
    for s in diag["series"]:
        assert s["ess"] >= 1.0
        assert s["draws"] == 40


def test_error_taxonomy(trial):
    ds, _, _, pooled = trial
    with pytest.raises(sb.UsageError):
        sb.fit(ds, model="nonsense", n_iter=10, burn_in=2)
    with pytest.raises(sb.UsageError):
        sb.likely_set(pooled, ds, p=2.0)
    assert issubclass(sb.UsageError, sb.Error)
    assert issubclass(sb.DataError, sb.Error)


def test_file_pipeline(tmp_path):
    sim = tmp_path / "sim"
    fit_dir = tmp_path / "fit"
    summ = tmp_path / "summary"
    sub = tmp_path / "subgroups"
    diag = tmp_path / "diag"

    sb.run_simulate("dgp-a", 80, seed=5, out=str(sim), oracle_mc=20000, timestamps=False)
    assert (sim / "data.csv").exists() and (sim / "truth.json").exists()

    sb.run_fit(
        str(sim / "data.csv"),
        str(fit_dir),
        chains=2,
        n_iter=40,
        burn_in=10,
        thin=1,
        seed=7,
        trees=8,
        threads=2,
        timestamps=False,
    )
    draws_files = [str(fit_dir / "draws_chain0.bin"), str(fit_dir / "draws_chain1.bin")]
    loaded = sb.Draws.load(draws_files[0])
    assert loaded.n_retained == 30 and loaded.n_units == 80

    sb.run_summarize(draws_files, str(sim / "data.csv"), str(summ), timestamps=False)
    summary = json.loads((summ / "summary.json").read_text())
    assert math.isfinite(summary["sace"]["mean"])

    sb.run_subgroups(
        draws_files,
        str(sim / "data.csv"),
        str(summ / "likely_set.json"),
        str(sub),
        min_leaf=10,
        timestamps=False,
    )
    assert (sub / "subgroups.json").exists()

    sb.run_diagnose(draws_files, str(diag), timestamps=False)
    report = json.loads((diag / "diagnostics.json").read_text())
    assert len(report["diagnostics"]["series"]) == 5
