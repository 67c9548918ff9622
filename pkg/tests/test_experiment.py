import json

import numpy as np
import pytest

import ssrlab as sl
from ssrlab.experiment import ExperimentConfig


def _cfg(**kw):
    base = dict(model={"kind": "identity"}, dim=60, lam=0.01, comparison="risk",
                alphas=(2.0,), trials=3, master_seed=1)
    base.update(kw)
    return ExperimentConfig(**base)


def test_sample_dataset_bit_identical():
    m = sl.build_covariance("toeplitz", 30, rho=0.5)
    a = sl.sample_dataset(m, 40, seed=7)
    b = sl.sample_dataset(m, 40, seed=7)
    assert np.array_equal(a.X, b.X)
    assert a.sigma_ref == m.label()
    c = sl.sample_dataset(m, 40, seed=8)
    assert not np.array_equal(a.X, c.X)


def test_sample_dataset_law_of_large_numbers():
    m = sl.build_covariance("toeplitz", 20, rho=0.5)
    ds = sl.sample_dataset(m, 50_000, seed=3)
    emp = ds.X.T @ ds.X / ds.n
    rel = np.linalg.norm(emp - m.dense) / np.linalg.norm(m.dense)
    assert rel <= 0.05


def test_rademacher_entries_unit_variance():
    m = sl.build_covariance("identity", 20)
    ds = sl.sample_dataset(m, 50_000, seed=5, entry_dist="rademacher")
    assert set(np.unique(ds.X)) == {-1.0, 1.0}
    emp = ds.X.T @ ds.X / ds.n
    assert np.linalg.norm(emp - np.eye(20)) / np.linalg.norm(np.eye(20)) <= 0.05


def test_config_validation_messages():
    bad = ExperimentConfig(model={"kind": "identity"}, dim=60, lam=0.0,
                           comparison="nope", alphas=(2.0,), ns=(10,),
                           trials=0, bins=5, entry_dist="coin")
    msgs = " ".join(bad.errors())
    for frag in ("comparison", "lam", "trials", "entry_dist", "exactly one"):
        assert frag in msgs
    with pytest.raises(ValueError):
        bad.validate()
    assert _cfg().errors() == []


def test_config_grid_consistency():
    cfg = _cfg(alphas=(0.5, 1.0), ns=())
    assert cfg.n_grid() == (30, 60)
    cfg2 = _cfg(alphas=(), ns=(45,))
    assert cfg2.grid_values() == (0.75,)
    tiny = _cfg(alphas=(0.001,))
    assert any("n = round" in m for m in tiny.errors())


def test_risk_experiment_reproducible_across_threads():
    reports = []
    for threads in (1, 2):
        cfg = _cfg(dim=80, alphas=(0.5, 2.0), trials=5, threads=threads)
        reports.append(sl.run_risk_experiment(cfg).canonical_dict())
    a, b = reports
    a["config"]["threads"] = b["config"]["threads"] = 0
    assert json.dumps(a, sort_keys=True, default=str) == \
        json.dumps(b, sort_keys=True, default=str)


def test_risk_experiment_byte_identical_rerun():
    cfg = _cfg(model={"kind": "toeplitz", "rho": 0.4}, dim=70, trials=4)
    report = sl.run_risk_experiment(cfg)
    assert sl.run_risk_experiment(cfg).canonical_json() == report.canonical_json()
    # the echoed config round-trips to byte-identical output
    echoed = ExperimentConfig(**report.config)
    assert sl.run_risk_experiment(echoed).canonical_json() == report.canonical_json()


def test_risk_isotropic_sanity():
    cfg = _cfg(dim=150, lam=1e-6, alphas=(2.0,), trials=8)
    rep = sl.run_risk_experiment(cfg)
    rec = rep.records[0]
    assert abs(rec.empirical_mean - 2.0) / 2.0 <= 0.1
    assert rec.trials == 8 and rec.flagged_trials == 0
    assert rec.metric == "rel_error"


def test_risk_single_sample_flags_high_variance():
    cfg = _cfg(dim=40, ns=(1,), alphas=(), trials=4)
    rep = sl.run_risk_experiment(cfg)
    assert rep.records[0].extra["high_variance"]


def test_risk_divergent_near_pole():
    cfg = _cfg(dim=100, lam=1e-12, alphas=(1.0,), trials=2)
    rep = sl.run_risk_experiment(cfg)
    assert rep.records[0].verdict == "divergent"
    assert not np.isfinite(rep.records[0].predicted)


def test_risk_verdicts_against_tolerance():
    cfg = _cfg(dim=120, lam=1e-6, alphas=(2.0,), trials=6, tolerance=0.2)
    rep = sl.run_risk_experiment(cfg)
    assert rep.records[0].verdict == "pass"


def test_train_risk_comparison():
    cfg = _cfg(model={"kind": "toeplitz", "rho": 0.5}, dim=100,
               comparison="train_risk", lam=1e-4, alphas=(2.0,), trials=6)
    rep = sl.run_risk_experiment(cfg)
    rec = rep.records[0]
    assert rec.series == "train_risk"
    assert rec.distance <= 0.1


def test_prediction_error_tightens_with_dimension():
    # median relative risk error at d = 400 is no worse than at d = 100
    medians = {}
    for d in (100, 400):
        cfg = ExperimentConfig(model={"kind": "toeplitz", "rho": 0.5}, dim=d,
                               lam=0.01, comparison="risk",
                               alphas=(0.5, 2.0, 3.0), trials=12, master_seed=6)
        rep = sl.run_risk_experiment(cfg)
        medians[d] = np.median([r.distance for r in rep.records])
    assert medians[400] <= medians[100]


def test_spectrum_histogram_integrates_to_one():
    cfg = _cfg(comparison="spectrum", dim=150, alphas=(1.5,), lam=0.01,
               trials=2, bins=24, grid_points=120)
    rep = sl.run_spectrum_experiment(cfg)
    curve = rep.curves["0"]
    widths = np.diff(curve["bin_edges"])
    assert np.isclose(np.sum(np.asarray(curve["bin_density"]) * widths), 1.0,
                      rtol=1e-12)
    assert len(curve["pooled_eigenvalues"]) == 2 * 150


def test_spectrum_w1_isotropic():
    # Sigma = I, alpha = 1.5, d = 2000: transformed Marchenko-Pastur shape;
    # the 0.05 tolerance needs the full d = 2000 (at d = 400 it sits near 0.06)
    cfg = _cfg(comparison="spectrum", dim=2000, alphas=(1.5,), lam=0.01,
               trials=1, bins=60, grid_points=300)
    rep = sl.run_spectrum_experiment(cfg)
    rec = rep.records[0]
    assert rec.distance <= 0.05
    assert rec.extra["failed_points"] == []
    assert 0.98 <= rec.extra["predicted_mass"] <= 1.02


def test_atom_region_detector():
    from ssrlab.experiment import _atom_region
    grid = np.linspace(0, 1, 200)
    density = np.full(200, 0.1)
    density[40:43] = 60.0  # sharp point-mass bins, far above 50x the median
    mask = _atom_region(grid, density)
    assert mask[40:43].all() and mask.sum() == 3
    assert not _atom_region(grid, np.full(200, 0.1)).any()


def test_spectrum_below_one_reproduces_cluster():
    # alpha < 1 at lam = 1e-2: the kernel-direction cluster near 1 - 1/(1-alpha)
    # is part of the predicted curve (the paper's isotropic below-one setting)
    cfg = _cfg(comparison="spectrum", dim=300, alphas=(0.6,), lam=0.01,
               trials=3, bins=60, grid_points=300)
    rep = sl.run_spectrum_experiment(cfg)
    rec = rep.records[0]
    curve = rep.curves["0"]
    grid = np.asarray(curve["grid"])
    pred = np.asarray(curve["predicted_density"])
    eigs = np.asarray(curve["pooled_eigenvalues"])
    window = grid < -1.0
    pred_mass = np.trapezoid(pred[window], grid[window])
    emp_mass = (eigs < -1.0).mean()
    assert abs(pred_mass - emp_mass) <= 0.1
    assert np.isfinite(rec.distance)


def test_bbp_sweep_smoke():
    cfg = ExperimentConfig(model={"kind": "spiked", "seed": 0}, dim=300,
                           lam=1e-4, comparison="bbp", alphas=(2.0,),
                           thetas=(0.3, 3.0), trials=2, master_seed=5)
    rep = sl.run_bbp_sweep(cfg)
    sub, sup = rep.records
    assert not sub.extra["outlier"]
    assert sup.extra["outlier"]
    assert sup.empirical_mean > sub.empirical_mean
    assert rep.summary["theta_c"] == pytest.approx(1 / np.sqrt(2))
    assert rep.summary["theory_transition"] == 3.0
    assert rep.summary["empirical_transition"] == 3.0


def test_pca_comparison_records():
    cfg = ExperimentConfig(model={"kind": "spiked", "theta": 1.0, "seed": 2},
                           dim=150, lam=0.01, comparison="pca_compare",
                           alphas=(2.0, 4.0), p_list=(3, 10, 150), trials=5,
                           master_seed=9)
    rep = sl.run_pca_comparison(cfg)
    by_series = {}
    for rec in rep.records:
        by_series.setdefault(rec.series, {})[rec.grid_value] = rec
    assert set(by_series) == {"ssr", "pca_p=3", "pca_p=10", "pca_p=150"}
    for alpha in (2.0, 4.0):
        ssr = by_series["ssr"][alpha].empirical_mean
        for p in (3, 10, 150):
            assert by_series[f"pca_p={p}"][alpha].empirical_mean < ssr
    full = by_series["pca_p=150"][2.0]
    assert full.empirical_mean <= 1e-10


def test_pca_crossing_near_phase_boundary():
    # population-limit mode: large fixed n, Toeplitz rho = 0.5; the PCA and
    # SSR risks cross close to gamma* ~ 0.1513
    d = 300
    p_list = (15, 30, 45, 60, 90)
    cfg = ExperimentConfig(model={"kind": "toeplitz", "rho": 0.5}, dim=d,
                           lam=1e-5, comparison="pca_compare", ns=(20_000,),
                           p_list=p_list, trials=3, master_seed=13)
    rep = sl.run_pca_comparison(cfg)
    ssr = next(r for r in rep.records if r.series == "ssr").empirical_mean
    gammas = np.array(p_list) / d
    pca = np.array([next(r for r in rep.records
                         if r.series == f"pca_p={p}").empirical_mean
                    for p in p_list])
    diffs = pca - ssr  # decreasing in gamma; positive before the crossing
    assert diffs[0] > 0 > diffs[-1]
    k = int(np.flatnonzero(diffs < 0)[0])
    crossing = np.interp(0.0, [diffs[k], diffs[k - 1]],
                         [gammas[k], gammas[k - 1]])
    assert abs(crossing - sl.ar1_phase_boundary(0.5)) <= 0.03


def test_pca_comparison_toeplitz_summary():
    cfg = ExperimentConfig(model={"kind": "toeplitz", "rho": 0.5}, dim=80,
                           lam=1e-5, comparison="pca_compare", alphas=(3.0,),
                           p_list=(8,), trials=3, master_seed=4)
    rep = sl.run_pca_comparison(cfg)
    assert rep.summary["gamma_star"] == pytest.approx(sl.ar1_phase_boundary(0.5))
    assert rep.summary["ssr_pop_ridgeless"] == pytest.approx(0.6)


def test_report_csv_shape():
    cfg = _cfg(trials=2)
    rep = sl.run_risk_experiment(cfg)
    lines = rep.csv_lines()
    assert lines[0].startswith("series,grid_value,predicted,empirical_mean")
    assert len(lines) == 1 + len(rep.records)
    assert len(lines[1].split(",")) == len(lines[0].split(","))


def test_dispatch():
    with pytest.raises(ValueError):
        sl.run_experiment(_cfg(comparison="nope"))
    rep = sl.run_experiment(_cfg(trials=2))
    assert rep.comparison == "risk"
