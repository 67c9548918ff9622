"""Seeded Monte Carlo harness comparing simulations against the predictions.

Every trial owns a seed derived as hash(master_seed, grid_index,
trial_index), so grid points and trials can run in any order (or in
parallel) without changing a single reported number, and a report is
byte-identical across reruns of the same config.  Wall-clock time is kept
out of the canonical report payload for that reason.
"""

from __future__ import annotations

import json
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.stats import wasserstein_distance

from . import rng
from ._version import __version__
from .asymptotics import bbp_prediction, predict_gen_error, predict_train_error, \
    predicted_spectral_density
from .covariance import CovarianceModel, covariance_sqrt, from_spec
from .errors import NumericError
from .ssr import Dataset, empirical_risk, fit_ssr, pca_fit, population_risk, \
    ssr_spectrum_empirical

COMPARISONS = ("risk", "train_risk", "spectrum", "bbp", "pca_compare")

_DEFAULT_TRIALS = {"risk": 20, "train_risk": 20, "spectrum": 5, "bbp": 1,
                   "pca_compare": 10}

# factor over the median positive bin height that marks the alpha < 1 atom
_ATOM_FACTOR = 50.0


@dataclass(frozen=True)
class ExperimentConfig:
    """Declarative description of one experiment run."""

    model: dict
    dim: int
    lam: float
    comparison: str
    alphas: tuple = ()
    ns: tuple = ()
    trials: int | None = None
    master_seed: int = 0
    entry_dist: str = "gaussian"
    thetas: tuple = ()
    p_list: tuple = ()
    bins: int = 60
    eta: float | None = None
    grid_points: int = 400
    outlier_margin: float = 0.02
    tolerance: float | None = None
    threads: int = 0

    def effective_trials(self) -> int:
        if self.trials is not None:
            return int(self.trials)
        return _DEFAULT_TRIALS.get(self.comparison, 10)

    def n_grid(self) -> tuple[int, ...]:
        if self.ns:
            return tuple(int(n) for n in self.ns)
        return tuple(int(round(a * self.dim)) for a in self.alphas)

    def grid_values(self) -> tuple[float, ...]:
        if self.comparison == "bbp":
            return tuple(float(t) for t in self.thetas)
        if self.ns:
            return tuple(n / self.dim for n in self.n_grid())
        return tuple(float(a) for a in self.alphas)

    def errors(self) -> list[str]:
        msgs = []
        if self.comparison not in COMPARISONS:
            msgs.append(f"comparison: must be one of {COMPARISONS}, got {self.comparison!r}")
        if not isinstance(self.model, dict) or "kind" not in self.model:
            msgs.append("model: must be a dict with a 'kind' field")
        if self.dim < 2:
            msgs.append(f"dim: must be >= 2, got {self.dim}")
        if not self.lam > 0:
            msgs.append(f"lam: must be > 0, got {self.lam}")
        if self.entry_dist not in ("gaussian", "rademacher"):
            msgs.append(f"entry_dist: must be 'gaussian' or 'rademacher', got {self.entry_dist!r}")
        if self.trials is not None and self.trials < 1:
            msgs.append(f"trials: must be >= 1, got {self.trials}")
        if bool(self.alphas) == bool(self.ns):
            msgs.append("grid: provide exactly one of alphas / ns")
        else:
            bad = [n for n in self.n_grid() if n < 1]
            if bad:
                msgs.append(f"grid: every n = round(alpha * dim) must be >= 1, got {bad}")
        if self.comparison == "bbp":
            if not self.thetas:
                msgs.append("thetas: required for bbp runs")
            if self.alphas and len(self.alphas) != 1:
                msgs.append("alphas: bbp runs use exactly one alpha")
        if self.comparison == "pca_compare" and not self.p_list:
            msgs.append("p_list: required for pca_compare runs")
        if self.p_list and any(not 0 <= p <= self.dim for p in self.p_list):
            msgs.append(f"p_list: entries must be in [0, dim={self.dim}]")
        if self.comparison == "spectrum" and self.bins < 20:
            msgs.append(f"bins: spectrum runs need bins >= 20, got {self.bins}")
        if self.eta is not None and not self.eta > 0:
            msgs.append(f"eta: must be > 0, got {self.eta}")
        return msgs

    def validate(self) -> None:
        msgs = self.errors()
        if msgs:
            raise ValueError("invalid experiment config:\n  " + "\n  ".join(msgs))

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class GridRecord:
    series: str
    grid_value: float
    n: int
    predicted: float
    empirical_mean: float
    empirical_std: float
    trials: int
    metric: str
    distance: float
    verdict: str
    trial_seeds: tuple
    flagged_trials: int = 0
    extra: dict = field(default_factory=dict)


@dataclass
class ExperimentReport:
    config: dict
    comparison: str
    records: list
    summary: dict
    curves: dict
    version: str
    wall_clock_seconds: float

    CSV_HEADER = ("series,grid_value,predicted,empirical_mean,empirical_std,"
                  "metric,distance,verdict")

    def canonical_dict(self) -> dict:
        """Everything except volatile timing; identical across reruns."""
        return {
            "config": self.config,
            "comparison": self.comparison,
            "records": [asdict(r) for r in self.records],
            "summary": self.summary,
            "curves": self.curves,
            "version": self.version,
        }

    def canonical_json(self) -> str:
        return json.dumps(self.canonical_dict(), sort_keys=True, indent=2,
                          default=_jsonable)

    def csv_lines(self) -> list[str]:
        lines = [self.CSV_HEADER]
        for r in self.records:
            lines.append(",".join([
                r.series, repr(float(r.grid_value)), _num(r.predicted),
                _num(r.empirical_mean), _num(r.empirical_std), r.metric,
                _num(r.distance), r.verdict]))
        return lines


def _num(x) -> str:
    return repr(float(x))


def _jsonable(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, tuple):
        return list(obj)
    raise TypeError(f"not JSON-serializable: {type(obj)!r}")


def sample_dataset(model: CovarianceModel, n: int, seed: int,
                   entry_dist: str = "gaussian") -> Dataset:
    """Draw n rows with population covariance Sigma as X = Z Sigma^{1/2}.

    Z has i.i.d. mean-0 variance-1 entries: Gaussian by default, or
    +-1 (rademacher) for universality checks.  Bit-identical for a fixed
    (seed, entry_dist, model).
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if entry_dist == "gaussian":
        z = rng.standard_gaussian(seed, (n, model.dim))
    elif entry_dist == "rademacher":
        z = rng.rademacher(seed, (n, model.dim))
    else:
        raise ValueError(f"unknown entry_dist {entry_dist!r}")
    return Dataset(X=z @ covariance_sqrt(model), n=n, d=model.dim, seed=seed,
                   entry_dist=entry_dist, sigma_ref=model.label())


def _pool(fn, args, threads: int):
    if threads <= 0:
        # trials are BLAS-bound; extra Python threads only pay off when there
        # are spare cores beyond what BLAS already uses
        cpus = os.cpu_count() or 1
        threads = 1 if cpus <= 2 else min(4, cpus // 2)
    if threads == 1 or len(args) <= 1:
        return [fn(a) for a in args]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, args))


def _mean_std(values: list) -> tuple[float, float]:
    arr = np.asarray(values, dtype=float)
    mean = float(arr.mean())
    std = float(arr.std(ddof=1)) if len(arr) > 1 else 0.0
    return mean, std


def _verdict(distance: float, tolerance: float | None) -> str:
    if tolerance is None or not np.isfinite(distance):
        return "n/a"
    return "pass" if distance <= tolerance else "fail"


def run_risk_experiment(config: ExperimentConfig) -> ExperimentReport:
    """Generalization-risk ('risk') or training-risk ('train_risk') sweep.

    The empirical generalization risk of a fitted estimate is computed
    exactly against the population covariance (a trace, not a held-out
    sample); the training risk is the normalized Frobenius residual.
    """
    config.validate()
    if config.comparison not in ("risk", "train_risk"):
        raise ValueError(f"not a risk comparison: {config.comparison!r}")
    t0 = time.perf_counter()
    model = from_spec({**config.model, "dim": config.dim})
    want_train = config.comparison == "train_risk"
    trials = config.effective_trials()
    records = []
    for gi, (alpha, n) in enumerate(zip(config.grid_values(), config.n_grid())):
        pred = (predict_train_error if want_train else predict_gen_error)(
            model, n, config.lam)
        pred_value = pred.train_error if want_train else pred.gen_error
        seeds = tuple(rng.derive_seed(config.master_seed, gi, ti)
                      for ti in range(trials))

        def one_trial(seed, _n=n):
            try:
                ds = sample_dataset(model, _n, seed, config.entry_dist)
                est = fit_ssr(ds, config.lam)
                if want_train:
                    return empirical_risk(est.A_hat, ds)
                return population_risk(est.A_hat, model)
            except NumericError:
                return None

        values = _pool(one_trial, list(seeds), config.threads)
        good = [v for v in values if v is not None]
        flagged = len(values) - len(good)
        mean, std = _mean_std(good) if good else (float("nan"), 0.0)
        if np.isfinite(pred_value):
            distance = abs(mean - pred_value) / max(abs(pred_value), 1e-300)
            verdict = _verdict(distance, config.tolerance)
        else:
            distance = float("nan")
            verdict = "divergent"
        extra = {"kappa": pred.kappa, "df2": pred.df2,
                 "high_variance": bool(n == 1 or (mean != 0 and std > 0.5 * abs(mean)))}
        records.append(GridRecord(
            series="train_risk" if want_train else "gen_risk",
            grid_value=alpha, n=n, predicted=pred_value, empirical_mean=mean,
            empirical_std=std, trials=len(good), metric="rel_error",
            distance=distance, verdict=verdict, trial_seeds=seeds,
            flagged_trials=flagged, extra=extra))
    finite = [r.distance for r in records if np.isfinite(r.distance)]
    summary = {"median_rel_error": float(np.median(finite)) if finite else float("nan"),
               "max_rel_error": float(np.max(finite)) if finite else float("nan")}
    return ExperimentReport(config=config.to_dict(), comparison=config.comparison,
                            records=records, summary=summary, curves={},
                            version=__version__,
                            wall_clock_seconds=time.perf_counter() - t0)


def _atom_region(grid: np.ndarray, density: np.ndarray) -> np.ndarray:
    """Boolean mask of grid points inside the detected point-mass region."""
    positive = density[density > 0]
    if len(positive) == 0:
        return np.zeros(len(grid), dtype=bool)
    return density > _ATOM_FACTOR * np.median(positive)


def _w1_measures(u_pos, u_w, v_pos, v_w) -> float:
    u_w = np.asarray(u_w, float)
    v_w = np.asarray(v_w, float)
    if u_w.sum() <= 0 or v_w.sum() <= 0:
        return float("nan")
    return float(wasserstein_distance(u_pos, v_pos, u_w / u_w.sum(), v_w / v_w.sum()))


def run_spectrum_experiment(config: ExperimentConfig) -> ExperimentReport:
    """Pooled empirical spectrum of the SSR matrix vs the predicted density.

    Pooled eigenvalues over the trials are binned into a normalized
    histogram; the prediction is evaluated on a finer grid over the same
    padded range and compared by Wasserstein-1 distance.  For alpha < 1 the
    point-mass region (bins above 50x the median positive height) is
    excluded from the comparison and both measures are renormalized.
    """
    config.validate()
    if config.comparison != "spectrum":
        raise ValueError(f"not a spectrum comparison: {config.comparison!r}")
    t0 = time.perf_counter()
    model = from_spec({**config.model, "dim": config.dim})
    trials = config.effective_trials()
    records, curves = [], {}
    for gi, (alpha, n) in enumerate(zip(config.grid_values(), config.n_grid())):
        seeds = tuple(rng.derive_seed(config.master_seed, gi, ti)
                      for ti in range(trials))

        def one_trial(seed, _n=n):
            ds = sample_dataset(model, _n, seed, config.entry_dist)
            return ssr_spectrum_empirical(fit_ssr(ds, config.lam))

        pooled = np.sort(np.concatenate(_pool(one_trial, list(seeds), config.threads)))
        lo, hi = pooled[0], pooled[-1]
        pad = 0.10 * (hi - lo)
        heights, edges = np.histogram(pooled, bins=config.bins,
                                      range=(lo - pad, hi + pad), density=True)
        centers = 0.5 * (edges[:-1] + edges[1:])
        widths = np.diff(edges)

        grid = np.linspace(lo - pad, hi + pad, config.grid_points)
        spectral = predicted_spectral_density(model, n, config.lam, grid,
                                              eta=config.eta)
        step = grid[1] - grid[0]
        pred_w = spectral.density * step

        predicted_mean = float(np.trapezoid(grid * spectral.density, grid))
        atom_bins = _atom_region(centers, heights) if alpha < 1 else \
            np.zeros(len(centers), dtype=bool)
        excluded_mass = 0.0
        if atom_bins.any():
            cut = edges[1 + np.flatnonzero(atom_bins).max()]
            keep_bins = ~atom_bins
            keep_grid = np.ones(len(grid), dtype=bool)
            for j in np.flatnonzero(atom_bins):
                keep_grid &= ~((grid >= edges[j]) & (grid <= edges[j + 1]))
            excluded_mass = float((heights * widths)[atom_bins].sum())
            w1 = _w1_measures(centers[keep_bins], (heights * widths)[keep_bins],
                              grid[keep_grid], pred_w[keep_grid])
            extra_atom = {"atom_cut": float(cut), "excluded_mass": excluded_mass}
        else:
            w1 = _w1_measures(centers, heights * widths, grid, pred_w)
            extra_atom = {}

        verdict = _verdict(w1, config.tolerance)
        extra = {"support_empirical": (float(lo), float(hi)),
                 "support_predicted": spectral.support_estimate,
                 "predicted_mass": spectral.mass,
                 "failed_points": list(spectral.failed_points),
                 "eta": spectral.eta, **extra_atom}
        records.append(GridRecord(
            series="spectrum", grid_value=alpha, n=n, predicted=predicted_mean,
            empirical_mean=float(pooled.mean()), empirical_std=float(pooled.std()),
            trials=trials, metric="w1", distance=w1, verdict=verdict,
            trial_seeds=seeds, extra=extra))
        curves[str(gi)] = {
            "alpha": alpha,
            "bin_edges": edges.tolist(),
            "bin_density": heights.tolist(),
            "grid": grid.tolist(),
            "predicted_density": spectral.density.tolist(),
            "pooled_eigenvalues": pooled.tolist(),
        }
    summary = {"w1": {str(i): r.distance for i, r in enumerate(records)}}
    return ExperimentReport(config=config.to_dict(), comparison="spectrum",
                            records=records, summary=summary, curves=curves,
                            version=__version__,
                            wall_clock_seconds=time.perf_counter() - t0)


def run_bbp_sweep(config: ExperimentConfig) -> ExperimentReport:
    """Top-two SSR eigenvalues across a spike-strength grid vs the BBP prediction.

    An outlier verdict at each theta compares the mean top eigenvalue
    against the predicted bulk edge plus ``outlier_margin``; the empirical
    transition estimate is the first theta from which the verdict stays
    positive, reported next to theta_c and the first grid theta whose
    prediction detaches from the bulk.
    """
    config.validate()
    if config.comparison != "bbp":
        raise ValueError(f"not a bbp comparison: {config.comparison!r}")
    t0 = time.perf_counter()
    if config.alphas:
        alpha = float(config.alphas[0])
        n = int(round(alpha * config.dim))
    else:
        n = int(config.ns[0])
        alpha = n / config.dim
    trials = config.effective_trials()
    records = []
    base = {k: v for k, v in config.model.items() if k != "theta"}
    base["kind"] = "spiked"
    for gi, theta in enumerate(config.thetas):
        model = from_spec({**base, "theta": float(theta), "dim": config.dim})
        pred = bbp_prediction(alpha, float(theta))
        seeds = tuple(rng.derive_seed(config.master_seed, gi, ti)
                      for ti in range(trials))

        def one_trial(seed, _model=model):
            ds = sample_dataset(_model, n, seed, config.entry_dist)
            spec = ssr_spectrum_empirical(fit_ssr(ds, config.lam))
            return spec[-1], spec[-2]

        tops = _pool(one_trial, list(seeds), config.threads)
        top1_mean, top1_std = _mean_std([t[0] for t in tops])
        top2_mean, top2_std = _mean_std([t[1] for t in tops])
        outlier = bool(top1_mean > pred.s2 + config.outlier_margin)
        distance = abs(top1_mean - pred.s1)
        records.append(GridRecord(
            series="bbp_top1", grid_value=float(theta), n=n, predicted=pred.s1,
            empirical_mean=top1_mean, empirical_std=top1_std, trials=trials,
            metric="abs_error", distance=distance,
            verdict=_verdict(distance, config.tolerance), trial_seeds=seeds,
            extra={"top2_mean": top2_mean, "top2_std": top2_std,
                   "predicted_s2": pred.s2, "z_star": pred.z_star,
                   "outlier": outlier}))

    theta_c = bbp_prediction(alpha, 0.0).theta_c
    outliers = [bool(r.extra["outlier"]) for r in records]
    empirical_transition = None
    for i in range(len(records)):
        if all(outliers[i:]) and outliers[i:]:
            empirical_transition = records[i].grid_value
            break
    theory_transition = next(
        (r.grid_value for r in records if r.predicted > r.extra["predicted_s2"]),
        None)
    summary = {"alpha": alpha, "theta_c": theta_c,
               "empirical_transition": empirical_transition,
               "theory_transition": theory_transition,
               "bulk_edge": 2.0 / (np.sqrt(alpha) + 1.0),
               "outlier_margin": config.outlier_margin}
    return ExperimentReport(config=config.to_dict(), comparison="bbp",
                            records=records, summary=summary, curves={},
                            version=__version__,
                            wall_clock_seconds=time.perf_counter() - t0)


def run_pca_comparison(config: ExperimentConfig) -> ExperimentReport:
    """Empirical SSR risk vs empirical PCA risk across the sample-size grid.

    PCA projectors come from each trial's sample covariance; risks of both
    estimators are exact population traces.  Predictions: the SSR
    deterministic equivalent, and for PCA the population tail-eigenvalue
    mean at each p.
    """
    config.validate()
    if config.comparison != "pca_compare":
        raise ValueError(f"not a pca comparison: {config.comparison!r}")
    t0 = time.perf_counter()
    model = from_spec({**config.model, "dim": config.dim})
    trials = config.effective_trials()
    eigs = model.eigenvalues
    records = []
    for gi, (alpha, n) in enumerate(zip(config.grid_values(), config.n_grid())):
        seeds = tuple(rng.derive_seed(config.master_seed, gi, ti)
                      for ti in range(trials))

        def one_trial(seed, _n=n):
            ds = sample_dataset(model, _n, seed, config.entry_dist)
            est = fit_ssr(ds, config.lam)
            ssr_risk = population_risk(est.A_hat, model)
            gram = ds.X.T @ ds.X / ds.n  # shared by every PCA rank
            pca_risks = [population_risk(pca_fit(gram, p).projector, model)
                         for p in config.p_list]
            return ssr_risk, pca_risks

        results = _pool(one_trial, list(seeds), config.threads)
        pred = predict_gen_error(model, n, config.lam)
        mean, std = _mean_std([r[0] for r in results])
        dist = abs(mean - pred.gen_error) / max(abs(pred.gen_error), 1e-300) \
            if np.isfinite(pred.gen_error) else float("nan")
        records.append(GridRecord(
            series="ssr", grid_value=alpha, n=n, predicted=pred.gen_error,
            empirical_mean=mean, empirical_std=std, trials=trials,
            metric="rel_error", distance=dist,
            verdict=_verdict(dist, config.tolerance), trial_seeds=seeds))
        for pj, p in enumerate(config.p_list):
            pmean, pstd = _mean_std([r[1][pj] for r in results])
            tail = float(np.sum(eigs[p:]) / config.dim)
            pdist = abs(pmean - tail) / max(abs(tail), 1e-300) if tail > 0 else float("nan")
            records.append(GridRecord(
                series=f"pca_p={p}", grid_value=alpha, n=n, predicted=tail,
                empirical_mean=pmean, empirical_std=pstd, trials=trials,
                metric="rel_error", distance=pdist,
                verdict=_verdict(pdist, config.tolerance), trial_seeds=seeds,
                extra={"p": int(p), "gamma": p / config.dim}))
    summary = {}
    if model.kind == "toeplitz":
        from .asymptotics import ar1_phase_boundary, ar1_population_ssr_loss
        rho = model.params["rho"]
        summary["gamma_star"] = ar1_phase_boundary(rho)
        summary["ssr_pop_ridgeless"] = ar1_population_ssr_loss(rho, 0.0)
    return ExperimentReport(config=config.to_dict(), comparison="pca_compare",
                            records=records, summary=summary, curves={},
                            version=__version__,
                            wall_clock_seconds=time.perf_counter() - t0)


def run_experiment(config: ExperimentConfig) -> ExperimentReport:
    """Dispatch on config.comparison."""
    runner = {"risk": run_risk_experiment, "train_risk": run_risk_experiment,
              "spectrum": run_spectrum_experiment, "bbp": run_bbp_sweep,
              "pca_compare": run_pca_comparison}
    if config.comparison not in runner:
        raise ValueError(f"unknown comparison {config.comparison!r}")
    return runner[config.comparison](config)
