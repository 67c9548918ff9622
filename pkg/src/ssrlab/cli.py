"""Command-line interface.

Subcommands: predict, simulate, spectrum, bbp, phase-curve, compare-pca.
One JSON config document with sections {model, grid, solver, experiment,
output} serves every subcommand; inline flags override config fields, and
the fully defaulted config is echoed into the report.  Exit codes: 0 on
success, 2 on configuration errors, 3 on numeric failures (partial
artifacts are kept).
"""

from __future__ import annotations

import argparse
import copy
import hashlib
import json
import sys
import time
from pathlib import Path

import numpy as np
from jsonschema import Draft202012Validator

from ._version import __version__
from .asymptotics import ar1_phase_boundary, ar1_population_ssr_loss, \
    predict_gen_error
from .covariance import from_spec
from .errors import NumericError
from .experiment import ExperimentConfig, run_bbp_sweep, run_pca_comparison, \
    run_risk_experiment, run_spectrum_experiment

SUBCOMMANDS = ("predict", "simulate", "spectrum", "bbp", "phase-curve",
               "compare-pca")

CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "model": {
            "type": "object",
            "additionalProperties": False,
            "required": ["kind", "dim"],
            "properties": {
                "kind": {"enum": ["identity", "spiked", "toeplitz",
                                  "power_law", "custom"]},
                "dim": {"type": "integer", "minimum": 2},
                "rho": {"type": "number", "exclusiveMinimum": 0,
                        "exclusiveMaximum": 1},
                "theta": {"type": "number", "minimum": 0},
                "beta": {"type": "number", "exclusiveMinimum": 0},
                "spike": {"enum": ["uniform_sphere", "basis"]},
                "spike_index": {"type": "integer", "minimum": 0},
                "seed": {"type": "integer"},
                "matrix_csv": {"type": "string"},
            },
        },
        "grid": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "alphas": {"type": "array", "minItems": 1,
                           "items": {"type": "number", "exclusiveMinimum": 0}},
                "ns": {"type": "array", "minItems": 1,
                       "items": {"type": "integer", "minimum": 1}},
                "lambdas": {"type": "array", "minItems": 1,
                            "items": {"type": "number", "exclusiveMinimum": 0}},
                "thetas": {"type": "array", "minItems": 1,
                           "items": {"type": "number", "minimum": 0}},
                "p_list": {"type": "array", "minItems": 1,
                           "items": {"type": "integer", "minimum": 0}},
                "rhos": {"type": "array", "minItems": 1,
                         "items": {"type": "number", "exclusiveMinimum": 0,
                                   "exclusiveMaximum": 1}},
            },
        },
        "solver": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "eta": {"type": ["number", "null"], "exclusiveMinimum": 0},
                "grid_points": {"type": "integer", "minimum": 50},
                "outlier_margin": {"type": "number", "exclusiveMinimum": 0},
            },
        },
        "experiment": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "lam": {"type": "number", "exclusiveMinimum": 0},
                "trials": {"type": ["integer", "null"], "minimum": 1},
                "master_seed": {"type": "integer"},
                "entry_dist": {"enum": ["gaussian", "rademacher"]},
                "bins": {"type": "integer", "minimum": 20},
                "tolerance": {"type": ["number", "null"]},
                "comparison": {"enum": ["risk", "train_risk"]},
            },
        },
        "output": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "format": {"enum": ["csv", "json", "both"]},
                "figures": {"type": "boolean"},
            },
        },
    },
}

DEFAULT_CONFIG = {
    "model": {"kind": "identity", "dim": 200},
    "grid": {},
    "solver": {"eta": None, "grid_points": 400, "outlier_margin": 0.02},
    "experiment": {"lam": 1e-2, "trials": None, "master_seed": 0,
                   "entry_dist": "gaussian", "bins": 60, "tolerance": None,
                   "comparison": "risk"},
    "output": {"format": "both", "figures": True},
}


class ConfigError(ValueError):
    pass


def _parse_list(text: str, cast):
    try:
        return [cast(tok) for tok in text.split(",") if tok.strip()]
    except ValueError as exc:
        raise ConfigError(f"cannot parse list {text!r}: {exc}") from exc


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ssrlab",
        description="Masked self-supervised ridge: predictions, simulations, "
                    "and comparisons")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="subcommand", required=True)
    for name, blurb in (
            ("predict", "deterministic risk predictions over an (alpha, lambda) grid"),
            ("simulate", "Monte Carlo risk sweep vs prediction"),
            ("spectrum", "empirical SSR spectrum vs predicted density"),
            ("bbp", "spiked-model outlier sweep over theta"),
            ("phase-curve", "AR(1) SSR-vs-PCA phase boundary gamma*(rho)"),
            ("compare-pca", "empirical SSR risk vs PCA risk")):
        p = sub.add_parser(name, help=blurb)
        p.add_argument("--config", type=Path, help="JSON config file")
        p.add_argument("--out", type=Path, default=Path("out"),
                       help="output directory (default: ./out)")
        p.add_argument("--format", choices=["csv", "json", "both"],
                       help="artifact format (default: both)")
        p.add_argument("--threads", type=int, default=0,
                       help="worker threads, 0 = auto")
        p.add_argument("--seed", type=int, help="override master seed")
        p.add_argument("--no-figures", action="store_true",
                       help="skip figure rendering")
        # model overrides
        p.add_argument("--kind", choices=["identity", "spiked", "toeplitz",
                                          "power_law", "custom"])
        p.add_argument("--dim", type=int)
        p.add_argument("--rho", type=float)
        p.add_argument("--theta", type=float)
        p.add_argument("--beta", type=float)
        p.add_argument("--spike", choices=["uniform_sphere", "basis"])
        p.add_argument("--spike-index", type=int)
        p.add_argument("--matrix-csv", type=str)
        # grids
        p.add_argument("--alphas", type=str, help="comma-separated alpha grid")
        p.add_argument("--ns", type=str, help="comma-separated n grid")
        p.add_argument("--lambdas", type=str,
                       help="comma-separated lambda grid (predict)")
        p.add_argument("--thetas", type=str, help="comma-separated theta grid (bbp)")
        p.add_argument("--p-list", type=str, help="comma-separated p grid (compare-pca)")
        p.add_argument("--rhos", type=str, help="comma-separated rho grid (phase-curve)")
        # experiment / solver
        p.add_argument("--lam", type=float, help="ridge level")
        p.add_argument("--trials", type=int)
        p.add_argument("--entry-dist", choices=["gaussian", "rademacher"])
        p.add_argument("--bins", type=int)
        p.add_argument("--tolerance", type=float)
        p.add_argument("--comparison", choices=["risk", "train_risk"],
                       help="simulate: which risk to compare")
        p.add_argument("--eta", type=float)
        p.add_argument("--grid-points", type=int)
        p.add_argument("--outlier-margin", type=float)
    return parser


def assemble_config(args) -> dict:
    config = copy.deepcopy(DEFAULT_CONFIG)
    if args.config is not None:
        try:
            loaded = json.loads(Path(args.config).read_text())
        except OSError as exc:
            raise ConfigError(f"cannot read config file: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
        if not isinstance(loaded, dict):
            raise ConfigError("config root must be a JSON object")
        for section, content in loaded.items():
            if section not in config:
                raise ConfigError(f"unknown config section {section!r}")
            if not isinstance(content, dict):
                raise ConfigError(f"config section {section!r} must be an object")
            config[section].update(content)

    overrides = [
        ("kind", "model", "kind", None), ("dim", "model", "dim", None),
        ("rho", "model", "rho", None), ("theta", "model", "theta", None),
        ("beta", "model", "beta", None), ("spike", "model", "spike", None),
        ("spike_index", "model", "spike_index", None),
        ("matrix_csv", "model", "matrix_csv", None),
        ("alphas", "grid", "alphas", float), ("ns", "grid", "ns", int),
        ("lambdas", "grid", "lambdas", float),
        ("thetas", "grid", "thetas", float), ("p_list", "grid", "p_list", int),
        ("rhos", "grid", "rhos", float),
        ("lam", "experiment", "lam", None), ("trials", "experiment", "trials", None),
        ("entry_dist", "experiment", "entry_dist", None),
        ("bins", "experiment", "bins", None),
        ("tolerance", "experiment", "tolerance", None),
        ("comparison", "experiment", "comparison", None),
        ("seed", "experiment", "master_seed", None),
        ("eta", "solver", "eta", None),
        ("grid_points", "solver", "grid_points", None),
        ("outlier_margin", "solver", "outlier_margin", None),
        ("format", "output", "format", None),
    ]
    for attr, section, key, cast in overrides:
        value = getattr(args, attr, None)
        if value is not None:
            config[section][key] = _parse_list(value, cast) if cast else value
    if args.no_figures:
        config["output"]["figures"] = False
    return config


def validate_config(config: dict, subcommand: str) -> list[str]:
    validator = Draft202012Validator(CONFIG_SCHEMA)
    msgs = []
    for err in sorted(validator.iter_errors(config), key=lambda e: list(e.path)):
        where = ".".join(str(p) for p in err.path) or "(root)"
        msgs.append(f"{where}: {err.message}")
    if msgs:
        return msgs
    grid = config["grid"]
    if subcommand in ("predict", "simulate", "spectrum", "compare-pca"):
        if not grid.get("alphas") and not grid.get("ns"):
            msgs.append("grid.alphas: an alpha (or n) grid is required")
    if subcommand == "bbp":
        if not grid.get("thetas"):
            msgs.append("grid.thetas: a theta grid is required for bbp")
        if not grid.get("alphas") and not grid.get("ns"):
            msgs.append("grid.alphas: one alpha (or n) is required for bbp")
        elif grid.get("alphas") and len(grid["alphas"]) != 1:
            msgs.append("grid.alphas: bbp uses exactly one alpha")
    if subcommand == "compare-pca" and not grid.get("p_list"):
        msgs.append("grid.p_list: required for compare-pca")
    if subcommand == "phase-curve" and not grid.get("rhos"):
        msgs.append("grid.rhos: a rho grid is required for phase-curve")
    if subcommand == "spectrum" and config["model"]["kind"] == "spiked" \
            and config["model"].get("theta") is None:
        msgs.append("model.theta: required for spiked models")
    dim = config["model"]["dim"]
    for p in grid.get("p_list", []):
        if p > dim:
            msgs.append(f"grid.p_list: p={p} exceeds dim={dim}")
    return msgs


def _experiment_config(config: dict, subcommand: str, threads: int,
                       ) -> ExperimentConfig:
    exp = config["experiment"]
    grid = config["grid"]
    comparison = {"simulate": exp.get("comparison", "risk"),
                  "spectrum": "spectrum", "bbp": "bbp",
                  "compare-pca": "pca_compare"}[subcommand]
    return ExperimentConfig(
        model={k: v for k, v in config["model"].items() if k != "dim"},
        dim=config["model"]["dim"], lam=exp["lam"], comparison=comparison,
        alphas=tuple(grid.get("alphas", ())), ns=tuple(grid.get("ns", ())),
        trials=exp["trials"], master_seed=exp["master_seed"],
        entry_dist=exp["entry_dist"], thetas=tuple(grid.get("thetas", ())),
        p_list=tuple(grid.get("p_list", ())), bins=exp["bins"],
        eta=config["solver"]["eta"], grid_points=config["solver"]["grid_points"],
        outlier_margin=config["solver"]["outlier_margin"],
        tolerance=exp["tolerance"], threads=threads)


def _write(path: Path, text: str, artifacts: list) -> None:
    path.write_text(text)
    artifacts.append(path.name)


def _write_report(report, out: Path, fmt: str, artifacts: list) -> None:
    if fmt in ("json", "both"):
        _write(out / "report.json", report.canonical_json() + "\n", artifacts)
    if fmt in ("csv", "both"):
        _write(out / "records.csv", "\n".join(report.csv_lines()) + "\n", artifacts)


def _run_predict(config: dict, out: Path, fmt: str, figures: bool,
                 artifacts: list) -> dict:
    model = from_spec(config["model"])
    lambdas = config["grid"].get("lambdas") or [config["experiment"]["lam"]]
    if config["grid"].get("ns"):
        pairs = [(n / model.dim, int(n)) for n in config["grid"]["ns"]]
    else:
        pairs = [(a, max(1, int(round(a * model.dim)))) for a in config["grid"]["alphas"]]
    rows = []
    for lam in lambdas:
        for alpha, n in pairs:
            pred = predict_gen_error(model, n, lam)
            rows.append({"alpha": alpha, "lambda": lam, "n": n,
                         "kappa": pred.kappa, "df1": pred.df1, "df2": pred.df2,
                         "L1": pred.L1, "gen_error": pred.gen_error,
                         "train_error": pred.train_error,
                         "divergent": pred.divergent})
    if fmt in ("csv", "both"):
        header = ("alpha,lambda,n,kappa,df1,df2,L1,gen_error,train_error,divergent")
        lines = [header] + [
            ",".join([repr(float(r["alpha"])), repr(float(r["lambda"])),
                      str(r["n"]), repr(r["kappa"]), repr(r["df1"]),
                      repr(r["df2"]), repr(r["L1"]), repr(r["gen_error"]),
                      repr(r["train_error"]), str(int(r["divergent"]))])
            for r in rows]
        _write(out / "predict.csv", "\n".join(lines) + "\n", artifacts)
    if fmt in ("json", "both"):
        _write(out / "predict.json",
               json.dumps({"config": config, "rows": rows, "version": __version__},
                          sort_keys=True, indent=2) + "\n", artifacts)
    if figures:
        from . import plots
        plots.predict_figure(rows, out / "predict.png")
        artifacts.append("predict.png")
    return {"rows": len(rows)}


def _run_phase_curve(config: dict, out: Path, fmt: str, figures: bool,
                     artifacts: list) -> dict:
    rhos = config["grid"]["rhos"]
    rows = [{"rho": float(r), "gamma_star": ar1_phase_boundary(float(r)),
             "ssr_loss_ridgeless": ar1_population_ssr_loss(float(r), 0.0)}
            for r in rhos]
    if fmt in ("csv", "both"):
        lines = ["rho,gamma_star,ssr_loss_ridgeless"] + [
            ",".join([repr(r["rho"]), repr(r["gamma_star"]),
                      repr(r["ssr_loss_ridgeless"])]) for r in rows]
        _write(out / "phase_curve.csv", "\n".join(lines) + "\n", artifacts)
    if fmt in ("json", "both"):
        _write(out / "phase_curve.json",
               json.dumps({"config": config, "rows": rows, "version": __version__},
                          sort_keys=True, indent=2) + "\n", artifacts)
    if figures:
        from . import plots
        plots.phase_curve_figure(rows, out / "phase_curve.png")
        artifacts.append("phase_curve.png")
    return {"rows": len(rows)}


def _run_spectrum_csv(report, out: Path, artifacts: list) -> None:
    for key, curve in sorted(report.curves.items()):
        lines = ["x,empirical_density,predicted_density"]
        grid = np.asarray(curve["grid"])
        edges = np.asarray(curve["bin_edges"])
        heights = np.asarray(curve["bin_density"])
        idx = np.clip(np.searchsorted(edges, grid, side="right") - 1, 0,
                      len(heights) - 1)
        emp = np.where((grid >= edges[0]) & (grid <= edges[-1]), heights[idx], 0.0)
        for x, e, p in zip(grid, emp, curve["predicted_density"]):
            lines.append(f"{x!r},{e!r},{p!r}")
        _write(out / f"spectrum_{key}.csv", "\n".join(lines) + "\n", artifacts)


def execute(args) -> int:
    out = Path(args.out)
    config = assemble_config(args)
    msgs = validate_config(config, args.subcommand)
    if msgs:
        for m in msgs:
            print(f"config error: {m}", file=sys.stderr)
        return 2

    out.mkdir(parents=True, exist_ok=True)
    fmt = config["output"]["format"]
    figures = config["output"]["figures"]
    artifacts: list = []
    started = time.perf_counter()
    status = 0
    summary: dict = {}
    try:
        if args.subcommand == "predict":
            summary = _run_predict(config, out, fmt, figures, artifacts)
        elif args.subcommand == "phase-curve":
            summary = _run_phase_curve(config, out, fmt, figures, artifacts)
        else:
            exp_config = _experiment_config(config, args.subcommand, args.threads)
            errors = exp_config.errors()
            if errors:
                for m in errors:
                    print(f"config error: {m}", file=sys.stderr)
                return 2
            runner = {"simulate": run_risk_experiment,
                      "spectrum": run_spectrum_experiment,
                      "bbp": run_bbp_sweep,
                      "compare-pca": run_pca_comparison}[args.subcommand]
            report = runner(exp_config)
            _write_report(report, out, fmt, artifacts)
            if args.subcommand == "spectrum" and fmt in ("csv", "both"):
                _run_spectrum_csv(report, out, artifacts)
            if figures:
                from . import plots
                fig_path = out / f"{args.subcommand.replace('-', '_')}.png"
                {"simulate": plots.risk_figure,
                 "spectrum": plots.spectrum_figure,
                 "bbp": plots.bbp_figure,
                 "compare-pca": plots.pca_figure}[args.subcommand](report, fig_path)
                artifacts.append(fig_path.name)
            summary = report.summary
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        status = 3

    config_blob = json.dumps(config, sort_keys=True)
    manifest = {
        "subcommand": args.subcommand,
        "config": config,
        "config_sha256": hashlib.sha256(config_blob.encode()).hexdigest(),
        "master_seed": config["experiment"]["master_seed"],
        "version": __version__,
        "wall_clock_seconds": time.perf_counter() - started,
        "exit_status": status,
        "artifacts": sorted(artifacts),
        "summary": summary,
    }
    (out / "manifest.json").write_text(
        json.dumps(manifest, sort_keys=True, indent=2, default=str) + "\n")
    return status


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return execute(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
