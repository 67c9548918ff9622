"""Figure rendering for CLI reports (PNG files next to the CSV/JSON output)."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def _finite(xs, ys):
    xs = np.asarray(xs, float)
    ys = np.asarray(ys, float)
    keep = np.isfinite(xs) & np.isfinite(ys)
    return xs[keep], ys[keep]


def risk_figure(report, path) -> None:
    records = report.records
    label = "training error" if report.comparison == "train_risk" else \
        "generalization error"
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    xs = [r.grid_value for r in records]
    ax.errorbar(xs, [r.empirical_mean for r in records],
                yerr=[r.empirical_std for r in records], fmt="o", ms=4,
                capsize=2, label="simulation")
    px, py = _finite(xs, [r.predicted for r in records])
    ax.plot(px, py, "-", label="prediction")
    ax.set_xlabel(r"$\alpha = n/d$")
    ax.set_ylabel(label)
    vals = [r.empirical_mean for r in records if np.isfinite(r.empirical_mean)]
    if vals and min(vals) > 0 and max(vals) / max(min(vals), 1e-300) > 50:
        ax.set_yscale("log")
    ax.legend(frameon=False)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def spectrum_figure(report, path) -> None:
    n_curves = max(len(report.curves), 1)
    fig, axes = plt.subplots(1, n_curves, figsize=(5.5 * n_curves, 4.0),
                             squeeze=False)
    for ax, (key, curve) in zip(axes[0], sorted(report.curves.items())):
        edges = np.asarray(curve["bin_edges"])
        ax.stairs(curve["bin_density"], edges, fill=True, alpha=0.45,
                  label="empirical")
        ax.plot(curve["grid"], curve["predicted_density"], "r-", lw=1.5,
                label="prediction")
        ax.set_title(rf"$\alpha = {curve['alpha']:g}$")
        ax.set_xlabel("eigenvalue")
        ax.set_ylabel("density")
        ax.legend(frameon=False)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def bbp_figure(report, path) -> None:
    records = report.records
    thetas = [r.grid_value for r in records]
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    ax.errorbar(thetas, [r.empirical_mean for r in records],
                yerr=[r.empirical_std for r in records], fmt="o", ms=4,
                label="top eigenvalue")
    ax.errorbar(thetas, [r.extra["top2_mean"] for r in records],
                yerr=[r.extra["top2_std"] for r in records], fmt="s", ms=4,
                label="second eigenvalue")
    ax.plot(thetas, [r.predicted for r in records], "r-", label="predicted top")
    ax.plot(thetas, [r.extra["predicted_s2"] for r in records], "k--",
            label="predicted bulk edge")
    theta_c = report.summary.get("theta_c")
    if theta_c is not None:
        ax.axvline(theta_c, color="gray", ls=":", label=r"$\theta_c$")
    ax.set_xlabel(r"spike strength $\theta$")
    ax.set_ylabel("eigenvalue")
    ax.legend(frameon=False, fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def phase_curve_figure(rows, path) -> None:
    fig, ax = plt.subplots(figsize=(5.0, 4.0))
    ax.plot([r["rho"] for r in rows], [r["gamma_star"] for r in rows], "o-")
    ax.set_xlabel(r"$\rho$")
    ax.set_ylabel(r"$\gamma^*(\rho)$")
    ax.set_title("PCA beats SSR above the curve")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def pca_figure(report, path) -> None:
    series = {}
    for r in report.records:
        series.setdefault(r.series, []).append(r)
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    for name, recs in sorted(series.items()):
        xs = [r.grid_value for r in recs]
        ax.errorbar(xs, [r.empirical_mean for r in recs],
                    yerr=[r.empirical_std for r in recs], fmt="o-", ms=4,
                    label=name)
    ax.set_xlabel(r"$\alpha = n/d$")
    ax.set_ylabel("population risk")
    ax.legend(frameon=False, fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def predict_figure(rows, path) -> None:
    lams = sorted({r["lambda"] for r in rows})
    fig, axes = plt.subplots(1, 2, figsize=(10.0, 4.0))
    for lam in lams:
        sub = [r for r in rows if r["lambda"] == lam]
        xs = [r["alpha"] for r in sub]
        for ax, key in zip(axes, ("gen_error", "train_error")):
            px, py = _finite(xs, [r[key] for r in sub])
            ax.plot(px, py, "o-", ms=3, label=rf"$\lambda={lam:g}$")
    for ax, title in zip(axes, ("generalization error", "training error")):
        ax.set_xlabel(r"$\alpha = n/d$")
        ax.set_title(title)
        ax.legend(frameon=False, fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
