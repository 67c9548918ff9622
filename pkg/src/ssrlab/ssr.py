"""Masked self-supervised ridge (SSR) estimators and exact finite-d formulas.

The estimator stacks d coordinate-wise ridge regressions, each predicting
one coordinate from all the others (the predicted coordinate is masked by
a zero-diagonal constraint).  The closed form is

    A_hat = I - Q(lam) * Lambda,   Q(lam) = (S_hat + lam I)^{-1},
    Lambda = [diag Q(lam)]^{-1},   S_hat = X^T X / n,

and `fit_ssr_coordinatewise` solves the d reduced ridge systems directly,
serving as the brute-force oracle for `fit_ssr`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .covariance import CovarianceModel
from .errors import DefinitenessError, NumericError


@dataclass(frozen=True)
class Dataset:
    """An n x d sample with enough metadata to regenerate it bit-identically."""

    X: np.ndarray
    n: int
    d: int
    seed: int
    entry_dist: str
    sigma_ref: str

    def __post_init__(self):
        if self.X.shape != (self.n, self.d):
            raise ValueError(f"X has shape {self.X.shape}, expected {(self.n, self.d)}")


@dataclass(frozen=True)
class SsrEstimate:
    """Fitted SSR matrix with the resolvent and diagonal rescaler it came from."""

    A_hat: np.ndarray
    lam: float
    Q: np.ndarray
    Lambda_diag: np.ndarray


@dataclass(frozen=True)
class ApproximationResult:
    """Best zero-diagonal linear reconstructor for a given population covariance."""

    A_app: np.ndarray
    L_app: float


@dataclass(frozen=True)
class PcaResult:
    p: int
    projector: np.ndarray
    population_risk: float
    gamma: float


def _as_matrix(data) -> np.ndarray:
    return data.X if isinstance(data, Dataset) else np.asarray(data, dtype=float)


def _as_sigma(model) -> np.ndarray:
    return model.dense if isinstance(model, CovarianceModel) else np.asarray(model, dtype=float)


def fit_ssr(data, lam: float, *, dual: bool | None = None) -> SsrEstimate:
    """Closed-form SSR fit A_hat = I - Q(lam) [diag Q(lam)]^{-1}.

    Parameters
    ----------
    data : Dataset or (n, d) ndarray
    lam : float
        Ridge level, strictly positive (take ridgeless answers as small-lam
        limits; lam = 0 itself is rejected).
    dual : bool, optional
        Force (True) or forbid (False) the low-rank inversion path
        (1/lam)(I - X^T (n lam I + X X^T)^{-1} X).  Default: automatic,
        used when n < d/2.  Both paths produce the same Q to 1e-10.
    """
    X = _as_matrix(data)
    if lam <= 0:
        raise ValueError(f"lam must be > 0, got {lam!r}")
    n, d = X.shape
    if n < 1:
        raise ValueError("need at least one sample")
    if dual is None:
        dual = n < d // 2

    if dual:
        gram = X @ X.T
        gram[np.diag_indices_from(gram)] += n * lam
        try:
            w = cho_solve(cho_factor(gram, lower=True), X)
        except np.linalg.LinAlgError as exc:  # pragma: no cover - lam>0 keeps this PD
            raise NumericError(f"dual Gram factorization failed: {exc}") from exc
        Q = (np.eye(d) - X.T @ w) / lam
    else:
        reg = X.T @ X / n
        reg[np.diag_indices_from(reg)] += lam
        try:
            Q = cho_solve(cho_factor(reg, lower=True), np.eye(d))
        except np.linalg.LinAlgError as exc:  # pragma: no cover
            raise NumericError(f"resolvent factorization failed: {exc}") from exc
    Q = 0.5 * (Q + Q.T)

    q_diag = np.diag(Q).copy()
    if np.any(q_diag <= 0):
        raise NumericError(
            f"diag Q must be positive for lam > 0; min entry {q_diag.min():.3e}")
    lam_diag = 1.0 / q_diag
    A = np.eye(d) - Q * lam_diag[None, :]
    np.fill_diagonal(A, 0.0)
    return SsrEstimate(A_hat=A, lam=float(lam), Q=Q, Lambda_diag=lam_diag)


def fit_ssr_coordinatewise(data, lam: float) -> SsrEstimate:
    """Brute-force oracle: solve the d masked ridge problems one column at a time.

    Column k of the returned matrix is the ridge solution of predicting
    X[:, k] from the remaining columns, re-embedded with a zero at index k.
    Quadratic-cost reference implementation; use `fit_ssr` in production.
    """
    X = _as_matrix(data)
    if lam <= 0:
        raise ValueError(f"lam must be > 0, got {lam!r}")
    n, d = X.shape
    gram = X.T @ X / n
    A = np.zeros((d, d))
    idx = np.arange(d)
    for k in range(d):
        keep = idx != k
        sys = gram[np.ix_(keep, keep)].copy()
        sys[np.diag_indices_from(sys)] += lam
        A[keep, k] = np.linalg.solve(sys, gram[keep, k])
    full = fit_ssr(data, lam)
    return SsrEstimate(A_hat=A, lam=float(lam), Q=full.Q, Lambda_diag=full.Lambda_diag)


def population_risk(A: np.ndarray, model) -> float:
    """Exact reconstruction risk (1/d) Tr((I - A^T) Sigma (I - A)).

    Equals the expected squared error (1/d) E||x - A^T x||^2 for x with
    covariance Sigma.
    """
    sigma = _as_sigma(model)
    A = np.asarray(A, dtype=float)
    d = sigma.shape[0]
    if A.shape != (d, d):
        raise ValueError(f"A has shape {A.shape}, Sigma has shape {sigma.shape}")
    U = np.eye(d) - A
    return float(np.sum(U * (sigma @ U)) / d)


def empirical_risk(A: np.ndarray, data) -> float:
    """Training reconstruction error ||X - X A||_F^2 / (n d)."""
    X = _as_matrix(data)
    n, d = X.shape
    A = np.asarray(A, dtype=float)
    if A.shape != (d, d):
        raise ValueError(f"A has shape {A.shape}, X has {d} columns")
    R = X - X @ A
    return float(np.sum(R * R) / (n * d))


def approximation_optimum(model: CovarianceModel) -> ApproximationResult:
    """Best zero-diagonal linear predictor and its risk.

    A_app = I - Sigma^{-1} [diag Sigma^{-1}]^{-1} and
    L_app = (1/d) sum_k 1 / (Sigma^{-1})_{kk}; requires Sigma > 0.
    """
    if model.min_eigenvalue <= 0:
        raise DefinitenessError(
            f"Sigma must be strictly positive definite; smallest eigenvalue is "
            f"{model.min_eigenvalue:.3e}")
    prec = (model.eigenvectors / model.eigenvalues) @ model.eigenvectors.T
    prec = 0.5 * (prec + prec.T)
    prec_diag = np.diag(prec).copy()
    A_app = np.eye(model.dim) - prec / prec_diag[None, :]
    np.fill_diagonal(A_app, 0.0)
    return ApproximationResult(A_app=A_app, L_app=float(np.mean(1.0 / prec_diag)))


def pca_fit(reference, p: int) -> PcaResult:
    """Rank-p PCA reconstructor from a covariance model, dataset, or matrix.

    The projector keeps the top-p eigenvectors of the reference matrix
    (sample covariance when a Dataset is given); its risk against the
    reference is the mean of the d - p smallest eigenvalues.
    """
    if isinstance(reference, Dataset):
        ref = reference.X.T @ reference.X / reference.n
    else:
        ref = _as_sigma(reference)
    d = ref.shape[0]
    if not 0 <= p <= d:
        raise ValueError(f"p must be in [0, {d}], got {p}")
    vals, vecs = np.linalg.eigh(ref)  # ascending
    top = vecs[:, d - p:]
    projector = top @ top.T
    projector = 0.5 * (projector + projector.T)
    return PcaResult(p=int(p), projector=projector,
                     population_risk=float(np.sum(vals[: d - p]) / d),
                     gamma=p / d)


def ssr_spectrum_empirical(estimate: SsrEstimate) -> np.ndarray:
    """Eigenvalues of A_hat (nondecreasing), via the symmetrized resolvent.

    A_hat is similar to I - Lambda^{1/2} Q Lambda^{1/2}, so its spectrum is
    real; the symmetric eigensolve is the canonical path.
    """
    lam_diag = estimate.Lambda_diag
    if np.any(lam_diag <= 0) or not np.all(np.isfinite(lam_diag)):
        raise NumericError("Lambda must be positive and finite")
    root = np.sqrt(lam_diag)
    sym = root[:, None] * estimate.Q * root[None, :]
    s = np.linalg.eigvalsh(0.5 * (sym + sym.T))
    return np.sort(1.0 - s)


def export_estimate_csv(estimate: SsrEstimate, path) -> None:
    """Write A_hat as a d x d comma-separated file (row-major)."""
    np.savetxt(path, estimate.A_hat, delimiter=",")


def load_estimate_csv(path) -> np.ndarray:
    return np.loadtxt(path, delimiter=",", ndmin=2)
