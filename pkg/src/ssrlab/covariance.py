"""Population covariance models and their spectral structure.

Supported families: identity, spiked (identity plus a rank-one bump
``theta * v v^T`` with unit-norm ``v``), AR(1)/Toeplitz with entries
``rho**|j-k|``, trace-normalized diagonal power law, and custom matrices
loaded from CSV.  Eigendecomposition of the dense matrix is the single
canonical path to eigenvalues and the matrix square root for every
family, so accuracy is uniform across kinds.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import rng
from .errors import DefinitenessError

KINDS = ("identity", "spiked", "toeplitz", "power_law", "custom")

# relative slack when accepting a numerically non-PSD custom matrix
_PSD_SLACK = 1e-10


@dataclass(frozen=True)
class SpikeSpec:
    """Unit-norm direction of the rank-one covariance bump."""

    mode: str  # "uniform_sphere" | "basis"
    vector: np.ndarray
    seed: int | None = None
    index: int | None = None

    def __post_init__(self):
        norm = float(np.linalg.norm(self.vector))
        if abs(norm - 1.0) > 1e-12:
            raise ValueError(f"spike vector must have unit norm, got {norm!r}")


class CovarianceModel:
    """A population covariance with materialized dense matrix and eigensystem.

    Immutable after construction; safe to share across worker threads.

    Attributes
    ----------
    kind : str
        One of ``KINDS``.
    dim : int
        Ambient dimension d.
    dense : (d, d) ndarray
        The symmetric PSD covariance matrix (read-only view).
    eigenvalues : (d,) ndarray
        Eigenvalues in nonincreasing order, clipped at zero.
    eigenvectors : (d, d) ndarray
        Columns are eigenvectors matching ``eigenvalues``.
    params : dict
        Family parameters (rho, theta, beta, ...).
    spike : SpikeSpec or None
        Present for the spiked family.
    """

    def __init__(self, kind: str, dense: np.ndarray, params: dict | None = None,
                 spike: SpikeSpec | None = None):
        if kind not in KINDS:
            raise ValueError(f"unknown covariance kind {kind!r}")
        dense = np.asarray(dense, dtype=float)
        d = dense.shape[0]
        if dense.shape != (d, d):
            raise ValueError(f"covariance must be square, got shape {dense.shape}")
        if d < 2:
            raise ValueError(f"dim must be >= 2, got {d}")
        scale = float(np.max(np.abs(dense))) or 1.0
        if np.max(np.abs(dense - dense.T)) > 1e-8 * scale:
            raise ValueError("covariance matrix is not symmetric")
        dense = 0.5 * (dense + dense.T)

        vals, vecs = np.linalg.eigh(dense)  # ascending
        norm = float(max(abs(vals[0]), abs(vals[-1]))) or 1.0
        if vals[0] < -_PSD_SLACK * norm:
            raise DefinitenessError(
                f"matrix is not PSD: min eigenvalue {vals[0]:.3e} "
                f"< -{_PSD_SLACK:.0e} * ||Sigma|| = {-_PSD_SLACK * norm:.3e}")
        vals = np.clip(vals, 0.0, None)

        self.kind = kind
        self.dim = d
        self.params = dict(params or {})
        self.spike = spike
        self.dense = dense
        self.eigenvalues = vals[::-1].copy()
        self.eigenvectors = vecs[:, ::-1].copy()
        self.is_diagonal = bool(
            np.max(np.abs(dense - np.diag(np.diag(dense)))) <= 1e-14 * scale)
        self._sqrt = None
        self._eigvec_sq = None
        for arr in (self.dense, self.eigenvalues, self.eigenvectors):
            arr.setflags(write=False)

    @property
    def trace(self) -> float:
        return float(np.trace(self.dense))

    @property
    def min_eigenvalue(self) -> float:
        return float(self.eigenvalues[-1])

    def eigvec_sq(self) -> np.ndarray:
        """Squared eigenvector components V**2, cached; rows index coordinates."""
        if self._eigvec_sq is None:
            sq = self.eigenvectors**2
            sq.setflags(write=False)
            self._eigvec_sq = sq
        return self._eigvec_sq

    def diag_of_function(self, values: np.ndarray) -> np.ndarray:
        """Diagonal of V diag(values) V^T, i.e. of a spectral function of Sigma."""
        return self.eigvec_sq() @ np.asarray(values, dtype=values.dtype)

    def label(self) -> str:
        """Stable identifier used to tie datasets back to their generator."""
        bits = [self.kind, f"d={self.dim}"]
        bits += [f"{k}={v}" for k, v in sorted(self.params.items())]
        if self.spike is not None:
            tag = self.spike.seed if self.spike.mode == "uniform_sphere" else self.spike.index
            bits.append(f"spike={self.spike.mode}:{tag}")
        return ",".join(bits)

    def __repr__(self) -> str:
        return f"CovarianceModel({self.label()})"


def _spike_vector(dim: int, mode: str, seed: int | None, index: int | None) -> SpikeSpec:
    if mode == "uniform_sphere":
        seed = 0 if seed is None else int(seed)
        v = rng.standard_gaussian(rng.derive_seed("spike", seed, dim), (dim,))
        v = v / np.linalg.norm(v)
        return SpikeSpec(mode="uniform_sphere", vector=v, seed=seed)
    if mode == "basis":
        k = 0 if index is None else int(index)
        if not 0 <= k < dim:
            raise ValueError(f"basis spike index {k} out of range for dim {dim}")
        v = np.zeros(dim)
        v[k] = 1.0
        return SpikeSpec(mode="basis", vector=v, index=k)
    raise ValueError(f"unknown spike mode {mode!r}")


def build_covariance(kind: str, dim: int, *, rho: float | None = None,
                     theta: float | None = None, beta: float | None = None,
                     matrix: np.ndarray | None = None, spike: str = "uniform_sphere",
                     spike_index: int | None = None, seed: int | None = None,
                     ) -> CovarianceModel:
    """Construct a covariance model of the given family.

    Parameters
    ----------
    kind : {"identity", "spiked", "toeplitz", "power_law", "custom"}
    dim : int
        Dimension d >= 2.
    rho : float
        Toeplitz correlation, strictly inside (0, 1).
    theta : float
        Spike strength >= 0.
    beta : float
        Power-law exponent > 0; diagonal entries C_beta * k**(-beta) with
        C_beta chosen so the trace equals 1.
    matrix : ndarray
        Custom symmetric PSD matrix (kind="custom").
    spike, spike_index, seed
        Spike direction: "uniform_sphere" (seeded) or "basis" (index).

    The construction is deterministic for a fixed seed.
    """
    if int(dim) != dim or dim < 2:
        raise ValueError(f"dim must be an integer >= 2, got {dim!r}")
    dim = int(dim)

    if kind == "identity":
        return CovarianceModel("identity", np.eye(dim))
    if kind == "toeplitz":
        if rho is None or not 0.0 < rho < 1.0:
            raise ValueError(f"toeplitz requires rho in (0, 1), got {rho!r}")
        dense = rho ** np.abs(np.subtract.outer(np.arange(dim), np.arange(dim)))
        return CovarianceModel("toeplitz", dense, {"rho": float(rho)})
    if kind == "spiked":
        if theta is None or theta < 0:
            raise ValueError(f"spiked requires theta >= 0, got {theta!r}")
        sp = _spike_vector(dim, spike, seed, spike_index)
        dense = np.eye(dim) + theta * np.outer(sp.vector, sp.vector)
        return CovarianceModel("spiked", dense, {"theta": float(theta)}, spike=sp)
    if kind == "power_law":
        if beta is None or beta <= 0:
            raise ValueError(f"power_law requires beta > 0, got {beta!r}")
        raw = np.arange(1, dim + 1, dtype=float) ** (-float(beta))
        return CovarianceModel("power_law", np.diag(raw / raw.sum()),
                               {"beta": float(beta)})
    if kind == "custom":
        if matrix is None:
            raise ValueError("custom requires a matrix")
        return CovarianceModel("custom", matrix)
    raise ValueError(f"unknown covariance kind {kind!r}")


def from_spec(spec: dict) -> CovarianceModel:
    """Build a model from a flat dict, e.g. {"kind": "toeplitz", "dim": 200, "rho": 0.5}."""
    spec = dict(spec)
    kind = spec.pop("kind", None)
    dim = spec.pop("dim", None)
    if kind is None or dim is None:
        raise ValueError("model spec needs at least 'kind' and 'dim'")
    path = spec.pop("matrix_csv", None)
    if path is not None:
        spec["matrix"] = _read_csv_matrix(path)
    allowed = {"rho", "theta", "beta", "matrix", "spike", "spike_index", "seed"}
    unknown = set(spec) - allowed
    if unknown:
        raise ValueError(f"unknown model spec fields: {sorted(unknown)}")
    return build_covariance(kind, dim, **spec)


def _read_csv_matrix(path) -> np.ndarray:
    mat = np.loadtxt(path, delimiter=",", ndmin=2)
    if mat.shape[0] != mat.shape[1]:
        raise ValueError(f"covariance CSV must be square, got shape {mat.shape}")
    return mat


def load_covariance_csv(path) -> CovarianceModel:
    """Load a custom covariance from a CSV file of d rows x d comma-separated columns."""
    return build_covariance("custom", _read_csv_matrix(path).shape[0],
                            matrix=_read_csv_matrix(path))


def covariance_sqrt(model: CovarianceModel) -> np.ndarray:
    """Symmetric PSD square root S with S @ S = Sigma (cached on the model)."""
    if model._sqrt is None:
        root = (model.eigenvectors * np.sqrt(model.eigenvalues)) @ model.eigenvectors.T
        root = 0.5 * (root + root.T)
        root.setflags(write=False)
        model._sqrt = root
    return model._sqrt


def diag_precision_inverse(model: CovarianceModel) -> np.ndarray:
    """Per-coordinate conditional variances 1 / (Sigma^{-1})_{kk}.

    Requires Sigma strictly positive definite.
    """
    lo = model.min_eigenvalue
    if lo <= 0 or not np.isfinite(lo):
        raise DefinitenessError(
            f"Sigma must be strictly positive definite; smallest eigenvalue is {lo:.3e}")
    prec_diag = model.diag_of_function(1.0 / model.eigenvalues)
    return 1.0 / prec_diag


def ar1_eigendensity(rho: float, x) -> np.ndarray | float:
    """Limiting eigenvalue profile of the AR(1) covariance.

    E(x) = (1 - rho^2) / (1 + rho^2 - 2 rho cos(pi x)) for x in [0, 1];
    E(0) = (1+rho)/(1-rho) and E(1) = (1-rho)/(1+rho), decreasing in x.
    """
    if not 0.0 < rho < 1.0:
        raise ValueError(f"rho must be in (0, 1), got {rho!r}")
    x_arr = np.asarray(x, dtype=float)
    if np.any(x_arr < 0.0) or np.any(x_arr > 1.0):
        raise ValueError("x must lie in [0, 1]")
    out = (1.0 - rho**2) / (1.0 + rho**2 - 2.0 * rho * np.cos(np.pi * x_arr))
    return float(out) if np.isscalar(x) else out
