"""Deterministic-equivalent predictions for the SSR estimator.

Everything here is a nonrandom function of the population covariance, the
sample ratio alpha = n/d, and the ridge level: generalization/training
error limits, quadratic trace equivalents, the predicted spectral density
of the SSR matrix, the universal ridgeless density for diagonal
covariances, spiked-model outlier (BBP) locations, and the AR(1)
SSR-vs-PCA phase boundary.

Axis convention: the spectral fixed point lives on the axis of the
symmetrized resolvent matrix; public spectral outputs use the SSR-matrix
axis via the similarity map s -> 1 - s.  The two never mix internally.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .covariance import CovarianceModel, SpikeSpec
from .errors import ConvergenceError, NumericError, PoleError
from .fixed_point import SpectralWorkspace, dbar_vectors, degrees_of_freedom, solve_kappa

# df2 within this fraction of n is reported as a divergent prediction
# rather than a huge float (the formula has a genuine pole at df2 = n).
POLE_PROXIMITY = 0.99


@dataclass(frozen=True)
class RiskPrediction:
    """Predicted limits of the normalized generalization and training errors."""

    n: int
    lam: float
    kappa: float
    df1: float
    df2: float
    L1: float
    gen_error: float
    train_error: float
    Lbar1: float
    Lbar2: float
    Lbar3: float
    divergent: bool = False


@dataclass(frozen=True)
class SpectralModel:
    """A sampled spectral-density curve on the SSR-matrix eigenvalue axis."""

    grid: np.ndarray
    density: np.ndarray
    eta: float
    support_estimate: tuple[float, float]
    chi_trace: np.ndarray
    mass: float
    failed_points: tuple[int, ...] = ()


@dataclass(frozen=True)
class SpikedAnalysis:
    """Spiked-covariance predictions; fields unused by an operation are None."""

    theta: float
    alpha: float | None = None
    theta_c: float | None = None
    s1: float | None = None
    s2: float | None = None
    z_star: float | None = None
    tau: float | None = None
    a: float | None = None
    b: float | None = None
    L_ssr_pop: float | None = None
    L_pca_pop: float | None = None


@dataclass(frozen=True)
class Ar1Analysis:
    rho: float
    E_plus: float
    E_minus: float
    f_pop: float
    gamma_star: float


def _predict(model: CovarianceModel, n: int, lam: float) -> RiskPrediction:
    if lam <= 0:
        raise ValueError(f"lam must be > 0, got {lam!r}")
    vecs = dbar_vectors(model, n, lam)
    kappa = vecs.kappa
    eigs = model.eigenvalues
    d = model.dim
    df1, df2 = degrees_of_freedom(model, kappa)

    q_sigma_q = model.diag_of_function(eigs / (eigs + kappa) ** 2)
    L1 = float(np.sum(vecs.d_risk**2 * q_sigma_q) / d)

    spec_sq = vecs.d_spec**2
    lbar1 = float(np.sum(spec_sq * model.diag_of_function(1.0 / (eigs + kappa))))
    lbar2 = float(np.sum(spec_sq * model.diag_of_function(1.0 / (eigs + kappa) ** 2)))
    lbar3 = float(np.sum(spec_sq * q_sigma_q) * np.sum(eigs / (eigs + kappa) ** 2))

    if df2 >= POLE_PROXIMITY * n:
        return RiskPrediction(n=n, lam=lam, kappa=kappa, df1=df1, df2=df2, L1=L1,
                              gen_error=float("inf"), train_error=float("inf"),
                              Lbar1=lbar1, Lbar2=lbar2, Lbar3=lbar3, divergent=True)
    gen = L1 * (1.0 + df2 / (n - df2))
    train = (kappa / (lam * d)) * lbar1 - (kappa**2 / (lam * d)) * lbar2 \
        - (kappa**2 / (lam * d * (n - df2))) * lbar3
    return RiskPrediction(n=n, lam=lam, kappa=kappa, df1=df1, df2=df2, L1=L1,
                          gen_error=float(gen), train_error=float(train),
                          Lbar1=lbar1, Lbar2=lbar2, Lbar3=lbar3)


def predict_gen_error(model: CovarianceModel, n: int, lam: float) -> RiskPrediction:
    """Limit of the normalized generalization error at sample size n.

    gen = L1 (1 + df2/(n - df2)) with L1 the rescaled resolvent trace at
    the effective regularization kappa*(lam).  Near the interpolation
    threshold (df2 within 1% of n) the prediction is flagged divergent and
    gen_error is +inf.
    """
    return _predict(model, n, lam)


def predict_train_error(model: CovarianceModel, n: int, lam: float) -> RiskPrediction:
    """Limit of the normalized training error at sample size n.

    train = (kappa/(lam d)) Lbar1 - (kappa^2/(lam d)) Lbar2
            - (kappa^2/(lam d (n - df2))) Lbar3,
    the Lbar traces weighted by the spectral-side rescaler (d_spec); in the
    interpolation regime the three terms cancel to O(lam^2).
    """
    return _predict(model, n, lam)


def resolvent_trace_equivalents(A: np.ndarray, B: np.ndarray | None, *,
                                model: CovarianceModel, n: int, lam: float) -> float:
    """Deterministic values of sample-resolvent traces.

    Mode 1 (B is None):  Tr(A (S_hat + lam)^{-1})
        ~ (kappa/lam) Tr(A (Sigma + kappa)^{-1}).
    Mode 2 (B given):    Tr(A (S_hat + lam)^{-1} B (S_hat + lam)^{-1})
        ~ (kappa/lam)^2 [ Tr(A Qk B Qk)
            + Tr(A Qk^2 Sigma) Tr(B Qk^2 Sigma) / (n - df2) ],
    with Qk = (Sigma + kappa)^{-1}.
    """
    if lam <= 0:
        raise ValueError(f"lam must be > 0, got {lam!r}")
    kappa = solve_kappa(model, n, lam).kappa
    eigs = model.eigenvalues
    V = model.eigenvectors
    qk = (V / (eigs + kappa)) @ V.T
    A = np.asarray(A, dtype=float)
    if B is None:
        return float(kappa / lam * np.sum(A * qk))
    B = np.asarray(B, dtype=float)
    _, df2 = degrees_of_freedom(model, kappa)
    if df2 >= n:
        raise PoleError(f"df2 = {df2:.3f} >= n = {n}: prediction undefined "
                        "at the interpolation threshold")
    qk2_sigma = (V * (eigs / (eigs + kappa) ** 2)) @ V.T
    main = np.sum((A @ qk) * (qk @ B).T)
    cross = np.sum(A * qk2_sigma) * np.sum(B * qk2_sigma) / (n - df2)
    return float((kappa / lam) ** 2 * (main + cross))


def predicted_spectral_density(model: CovarianceModel, n: int, lam: float,
                               grid, eta: float | None = None, *,
                               workspace: SpectralWorkspace | None = None,
                               ) -> SpectralModel:
    """Spectral density of the SSR matrix predicted by its deterministic resolvent.

    density(x) = (1/pi) Im (1/d) Tr G(s + i eta) with s = 1 - x; the grid is
    on the SSR-matrix axis and should cover the expected support with
    padding.  eta defaults to 1e-3 times the grid span.  Points where the
    chi solver fails are interpolated and reported in ``failed_points``.
    """
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or len(grid) < 2 or np.any(np.diff(grid) <= 0):
        raise ValueError("grid must be a strictly increasing 1-d array")
    if eta is None:
        eta = 1e-3 * (grid[-1] - grid[0])
    if eta <= 0:
        raise ValueError(f"eta must be > 0, got {eta!r}")
    ws = workspace if workspace is not None else SpectralWorkspace(model, n, lam)

    m = len(grid)
    chis = np.full(m, np.nan + 0j, dtype=complex)
    traces = np.full(m, np.nan + 0j, dtype=complex)
    chi_prev = 0.0 + 0.0j
    # sweep in increasing s = 1 - x, i.e. from the right end of the x grid
    for j in range(m - 1, -1, -1):
        z = (1.0 - grid[j]) + 1j * eta
        try:
            sol = ws.solve(z, chi0=chi_prev)
        except ConvergenceError:
            continue
        chis[j] = sol.chi
        traces[j] = sol.gcal_trace
        chi_prev = sol.chi

    ok = np.isfinite(traces.real)
    failed = tuple(int(i) for i in np.flatnonzero(~ok))
    if not ok.any():
        raise NumericError("chi solver failed on the entire grid")
    if failed:
        warnings.warn(f"chi solver failed at {len(failed)} of {m} grid points; "
                      "density interpolated there", stacklevel=2)
        traces = traces.copy()
        traces[~ok] = np.interp(grid[~ok], grid[ok], traces[ok].imag) * 1j \
            + np.interp(grid[~ok], grid[ok], traces[ok].real)

    density = np.clip(traces.imag / np.pi, 0.0, None)
    mass = float(np.trapezoid(density, grid))
    support = _support_from_density(grid, density)
    return SpectralModel(grid=grid, density=density, eta=float(eta),
                         support_estimate=support, chi_trace=chis, mass=mass,
                         failed_points=failed)


def _support_from_density(grid: np.ndarray, density: np.ndarray,
                          rel_threshold: float = 1e-3) -> tuple[float, float]:
    peak = float(density.max())
    if peak <= 0:
        return (float("nan"), float("nan"))
    above = np.flatnonzero(density > rel_threshold * peak)
    return (float(grid[above[0]]), float(grid[above[-1]]))


def universal_support(alpha: float) -> tuple[float, float]:
    """Ridgeless support of the SSR spectrum for diagonal covariances, alpha > 1."""
    if alpha <= 1:
        raise ValueError(f"alpha must be > 1, got {alpha!r}")
    r = np.sqrt(alpha)
    return (-2.0 / (r - 1.0), 2.0 / (r + 1.0))


def universal_density(alpha: float, grid) -> SpectralModel:
    """Closed-form ridgeless SSR density, independent of the diagonal covariance.

    On the resolvent axis chi solves chi^2 + (z-1) chi + z/(alpha-1) = 0 and
    the trace is [(1-1/alpha)(1-chi) - z]^{-1}; the density is its imaginary
    part at real z inside the bulk (exact eta -> 0+ inversion), mapped to the
    SSR axis.  Supported on [-2/(sqrt(alpha)-1), 2/(sqrt(alpha)+1)].
    """
    if alpha <= 1:
        raise ValueError(f"alpha must be > 1, got {alpha!r}")
    grid = np.asarray(grid, dtype=float)
    s = 1.0 - grid
    disc = (s - 1.0) ** 2 - 4.0 * s / (alpha - 1.0)
    inside = disc < 0
    chi = np.full(len(grid), np.nan + 0j, dtype=complex)
    density = np.zeros(len(grid))
    chi[inside] = 0.5 * ((1.0 - s[inside]) + 1j * np.sqrt(-disc[inside]))
    trace = 1.0 / ((1.0 - 1.0 / alpha) * (1.0 - chi[inside]) - s[inside])
    density[inside] = trace.imag / np.pi
    density = np.clip(density, 0.0, None)
    return SpectralModel(grid=grid, density=density, eta=0.0,
                         support_estimate=universal_support(alpha),
                         chi_trace=chi, mass=float(np.trapezoid(density, grid)))


def _chi_minus(alpha: float, z: float) -> float:
    """Real branch of the ridgeless diagonal chi below the bulk, chi(0) = 0."""
    disc = (z - 1.0) ** 2 - 4.0 * z / (alpha - 1.0)
    if disc < 0:
        # the discriminant vanishes exactly at the bulk edge; absorb rounding
        if disc > -64.0 * np.finfo(float).eps * max(1.0, (z - 1.0) ** 2):
            disc = 0.0
        else:
            raise ValueError(f"z = {z!r} lies inside the bulk")
    return 0.5 * ((1.0 - z) - np.sqrt(disc))


def bbp_prediction(alpha: float, theta: float) -> SpikedAnalysis:
    """Predicted top-two SSR eigenvalues for the spiked model, ridgeless limit.

    Below theta_c = 1/sqrt(alpha) both stick to the bulk edge
    2/(sqrt(alpha)+1); above it the top eigenvalue detaches as 1 - z* with
    z* the root of z alpha / ((alpha-1)(1-chi(z))) = 1/(1+theta) below the
    bulk edge on the resolvent axis.  Continuous at theta_c.
    """
    if alpha <= 1:
        raise ValueError(f"alpha must be > 1, got {alpha!r} "
                         "(the spiked analysis is stated for alpha > 1)")
    if theta < 0:
        raise ValueError(f"theta must be >= 0, got {theta!r}")
    root = np.sqrt(alpha)
    theta_c = 1.0 / root
    s2 = 2.0 / (root + 1.0)
    z_edge = (root - 1.0) / (root + 1.0)
    tau = 1.0
    a = theta * (tau**2 - 2.0 * tau - theta) / (tau + theta) ** 2
    b = theta / (tau + theta)

    if theta <= theta_c:
        return SpikedAnalysis(theta=theta, alpha=alpha, theta_c=theta_c,
                              s1=s2, s2=s2, z_star=None, tau=tau, a=a, b=b)

    target = 1.0 / (1.0 + theta)

    def gap(z: float) -> float:
        return z * alpha / ((alpha - 1.0) * (1.0 - _chi_minus(alpha, z))) - target

    lo, hi = 0.0, z_edge
    if gap(hi) <= 0:
        raise NumericError(
            f"no admissible outlier root below the bulk edge at alpha={alpha}, "
            f"theta={theta}; this contradicts theta > theta_c")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid == lo or mid == hi:
            break
        if gap(mid) < 0:
            lo = mid
        else:
            hi = mid
    z_star = 0.5 * (lo + hi)
    return SpikedAnalysis(theta=theta, alpha=alpha, theta_c=theta_c,
                          s1=1.0 - z_star, s2=s2, z_star=float(z_star),
                          tau=tau, a=a, b=b)


def spiked_population_losses(theta: float, lam: float, spike, d: int,
                             p: int) -> SpikedAnalysis:
    """Population-limit losses of SSR and rank-p PCA for Sigma = I + theta v v^T.

    L(SSR) = (1/d) sum_l (1 + a v_l^2) / (1 - b v_l^2)^2 with
    a = theta (tau^2 - 2 tau - theta)/(tau+theta)^2, b = theta/(tau+theta),
    tau = 1 + lam;  L(PCA_p) = (d-p)/d.  PCA is strictly better for any
    p >= 1 (the gap is at least p/d), which is re-checked here.
    """
    if theta < 0:
        raise ValueError(f"theta must be >= 0, got {theta!r}")
    if lam < 0:
        raise ValueError(f"lam must be >= 0, got {lam!r}")
    if not 1 <= p <= d:
        raise ValueError(f"p must be in [1, {d}], got {p}")
    v = spike.vector if isinstance(spike, SpikeSpec) else np.asarray(spike, float)
    if v.shape != (d,):
        raise ValueError(f"spike vector has shape {v.shape}, expected ({d},)")
    tau = 1.0 + lam
    a = theta * (tau**2 - 2.0 * tau - theta) / (tau + theta) ** 2
    b = theta / (tau + theta)
    v2 = v**2
    l_ssr = float(np.mean((1.0 + a * v2) / (1.0 - b * v2) ** 2))
    l_pca = (d - p) / d
    if not l_pca < l_ssr:
        raise NumericError(
            f"PCA dominance violated: L_pca={l_pca!r} >= L_ssr={l_ssr!r}")
    return SpikedAnalysis(theta=theta, theta_c=None, tau=tau, a=a, b=b,
                          L_ssr_pop=l_ssr, L_pca_pop=l_pca)


def _ar1_edges(rho: float) -> tuple[float, float]:
    if not 0.0 < rho < 1.0:
        raise ValueError(f"rho must be in (0, 1), got {rho!r}")
    return (1.0 + rho) / (1.0 - rho), (1.0 - rho) / (1.0 + rho)


def ar1_population_ssr_loss(rho: float, lam: float) -> float:
    """Population SSR loss for the AR(1) covariance in the large-d limit.

    Evaluated in the algebraically equivalent form
        (2 lam + E+ + E-) (F+1)^2 / (2 F (lam + E+ + E-)^2),
    F = sqrt((lam+E-)(lam+E+)), which is stable down to lam = 0 where it
    equals 2/(E+ + E-) = (1-rho^2)/(1+rho^2).
    """
    if lam < 0:
        raise ValueError(f"lam must be >= 0, got {lam!r}")
    e_plus, e_minus = _ar1_edges(rho)
    s = e_plus + e_minus
    f_val = np.sqrt((lam + e_minus) * (lam + e_plus))
    return float((2.0 * lam + s) * (f_val + 1.0) ** 2 / (2.0 * f_val * (lam + s) ** 2))


def ar1_pca_population_loss(rho: float, gamma: float) -> float:
    """Population loss of PCA keeping a fraction gamma of directions, AR(1) model.

    1 - (2/pi) arctan(E+ tan(pi gamma / 2)); decreasing from 1 at gamma=0
    to 0 at gamma=1.
    """
    if not 0.0 <= gamma <= 1.0:
        raise ValueError(f"gamma must be in [0, 1], got {gamma!r}")
    e_plus, _ = _ar1_edges(rho)
    if gamma == 1.0:
        return 0.0
    return float(1.0 - (2.0 / np.pi) * np.arctan(e_plus * np.tan(np.pi * gamma / 2.0)))


def ar1_phase_boundary(rho: float) -> float:
    """Minimal PCA direction fraction at which PCA matches ridgeless SSR.

    gamma* = (2/pi) arctan( ((1-rho)/(1+rho))
                            tan( (pi/2) 4 rho^2 / ((1+rho)^2 + (1-rho)^2) ) );
    increasing in rho, and the sign of
    ar1_pca_population_loss(rho, gamma) - ar1_population_ssr_loss(rho, 0)
    flips exactly there.
    """
    _ar1_edges(rho)
    inner = (np.pi / 2.0) * (4.0 * rho**2) / ((1.0 + rho) ** 2 + (1.0 - rho) ** 2)
    return float((2.0 / np.pi) * np.arctan((1.0 - rho) / (1.0 + rho) * np.tan(inner)))


def ar1_analysis(rho: float, lam: float = 0.0) -> Ar1Analysis:
    """Bundle of the AR(1) closed forms at one (rho, lam)."""
    e_plus, e_minus = _ar1_edges(rho)
    return Ar1Analysis(rho=rho, E_plus=e_plus, E_minus=e_minus,
                       f_pop=ar1_population_ssr_loss(rho, lam),
                       gamma_star=ar1_phase_boundary(rho))


def toeplitz_df2_closed_form(rho: float, kappa: float, d: int) -> float:
    """Closed-form large-d df2 for the AR(1) covariance.

    d (1-rho^2)^2 (1-rho^2 + kappa(1+rho^2))
      / ((1-rho^2 + kappa(1+rho)^2)(1-rho^2 + kappa(1-rho)^2))^{3/2};
    for rho -> 1 this approaches d sqrt(1-rho^2) / (4 sqrt(kappa)).
    """
    _ar1_edges(rho)
    if kappa <= 0:
        raise ValueError(f"kappa must be > 0, got {kappa!r}")
    one = 1.0 - rho**2
    num = one**2 * (one + kappa * (1.0 + rho**2))
    den = ((one + kappa * (1.0 + rho) ** 2) * (one + kappa * (1.0 - rho) ** 2)) ** 1.5
    return float(d * num / den)
