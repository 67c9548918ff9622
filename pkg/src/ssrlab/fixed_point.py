"""Scalar self-consistent equations behind the deterministic equivalents.

Three solvers live here:

* ``solve_kappa`` -- the effective ridge level kappa*(lam) solving
  kappa = lam + (kappa/n) Tr(Sigma (Sigma + kappa I)^{-1});
* ``solve_mtilde`` -- the companion quantity with m_tilde * kappa = 1;
* ``solve_chi`` -- the complex fixed point
  chi = (1/n) Tr(Sigma (-lam I - Sigma/(1-chi) + Dbar/z)^{-1})
  driving the deterministic resolvent of the rescaled SSR matrix.

The kappa map is monotone with a guaranteed bisection bracket
[lam, lam + Tr(Sigma)/n], so a damped Picard pass with bisection fallback
is exact-by-construction.  The chi equation is solved by damped Picard
warmup plus safeguarded Newton (the map's chi-derivative is available in
closed form for every evaluation mode), with a Stieltjes sign check
selecting the physical branch and eta-continuation as a fallback.

Two diagonal rescalers appear in the theory and differ by a factor
lam/kappa; both are exposed on ``DbarVectors`` and are never mixed:
``d_risk[k] = 1/[(Sigma + kappa I)^{-1}]_{kk}`` enters the risk formulas,
``d_spec[k] = lam/[(m_tilde Sigma + I)^{-1}]_{kk}`` enters the spectral ones.
"""

from __future__ import annotations

import cmath
from dataclasses import dataclass

import numpy as np

from .covariance import CovarianceModel
from .errors import ConvergenceError, DefinitenessError

_KAPPA_MAX_PICARD = 10_000
_KAPPA_DAMPING = 0.5


@dataclass(frozen=True)
class FixedPointSolution:
    kappa: float
    m_tilde: float
    nu: float
    residual: float
    iterations: int
    method: str  # "picard" | "bisection" | "closed_form"


@dataclass(frozen=True)
class DbarVectors:
    """Both diagonal rescalers, derived from the same kappa and m_tilde."""

    d_risk: np.ndarray
    d_spec: np.ndarray
    kappa: float
    m_tilde: float


@dataclass(frozen=True)
class ChiSolution:
    z: complex
    chi: complex
    residual: float
    iterations: int
    gcal_trace: complex  # (1/d) Tr G(z) at the solution


def degrees_of_freedom(model: CovarianceModel, kappa: float) -> tuple[float, float]:
    """(df1, df2) = (Tr(Sigma(Sigma+kappa)^-1), Tr(Sigma^2(Sigma+kappa)^-2))."""
    if kappa < 0:
        raise ValueError(f"kappa must be >= 0, got {kappa!r}")
    eigs = model.eigenvalues
    if kappa == 0 and model.min_eigenvalue <= 0:
        raise DefinitenessError("kappa = 0 requires a nonsingular Sigma")
    ratio = eigs / (eigs + kappa)
    return float(ratio.sum()), float((ratio**2).sum())


def _kappa_residual(eigs: np.ndarray, n: int, lam: float, kappa: float) -> float:
    df1 = float((eigs / (eigs + kappa)).sum())
    return kappa - lam - kappa * df1 / n


def solve_kappa(model: CovarianceModel, n: int, lam: float) -> FixedPointSolution:
    """Effective regularization kappa*(lam) >= lam.

    For lam > 0: damped Picard from kappa0 = lam + Tr(Sigma)/n, falling
    back to bisection on the monotone residual over the guaranteed bracket
    [lam, lam + Tr(Sigma)/n].  For lam = 0: the explicit ridgeless limits
    (kappa = 0 when n >= d; otherwise the root of df1(kappa) = n).
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    eigs = model.eigenvalues
    tr = float(eigs.sum())
    d = model.dim

    if lam < 0:
        raise ValueError(f"lam must be >= 0, got {lam!r}")
    if lam == 0.0:
        return _solve_kappa_ridgeless(model, n)

    def gmap(k: float) -> float:
        return lam + k * float((eigs / (eigs + k)).sum()) / n

    kappa = lam + tr / n
    iterations = 0
    method = "picard"
    for iterations in range(1, _KAPPA_MAX_PICARD + 1):
        g = gmap(kappa)
        if abs(kappa - g) <= 1e-13 * kappa:
            break
        nxt = (1.0 - _KAPPA_DAMPING) * kappa + _KAPPA_DAMPING * g
        if nxt == kappa:
            break
        kappa = nxt
    else:
        kappa = _bisect_kappa(eigs, n, lam, tr)
        method = "bisection"
        iterations = _KAPPA_MAX_PICARD

    residual = _kappa_residual(eigs, n, lam, kappa)
    if abs(residual) > 1e-12 * max(1.0, kappa):
        kappa = _bisect_kappa(eigs, n, lam, tr)
        method = "bisection"
        residual = _kappa_residual(eigs, n, lam, kappa)
        if abs(residual) > 1e-12 * max(1.0, kappa):
            raise ConvergenceError(
                f"kappa solver stalled at residual {residual:.3e} (lam={lam}, n={n}, d={d})")
    return FixedPointSolution(kappa=float(kappa), m_tilde=1.0 / kappa,
                              nu=kappa / lam - 1.0, residual=abs(residual),
                              iterations=iterations, method=method)


def _bisect_kappa(eigs: np.ndarray, n: int, lam: float, tr: float) -> float:
    lo, hi = lam, lam + tr / n
    for _ in range(400):
        mid = 0.5 * (lo + hi)
        if mid == lo or mid == hi:
            break
        if _kappa_residual(eigs, n, lam, mid) < 0.0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-16 * mid:
            break
    mid = 0.5 * (lo + hi)
    # one guarded Newton polish: d(residual)/dkappa = 1 - df2/n
    ratio = eigs / (eigs + mid)
    slope = 1.0 - float((ratio**2).sum()) / n
    if slope > 1e-8:
        step = _kappa_residual(eigs, n, lam, mid) / slope
        cand = mid - step
        if lo <= cand <= hi and abs(_kappa_residual(eigs, n, lam, cand)) <= \
                abs(_kappa_residual(eigs, n, lam, mid)):
            mid = cand
    return mid


def _solve_kappa_ridgeless(model: CovarianceModel, n: int) -> FixedPointSolution:
    eigs = model.eigenvalues
    d = model.dim
    alpha = n / d
    if n >= d:
        nu = 1.0 / (alpha - 1.0) if alpha > 1.0 else float("inf")
        return FixedPointSolution(kappa=0.0, m_tilde=float("inf"), nu=nu,
                                  residual=0.0, iterations=0, method="closed_form")
    if model.min_eigenvalue <= 0 and int((eigs > 0).sum()) <= n:
        raise DefinitenessError(
            "ridgeless kappa with n < d needs rank(Sigma) > n")

    def df1(k: float) -> float:
        return float((eigs / (eigs + k)).sum())

    lo, hi = 0.0, 2.0 * eigs.sum() / n
    for _ in range(400):
        mid = 0.5 * (lo + hi)
        if mid == lo or mid == hi:
            break
        if df1(mid) > n:
            lo = mid
        else:
            hi = mid
    kappa = 0.5 * (lo + hi)
    residual = abs(_kappa_residual(eigs, n, 0.0, kappa))
    return FixedPointSolution(kappa=float(kappa), m_tilde=1.0 / kappa,
                              nu=float("inf"), residual=residual,
                              iterations=400, method="bisection")


def solve_mtilde(model: CovarianceModel, n: int, lam: float) -> float:
    """Unique solution of m = (lam + (1/n) Tr(Sigma (m Sigma + I)^{-1}))^{-1}.

    Computed as 1/kappa*(lam); the reciprocal identity is exact, and the
    m-equation residual is re-verified at the returned point.
    """
    if lam <= 0:
        raise ValueError(f"lam must be > 0, got {lam!r}")
    sol = solve_kappa(model, n, lam)
    m = sol.m_tilde
    eigs = model.eigenvalues
    rhs = 1.0 / (lam + float((eigs / (m * eigs + 1.0)).sum()) / n)
    if abs(m - rhs) > 1e-12 * max(1.0, m):
        raise ConvergenceError(
            f"m_tilde residual {abs(m - rhs):.3e} exceeds tolerance")
    return m


def dbar_vectors(model: CovarianceModel, n: int, lam: float) -> DbarVectors:
    """Both diagonal rescalers at the solved fixed point (see module docstring)."""
    if lam <= 0:
        raise ValueError(f"lam must be > 0, got {lam!r}")
    sol = solve_kappa(model, n, lam)
    eigs = model.eigenvalues
    diag_risk = model.diag_of_function(1.0 / (eigs + sol.kappa))
    diag_spec = model.diag_of_function(1.0 / (sol.m_tilde * eigs + 1.0))
    return DbarVectors(d_risk=1.0 / diag_risk, d_spec=lam / diag_spec,
                       kappa=sol.kappa, m_tilde=sol.m_tilde)


class SpectralWorkspace:
    """Evaluator for the chi fixed point and the deterministic resolvent trace.

    Exploits structure instead of inverting d x d matrices per iteration:

    * diagonal Sigma: everything reduces to scalar sums, O(d) per step;
    * general Sigma: Dbar is written as (constant + sparse deviation); the
      deviation support (boundary effects, a handful of coordinates for
      Toeplitz models) enters through an r x r Woodbury block, O(d r^2);
    * ``dense=True`` forces literal d x d solves (test oracle / fallback
      when the deviation support is not small).

    Deviations below ``deviation_rtol`` (relative, default 1e-15) are
    flattened onto the constant; the workspace then solves its equation
    exactly for that flattened Dbar.

    Known limit: for n < d the kernel directions form an isolated cluster
    in the spectrum.  At lam around 1e-2 (the regime the figures use) it is
    part of the continuous curve and tracked correctly; for lam below about
    1e-3 it separates into a stiff second fixed-point branch that the
    solver does not chase, so below-one spectra should be predicted at
    moderate lam.
    """

    def __init__(self, model: CovarianceModel, n: int, lam: float, *,
                 dense: bool = False, deviation_rtol: float = 1e-15,
                 max_lowrank: int = 384):
        if lam <= 0:
            raise ValueError(f"lam must be > 0, got {lam!r}")
        self.model = model
        self.n = int(n)
        self.lam = float(lam)
        vecs = dbar_vectors(model, n, lam)
        self.kappa = vecs.kappa
        self.m_tilde = vecs.m_tilde
        self.dbar = vecs.d_spec
        self.eigs = model.eigenvalues
        d = model.dim

        self.mode = "dense"
        if not dense:
            if model.is_diagonal:
                self.mode = "diagonal"
                self.sigma_diag = np.diag(model.dense).copy()
            else:
                center = float(np.median(self.dbar))
                delta = self.dbar - center
                support = np.flatnonzero(np.abs(delta) > deviation_rtol * center)
                if len(support) <= min(d // 2, max_lowrank):
                    self.mode = "lowrank"
                    self.center = center
                    self.support = support
                    dbar_eff = np.full(d, center)
                    dbar_eff[support] = self.dbar[support]
                    self.dbar_eff = dbar_eff
                    self.delta = self.dbar[support] - center
                    self.delta_inv = 1.0 / self.dbar[support] - 1.0 / center
                    # (d, r), complex up-front: every solve works in complex
                    self.W = model.eigenvectors[support, :].T.astype(complex)
        if self.mode == "dense":
            self.sigma = model.dense
            self.dbar_root = np.sqrt(self.dbar)

    # -- fixed-point right-hand side -------------------------------------
    def chi_rhs(self, chi: complex, z: complex) -> complex:
        """Value of the fixed-point map F(chi) at (chi, z)."""
        return self._rhs(chi, z, want_grad=False)[0]

    def chi_rhs_grad(self, chi: complex, z: complex) -> tuple[complex, complex]:
        """Value and chi-derivative of the fixed-point map at (chi, z).

        With M = -lam I - Sigma/(1-chi) + Dbar/z the map is
        F = (1/n) Tr(Sigma M^{-1}) and F' = c^2 (1/n) Tr((Sigma M^{-1})^2),
        c = 1/(1-chi).
        """
        return self._rhs(chi, z, want_grad=True)

    def _rhs(self, chi: complex, z: complex, want_grad: bool,
             ) -> tuple[complex, complex]:
        c = 1.0 / (1.0 - chi)
        if self.mode == "diagonal":
            ratio = self.sigma_diag / (-self.lam - c * self.sigma_diag + self.dbar / z)
            grad = c * c * np.sum(ratio * ratio) / self.n if want_grad else 0j
            return complex(np.sum(ratio) / self.n), complex(grad)
        if self.mode == "lowrank":
            a = 1.0 / (self.center / z - self.lam - c * self.eigs)
            la = self.eigs * a
            total = np.sum(la)
            sq = np.sum(la * la) if want_grad else 0j
            if len(self.support):
                g1 = (self.W * a[:, None]).T @ self.W
                g_lam = (self.W * (la * a)[:, None]).T @ self.W
                core = g1 + np.diag(z / self.delta)
                s1 = np.linalg.solve(core, g_lam)
                total -= np.trace(s1)
                if want_grad:
                    g_lam2 = (self.W * (la * la * a)[:, None]).T @ self.W
                    sq += -2.0 * np.trace(np.linalg.solve(core, g_lam2)) \
                        + np.trace(s1 @ s1)
            return complex(total / self.n), complex(c * c * sq / self.n)
        M = -self.lam * np.eye(self.model.dim, dtype=complex) - c * self.sigma \
            + np.diag(self.dbar / z)
        y = np.linalg.solve(M, self.sigma.astype(complex))
        grad = c * c * np.trace(y @ y) / self.n if want_grad else 0j
        return complex(np.trace(y) / self.n), complex(grad)

    # -- deterministic resolvent trace ------------------------------------
    def gcal_trace(self, chi: complex, z: complex) -> complex:
        """(1/d) Tr[(Dbar^{1/2}(Sigma/(1-chi)+lam I)^{-1}Dbar^{1/2} - z)^{-1}]."""
        c = 1.0 / (1.0 - chi)
        d = self.model.dim
        if self.mode == "diagonal":
            core = self.dbar / (c * self.sigma_diag + self.lam) - z
            return complex(np.sum(1.0 / core) / d)
        if self.mode == "lowrank":
            q = 1.0 / (c * self.eigs + self.lam)
            n0 = q - z / self.center
            b = 1.0 / n0
            total = np.sum(b) / self.center
            if len(self.support):
                Wb = self.W * b[:, None]
                h1 = Wb.T @ self.W
                h2 = (self.W * (b * b)[:, None]).T @ self.W
                core = h1 + np.diag(-1.0 / (z * self.delta_inv))
                sol = np.linalg.solve(core, h2)
                total -= np.trace(sol) / self.center
                ninv_kk = np.diag(h1) - np.einsum(
                    "ij,ji->i", h1, np.linalg.solve(core, h1))
                total += np.sum(self.delta_inv * ninv_kk)
            return complex(total / d)
        inner = np.linalg.inv(c * self.sigma + self.lam * np.eye(d)).astype(complex)
        k_mat = self.dbar_root[:, None] * inner * self.dbar_root[None, :]
        k_mat[np.diag_indices_from(k_mat)] -= z
        return complex(np.trace(np.linalg.inv(k_mat)) / d)

    # -- solver ------------------------------------------------------------
    def solve(self, z: complex, *, chi0: complex = 0.0, tol: float = 1e-13,
              accept: float = 1e-10) -> ChiSolution:
        z = complex(z)
        if z == 0:
            raise ValueError("z must be nonzero")

        def good(chi, res, bound):
            return chi is not None and res <= bound * max(1.0, abs(chi))

        best_chi, best_res = None, np.inf
        total_iters = 0
        starts = [complex(chi0)]
        if z.imag > 0:
            starts.append(0.05j)
        for start in starts:
            chi, res, its = self._iterate(start, z, tol)
            total_iters += its
            if res < best_res:
                best_chi, best_res = chi, res
            if good(best_chi, best_res, tol):
                break
        if not good(best_chi, best_res, accept) and z.imag > 0:
            # eta continuation: walk down from a strongly damped copy of z
            chi = complex(chi0)
            for mult in (64.0, 16.0, 4.0, 1.0):
                chi, res, its = self._iterate(chi, complex(z.real, z.imag * mult), tol)
                total_iters += its
            if res < best_res:
                best_chi, best_res = chi, res
        if good(best_chi, best_res, accept) and not self._branch_ok(best_chi, z):
            # wrong branch: re-initialize from the conjugate of the root found
            chi, res, its = self._iterate(np.conj(best_chi), z, tol)
            total_iters += its
            if good(chi, res, accept) and self._branch_ok(chi, z):
                best_chi, best_res = chi, res
        if not good(best_chi, best_res, accept) or not self._branch_ok(best_chi, z):
            raise ConvergenceError(
                f"chi fixed point did not converge at z={z!r}; last residual {best_res:.3e}")
        return ChiSolution(z=z, chi=best_chi, residual=float(best_res),
                           iterations=total_iters,
                           gcal_trace=self.gcal_trace(best_chi, z))

    def _iterate(self, chi0: complex, z: complex, tol: float,
                 picard_iters: int = 8, newton_iters: int = 50,
                 ) -> tuple[complex, float, int]:
        """Damped Picard warmup followed by safeguarded Newton on F(chi) - chi."""
        chi = complex(chi0)
        res = np.inf
        used = 0
        for used in range(1, picard_iters + 1):
            if abs(1.0 - chi) < 1e-14:
                chi += 0.1j
            try:
                rhs = self.chi_rhs(chi, z)
            except np.linalg.LinAlgError:
                return chi, np.inf, used
            if not cmath.isfinite(rhs):
                return chi, np.inf, used
            res = abs(rhs - chi)
            if res <= tol * max(1.0, abs(chi)):
                return chi, res, used
            chi = 0.5 * chi + 0.5 * rhs

        for _ in range(newton_iters):
            used += 1
            if abs(1.0 - chi) < 1e-14:
                chi += 0.1j
            try:
                val, grad = self.chi_rhs_grad(chi, z)
            except np.linalg.LinAlgError:
                return chi, np.inf, used
            g = val - chi
            res = abs(g)
            if not cmath.isfinite(val):
                return chi, np.inf, used
            if res <= tol * max(1.0, abs(chi)):
                return chi, res, used
            dg = grad - 1.0
            step = val - chi if abs(dg) < 1e-14 else -g / dg
            # trust region plus backtracking on the residual
            cap = 0.5 * (1.0 + abs(chi))
            if abs(step) > cap:
                step *= cap / abs(step)
            for _ in range(8):
                cand = chi + step
                try:
                    cand_res = abs(self.chi_rhs(cand, z) - cand)
                except np.linalg.LinAlgError:
                    cand_res = np.inf
                if cand_res < res or cand_res <= tol:
                    chi = cand
                    res = cand_res
                    break
                step *= 0.5
            else:
                chi = chi + step  # accept anyway; Picard-like progress
        return chi, res, used

    def _branch_ok(self, chi: complex, z: complex) -> bool:
        if z.imag <= 0:
            return True
        trace = self.gcal_trace(chi, z)
        return trace.imag >= -1e-10 * (1.0 + abs(trace))


def solve_chi(model: CovarianceModel, n: int, lam: float, z: complex, *,
              workspace: SpectralWorkspace | None = None,
              chi0: complex = 0.0) -> ChiSolution:
    """Solve the chi self-consistent equation at a single point z.

    For z in the upper half-plane the branch is validated by the Stieltjes
    sign of the induced resolvent trace (positive imaginary part), retrying
    from the conjugate start on a wrong-branch detection.  Grid sweeps
    should construct one ``SpectralWorkspace`` and pass it in.
    """
    ws = workspace if workspace is not None else SpectralWorkspace(model, n, lam)
    return ws.solve(z, chi0=chi0)
