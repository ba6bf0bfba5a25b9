"""Linearized eigenproblem at a steady state, sign classification of the conformal
class, the low-mode projector and the decay-exponent fit."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp

from .background import Background
from .conformal import Exponents, energy

CASES = ("positive", "zero", "negative")


class SolverBreakdown(ArithmeticError):
    pass


@dataclass(frozen=True)
class EigenPair:
    lam: float
    psi: np.ndarray


@dataclass(frozen=True)
class Spectrum:
    pairs: tuple[EigenPair, ...]
    rho: np.ndarray
    mu: np.ndarray

    @property
    def lambdas(self) -> np.ndarray:
        return np.array([p.lam for p in self.pairs])

    @property
    def modes(self) -> np.ndarray:
        """Eigenfunctions as columns."""
        return np.column_stack([p.psi for p in self.pairs])

    def gram(self) -> np.ndarray:
        P = self.modes
        return P.T @ ((self.mu * self.rho)[:, None] * P)

    def __len__(self):
        return len(self.pairs)


@dataclass(frozen=True)
class OperatorData:
    """Symmetric pencil ``(K, diag(m_diag))``; ``K`` is sparse."""

    K: sp.csr_matrix
    m_diag: np.ndarray
    mu: np.ndarray
    rho: np.ndarray
    ndim: int

    def symmetry_residual(self) -> float:
        diff = abs(self.K - self.K.T).max()
        return float(diff / max(abs(self.K).max(), 1e-300))


@dataclass(frozen=True)
class LowModeSet:
    indices: tuple[int, ...]
    threshold: float


@dataclass(frozen=True)
class Classification:
    label: str
    lambda0: float
    lambda1: float


def _pencil(K: sp.spmatrix, m_diag, mu, rho, ndim) -> OperatorData:
    K = sp.csr_matrix(K)
    K = 0.5 * (K + K.T)  # removes assembly roundoff only
    return OperatorData(K.tocsr(), np.asarray(m_diag, float), mu, rho, ndim)


def assemble_linearized(bg: Background, w_inf) -> OperatorData:
    """Pencil of ``-alpha Delta_phi0 + R_bg`` against multiplication by ``w^{4/(n+m-2)}``,
    both weighted by the quadrature masses."""
    ex = Exponents.of(bg)
    w_inf = np.asarray(w_inf, dtype=float)
    if np.min(w_inf) <= 0:
        raise ValueError("w_inf must be positive")
    rho = w_inf**ex.p_metric
    K = -ex.alpha * bg.stiffness + sp.diags(bg.mu * bg.R_bg)
    return _pencil(K, bg.mu * rho, bg.mu, rho, bg.grid.ndim)


def _solve_pencil(op: OperatorData, k: int):
    n = op.m_diag.size
    if not 1 <= k <= n:
        raise ValueError(f"k must lie in [1, {n}], got {k}")
    s = 1.0 / np.sqrt(op.m_diag)
    A = sp.diags(s) @ op.K @ sp.diags(s)
    try:
        if op.ndim == 1:
            d = A.diagonal()
            e = A.diagonal(1)
            vals, vecs = la.eigh_tridiagonal(d, e, select="i", select_range=(0, k - 1))
        else:
            vals, vecs = la.eigh(A.toarray(), subset_by_index=(0, k - 1))
    except (la.LinAlgError, ValueError) as exc:
        raise SolverBreakdown(str(exc)) from exc
    return vals, s[:, None] * vecs


def eigensolve(op: OperatorData, k: int) -> Spectrum:
    """Lowest ``k`` eigenpairs, ascending and orthonormal for ``sum mu rho u v``."""
    vals, psis = _solve_pencil(op, k)
    pairs = []
    for lam, psi in zip(vals, psis.T):
        res = op.K @ psi - lam * op.m_diag * psi
        if np.linalg.norm(res) > 1e-8 * np.linalg.norm(psi):
            raise SolverBreakdown(f"eigenresidual too large for lambda={lam:.6g}")
        i = int(np.argmax(np.abs(psi)))
        if psi[i] < 0:  # fix the sign so runs are reproducible
            psi = -psi
        pairs.append(EigenPair(float(lam), psi.copy()))
    return Spectrum(tuple(pairs), op.rho.copy(), op.mu.copy())


def conformal_laplacian_pencil(bg: Background) -> OperatorData:
    """Pencil of ``-Delta_phi0 + c_R R_bg`` against the weighted mass."""
    ex = Exponents.of(bg)
    K = -bg.stiffness + sp.diags(ex.c_R * bg.mu * bg.R_bg)
    return _pencil(K, bg.mu, bg.mu, np.ones_like(bg.mu), bg.grid.ndim)


def first_eigenvalues(bg: Background, k: int = 2) -> np.ndarray:
    return eigensolve(conformal_laplacian_pencil(bg), k).lambdas


def classify_sign(bg: Background) -> Classification:
    """Sign of the first eigenvalue of the weighted conformal Laplacian with Neumann data."""
    lam0, lam1 = first_eigenvalues(bg, 2)
    if abs(lam0) <= 1e-8 * (1 + abs(lam1)):
        label = "zero"
    else:
        label = "positive" if lam0 > 0 else "negative"
    return Classification(label, float(lam0), float(lam1))


def low_mode_set(spectrum: Spectrum, bg: Background, r_inf: float) -> LowModeSet:
    """Indices with ``lambda <= p_crit * r_inf``; the computed spectrum must reach past the threshold."""
    thr = Exponents.of(bg).p_crit * r_inf
    lams = spectrum.lambdas
    if lams[-1] <= thr:
        raise ValueError("spectrum too short to contain every low mode; request more pairs")
    return LowModeSet(tuple(int(i) for i in np.nonzero(lams <= thr)[0]), float(thr))


def project_low_modes(spectrum: Spectrum, A: LowModeSet, f) -> np.ndarray:
    """``f - sum_{a in A} (int psi_a f) rho psi_a``."""
    f = np.asarray(f, dtype=float)
    out = f.copy()
    for a in A.indices:
        psi = spectrum.pairs[a].psi
        out -= float(np.sum(spectrum.mu * psi * f)) * spectrum.rho * psi
    return out


def rayleigh_lower_bound(bg: Background, w) -> float:
    """Smallest normalized energy over ``{w, 1, |psi_0|}``.

    Returned in energy units, so it never exceeds ``c_R r`` of a volume-normalized
    ``w`` (the energy of ``w`` itself is ``c_R r``).
    """
    w = np.asarray(w, dtype=float)
    psi0 = eigensolve(conformal_laplacian_pencil(bg), 1).pairs[0].psi
    ground = np.abs(psi0)
    ground = ground + 1e-8 * np.max(ground)
    return min(energy(bg, w), energy(bg, np.ones_like(w)), energy(bg, ground))


@dataclass(frozen=True)
class DecayFit:
    gamma_est: float
    beta: float
    residual: float
    super_polynomial: bool
    rows_used: int


def fit_power_law(t, r, r_inf: float, tol_conv: float = 1e-6, min_rows: int = 50) -> DecayFit:
    """Fit ``r - r_inf ~ C t^{-beta}`` and map ``beta = (1-gamma)/(1+gamma)`` to ``gamma``.

    Decay is flagged super-polynomial when the local exponent over the later half
    of the usable rows exceeds the earlier half's by more than 25%.
    """
    t = np.asarray(t, dtype=float)
    r = np.asarray(r, dtype=float)
    gap = r - r_inf
    use = (gap > 10 * tol_conv) & (t > 0)
    if int(use.sum()) < min_rows:
        raise ValueError(f"only {int(use.sum())} usable rows; need {min_rows}")
    x, y = np.log(t[use]), np.log(gap[use])
    slope, icpt = np.polyfit(x, y, 1)
    resid = float(np.sqrt(np.mean((y - (slope * x + icpt)) ** 2)))
    beta = -float(slope)
    half = x.size // 2
    b_early = -np.polyfit(x[:half], y[:half], 1)[0]
    b_late = -np.polyfit(x[half:], y[half:], 1)[0]
    superpoly = bool((b_early > 0 and b_late / b_early > 1.25) or (b_early <= 0 < b_late))
    gamma = (1 - beta) / (1 + beta) if beta > -1 else math.nan
    return DecayFit(float(gamma), beta, resid, superpoly, int(use.sum()))


def fit_decay_exponent(trace, r_inf: float, tol_conv: float = 1e-6, min_rows: int = 50) -> DecayFit:
    """Decay fit on the ``t`` and ``r`` columns of a flow trace."""
    return fit_power_law(trace.column("t"), trace.column("r"), r_inf, tol_conv, min_rows)
