"""Slow, independent reference computations used to validate the main code paths.

Nothing here calls the conformal, flow or spectral modules; the only inputs taken
from a background are the problem data (grid, reduced metric, phi0 and, where the
discrete scheme itself is being cross-checked, its quadrature masses).
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np
import scipy.integrate as si
import scipy.linalg as la

from .background import Background


class UnsupportedFamily(ValueError):
    pass


@dataclass(frozen=True)
class RefinementReport:
    h: np.ndarray
    errors: np.ndarray
    order: float

    @classmethod
    def fit(cls, h, errors) -> "RefinementReport":
        h = np.asarray(h, dtype=float)
        errors = np.asarray(errors, dtype=float)
        if h.size < 3 or h.size != errors.size:
            raise ValueError("a refinement study needs at least three mesh sizes")
        if np.any(errors <= 0):
            raise ValueError("errors must be positive to fit an order")
        order = float(np.polyfit(np.log(h), np.log(errors), 1)[0])
        return cls(h, errors, order)

    def to_csv(self) -> str:
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(["h", "error", "order"])
        for hh, e in zip(self.h, self.errors):
            wr.writerow([f"{hh:.17g}", f"{e:.17g}", f"{self.order:.17g}"])
        return buf.getvalue()


def _even_pad(u: np.ndarray) -> np.ndarray:
    return np.pad(u, 1, mode="reflect")


def _d1(u: np.ndarray, h: float) -> np.ndarray:
    p = _even_pad(u)
    return (p[2:] - p[:-2]) / (2 * h)


def _d2(u: np.ndarray, h: float) -> np.ndarray:
    p = _even_pad(u)
    return (p[2:] - 2 * u + p[:-2]) / h**2


def direct_curvature(bg: Background, w) -> np.ndarray:
    """Weighted scalar curvature assembled from the conformally changed metric and
    potential, with ``g = e^{2s} g0``, ``s = 2 ln w / (n+m-2)``, ``phi = phi0 - m s``.

    Flat intervals only; fields are treated as even across both ends.
    """
    if bg.family != "flat_interval":
        raise UnsupportedFamily(f"direct_curvature supports flat_interval only, not {bg.family}")
    w = np.asarray(w, dtype=float)
    if np.min(w) <= 0:
        raise ValueError("w must be positive")
    n, m = bg.n, bg.m
    h = float(bg.grid.spacing[0])
    s = 2.0 * np.log(w) / (n + m - 2)
    phi = np.asarray(bg.phi0) - m * s
    s1, s2 = _d1(s, h), _d2(s, h)
    p1, p2 = _d1(phi, h), _d2(phi, h)
    conf = np.exp(-2 * s)
    R_g = conf * (-2 * (n - 1) * s2 - (n - 1) * (n - 2) * s1**2)
    lap_phi = conf * (p2 + (n - 2) * s1 * p1)
    grad_phi = conf * p1**2
    out = R_g + 2 * lap_phi
    if m > 0:
        out = out - (m + 1) / m * grad_phi
    return out


def _density_axes(bg: Background):
    """Per-node density ``T omega e^{-phi0}`` in 1D, or ``e^{-phi0}`` on the 2D grid."""
    if bg.grid.ndim == 1:
        (x,) = bg.grid.axes()
        return [x], bg.metric.transverse_area * bg.metric.omega(x) * np.exp(-np.asarray(bg.phi0))
    xs = bg.grid.axes()
    return xs, np.exp(-np.asarray(bg.phi0)).reshape(bg.grid.node_counts)


def _grad4(u: np.ndarray, h: float, axis: int) -> np.ndarray:
    """Fourth-order first derivative: central inside, one-sided five-point at the two
    outermost nodes of each end."""
    u = np.moveaxis(u, axis, 0)
    g = np.empty_like(u)
    g[2:-2] = (u[:-4] - 8 * u[1:-3] + 8 * u[3:-1] - u[4:]) / (12 * h)
    g[0] = (-25 * u[0] + 48 * u[1] - 36 * u[2] + 16 * u[3] - 3 * u[4]) / (12 * h)
    g[1] = (-3 * u[0] - 10 * u[1] + 18 * u[2] - 6 * u[3] + u[4]) / (12 * h)
    g[-1] = (25 * u[-1] - 48 * u[-2] + 36 * u[-3] - 16 * u[-4] + 3 * u[-5]) / (12 * h)
    g[-2] = (3 * u[-1] + 10 * u[-2] - 18 * u[-3] + 6 * u[-4] - u[-5]) / (12 * h)
    return np.moveaxis(g, 0, axis)


def _outward4(u: np.ndarray, h: float) -> np.ndarray:
    """Outward derivative at index 0 along the first axis (five-point one-sided)."""
    return (25 * u[0] - 48 * u[1] + 36 * u[2] - 16 * u[3] + 3 * u[4]) / (12 * h)


def _quad(vals: np.ndarray, axes) -> float:
    out = vals
    for ax in reversed(axes):
        out = si.simpson(out, x=ax, axis=-1)
    return float(out)


def ibp_residual(bg: Background, f, u, lap_u) -> float:
    """``|int <grad f, grad u> + int f lap_u - oint f du/dnu|`` with the weighted measure.

    ``lap_u`` is the weighted Laplacian under test.  The other pieces are computed
    to fourth order (five-point differences, Simpson's rule) so that the residual
    measures the operator under test rather than the reference quadrature.
    """
    axes, dens = _density_axes(bg)
    shape = dens.shape
    F = np.asarray(f, float).reshape(shape)
    U = np.asarray(u, float).reshape(shape)
    L = np.asarray(lap_u, float).reshape(shape)
    hs = [ax[1] - ax[0] for ax in axes]
    grad = sum(_grad4(F, h, i) * _grad4(U, h, i) for i, h in enumerate(hs))
    grad_term = _quad(grad * dens, axes)
    lap_term = _quad(F * L * dens, axes)

    bnd = 0.0
    if len(axes) == 1:
        h = hs[0]
        bnd += F[-1] * _outward4(U[::-1], h) * dens[-1]
        if not bg.metric.axis_at_start:
            bnd += F[0] * _outward4(U, h) * dens[0]
    else:
        (x, y), (hx, hy) = axes, hs
        sides = [
            (F[0], _outward4(U, hx), dens[0], y),
            (F[-1], _outward4(U[::-1], hx), dens[-1], y),
            (F[:, 0], _outward4(U.T, hy), dens[:, 0], x),
            (F[:, -1], _outward4(U.T[::-1], hy), dens[:, -1], x),
        ]
        for fb, dn, db, ax in sides:
            bnd += float(si.simpson(fb * dn * db, x=ax))
    return abs(grad_term + lap_term - bnd)


def dense_reference_spectrum(bg: Background, rho, k: int):
    """Lowest ``k`` eigenpairs of ``-alpha Delta_phi0 + R_bg`` against ``rho``, assembled
    densely node by node with adaptive quadrature for the cell masses.

    Returns ``(lambdas, modes)`` with modes normalized in ``sum mu rho u v``.
    """
    if bg.grid.ndim != 1:
        raise UnsupportedFamily("dense reference spectrum is one-dimensional only")
    N = bg.node_count
    if N > 512:
        raise ValueError("dense reference spectrum is limited to 512 nodes")
    (x,) = bg.grid.axes()
    h = float(x[1] - x[0])
    T = bg.metric.transverse_area
    om = bg.metric.omega
    phi0 = np.asarray(bg.phi0, float)
    n, m = bg.n, bg.m
    alpha = 4 * (n + m - 1) / (n + m - 2)

    def face_density(i):
        return T * float(om(np.array([x[i] + 0.5 * h]))[0]) * math.exp(-0.5 * (phi0[i] + phi0[i + 1]))

    K = np.zeros((N, N))
    for i in range(N - 1):
        c = alpha * face_density(i) / h
        K[i, i] += c
        K[i + 1, i + 1] += c
        K[i, i + 1] -= c
        K[i + 1, i] -= c

    def cell(a, b):
        return si.quad(lambda s: float(om(np.array([s]))[0]), a, b, epsabs=0.0, epsrel=1e-13)[0]

    mass = np.zeros(N)
    for i in range(1, N - 1):
        mass[i] = T * math.exp(-phi0[i]) * cell(x[i] - 0.5 * h, x[i] + 0.5 * h)
    if bg.metric.axis_at_start:
        mass[0] = T * math.exp(-phi0[0]) * cell(x[0], x[0] + 0.5 * h)
    else:
        mass[0] = 0.5 * h * face_density(0)
    mass[-1] = 0.5 * h * face_density(N - 2)

    K += np.diag(mass * np.asarray(bg.R_bg, float))
    M = np.diag(mass * np.asarray(rho, float))
    vals, vecs = la.eigh(K, M, subset_by_index=(0, k - 1))
    return vals, vecs


def dr_identity_residual(t, r, dissipation_mid: float, d: float) -> float:
    """Centered residual ``|(r2 - r0)/(t2 - t0) + (d/2) D1|`` on three consecutive states."""
    t = np.asarray(t, dtype=float)
    r = np.asarray(r, dtype=float)
    if t.size != 3 or r.size != 3:
        raise ValueError("need exactly three consecutive states")
    return abs((r[2] - r[0]) / (t[2] - t[0]) + 0.5 * d * dissipation_mid)


def _state_quantities(bg: Background, w: np.ndarray):
    n, m = bg.n, bg.m
    d = n + m - 2
    alpha = 4 * (n + m - 1) / d
    N = (n + m + 2) / d
    pv = 2 * (n + m) / d
    mu = np.asarray(bg.mu)
    lap = (bg.stiffness @ w) / mu
    R = w ** (-N) * (-alpha * lap + np.asarray(bg.R_bg) * w)
    dens = mu * w**pv
    V = float(dens.sum())
    r = float((R * dens).sum()) / V
    diss = float(((R - r) ** 2 * dens).sum()) / V
    return r, diss


@dataclass(frozen=True)
class CrossCheck:
    coarse: float
    fine: float
    ratio: float  # nan when undefined

    @property
    def defined(self) -> bool:
        return not math.isnan(self.ratio)


def dr_dt_crosscheck(bg: Background, coarse, fine, dt: float, floor: float = 1e-12) -> CrossCheck:
    """Compare the r-identity residual on three states at step ``dt`` with three
    states at ``dt/2`` starting from the same data.

    ``coarse`` and ``fine`` are sequences of three conformal factors.  The ratio
    is reported as undefined when both residuals sit at roundoff (steady states).
    """
    d = bg.n + bg.m - 2
    res = []
    for states, h in ((coarse, dt), (fine, 0.5 * dt)):
        if len(states) != 3:
            raise ValueError("need exactly three consecutive states")
        q = [_state_quantities(bg, np.asarray(w, float)) for w in states]
        res.append(dr_identity_residual([0.0, h, 2 * h], [qq[0] for qq in q], q[1][1], d))
    scale = floor * (1 + abs(_state_quantities(bg, np.asarray(coarse[0], float))[0]))
    if max(res) <= scale:
        return CrossCheck(res[0], res[1], math.nan)
    return CrossCheck(res[0], res[1], res[0] / res[1] if res[1] > 0 else math.inf)


def random_neumann_field(bg: Background, seed: int, modes: int = 6, amplitude: float | None = None) -> np.ndarray:
    """Band-limited cosine series in each axis; zero normal derivative at every end.

    With ``amplitude`` set the result is ``1 + amplitude * f / max|f|`` (positive for
    amplitude below one), otherwise the raw series.
    """
    rng = np.random.default_rng(seed)
    parts = []
    for (a, b), ax in zip(bg.grid.extents, bg.grid.axes()):
        xi = (ax - a) / (b - a)
        coef = rng.standard_normal(modes + 1) / (1.0 + np.arange(modes + 1)) ** 2
        parts.append(sum(c * np.cos(k * np.pi * xi) for k, c in enumerate(coef)))
    field = parts[0] if len(parts) == 1 else np.multiply.outer(parts[0], parts[1]).ravel()
    if amplitude is None:
        return field
    centered = field - field.mean()
    return 1.0 + amplitude * centered / np.max(np.abs(centered))
