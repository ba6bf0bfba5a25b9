"""Discretized smooth metric measure spaces with boundary.

A background is a compact manifold with boundary ``(M, g0, e^{-phi0} dV, e^{-phi0} dA, m)``
reduced by symmetry to a one- or two-dimensional tensor grid.  Dimension ``n`` only
enters through the transverse volume factor ``omega`` and the closed-form curvature
data of the family, so fields are constant along the unreduced directions.

The weighted Laplacian is assembled in flux form: a symmetric, negative semidefinite
stiffness matrix ``S`` with face conductances ``omega * e^{-phi0} / h`` and nodal masses
``mu`` (the quadrature weights of ``e^{-phi0} dV``), so that ``Delta_phi u = (S u) / mu``.
Zero boundary flux is the ghost-node even reflection, which realises the Neumann
condition without storing ghost values.
"""
from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp

INTERIOR, TRUE_BOUNDARY, SYMMETRY_AXIS = 0, 1, 2
TOL_BC = 1e-10
FAMILIES = ("flat_interval", "flat_rectangle", "spherical_cap", "hyperbolic_ball")

_GAUSS_X, _GAUSS_W = np.polynomial.legendre.leggauss(6)


class BackgroundError(ValueError):
    """Raised when a background cannot be built from the requested data."""


def sphere_area(k: int) -> float:
    """Area of the unit k-sphere."""
    return 2.0 * math.pi ** ((k + 1) / 2) / math.gamma((k + 1) / 2)


@dataclass(frozen=True, eq=False)
class GridSpec:
    """Uniform tensor grid with reduction weights and boundary tags.

    Fields are stored flat (C order over ``node_counts``).
    """

    kind: str
    node_counts: tuple[int, ...]
    extents: tuple[tuple[float, float], ...]
    omega: np.ndarray
    markers: np.ndarray

    def __post_init__(self):
        if self.kind not in ("weighted-1d", "flat-2d-rectangle"):
            raise BackgroundError(f"unknown grid kind {self.kind!r}")
        if len(self.node_counts) != len(self.extents):
            raise BackgroundError("node_counts and extents disagree in dimension")
        if any(c < 16 for c in self.node_counts):
            raise BackgroundError("at least 16 nodes per axis are required")
        if any(b <= a for a, b in self.extents):
            raise BackgroundError("empty extent")
        if self.omega.shape != (self.node_count,) or self.markers.shape != (self.node_count,):
            raise BackgroundError("omega/markers must be flat per-node arrays")
        if np.any(self.omega < 0) or np.any((self.omega <= 0) & (self.markers != SYMMETRY_AXIS)):
            raise BackgroundError("omega must be positive off the symmetry axis")

    @property
    def ndim(self) -> int:
        return len(self.node_counts)

    @property
    def node_count(self) -> int:
        return int(np.prod(self.node_counts))

    @property
    def spacing(self) -> tuple[float, ...]:
        return tuple((b - a) / (c - 1) for (a, b), c in zip(self.extents, self.node_counts))

    @property
    def h(self) -> float:
        return min(self.spacing)

    def axes(self) -> list[np.ndarray]:
        return [np.linspace(a, b, c) for (a, b), c in zip(self.extents, self.node_counts)]

    def coords(self) -> tuple[np.ndarray, ...]:
        mesh = np.meshgrid(*self.axes(), indexing="ij")
        return tuple(c.ravel() for c in mesh)


@dataclass(frozen=True)
class ReducedMetric:
    """Closed-form data of g0 in reduced coordinates.

    ``omega`` is the transverse volume factor (``f(x)^{n-1}`` for ``dx^2 + f^2 g_sphere``),
    ``dlog_omega`` its logarithmic derivative, i.e. the mean curvature of the level sets.
    """

    omega: Callable[[np.ndarray], np.ndarray]
    dlog_omega: Callable[[np.ndarray], np.ndarray]
    scalar_curvature: float
    transverse_area: float
    axis_at_start: bool
    boundary_mean_curvature: dict[int, float] = field(default_factory=dict)


@dataclass(frozen=True)
class Phi0:
    """Closed-form measure potential ``phi0`` and its gradient."""

    value: Callable[..., np.ndarray]
    gradient: Callable[..., tuple[np.ndarray, ...]]
    label: str = "custom"


@dataclass(frozen=True, eq=False)
class Background:
    """A discretized smooth metric measure space with boundary.

    Attributes:
        mu: quadrature weights of ``e^{-phi0} dV_{g0}`` per node.
        stiffness: symmetric sparse matrix with ``weighted_laplacian(u) = stiffness @ u / mu``.
        boundary_nodes: node index of every boundary facet (a 2-d corner carries two facets).
        boundary_inward: flat-index stride pointing into the domain, per facet.
        boundary_spacing: mesh width along the facet normal.
        boundary_weights: quadrature weights of ``e^{-phi0} dA_{g0}`` per facet.
        R_bg: cached ``R^m_{phi0}``; H_bg: cached ``H^m_{phi0}`` per facet.
    """

    family: str
    params: dict
    grid: GridSpec
    n: int
    m: float
    phi0: np.ndarray
    metric: ReducedMetric
    phi0_closed: Phi0
    mu: np.ndarray
    stiffness: sp.csr_matrix
    boundary_nodes: np.ndarray
    boundary_inward: np.ndarray
    boundary_spacing: np.ndarray
    boundary_weights: np.ndarray
    R_bg: np.ndarray = None
    H_bg: np.ndarray = None

    @property
    def node_count(self) -> int:
        return self.grid.node_count

    @property
    def h(self) -> float:
        return self.grid.h

    def coords(self) -> tuple[np.ndarray, ...]:
        return self.grid.coords()

    def volume(self) -> float:
        return integrate(self, np.ones(self.node_count))

    @functools.cached_property
    def edges(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Face list ``(i, j, kappa)`` with ``i < j``, read off the stiffness matrix."""
        upper = sp.triu(self.stiffness, k=1).tocoo()
        return upper.row, upper.col, upper.data


# --------------------------------------------------------------------------- families


def _flat_metric(ndim: int, n: int) -> ReducedMetric:
    return ReducedMetric(
        omega=lambda x: np.ones_like(x, dtype=float),
        dlog_omega=lambda x: np.zeros_like(x, dtype=float),
        scalar_curvature=0.0,
        transverse_area=1.0,
        axis_at_start=False,
        boundary_mean_curvature={0: 0.0, 1: 0.0},
    )


def _cap_metric(n: int, theta_max: float) -> ReducedMetric:
    def dlog(x):
        with np.errstate(divide="ignore", invalid="ignore"):
            return (n - 1) * np.cos(x) / np.sin(x)

    return ReducedMetric(
        omega=lambda x: np.sin(x) ** (n - 1),
        dlog_omega=dlog,
        scalar_curvature=float(n * (n - 1)),
        transverse_area=sphere_area(n - 1),
        axis_at_start=True,
        boundary_mean_curvature={1: (n - 1) / math.tan(theta_max)},
    )


def _hyperbolic_metric(n: int, radius: float) -> ReducedMetric:
    def dlog(x):
        with np.errstate(divide="ignore", invalid="ignore"):
            return (n - 1) * np.cosh(x) / np.sinh(x)

    return ReducedMetric(
        omega=lambda x: np.sinh(x) ** (n - 1),
        dlog_omega=dlog,
        scalar_curvature=-float(n * (n - 1)),
        transverse_area=sphere_area(n - 1),
        axis_at_start=True,
        boundary_mean_curvature={1: (n - 1) / math.tanh(radius)},
    )


def _radial_phi0(params: dict, x0: float, length: float, h_end: float) -> Phi0:
    """``c + A cos(k pi (x - x0)/L) - H_end (x - x0)^2 / (2L)``, or ``c + slope x``.

    The quadratic term cancels the mean curvature of the far boundary, so
    ``H^m_{phi0} = 0`` holds exactly there; ``linear`` ignores compatibility.
    """
    kind = params.get("phi_kind", "cos")
    c = float(params.get("phi_const", 0.0))
    if kind == "linear":
        slope = float(params.get("phi_slope", 0.0))
        return Phi0(lambda x: c + slope * (x - x0), lambda x: (np.full_like(x, slope),), "linear")
    if kind != "cos":
        raise BackgroundError(f"unknown phi_kind {kind!r}")
    amp = float(params.get("phi_amp", 0.0))
    k = float(params.get("phi_freq", 2.0))
    q = -h_end / length
    kk = k * math.pi / length

    def value(x):
        s = x - x0
        return c + amp * np.cos(kk * s) + 0.5 * q * s**2

    def grad(x):
        s = x - x0
        return (-amp * kk * np.sin(kk * s) + q * s,)

    return Phi0(value, grad, "cos")


def _rect_phi0(params: dict, extents) -> Phi0:
    kind = params.get("phi_kind", "cos")
    if kind != "cos":
        raise BackgroundError("flat_rectangle supports phi_kind='cos' only")
    c = float(params.get("phi_const", 0.0))
    amp = float(params.get("phi_amp", 0.0))
    kx = float(params.get("phi_freq", 1.0)) * math.pi / (extents[0][1] - extents[0][0])
    ky = float(params.get("phi_freq_y", params.get("phi_freq", 1.0))) * math.pi / (extents[1][1] - extents[1][0])
    ax, ay = extents[0][0], extents[1][0]

    def value(x, y):
        return c + amp * np.cos(kx * (x - ax)) * np.cos(ky * (y - ay))

    def grad(x, y):
        return (
            -amp * kx * np.sin(kx * (x - ax)) * np.cos(ky * (y - ay)),
            -amp * ky * np.cos(kx * (x - ax)) * np.sin(ky * (y - ay)),
        )

    return Phi0(value, grad, "cos")


def make_grid(family: str, params: dict | None = None, nodes: int | tuple[int, int] = 256) -> GridSpec:
    """Default grid of a catalog family."""
    params = dict(params or {})
    n = int(params.get("n", 3))
    if family == "flat_interval":
        length = float(params.get("length", 1.0))
        ext = ((0.0, length),)
        counts = (int(nodes),)
        omega = np.ones(counts[0])
        markers = np.zeros(counts[0], dtype=int)
        markers[[0, -1]] = TRUE_BOUNDARY
        return GridSpec("weighted-1d", counts, ext, omega, markers)
    if family == "flat_rectangle":
        counts = tuple(nodes) if isinstance(nodes, (tuple, list)) else (int(nodes), int(nodes))
        ext = ((0.0, float(params.get("length", 1.0))), (0.0, float(params.get("width", 1.0))))
        shape_markers = np.zeros(counts, dtype=int)
        shape_markers[[0, -1], :] = TRUE_BOUNDARY
        shape_markers[:, [0, -1]] = TRUE_BOUNDARY
        return GridSpec("flat-2d-rectangle", counts, ext, np.ones(int(np.prod(counts))), shape_markers.ravel())
    if family in ("spherical_cap", "hyperbolic_ball"):
        if family == "spherical_cap":
            top = float(params.get("theta_max", math.pi / 2))
            if not 0 < top < math.pi:
                raise BackgroundError("theta_max must lie in (0, pi)")
            metric = _cap_metric(n, top)
        else:
            top = float(params.get("radius", 1.0))
            if top <= 0:
                raise BackgroundError("radius must be positive")
            metric = _hyperbolic_metric(n, top)
        x = np.linspace(0.0, top, int(nodes))
        markers = np.zeros(x.size, dtype=int)
        markers[0] = SYMMETRY_AXIS
        markers[-1] = TRUE_BOUNDARY
        return GridSpec("weighted-1d", (x.size,), ((0.0, top),), metric.omega(x), markers)
    raise BackgroundError(f"unknown background family {family!r}; expected one of {FAMILIES}")


# --------------------------------------------------------------------------- assembly


def _cell_integral(f, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    mid, half = 0.5 * (a + b), 0.5 * (b - a)
    pts = mid[:, None] + half[:, None] * _GAUSS_X[None, :]
    return half * (f(pts) @ _GAUSS_W)


def _assemble_1d(grid: GridSpec, metric: ReducedMetric, phi0: np.ndarray):
    (x,) = grid.axes()
    h = grid.spacing[0]
    T = metric.transverse_area
    N = x.size
    xf = x[:-1] + 0.5 * h
    rho_face = T * metric.omega(xf) * np.exp(-0.5 * (phi0[:-1] + phi0[1:]))
    kappa = rho_face / h

    mu = np.empty(N)
    lo, hi = x - 0.5 * h, x + 0.5 * h
    inner = slice(1, N - 1)
    mu[inner] = T * np.exp(-phi0[inner]) * _cell_integral(metric.omega, lo[inner], hi[inner])
    if metric.axis_at_start:
        mu[0] = T * np.exp(-phi0[0]) * _cell_integral(metric.omega, x[:1], x[:1] + 0.5 * h)[0]
    else:
        mu[0] = 0.5 * h * rho_face[0]
    # face density at the half cell keeps the Neumann row second order when rho' != 0
    mu[-1] = 0.5 * h * rho_face[-1]

    i = np.arange(N - 1)
    rows = np.concatenate([i, i + 1, i, i + 1])
    cols = np.concatenate([i + 1, i, i, i + 1])
    vals = np.concatenate([kappa, kappa, -kappa, -kappa])
    S = sp.csr_matrix((vals, (rows, cols)), shape=(N, N))

    b_nodes, b_in = [], []
    if not metric.axis_at_start:
        b_nodes.append(0)
        b_in.append(1)
    b_nodes.append(N - 1)
    b_in.append(-1)
    b_nodes = np.array(b_nodes)
    b_w = T * metric.omega(x[b_nodes]) * np.exp(-phi0[b_nodes])
    return mu, S, b_nodes, np.array(b_in), np.full(b_nodes.size, h), b_w


def _trap_weights(count: int, h: float) -> np.ndarray:
    w = np.full(count, h)
    w[[0, -1]] = 0.5 * h
    return w


def _assemble_2d(grid: GridSpec, phi0: np.ndarray):
    nx, ny = grid.node_counts
    hx, hy = grid.spacing
    wx, wy = _trap_weights(nx, hx), _trap_weights(ny, hy)
    P = phi0.reshape(nx, ny)
    mu = (np.outer(wx, wy) * np.exp(-P)).ravel()
    idx = np.arange(nx * ny).reshape(nx, ny)

    kx = (wy[None, :] * np.exp(-0.5 * (P[:-1, :] + P[1:, :])) / hx).ravel()
    ky = (wx[:, None] * np.exp(-0.5 * (P[:, :-1] + P[:, 1:])) / hy).ravel()
    a = np.concatenate([idx[:-1, :].ravel(), idx[:, :-1].ravel()])
    b = np.concatenate([idx[1:, :].ravel(), idx[:, 1:].ravel()])
    k = np.concatenate([kx, ky])
    rows = np.concatenate([a, b, a, b])
    cols = np.concatenate([b, a, a, b])
    vals = np.concatenate([k, k, -k, -k])
    S = sp.csr_matrix((vals, (rows, cols)), shape=(nx * ny, nx * ny))

    nodes, inward, spacing, weights = [], [], [], []
    for side, (sl, step, hh, tw) in {
        "x0": (idx[0, :], ny, hx, wy),
        "x1": (idx[-1, :], -ny, hx, wy),
        "y0": (idx[:, 0], 1, hy, wx),
        "y1": (idx[:, -1], -1, hy, wx),
    }.items():
        nodes.append(sl)
        inward.append(np.full(sl.size, step))
        spacing.append(np.full(sl.size, hh))
        weights.append(tw * np.exp(-phi0[sl]))
    return mu, S, np.concatenate(nodes), np.concatenate(inward), np.concatenate(spacing), np.concatenate(weights)


def build_background(
    family: str,
    params: dict | None = None,
    grid: GridSpec | None = None,
    *,
    nodes: int | tuple[int, int] = 256,
) -> Background:
    """Build a catalog background with curvature caches populated.

    ``params`` carries ``n``, ``m`` and the ``phi0`` family (``phi_kind``, ``phi_amp``,
    ``phi_freq``, ``phi_const``, ``phi_slope``) plus geometric parameters
    (``length``, ``width``, ``theta_max``, ``radius``).
    """
    params = dict(params or {})
    n = int(params.get("n", 3))
    m = float(params.get("m", 1.0))
    if n < 3:
        raise BackgroundError("dimension n must be at least 3")
    if m < 0:
        raise BackgroundError("m must be nonnegative")
    if grid is None:
        grid = make_grid(family, params, nodes)

    if family == "flat_rectangle":
        if grid.kind != "flat-2d-rectangle":
            raise BackgroundError("flat_rectangle needs a flat-2d-rectangle grid")
        metric = _flat_metric(2, n)
        phi_c = _rect_phi0(params, grid.extents)
    else:
        if grid.kind != "weighted-1d":
            raise BackgroundError(f"{family} needs a weighted-1d grid")
        (a, b), = grid.extents
        if family == "flat_interval":
            metric = _flat_metric(1, n)
        elif family == "spherical_cap":
            metric = _cap_metric(n, b)
        elif family == "hyperbolic_ball":
            metric = _hyperbolic_metric(n, b)
        else:
            raise BackgroundError(f"unknown background family {family!r}; expected one of {FAMILIES}")
        phi_c = _radial_phi0(params, a, b - a, metric.boundary_mean_curvature.get(1, 0.0))

    coords = grid.coords()
    phi0 = np.asarray(phi_c.value(*coords), dtype=float)
    if m == 0 and np.any(phi0 != 0):
        raise BackgroundError("m = 0 requires phi0 identically zero")
    if not np.all(np.isfinite(phi0)):
        raise BackgroundError("phi0 is not finite")

    if grid.ndim == 1:
        parts = _assemble_1d(grid, metric, phi0)
    else:
        parts = _assemble_2d(grid, phi0)
    bg = Background(family, params, grid, n, m, phi0, metric, phi_c, *parts)

    H = background_weighted_mean_curvature(bg)
    if np.max(np.abs(H), initial=0.0) > TOL_BC:
        raise BackgroundError(
            f"phi0 violates H^m_phi0 = 0 on the boundary (max |H| = {np.max(np.abs(H)):.3e})"
        )
    object.__setattr__(bg, "H_bg", H)
    object.__setattr__(bg, "R_bg", background_weighted_scalar_curvature(bg))
    return bg


# --------------------------------------------------------------------------- operators


def _check_field(bg: Background, u) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    if u.shape != (bg.node_count,):
        raise ValueError(f"field has shape {u.shape}, expected ({bg.node_count},)")
    if not np.all(np.isfinite(u)):
        raise ValueError("field contains non-finite values")
    return u


def weighted_laplacian(bg: Background, u) -> np.ndarray:
    """Discrete ``Delta_phi0 u`` with zero-flux (even reflection) boundary rows."""
    u = _check_field(bg, u)
    i, j, kappa = bg.edges
    # face fluxes cancel exactly on constants, unlike the row sums of the matrix
    flux = kappa * (u[j] - u[i])
    n = bg.node_count
    return (np.bincount(i, flux, n) - np.bincount(j, flux, n)) / bg.mu


def axis_derivatives(bg: Background, u) -> list[tuple[np.ndarray, np.ndarray]]:
    """First and second derivatives of ``u`` along every grid axis.

    Central differences inside; one-sided second-order stencils at true boundaries;
    even reflection at the symmetry axis.  No Neumann data is assumed.
    """
    u = _check_field(bg, u)
    shape = bg.grid.node_counts
    U = u.reshape(shape)
    out = []
    for ax, h in enumerate(bg.grid.spacing):
        V = np.moveaxis(U, ax, 0)
        d1 = np.empty_like(V)
        d2 = np.empty_like(V)
        d1[1:-1] = (V[2:] - V[:-2]) / (2 * h)
        d2[1:-1] = (V[2:] - 2 * V[1:-1] + V[:-2]) / h**2
        d1[-1] = (3 * V[-1] - 4 * V[-2] + V[-3]) / (2 * h)
        d2[-1] = (2 * V[-1] - 5 * V[-2] + 4 * V[-3] - V[-4]) / h**2
        if bg.grid.ndim == 1 and bg.metric.axis_at_start:
            d1[0] = 0.0
            d2[0] = 2 * (V[1] - V[0]) / h**2
        else:
            d1[0] = (-3 * V[0] + 4 * V[1] - V[2]) / (2 * h)
            d2[0] = (2 * V[0] - 5 * V[1] + 4 * V[2] - V[3]) / h**2
        out.append((np.moveaxis(d1, 0, ax).ravel(), np.moveaxis(d2, 0, ax).ravel()))
    return out


def metric_laplacian(bg: Background, u) -> np.ndarray:
    """Unweighted ``Delta_{g0} u`` by finite differences, without boundary assumptions."""
    ders = axis_derivatives(bg, u)
    lap = sum(d2 for _, d2 in ders)
    if bg.grid.ndim == 1:
        (x,) = bg.coords()
        d1 = ders[0][0]
        if bg.metric.axis_at_start:
            lap = lap.copy()
            lap[1:] += bg.metric.dlog_omega(x[1:]) * d1[1:]
            lap[0] = bg.n * ders[0][1][0]
        else:
            lap = lap + bg.metric.dlog_omega(x) * d1
    return lap


def gradient_norm_sq(bg: Background, u) -> np.ndarray:
    return sum(d1**2 for d1, _ in axis_derivatives(bg, u))


def background_weighted_scalar_curvature(bg: Background) -> np.ndarray:
    """``R^m_{phi0} = R_{g0} + 2 Delta_{g0} phi0 - (m+1)/m |grad phi0|^2``."""
    R0 = np.full(bg.node_count, bg.metric.scalar_curvature)
    if bg.m == 0:
        if np.any(bg.phi0 != 0):
            raise BackgroundError("R^m_phi is undefined for m = 0 with nonzero phi0")
        return R0
    return R0 + 2.0 * metric_laplacian(bg, bg.phi0) - (bg.m + 1) / bg.m * gradient_norm_sq(bg, bg.phi0)


def _boundary_mean_curvature_g0(bg: Background) -> np.ndarray:
    if bg.grid.ndim == 2:
        return np.zeros(bg.boundary_nodes.size)
    H = bg.metric.boundary_mean_curvature
    return np.array([H.get(0 if i == 0 else 1, 0.0) for i in bg.boundary_nodes])


def background_weighted_mean_curvature(bg: Background, discrete: bool = False) -> np.ndarray:
    """``H^m_{phi0} = H_{g0} + d phi0 / d nu`` per boundary facet.

    The normal derivative comes from the closed-form ``phi0`` gradient, or from the
    one-sided second-order stencil when ``discrete`` is set.
    """
    Hg = _boundary_mean_curvature_g0(bg)
    if discrete:
        return Hg + normal_derivative(bg, bg.phi0)
    coords = [c[bg.boundary_nodes] for c in bg.coords()]
    grads = bg.phi0_closed.gradient(*coords)
    dn = np.zeros(bg.boundary_nodes.size)
    stride_axis = _facet_axis(bg)
    for ax, g in enumerate(grads):
        sel = stride_axis == ax
        outward = -np.sign(bg.boundary_inward[sel])
        dn[sel] = outward * np.broadcast_to(g, dn.shape)[sel]
    return Hg + dn


def _facet_axis(bg: Background) -> np.ndarray:
    if bg.grid.ndim == 1:
        return np.zeros(bg.boundary_nodes.size, dtype=int)
    ny = bg.grid.node_counts[1]
    return np.where(np.abs(bg.boundary_inward) == ny, 0, 1)


def normal_derivative(bg: Background, u) -> np.ndarray:
    """One-sided second-order outward normal derivative per boundary facet."""
    u = _check_field(bg, u)
    b, s, h = bg.boundary_nodes, bg.boundary_inward, bg.boundary_spacing
    return (3 * u[b] - 4 * u[b + s] + u[b + 2 * s]) / (2 * h)


def dirichlet_form(bg: Background, u, v=None) -> float:
    """``int <grad u, grad v> e^{-phi0} dV`` as ``sum_faces kappa (u_i - u_j)(v_i - v_j)``.

    Equals ``-u^T S v`` but avoids the cancellation inside the stiffness product.
    """
    u = _check_field(bg, u)
    v = u if v is None else _check_field(bg, v)
    i, j, kappa = bg.edges
    du = u[i] - u[j]
    dv = du if v is u else v[i] - v[j]
    return float(np.sum(kappa * du * dv))


def integrate(bg: Background, u) -> float:
    """``sum_i mu_i u_i``; numpy's pairwise summation fixes the reduction order."""
    u = _check_field(bg, u)
    return float(np.sum(bg.mu * u))


def integrate_boundary(bg: Background, values) -> float:
    values = np.asarray(values, dtype=float)
    if values.shape != bg.boundary_weights.shape:
        raise ValueError("boundary values do not match the boundary facets")
    return float(np.sum(bg.boundary_weights * values))


def inner(bg: Background, u, v) -> float:
    return integrate(bg, np.asarray(u) * np.asarray(v))


def project_neumann(bg: Background, u) -> np.ndarray:
    """Reset boundary values so the one-sided normal derivative vanishes."""
    u = _check_field(bg, u).copy()
    b, s = bg.boundary_nodes, bg.boundary_inward
    u[b] = (4 * u[b + s] - u[b + 2 * s]) / 3
    return u
