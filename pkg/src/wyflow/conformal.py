"""Conformal calculus on a background: exponents, the weighted conformal Laplacian,
the transformation law and the normalized energy.

Everything is expressed through the conformal factor ``w`` relative to the
background ``(g0, phi0)``:

    g = w^{4/(n+m-2)} g0,    e^{-phi} dV_g = w^{2(n+m)/(n+m-2)} e^{-phi0} dV_{g0},

so that ``e^{-phi} = w^{2m/(n+m-2)} e^{-phi0}`` for the potential alone.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .background import (
    Background,
    dirichlet_form,
    integrate,
    integrate_boundary,
    normal_derivative,
    weighted_laplacian,
)

W_FLOOR = 1e-300


class BlowDownError(ArithmeticError):
    """Raised when the conformal factor stops being positive."""


@dataclass(frozen=True)
class Exponents:
    """Constants attached to a dimension pair ``(n, m)``."""

    n: int
    m: float

    def __post_init__(self):
        if self.n < 3 or self.m < 0:
            raise ValueError("need n >= 3 and m >= 0")
        if self.m > 0 and not self.p_crit < (self.n + 2) / (self.n - 2):
            raise AssertionError("weighted curvature exponent must be sub-critical")

    @classmethod
    def of(cls, bg: Background) -> "Exponents":
        return cls(bg.n, bg.m)

    @property
    def d(self) -> float:
        return self.n + self.m - 2

    @property
    def alpha(self) -> float:
        return 4 * (self.n + self.m - 1) / self.d

    @property
    def c_R(self) -> float:
        return self.d / (4 * (self.n + self.m - 1))

    @property
    def c_H(self) -> float:
        return self.d / (2 * (self.n + self.m - 1))

    @property
    def p_crit(self) -> float:
        return (self.n + self.m + 2) / self.d

    @property
    def p_vol(self) -> float:
        return 2 * (self.n + self.m) / self.d

    @property
    def p_metric(self) -> float:
        return 4 / self.d

    @property
    def p_phi(self) -> float:
        """Exponent of ``w`` in ``e^{-phi} / e^{-phi0}``."""
        return 2 * self.m / self.d

    @property
    def speed(self) -> float:
        """Coefficient in ``dw/dt = -speed (R - r) w``."""
        return self.d / 4


def _positive(w) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    if not np.all(np.isfinite(w)) or np.min(w) <= W_FLOOR:
        raise BlowDownError(f"conformal factor is not positive (min w = {np.min(w):.3e})")
    return w


def conformal_laplacian_apply(bg: Background, u) -> np.ndarray:
    """``L u = -Delta_phi0 u + c_R R^m_phi0 u``."""
    ex = Exponents.of(bg)
    u = np.asarray(u, dtype=float)
    return -weighted_laplacian(bg, u) + ex.c_R * bg.R_bg * u


def curvature_from_w(bg: Background, w) -> np.ndarray:
    """Weighted scalar curvature of ``(g, phi)`` by the transformation law."""
    w = _positive(w)
    ex = Exponents.of(bg)
    return ex.alpha * w ** (-ex.p_crit) * conformal_laplacian_apply(bg, w)


def mean_curvature_from_w(bg: Background, w) -> np.ndarray:
    w = _positive(w)
    ex = Exponents.of(bg)
    wb = w[bg.boundary_nodes]
    Bw = normal_derivative(bg, w) + ex.c_H * bg.H_bg * wb
    return 2 * (ex.n + ex.m - 1) / ex.d * wb ** (-(ex.n + ex.m) / ex.d) * Bw


def total_volume(bg: Background, w) -> float:
    w = _positive(w)
    return integrate(bg, w ** Exponents.of(bg).p_vol)


def average_curvature(bg: Background, w, R=None) -> float:
    w = _positive(w)
    if R is None:
        R = curvature_from_w(bg, w)
    dens = w ** Exponents.of(bg).p_vol
    return integrate(bg, R * dens) / integrate(bg, dens)


def normalize_volume(bg: Background, w) -> np.ndarray:
    """Rescale ``w`` so that the weighted volume is one."""
    w = _positive(w)
    return w * total_volume(bg, w) ** (-1.0 / Exponents.of(bg).p_vol)


def energy(bg: Background, w) -> float:
    """Normalized energy of the conformal factor.

    The boundary term keeps only ``c_H H^m_phi0 w^2``: the discrete operator has
    no boundary flux, so Neumann data of ``w`` are zero by construction.
    """
    w = _positive(w)
    ex = Exponents.of(bg)
    num = dirichlet_form(bg, w) + ex.c_R * integrate(bg, bg.R_bg * w**2)
    wb = w[bg.boundary_nodes]
    num += integrate_boundary(bg, ex.c_H * bg.H_bg * wb**2)
    return num / total_volume(bg, w) ** (ex.d / (ex.n + ex.m))


def energy_from_curvature(bg: Background, w) -> float:
    """The same energy written with the curvatures of the conformal metric."""
    w = _positive(w)
    ex = Exponents.of(bg)
    R = curvature_from_w(bg, w)
    H = mean_curvature_from_w(bg, w)
    wb = w[bg.boundary_nodes]
    # e^{-phi} dA_g = w^{2(n+m-1)/(n+m-2)} e^{-phi0} dA_{g0}
    area = wb ** (2 * (ex.n + ex.m - 1) / ex.d)
    num = integrate(bg, R * w**ex.p_vol) + 2 * integrate_boundary(bg, H * area)
    return ex.c_R * num / total_volume(bg, w) ** (ex.d / (ex.n + ex.m))


def phi_from_w(bg: Background, w) -> np.ndarray:
    """Measure potential of the conformal structure: ``phi0 - 2m/(n+m-2) ln w``."""
    w = _positive(w)
    return bg.phi0 - Exponents.of(bg).p_phi * np.log(w)


@dataclass(frozen=True, eq=False)
class ConformalState:
    """Conformal factor with curvature caches that always match ``w``."""

    w: np.ndarray
    R: np.ndarray
    r: float
    volume: float

    @classmethod
    def from_w(cls, bg: Background, w) -> "ConformalState":
        w = _positive(w).copy()
        w.setflags(write=False)
        R = curvature_from_w(bg, w)
        R.setflags(write=False)
        dens = w ** Exponents.of(bg).p_vol
        vol = integrate(bg, dens)
        return cls(w, R, integrate(bg, R * dens) / vol, vol)

    @property
    def sup_deviation(self) -> float:
        return float(np.max(np.abs(self.R - self.r)))

    def deviation_sq(self, bg: Background) -> float:
        """``int (R - r)^2 e^{-phi} dV_g``."""
        return integrate(bg, (self.R - self.r) ** 2 * self.w ** Exponents.of(bg).p_vol)


__all__ = [
    "BlowDownError",
    "ConformalState",
    "Exponents",
    "average_curvature",
    "conformal_laplacian_apply",
    "curvature_from_w",
    "energy",
    "energy_from_curvature",
    "mean_curvature_from_w",
    "normalize_volume",
    "phi_from_w",
    "total_volume",
]
