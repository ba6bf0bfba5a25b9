"""Time integration of the normalized conformal curvature flow and its monitors.

The conformal factor evolves by ``dw/dt = -((n+m-2)/4)(R - r) w`` with zero
normal derivative.  Two steppers are offered: explicit Euler on that equation
and a semi-implicit scheme on the ``w^N`` form

    d(w^N)/dt = ((n+m+2)/4)(alpha Delta w - R_bg w + r w^N),   N = p_crit,

where the diffusion is taken implicitly and the reaction terms explicitly.
"""
from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from typing import ClassVar

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import spsolve

from .background import Background, integrate, project_neumann, weighted_laplacian
from .conformal import (
    BlowDownError,
    ConformalState,
    Exponents,
    energy,
    normalize_volume,
    phi_from_w,
    total_volume,
)

log = logging.getLogger(__name__)

STEPPERS = ("explicit-euler", "semi-implicit")


class MaximumPrincipleError(ArithmeticError):
    """``R + sigma`` dropped to zero or below along a run."""


@dataclass
class FlowConfig:
    stepper: str = "explicit-euler"
    dt: float | None = None  # None selects the adaptive policy
    s_cfl: float = 0.2
    tol_conv: float = 1e-6
    tol_residual: float = 1e-5
    max_steps: int = 200_000
    renormalize: bool = True
    monitor_stride: int = 100
    p_lyapunov: float | None = None
    sigma: float | None = None

    def __post_init__(self):
        if self.stepper not in STEPPERS:
            raise ValueError(f"unknown stepper {self.stepper!r}; choose from {STEPPERS}")
        if self.dt is not None and not self.dt > 0:
            raise ValueError("dt must be positive")
        if not self.s_cfl > 0:
            raise ValueError("s_cfl must be positive")
        if not (self.tol_conv > 0 and self.tol_residual > 0):
            raise ValueError("tolerances must be positive")
        if self.max_steps < 0 or self.monitor_stride < 1:
            raise ValueError("max_steps >= 0 and monitor_stride >= 1 required")
        if self.sigma is not None and self.sigma < 1:
            raise ValueError("sigma must be at least 1")

    def lyapunov_exponent(self, ex: Exponents) -> float:
        lo, hi = lyapunov_interval(ex)
        p = 0.5 * (lo + hi) if self.p_lyapunov is None else float(self.p_lyapunov)
        if not lo < p < hi:
            raise ValueError(f"p_lyapunov must lie in ({lo}, {hi}), got {p}")
        return p

    def sigma_for(self, R0: np.ndarray) -> float:
        if self.sigma is not None:
            return float(self.sigma)
        return max(float(np.max(1.0 - R0)), 1.0)


def lyapunov_interval(ex: Exponents) -> tuple[float, float]:
    return max((ex.n + ex.m) / 2, 2.0), (ex.n + ex.m + 2) / 2


@dataclass
class FlowTrace:
    columns: ClassVar[tuple[str, ...]] = (
        "t", "r", "volume_raw", "min_R", "max_R", "min_w", "max_w",
        "sup_abs_R_minus_r", "E", "Lambda_p",
        "harnack_ratio_min", "harnack_ratio_max", "dphi_dt_min",
    )
    rows: list = field(default_factory=list)

    def append(self, row):
        if len(row) != len(self.columns):
            raise ValueError("row length does not match trace columns")
        if self.rows and not row[0] > self.rows[-1][0]:
            raise ValueError("trace times must increase strictly")
        self.rows.append(tuple(float(v) for v in row))

    def as_array(self) -> np.ndarray:
        return np.array(self.rows, dtype=float).reshape(-1, len(self.columns))

    def column(self, name: str) -> np.ndarray:
        return self.as_array()[:, self.columns.index(name)]

    def __len__(self):
        return len(self.rows)


@dataclass
class StepStats:
    """Worst-case per-step quantities over a whole run, not only monitored rows."""

    max_r_increase: float = -math.inf  # max of r_{k+1} - r_k - 1e-10 (1 + |r_k|)
    min_mp_margin: float = math.inf  # min of min R(t) - min{min R(0), 0}
    max_volume_error: float = 0.0  # max |volume - 1| after renormalization
    max_volume_drift: float = 0.0  # max |V_{k+1} - V_k| before renormalization
    min_dphi_margin: float = math.inf  # min of dphi/dt - (m/2)(min{min R0, 0} - r0)
    first_negative_t: float | None = None


@dataclass
class FlowResult:
    w_final: np.ndarray
    converged: bool
    steps_taken: int
    r_inf_estimate: float
    steady_residual: float
    case_label: str
    R_final: np.ndarray
    t_final: float = 0.0
    wall_time_seconds: float = 0.0
    stats: StepStats = field(default_factory=StepStats)

    def summary(self) -> dict:
        return {
            "converged": bool(self.converged),
            "steps": int(self.steps_taken),
            "r_inf": float(self.r_inf_estimate),
            "steady_residual": float(self.steady_residual),
            "case": self.case_label,
            "wall_time_seconds": float(self.wall_time_seconds),
        }


@dataclass(frozen=True)
class MonitorRecord:
    dr_residual: float  # |dr/dt + (n+m-2)/2 int (R-r)^2| at the midpoint state
    dr_scale: float  # (n+m-2)/2 int (R-r)^2 at the midpoint state
    mp_margin: float  # min R(t_next) - min{min R(0), 0}
    dphi_margin: float  # min dphi/dt - (m/2)(min R(0) - r(0))

    @property
    def dr_relative(self) -> float:
        return self.dr_residual / self.dr_scale if self.dr_scale > 0 else math.nan


def steady_residual(bg: Background, w, r: float) -> float:
    """``|alpha Delta w - R_bg w + r w^N|_inf / |w|_inf``."""
    ex = Exponents.of(bg)
    w = np.asarray(w, dtype=float)
    res = ex.alpha * weighted_laplacian(bg, w) - bg.R_bg * w + r * w**ex.p_crit
    return float(np.max(np.abs(res)) / np.max(np.abs(w)))


def stable_dt(bg: Background, state: ConformalState, config: FlowConfig) -> float:
    """Adaptive step size.

    The nominal bound is ``s_cfl h^2 / alpha``, scaled by ``w_min^{4/(n+m-2)}`` since
    the effective diffusivity is ``(n+m-1) w^{-4/(n+m-2)}``.  It is further capped by
    a Gershgorin bound of the discrete operator (relevant near symmetry axes) and by
    the reaction rate.
    """
    ex = Exponents.of(bg)
    if config.dt is not None:
        return float(config.dt)
    scale = min(1.0, float(np.min(state.w)) ** ex.p_metric)
    if config.stepper == "semi-implicit":
        rate = ex.speed * (float(np.max(np.abs(state.R))) + abs(state.r)) + 1.0
        return 0.05 / rate
    dt = config.s_cfl * bg.h**2 / ex.alpha * scale
    gersh = float(np.max(2.0 * np.abs(bg.stiffness.diagonal()) / bg.mu))
    diffusivity = (ex.n + ex.m - 1) / scale
    dt = min(dt, config.s_cfl * 2.0 / (gersh * diffusivity))
    rate = ex.speed * state.sup_deviation
    if rate > 0:
        dt = min(dt, 0.1 / rate)
    return dt


def _advance(bg: Background, state: ConformalState, dt: float, stepper: str) -> np.ndarray:
    """Raw update of ``w`` before any renormalization."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    ex = Exponents.of(bg)
    w = np.asarray(state.w)
    if stepper == "explicit-euler":
        w_new = w - dt * ex.speed * (state.R - state.r) * w
    else:
        N = ex.p_crit
        c = (ex.n + ex.m + 2) / 4
        wN1 = w ** (N - 1)
        lhs = sp.diags(bg.mu * N * wN1) - (dt * c * ex.alpha) * bg.stiffness
        rhs = bg.mu * N * wN1 * w + dt * c * bg.mu * (-bg.R_bg * w + state.r * w**N)
        try:
            w_new = spsolve(lhs.tocsc(), rhs)
        except RuntimeError as exc:
            raise ArithmeticError(f"semi-implicit solve failed at dt={dt:.3e}: {exc}") from exc
        if not np.all(np.isfinite(w_new)):
            raise ArithmeticError(f"semi-implicit solve failed at dt={dt:.3e}")
    if not np.all(np.isfinite(w_new)) or np.min(w_new) <= 1e-300:
        raise BlowDownError(
            f"w became nonpositive (min {np.min(w_new):.3e}) after a step of dt={dt:.3e}; "
            "reduce the step size"
        )
    return w_new


def step(bg: Background, state: ConformalState, dt: float, config: FlowConfig) -> ConformalState:
    """Advance one step of size ``dt``.

    Neumann data stay zero without any post-processing: the discrete Laplacian has
    no boundary flux, which is the even ghost reflection written in flux form.
    """
    w_new = _advance(bg, state, dt, config.stepper)
    if config.renormalize:
        w_new = normalize_volume(bg, w_new)
    return ConformalState.from_w(bg, w_new)


def monitor_identities(
    bg: Background,
    state_prev: ConformalState,
    state_next: ConformalState,
    dt: float,
    initial: ConformalState,
) -> MonitorRecord:
    """Discrete checks of the r-identity, the minimum-curvature barrier and the
    lower bound on the potential's time derivative.

    The potential bound uses ``min{min R(0), 0}``: this is what the barrier on R
    combined with the decay of r actually yields.
    """
    ex = Exponents.of(bg)
    mid = ConformalState.from_w(bg, 0.5 * (np.asarray(state_prev.w) + np.asarray(state_next.w)))
    scale = 0.5 * ex.d * mid.deviation_sq(bg) / mid.volume
    resid = abs((state_next.r - state_prev.r) / dt + scale)
    R0min = float(np.min(initial.R))
    mp = float(np.min(state_next.R)) - min(R0min, 0.0)
    dphi = (phi_from_w(bg, state_next.w) - phi_from_w(bg, state_prev.w)) / dt
    bound = 0.5 * ex.m * (min(R0min, 0.0) - initial.r)
    return MonitorRecord(resid, scale, mp, float(np.min(dphi)) - bound)


def lyapunov_lp(bg: Background, state: ConformalState, config: FlowConfig, sigma: float | None = None) -> float:
    """``int (R + sigma)^{p-1} e^{-phi} dV_g``."""
    ex = Exponents.of(bg)
    p = config.lyapunov_exponent(ex)
    if sigma is None:
        sigma = config.sigma_for(np.asarray(state.R))
    shifted = np.asarray(state.R) + sigma
    if np.min(shifted) <= 0:
        raise MaximumPrincipleError(f"R + sigma reached {np.min(shifted):.3e}")
    return integrate(bg, shifted ** (p - 1) * np.asarray(state.w) ** ex.p_vol)


def harnack_ratios(trace: FlowTrace) -> tuple[np.ndarray, np.ndarray]:
    """Columns ``w_min^N(t)/w_min^N(0)`` and ``w_max^N(t)/w_max^N(0)``."""
    return trace.column("harnack_ratio_min"), trace.column("harnack_ratio_max")


@dataclass(frozen=True)
class BarrierRecord:
    crossing_reached: bool
    t_cross: float | None
    min_w: float
    lower_ok: bool
    upper_ok: bool
    upper_bound: float | None
    worst_upper: float | None


def negative_case_barriers(trace: FlowTrace, bg: Background, slack: float = 0.5) -> BarrierRecord:
    """Positivity of ``w`` and the growth bound on ``w_max^{N-1}`` after r turns negative."""
    ex = Exponents.of(bg)
    min_w = float(np.min(trace.column("min_w")))
    r = trace.column("r")
    neg = np.nonzero(r < 0)[0]
    if neg.size == 0:
        return BarrierRecord(False, None, min_w, min_w > 0, True, None, None)
    k0 = int(neg[0])
    t0 = float(trace.column("t")[k0])
    wmax = trace.column("max_w") ** (ex.p_crit - 1)
    bound = (1 + slack) * max(wmax[k0], float(np.max(np.abs(bg.R_bg))) / abs(r[k0]))
    worst = float(np.max(wmax[k0:]))
    return BarrierRecord(True, t0, min_w, min_w > 0, worst <= bound, bound, worst)


class _RowBuilder:
    def __init__(self, bg: Background, initial: ConformalState, config: FlowConfig):
        self.bg = bg
        self.ex = Exponents.of(bg)
        self.config = config
        self.sigma = config.sigma_for(np.asarray(initial.R))
        N = self.ex.p_crit
        self.wmin0 = float(np.min(initial.w)) ** N
        self.wmax0 = float(np.max(initial.w)) ** N

    def __call__(self, t, state: ConformalState, volume_raw, dphi_min):
        w, R = np.asarray(state.w), np.asarray(state.R)
        N = self.ex.p_crit
        return (
            t, state.r, volume_raw, R.min(), R.max(), w.min(), w.max(),
            state.sup_deviation, energy(self.bg, w),
            lyapunov_lp(self.bg, state, self.config, self.sigma),
            w.min() ** N / self.wmin0, w.max() ** N / self.wmax0, dphi_min,
        )


def _is_converged(bg, state, config) -> tuple[bool, float]:
    res = steady_residual(bg, state.w, state.r)
    ok = state.sup_deviation < config.tol_conv * (1 + abs(state.r)) and res <= config.tol_residual
    return ok, res


def run(bg: Background, w0, config: FlowConfig, case_label: str | None = None):
    """Integrate until convergence or ``max_steps``; returns ``(FlowResult, FlowTrace)``."""
    start = time.perf_counter()
    ex = Exponents.of(bg)
    w0 = np.asarray(w0, dtype=float)
    if w0.shape != (bg.node_count,) or not np.all(np.isfinite(w0)) or np.min(w0) <= 0:
        raise ValueError("initial data must be a positive finite field on the grid")
    w0 = normalize_volume(bg, project_neumann(bg, w0))
    if np.min(w0) <= 0:
        raise ValueError("initial data lost positivity under the Neumann projection")
    if case_label is None:
        from .spectral import classify_sign

        case_label = classify_sign(bg).label
    initial = ConformalState.from_w(bg, w0)
    config.lyapunov_exponent(ex)
    rows = _RowBuilder(bg, initial, config)
    trace = FlowTrace()
    stats = StepStats()
    R0floor = min(float(np.min(initial.R)), 0.0)
    dphi_bound = 0.5 * ex.m * (R0floor - initial.r)
    stats.max_volume_error = abs(initial.volume - 1.0)
    if initial.r < 0:
        stats.first_negative_t = 0.0

    state, t, k = initial, 0.0, 0
    dphi0 = 0.5 * ex.m * float(np.min(initial.R - initial.r))
    trace.append(rows(t, state, initial.volume, dphi0))
    converged, res = _is_converged(bg, state, config)
    while not converged and k < config.max_steps:
        dt = stable_dt(bg, state, config)
        w_raw = _advance(bg, state, dt, config.stepper)
        volume_raw = total_volume(bg, w_raw)
        nxt = ConformalState.from_w(bg, normalize_volume(bg, w_raw) if config.renormalize else w_raw)
        t += dt
        k += 1

        stats.max_volume_drift = max(stats.max_volume_drift, abs(volume_raw - state.volume))
        if config.renormalize:
            stats.max_volume_error = max(stats.max_volume_error, abs(nxt.volume - 1.0))
        stats.max_r_increase = max(stats.max_r_increase, nxt.r - state.r - 1e-10 * (1 + abs(state.r)))
        stats.min_mp_margin = min(stats.min_mp_margin, float(np.min(nxt.R)) - R0floor)
        dphi = (phi_from_w(bg, nxt.w) - phi_from_w(bg, state.w)) / dt
        dphi_min = float(np.min(dphi))
        stats.min_dphi_margin = min(stats.min_dphi_margin, dphi_min - dphi_bound)
        if stats.first_negative_t is None and nxt.r < 0:
            stats.first_negative_t = t

        state = nxt
        converged, res = _is_converged(bg, state, config)
        if converged or k % config.monitor_stride == 0 or k == config.max_steps:
            trace.append(rows(t, state, volume_raw, dphi_min))
        if k % 50_000 == 0:
            log.info("step %d t=%.4g r=%.10g sup|R-r|=%.3e", k, t, state.r, state.sup_deviation)

    result = FlowResult(
        w_final=np.array(state.w),
        converged=bool(converged),
        steps_taken=k,
        r_inf_estimate=float(state.r),
        steady_residual=res,
        case_label=case_label,
        R_final=np.array(state.R),
        t_final=t,
        wall_time_seconds=time.perf_counter() - start,
        stats=stats,
    )
    return result, trace

