"""End-to-end acceptance criteria, one test per criterion.

Each test records a one-line PASS/FAIL verdict that is printed in the terminal
summary of the pytest session.
"""
import math

import numpy as np
import pytest

from conftest import preset_run, record_acceptance
from wyflow.background import build_background, weighted_laplacian
from wyflow.cli import initial_field, make_background
from wyflow.config import PRESETS, resolve
from wyflow.conformal import (
    ConformalState,
    Exponents,
    curvature_from_w,
    energy,
    normalize_volume,
)
from wyflow.flow import (
    FlowConfig,
    harnack_ratios,
    monitor_identities,
    negative_case_barriers,
    step,
)
from wyflow.oracle import (
    RefinementReport,
    dense_reference_spectrum,
    direct_curvature,
    dr_dt_crosscheck,
    ibp_residual,
    random_neumann_field,
)
from wyflow.spectral import (
    assemble_linearized,
    classify_sign,
    eigensolve,
    fit_decay_exponent,
    fit_power_law,
)

ALL_PRESETS = tuple(PRESETS)


def _preset_state(name):
    cfg = resolve(name)
    bg = make_background(cfg)
    w0 = normalize_volume(bg, initial_field(cfg, bg))
    return cfg, bg, ConformalState.from_w(bg, w0)


def test_criterion_01_volume_conservation():
    cfg, bg, s0 = _preset_state("positive_cap")
    assert bg.node_count == 512 and (bg.n, bg.m) == (3, 1.0)
    stepper = cfg.get("flow", "stepper")
    worst_ratio = 0.0
    for dt in (1e-4, 5e-5):
        state = s0
        off = FlowConfig(stepper=stepper, renormalize=False)
        for _ in range(200):
            nxt = step(bg, state, dt, off)
            worst_ratio = max(worst_ratio, abs(nxt.volume - state.volume) / (10 * dt**2))
            state = nxt
    state, worst_norm = s0, 0.0
    on = FlowConfig(stepper=stepper, renormalize=True)
    for _ in range(200):
        state = step(bg, state, 1e-4, on)
        worst_norm = max(worst_norm, abs(state.volume - 1.0))

    # the constant factor is a fixed point, so also check the dt^2 scaling of the
    # drift on the perturbed cap with explicit steps inside the stability limit
    _, bgp, sp0 = _preset_state("positive_cap_perturbed")
    drifts = []
    for dt in (2e-7, 1e-7):
        nxt = step(bgp, sp0, dt, FlowConfig(stepper="explicit-euler", renormalize=False))
        drifts.append(abs(nxt.volume - sp0.volume))
    scaling = drifts[0] / drifts[1]

    ok = worst_ratio <= 1.0 and worst_norm <= 1e-13 and 3.5 <= scaling <= 4.5
    record_acceptance(
        1, ok,
        f"drift/(10 dt^2) max {worst_ratio:.2e}; |V-1| max {worst_norm:.1e}; "
        f"perturbed drift ratio under dt halving {scaling:.3f}",
    )
    assert worst_ratio <= 1.0
    assert worst_norm <= 1e-13
    assert 3.5 <= scaling <= 4.5


def test_criterion_02_monotone_r():
    worst = {}
    for name in ALL_PRESETS:
        _, _, res, trace = preset_run(name)
        worst[name] = res.stats.max_r_increase
        r = trace.column("r")
        assert np.all(np.diff(r) <= 1e-10 * (1 + np.abs(r[:-1]))), name
    ok = all(v <= 0 for v in worst.values())
    record_acceptance(2, ok, "max (r_{k+1} - r_k - tol) per preset: " + ", ".join(f"{k}={v:.1e}" for k, v in worst.items()))
    assert ok


def test_criterion_03_dr_dt_identity():
    cfg, bg, s0 = _preset_state("positive_cap_perturbed")
    fc = FlowConfig(**cfg.flow_kwargs())
    dt = fc.dt
    worst, state = 0.0, s0
    for _ in range(50):
        nxt = step(bg, state, dt, fc)
        worst = max(worst, monitor_identities(bg, state, nxt, dt, s0).dr_relative)
        state = nxt

    frags = []
    for h in (dt, 0.5 * dt):
        states = [s0]
        for _ in range(2):
            states.append(step(bg, states[-1], h, fc))
        frags.append([s.w for s in states])
    cc = dr_dt_crosscheck(bg, frags[0], frags[1], dt)
    ok = worst <= 0.05 and cc.defined and 1.5 <= cc.ratio <= 3.0
    record_acceptance(3, ok, f"max relative midpoint residual {worst:.3%}; halving ratio {cc.ratio:.3f}")
    assert worst <= 0.05
    assert 1.5 <= cc.ratio <= 3.0


def test_criterion_04_maximum_principle():
    margins = {}
    for name in ALL_PRESETS:
        bg, w0, res, trace = preset_run(name)
        R0 = curvature_from_w(bg, normalize_volume(bg, w0))
        tol = 1e-6 * (1 + abs(float(np.min(R0))))
        margins[name] = res.stats.min_mp_margin + tol
        assert np.all(trace.column("min_R") >= min(float(np.min(R0)), 0.0) - tol)
    ok = all(v >= 0 for v in margins.values())
    record_acceptance(4, ok, "min (min R(t) - floor + tol): " + ", ".join(f"{k}={v:.2e}" for k, v in margins.items()))
    assert ok


def test_criterion_05_positive_convergence():
    bg, _, res, _ = preset_run("positive_cap_perturbed")
    cfg = resolve("positive_cap_perturbed")
    assert cfg.get("initial", "amplitude") == 0.1 and bg.node_count == 512
    sup = float(np.max(np.abs(res.R_final - res.r_inf_estimate)))
    spread = float(np.ptp(res.R_final) / abs(np.mean(res.R_final)))
    ok = res.converged and sup < 1e-6 and res.steady_residual <= 1e-5 and spread <= 1e-5
    record_acceptance(
        5, ok,
        f"converged={res.converged} sup|R-r|={sup:.2e} steady residual={res.steady_residual:.2e} "
        f"relative spread of R={spread:.2e}",
    )
    assert ok


def test_criterion_06_zero_case():
    cfg, bg, s0 = _preset_state("zero_flat_constant")
    fc = FlowConfig(**cfg.flow_kwargs())
    from wyflow.flow import stable_dt

    state, worst = s0, 0.0
    for _ in range(1000):
        nxt = step(bg, state, stable_dt(bg, state, fc), fc)
        worst = max(worst, float(np.max(np.abs(np.asarray(nxt.w) - np.asarray(state.w)))))
        state = nxt

    _, _, res, trace = preset_run("zero_flat_perturbed")
    lo, hi = harnack_ratios(trace)
    gap = float(np.min(lo - hi))
    supR = float(np.max(np.abs(res.R_final)))
    wspread = float(np.ptp(res.w_final) / np.mean(res.w_final))
    ok = worst <= 1e-13 and gap >= -1e-8 and res.converged and supR < 1e-6 and wspread < 1e-6
    record_acceptance(
        6, ok,
        f"constant run max step change {worst:.1e}; Harnack min gap {gap:.2e}; "
        f"|R|_inf={supR:.2e}; w relative spread {wspread:.1e}",
    )
    assert worst <= 1e-13
    assert gap >= -1e-8
    assert res.converged and supR < 1e-6 and wspread < 1e-6


def test_criterion_07_negative_case():
    bg, _, res, trace = preset_run("negative_weighted")
    label = classify_sign(bg).label
    bar = negative_case_barriers(trace, bg, slack=0.5)
    crossed = res.stats.first_negative_t is not None and trace.column("r")[0] > 0
    ok = (
        label == "negative" and crossed and bar.min_w > 0 and bar.crossing_reached
        and bar.upper_ok and res.converged and res.r_inf_estimate < 0
    )
    record_acceptance(
        7, ok,
        f"label={label} r(0)={trace.column('r')[0]:.4g} crossing t={res.stats.first_negative_t} "
        f"min w={bar.min_w:.4f} upper barrier {bar.worst_upper:.3f} <= {bar.upper_bound:.3f} "
        f"r_inf={res.r_inf_estimate:.6g}",
    )
    assert ok


def test_criterion_08_spectral_structure():
    ex = Exponents(3, 1.0)
    exact = ex.alpha * (np.pi * np.arange(6)) ** 2
    errs, hs = [], []
    for N in (256, 512, 1024):
        bg = build_background("flat_interval", {"n": 3, "m": 1.0}, nodes=N)
        spec = eigensolve(assemble_linearized(bg, np.ones(N)), 6)
        errs.append(np.abs(spec.lambdas[1:] - exact[1:]) / exact[1:])
        hs.append(bg.h)
    rel_1024 = errs[-1]
    lam0 = abs(spec.lambdas[0]) / exact[1]
    orders = [RefinementReport.fit(hs, [e[a] for e in errs]).order for a in range(5)]
    gram = float(np.max(np.abs(spec.gram() - np.eye(6))))

    bg = build_background("flat_interval", {"n": 3, "m": 1.0}, nodes=512)
    rho = np.ones(512)
    ours = eigensolve(assemble_linearized(bg, rho), 6).lambdas
    ref, _ = dense_reference_spectrum(bg, rho, 6)
    agree = float(np.max(np.abs(ours - ref) / np.maximum(np.abs(ref), 1.0)))

    ok = rel_1024.max() <= 1e-3 and lam0 <= 1e-3 and min(orders) >= 1.5 and gram <= 1e-10 and agree <= 1e-8
    record_acceptance(
        8, ok,
        f"max rel err a=1..5 {rel_1024.max():.2e} (lambda_0/lambda_1 {lam0:.1e}); min order {min(orders):.3f}; "
        f"Gram dev {gram:.1e}; dense agreement {agree:.1e}",
    )
    assert ok


def test_criterion_09_transformation_law():
    hs, errs = [], []
    for N in (128, 256, 512):
        bg = build_background("flat_interval", {"n": 3, "m": 2.0, "phi_amp": 0.3, "phi_freq": 2.0}, nodes=N)
        x = bg.coords()[0]
        w = 1 + 0.1 * np.cos(np.pi * x)
        errs.append(float(np.max(np.abs(direct_curvature(bg, w) - curvature_from_w(bg, w)))))
        hs.append(bg.h)
    rep = RefinementReport.fit(hs, errs)
    ok = rep.order >= 1.5
    record_acceptance(9, ok, f"fitted order {rep.order:.3f}; errors {', '.join(f'{e:.2e}' for e in errs)}")
    assert ok


def test_criterion_10_integration_by_parts():
    orders = []
    for seed in range(10):
        hs, errs = [], []
        for N in (256, 512, 1024):
            bg = build_background("flat_interval", {"n": 3, "m": 2.0, "phi_amp": 0.3}, nodes=N)
            f = random_neumann_field(bg, seed)
            u = random_neumann_field(bg, seed + 100)
            errs.append(ibp_residual(bg, f, u, weighted_laplacian(bg, u)))
            hs.append(bg.h)
        orders.append(RefinementReport.fit(hs, errs).order)
    ok = min(orders) >= 1.5
    record_acceptance(10, ok, f"orders over 10 seeds: min {min(orders):.3f}, max {max(orders):.3f}")
    assert ok


def test_criterion_11_energy_consistency():
    worst_gap, worst_scale = 0.0, 0.0
    for family, params in (("spherical_cap", {"m": 1.0}), ("flat_interval", {"m": 2.0, "phi_amp": 0.5})):
        bg = build_background(family, params, nodes=256)
        ex = Exponents.of(bg)
        for seed in range(10):
            w = normalize_volume(bg, random_neumann_field(bg, seed, amplitude=0.3))
            s = ConformalState.from_w(bg, w)
            E = energy(bg, w)
            worst_gap = max(worst_gap, abs(E - ex.c_R * s.r) / bg.h**2)
            for c in (0.5, 2.0, 10.0):
                worst_scale = max(worst_scale, abs(energy(bg, c * w) - E) / abs(E))
    ok = worst_gap <= 1.0 and worst_scale <= 1e-12
    record_acceptance(11, ok, f"max |E - c_R r|/h^2 = {worst_gap:.2e}; max scale defect {worst_scale:.1e}")
    assert ok


def test_criterion_12_decay_fit():
    t = np.linspace(1.0, 100.0, 400)
    synth = fit_power_law(t, 3.0 + t ** (-1.0 / 3.0), 3.0)
    _, _, res, trace = preset_run("positive_cap_perturbed")
    tol = resolve("positive_cap_perturbed").get("flow", "tol_conv")
    fit = fit_decay_exponent(trace, res.r_inf_estimate, tol)
    real_ok = fit.super_polynomial or 0 < fit.gamma_est < 1
    ok = abs(synth.gamma_est - 0.5) <= 1e-3 and abs(synth.beta - 1 / 3) <= 1e-3 and real_ok
    record_acceptance(
        12, ok,
        f"synthetic gamma {synth.gamma_est:.6f}; cap run gamma_est {fit.gamma_est:.4g} "
        f"super-polynomial={fit.super_polynomial} over {fit.rows_used} rows",
    )
    assert ok
