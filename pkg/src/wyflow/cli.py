"""Command-line scenario runner.

Subcommands: ``run``, ``classify``, ``spectrum`` and ``verify``.  Exit status is 0
on success, 2 when a run stops at ``max_steps`` and 1 on any error.
"""
from __future__ import annotations

import argparse
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import oracle
from .background import build_background, weighted_laplacian
from .config import PRESETS, ConfigError, ScenarioConfig, resolve
from .conformal import ConformalState, curvature_from_w
from .flow import FlowConfig, FlowTrace, run, step
from .output import read_field, write_csv, write_field, write_json, atomic_write_text
from .spectral import assemble_linearized, classify_sign, eigensolve

log = logging.getLogger("wyflow")

EXIT_OK, EXIT_ERROR, EXIT_MAX_STEPS = 0, 1, 2
CHECKS = ("transformation_law", "integration_by_parts", "dense_spectrum", "dr_dt")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="INI-style scenario file")
    common.add_argument("--scenario", metavar="NAME", help=f"preset: {', '.join(PRESETS)}")
    common.add_argument("--out", metavar="DIR", help="output directory")
    common.add_argument("--dt", type=float, help="fixed time step")
    common.add_argument("--tol", type=float, help="convergence tolerance on sup|R - r|")
    common.add_argument("--max-steps", type=int, dest="max_steps")
    common.add_argument("--mesh", type=int, help="nodes per axis")
    common.add_argument("--seed", type=int)
    common.add_argument("--format", choices=("csv", "json"))
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="wyflow", description="Conformal curvature flow on weighted manifolds with Neumann boundary")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("run", parents=[common], help="integrate the flow")
    sub.add_parser("classify", parents=[common], help="sign of the conformal class")
    sp = sub.add_parser("spectrum", parents=[common], help="linearized spectrum")
    sp.add_argument("--k", type=int, help="number of eigenpairs")
    vp = sub.add_parser("verify", parents=[common], help="oracle suite")
    vp.add_argument("--checks", help=f"comma list from {', '.join(CHECKS)}")
    return p


def _overrides(args) -> dict:
    o: dict[str, dict] = {}

    def put(section, key, value):
        if value is not None:
            o.setdefault(section, {})[key] = value

    put("output", "dir", args.out)
    put("output", "format", args.format)
    put("flow", "dt", args.dt)
    put("flow", "tol_conv", args.tol)
    put("flow", "max_steps", args.max_steps)
    put("background", "nodes", args.mesh)
    put("run", "seed", args.seed)
    put("spectrum", "k", getattr(args, "k", None))
    put("verify", "checks", getattr(args, "checks", None))
    return o


def make_background(cfg: ScenarioConfig):
    family, params, nodes = cfg.background_params()
    return build_background(family, params, nodes=nodes)


def initial_field(cfg: ScenarioConfig, bg) -> np.ndarray:
    kind = cfg.get("initial", "kind")
    if kind == "constant":
        return np.ones(bg.node_count)
    if kind == "trig":
        amp = cfg.get("initial", "amplitude")
        freq = cfg.get("initial", "frequency")
        parts = []
        for (a, b), ax in zip(bg.grid.extents, bg.grid.axes()):
            parts.append(np.cos(freq * math.pi * (ax - a) / (b - a)))
        shape = parts[0] if len(parts) == 1 else np.multiply.outer(parts[0], parts[1]).ravel()
        return 1.0 + amp * shape
    if kind == "random":
        return oracle.random_neumann_field(bg, cfg.get("run", "seed"), amplitude=cfg.get("initial", "amplitude") or 0.1)
    path = cfg.get("initial", "path")
    if not path:
        raise ConfigError("initial kind 'file' needs a path")
    w = read_field(path)
    if w.size != bg.node_count:
        raise ConfigError(f"initial field has {w.size} values, grid has {bg.node_count}")
    return w


def _out_dir(cfg: ScenarioConfig) -> Path:
    out = Path(cfg.get("output", "dir"))
    out.mkdir(parents=True, exist_ok=True)
    atomic_write_text(out / "config.ini", cfg.to_ini())
    return out


def write_trace(path, trace: FlowTrace):
    return write_csv(path, trace.columns, trace.rows)


def cmd_run(cfg: ScenarioConfig) -> int:
    bg = make_background(cfg)
    w0 = initial_field(cfg, bg)
    fc = FlowConfig(**cfg.flow_kwargs())
    out = _out_dir(cfg)
    result, trace = run(bg, w0, fc)
    write_trace(out / "trace.csv", trace)
    write_json(out / "summary.json", result.summary())
    coords = bg.coords()
    write_field(out / "w_final.csv", coords, result.w_final, "w")
    write_field(out / "R_final.csv", coords, result.R_final, "R")
    if cfg.get("output", "format") == "json":
        write_json(out / "trace.json", {"columns": list(trace.columns), "rows": [list(r) for r in trace.rows]})
    print(
        f"converged={result.converged} steps={result.steps_taken} r_inf={result.r_inf_estimate:.12g} "
        f"case={result.case_label}"
    )
    return EXIT_OK if result.converged else EXIT_MAX_STEPS


def cmd_classify(cfg: ScenarioConfig) -> int:
    c = classify_sign(make_background(cfg))
    print(f"{c.label} {c.lambda0:.17g}")
    return EXIT_OK


def cmd_spectrum(cfg: ScenarioConfig) -> int:
    bg = make_background(cfg)
    k = cfg.get("spectrum", "k")
    if not 1 <= k <= bg.node_count:
        raise ConfigError(f"k={k} must lie between 1 and the node count {bg.node_count}")
    w_inf = initial_field(cfg, bg)
    spec = eigensolve(assemble_linearized(bg, w_inf), k)
    out = _out_dir(cfg)
    write_csv(out / "spectrum.csv", ["index", "lambda"], enumerate(spec.lambdas))
    names = ["x", "y"][: bg.grid.ndim] + [f"psi_{a}" for a in range(k)]
    write_csv(out / "modes.csv", names, zip(*[c.ravel() for c in bg.coords()], *spec.modes.T))
    for a, lam in enumerate(spec.lambdas):
        print(f"{a} {lam:.17g}")
    return EXIT_OK


def _meshes(cfg: ScenarioConfig, family: str):
    try:
        ms = [int(s) for s in cfg.get("verify", "meshes").split(",") if s.strip()]
    except ValueError as exc:
        raise ConfigError(f"bad mesh list: {exc}") from None
    if len(ms) < 3:
        raise ConfigError("verify needs at least three meshes")
    return ms


def _bg_at(cfg: ScenarioConfig, nodes):
    family, params, _ = cfg.background_params()
    if family == "flat_rectangle":
        nodes = (nodes, nodes)
    return build_background(family, params, nodes=nodes)


def verify_suite(cfg: ScenarioConfig, out: Path | None = None) -> list[tuple[str, bool, str]]:
    """Run the configured oracle checks; returns ``(name, passed, detail)`` per check."""
    checks = [c.strip() for c in cfg.get("verify", "checks").split(",") if c.strip()]
    if not checks:
        raise ConfigError(f"no checks selected; choose from {', '.join(CHECKS)}")
    bad = [c for c in checks if c not in CHECKS]
    if bad:
        raise ConfigError(f"unknown checks {bad}; choose from {', '.join(CHECKS)}")
    family, _, _ = cfg.background_params()
    meshes = _meshes(cfg, family)
    min_order = cfg.get("verify", "min_order")
    results = []

    if "transformation_law" in checks:
        if family != "flat_interval":
            results.append(("transformation_law", True, "skipped: flat_interval only"))
        else:
            hs, errs = [], []
            for N in meshes:
                bg = _bg_at(cfg, N)
                x = bg.coords()[0]
                w = 1 + 0.1 * np.cos(np.pi * x / x[-1])
                errs.append(float(np.max(np.abs(oracle.direct_curvature(bg, w) - curvature_from_w(bg, w)))))
                hs.append(bg.h)
            rep = oracle.RefinementReport.fit(hs, errs)
            if out:
                atomic_write_text(out / "refinement_transformation_law.csv", rep.to_csv())
            results.append(("transformation_law", rep.order >= min_order, f"order {rep.order:.3f}"))

    if "integration_by_parts" in checks:
        worst = math.inf
        for seed in range(cfg.get("verify", "seeds")):
            hs, errs = [], []
            for N in meshes:
                bg = _bg_at(cfg, N)
                f = oracle.random_neumann_field(bg, seed)
                u = oracle.random_neumann_field(bg, seed + 1000)
                errs.append(oracle.ibp_residual(bg, f, u, weighted_laplacian(bg, u)))
                hs.append(bg.h)
            rep = oracle.RefinementReport.fit(hs, errs)
            if out:
                atomic_write_text(out / f"refinement_ibp_seed{seed}.csv", rep.to_csv())
            worst = min(worst, rep.order)
        results.append(("integration_by_parts", worst >= min_order, f"min order {worst:.3f}"))

    if "dense_spectrum" in checks:
        bg = _bg_at(cfg, min(meshes[-1], 512))
        if bg.grid.ndim != 1:
            results.append(("dense_spectrum", True, "skipped: one-dimensional grids only"))
        else:
            k = min(cfg.get("spectrum", "k"), bg.node_count)
            rho = np.ones(bg.node_count)
            lam = eigensolve(assemble_linearized(bg, rho), k).lambdas
            ref, _ = oracle.dense_reference_spectrum(bg, rho, k)
            rel = float(np.max(np.abs(lam - ref) / np.maximum(np.abs(ref), 1.0)))
            results.append(("dense_spectrum", rel <= cfg.get("verify", "spectrum_rtol"), f"max rel {rel:.3e}"))

    if "dr_dt" in checks:
        bg = make_background(cfg)
        fc = FlowConfig(**cfg.flow_kwargs())
        from .conformal import normalize_volume
        from .flow import stable_dt

        s0 = ConformalState.from_w(bg, normalize_volume(bg, initial_field(cfg, bg)))
        dt = stable_dt(bg, s0, fc)
        frags = []
        for h in (dt, 0.5 * dt):
            states = [s0]
            for _ in range(2):
                states.append(step(bg, states[-1], h, fc))
            frags.append([s.w for s in states])
        cc = oracle.dr_dt_crosscheck(bg, frags[0], frags[1], dt)
        if not cc.defined:
            results.append(("dr_dt", True, "steady state: ratio undefined"))
        else:
            lo, hi = cfg.get("verify", "ratio_low"), cfg.get("verify", "ratio_high")
            results.append(("dr_dt", lo <= cc.ratio <= hi, f"ratio {cc.ratio:.3f}"))
    return results


def cmd_verify(cfg: ScenarioConfig) -> int:
    out = _out_dir(cfg)
    results = verify_suite(cfg, out)
    write_csv(out / "verify.csv", ["check", "passed", "detail"], results)
    for name, ok, detail in results:
        print(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")
    return EXIT_OK if all(ok for _, ok, _ in results) else EXIT_ERROR


COMMANDS = {"run": cmd_run, "classify": cmd_classify, "spectrum": cmd_spectrum, "verify": cmd_verify}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = resolve(args.scenario, args.config, _overrides(args))
        return COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"wyflow: {exc}", file=sys.stderr)
        if args.command == "verify":
            parser.print_usage(sys.stderr)
        return EXIT_ERROR
    except (OSError, ValueError, ArithmeticError) as exc:
        print(f"wyflow: error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
