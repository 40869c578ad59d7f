"""Batch command-line interface.

Subcommands: simulate, rate, instanton, girsanov, verify.
Exit codes: 0 success, 1 criterion failure, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from .dynamics import DynamicsSpec, run_replicas
from .functionals import v_h_energy, w_gamma, w_j_delta
from .girsanov import entropy_estimate, replica_breakdown
from .lattice import build_ball, constant_tilt
from .measures import Bump, PolarMeasure, mollified_density
from .rates import (RadialDensity, build_rate_report, constant_density,
                    instanton_profile_exact, sine_instanton_density, solve_instanton,
                    step_density, upsilon_closed)
from .runio import (ConfigError, RunConfig, load_config, resolve_out_dir,
                    write_bonds_csv, write_density_csv, write_girsanov_csv,
                    write_occupations_csv, write_summary)
from .verify import DEFAULT_SEED, run_suite

DENSITY_PRESETS = {
    "constant-alpha": lambda alpha: constant_density(alpha),
    "sine-instanton": lambda alpha: sine_instanton_density(2049),
    "step": lambda alpha: step_density(0.9, alpha, 2048),
}


def _fail(msg: str, code: int = 2):
    print(f"error: {msg}", file=sys.stderr)
    raise SystemExit(code)


def _load_run_config(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    if args.seed is not None:
        cfg.seed = args.seed
    if getattr(args, "replicas", None) is not None:
        cfg.replicas = args.replicas
    if args.workers is not None:
        cfg.workers = args.workers
    return cfg.validate()


def _standard_bump(cfg: RunConfig):
    hi = min(0.35, cfg.r_max - 2.0 * cfg.delta - 0.05)
    return Bump(0.2, hi) if hi > 0.25 else None


def cmd_simulate(args) -> int:
    cfg = _load_run_config(args)
    out = resolve_out_dir(cfg.out_dir, args.out, "runs/simulate")
    chash = cfg.hash()
    written = []
    try:
        t_start = time.perf_counter()
        ball = build_ball(cfg.T, cfg.r_max)
        tilt = cfg.tilt_profile()
        spec = DynamicsSpec(T=cfg.T, tilt=tilt, seed=cfg.seed, track_bonds=True)
        profile = tilt if tilt is not None else cfg.alpha
        reps = run_replicas(ball, spec, cfg.replicas, profile, workers=cfg.workers)
        n = cfg.replicas
        occ = np.sum([r.accumulator.occ_time for r in reps], axis=0) / n
        disag = np.sum([r.accumulator.bond_disagreement for r in reps], axis=0) / n
        signed = np.sum([r.accumulator.bond_signed for r in reps], axis=0) / n

        summary = {
            "schema": "polarssep-simulate-1",
            "config": cfg.canonical(),
            "config_hash": chash,
            "seconds": None,
            "replica_seeds": [[cfg.seed, r.replica] for r in reps],
            "event_counts": [r.accumulator.event_count for r in reps],
            "origin_occupation_mean": float(np.mean([r.accumulator.origin_occupation for r in reps])),
        }

        if "occupations" in cfg.observables:
            path = out / "occupations.csv"
            write_occupations_csv(path, ball, occ, chash)
            written.append(path)
        if "bonds" in cfg.observables:
            path = out / "bonds.csv"
            write_bonds_csv(path, ball, disag, signed, chash)
            written.append(path)
        if "girsanov" in cfg.observables:
            report_tilt = tilt if tilt is not None else constant_tilt(cfg.alpha)
            downs = [replica_breakdown(ball, report_tilt, r, cfg.T) for r in reps]
            path = out / "girsanov.csv"
            write_girsanov_csv(path, downs, chash)
            written.append(path)
            summary["girsanov_scaled_mean"] = float(np.mean([d.scaled_total for d in downs]))

        dens = None
        if "density" in cfg.observables:
            measure = PolarMeasure.from_occupation_times(ball, occ * n, 1.0, n)
            lo, hi = 2.0 * cfg.delta, min(0.5, cfg.r_max - 2.0 * cfg.delta)
            grid = np.linspace(lo, hi, 101)
            dens = mollified_density(measure, cfg.delta, grid)
            path = out / "density.csv"
            write_density_csv(path, dens, chash)
            written.append(path)

        bump = _standard_bump(cfg)
        if bump is not None:
            summary["w_functional"] = float(np.mean(
                [w_j_delta(ball, r.accumulator, bump, cfg.delta, cfg.alpha) for r in reps]))
            summary["v_functional"] = float(np.mean(
                [v_h_energy(ball, r.accumulator, bump) for r in reps]))
        if tilt is not None:
            summary["w_gamma"] = float(np.mean([w_gamma(ball, r.accumulator, tilt) for r in reps]))

        if cfg.figures and dens is not None:
            from .plots import render_density
            written.append(Path(render_density(out / "density.png", dens, tilt)))

        summary["seconds"] = time.perf_counter() - t_start
        write_summary(out / "summary.json", summary)
        print(f"run written to {out}")
        return 0
    except (ConfigError, ValueError) as exc:
        for path in written:
            path.unlink(missing_ok=True)
        _fail(str(exc))


def cmd_rate(args) -> int:
    alpha = args.alpha
    if args.density:
        try:
            dens = RadialDensity.from_csv(args.density)
        except (OSError, ValueError) as exc:
            _fail(f"density file {args.density}: {exc}")
    else:
        preset = args.preset or "constant-alpha"
        if preset not in DENSITY_PRESETS:
            _fail(f"unknown preset {preset!r}; have {sorted(DENSITY_PRESETS)}")
        dens = DENSITY_PRESETS[preset](alpha)
    report = build_rate_report(dens, alpha, basis_size=args.basis,
                               preset=args.preset or args.density or "constant-alpha")
    payload = report.to_json()
    print(payload)
    out = resolve_out_dir(None, args.out, "runs/rate")
    (out / "rate_report.json").write_text(payload + "\n")
    if not args.no_figures:
        from .plots import render_rate_report
        render_rate_report(out / "rate_report.png", report)
    return 0


def cmd_instanton(args) -> int:
    if not (0.0 <= args.alpha <= 1.0 and 0.0 <= args.beta <= 1.0):
        _fail(f"endpoint densities must lie in [0, 1], got alpha={args.alpha} beta={args.beta}")
    try:
        res = solve_instanton(args.alpha, args.beta, args.n, mode=args.mode)
    except (ValueError, RuntimeError) as exc:
        _fail(str(exc))
    closed = upsilon_closed(args.alpha, args.beta)
    print(f"instanton value  {res.value:.10f}")
    print(f"closed-form rate {closed:.10f}")
    out = resolve_out_dir(None, args.out, "runs/instanton")
    res.density.to_csv(out / "instanton.csv")
    if not args.no_figures:
        from .plots import render_instanton
        exact = instanton_profile_exact(args.alpha, args.beta, res.density.grid)
        render_instanton(out / "instanton.png", res, exact)
    write_summary(out / "summary.json", {
        "schema": "polarssep-instanton-1",
        "alpha": args.alpha, "beta": args.beta, "grid_size": args.n,
        "mode": res.mode, "value": res.value, "closed_form": closed,
        "relative_gap": abs(res.value - closed) / max(closed, 1e-6),
    })
    return 0


def cmd_girsanov(args) -> int:
    cfg = _load_run_config(args)
    tilt = cfg.tilt_profile()
    if tilt is None:
        _fail("girsanov requires a tilt (set `tilt:` in the config)")
    out = resolve_out_dir(cfg.out_dir, args.out, "runs/girsanov")
    try:
        ball = build_ball(cfg.T, cfg.r_max)
        est = entropy_estimate(ball, tilt, max(cfg.replicas, 2), cfg.T,
                               seed=cfg.seed, workers=cfg.workers)
    except (ConfigError, ValueError) as exc:
        _fail(str(exc))
    chash = cfg.hash()
    write_girsanov_csv(out / "girsanov.csv", est.breakdowns, chash)
    from .verify import _tilt_rate_I
    target = -_tilt_rate_I(tilt)
    write_summary(out / "summary.json", {
        "schema": "polarssep-girsanov-1",
        "config": cfg.canonical(), "config_hash": chash,
        "entropy_estimate": est.value, "stderr": est.stderr,
        "target_minus_rate": target, "replicas": est.replicas,
    })
    if cfg.figures:
        from .plots import render_girsanov
        render_girsanov(out / "girsanov.png", est.breakdowns)
    print(f"entropy estimate {est.value:+.6f} +- {est.stderr:.6f} (target {target:+.6f})")
    return 0


def cmd_verify(args) -> int:
    report = run_suite(args.suite, seed=args.seed if args.seed is not None else DEFAULT_SEED,
                       workers=args.workers, inject_fault=args.inject_fault)
    for line in report.lines():
        print(line)
    if args.out:
        out = resolve_out_dir(None, args.out, "runs/verify")
        write_summary(out / "verify.json", report.as_dict())
    print(("suite PASSED" if report.passed else "suite FAILED"))
    return 0 if report.passed else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="polarssep",
        description="Polar-measure workbench for the 2d symmetric exclusion process")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, replicas=True):
        p.add_argument("--config", help="YAML run configuration")
        p.add_argument("--out", help="output directory")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--workers", type=int, default=None)
        if replicas:
            p.add_argument("--replicas", type=int, default=None)

    p_sim = sub.add_parser("simulate", help="run trajectories and write observables")
    common(p_sim)
    p_sim.set_defaults(func=cmd_simulate)

    p_rate = sub.add_parser("rate", help="evaluate rate functionals of a density")
    p_rate.add_argument("--density", help="two-column CSV (r, m)")
    p_rate.add_argument("--preset", help="named density preset")
    p_rate.add_argument("--alpha", type=float, default=0.5)
    p_rate.add_argument("--basis", type=int, default=64)
    p_rate.add_argument("--out", help="output directory")
    p_rate.add_argument("--no-figures", action="store_true")
    p_rate.set_defaults(func=cmd_rate)

    p_inst = sub.add_parser("instanton", help="solve the occupation-time instanton")
    p_inst.add_argument("--alpha", type=float, required=True)
    p_inst.add_argument("--beta", type=float, required=True)
    p_inst.add_argument("-n", type=int, default=1024, help="grid size")
    p_inst.add_argument("--mode", choices=["substitution", "direct"], default="substitution")
    p_inst.add_argument("--out", help="output directory")
    p_inst.add_argument("--no-figures", action="store_true")
    p_inst.set_defaults(func=cmd_instanton)

    p_gir = sub.add_parser("girsanov", help="tilted replicas and the entropy estimate")
    common(p_gir)
    p_gir.set_defaults(func=cmd_girsanov)

    p_ver = sub.add_parser("verify", help="run the acceptance suite")
    p_ver.add_argument("--suite", choices=["fast", "full"], default="fast")
    p_ver.add_argument("--seed", type=int, default=None)
    p_ver.add_argument("--workers", type=int, default=None)
    p_ver.add_argument("--out", help="write verify.json here")
    p_ver.add_argument("--inject-fault", choices=["detailed-balance"], default=None,
                       help="deliberately corrupt one check (tests the tests)")
    p_ver.set_defaults(func=cmd_verify)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
