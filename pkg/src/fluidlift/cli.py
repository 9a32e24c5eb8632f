"""Command line entry point: ``fluidlift <command> ...``.

Exit codes: 0 on success, 2 for unreadable or invalid input, 3 when a
numerical failure stops the computation.
"""
import argparse
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import excitation, harness, inertia_lut, trajectory
from .errors import InputError, NumericalError, ParseError, ValidationError
from .manifold import quaternion_to_rotation

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_NUMERIC = 3


def _simulate_one(path, out_dir, horizon, plots):
    sc = harness.load_scenario(path)
    if horizon is not None:
        sc.config["horizon"] = float(horizon)
    if not plots:
        sc.config["output"]["plots"] = False
    metrics = harness.run(sc, out_dir=out_dir)
    return path, metrics.summary


def cmd_simulate(args):
    paths = args.scenario
    if len(paths) == 1:
        outs = [args.out]
    else:
        outs = [os.path.join(args.out, os.path.splitext(os.path.basename(p))[0]) for p in paths]
    jobs = [(p, o, args.horizon, not args.no_plots) for p, o in zip(paths, outs)]
    if args.jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_simulate_one, *zip(*jobs)))
    else:
        results = [_simulate_one(*j) for j in jobs]
    for (path, s), out in zip(results, outs):
        print(f"{path}: t_final={s['t_final']:.3f} s  |x_L - x_d|={s['terminal_position_error']:.4f} m  "
              f"mass rel. error={s['terminal_mass_rel_error']:.4f}  -> {out}")
    return EXIT_OK


def cmd_check_pe(args):
    try:
        header, data = harness.read_trace(args.trace)
    except OSError as exc:
        raise InputError(f"cannot read trace: {exc}") from exc
    except ValueError as exc:
        raise ParseError(f"malformed trace: {exc}") from exc
    need = ("t", "x", "vx", "ax", "Omega_x")
    missing = [c for c in need if c not in header]
    if missing:
        raise ParseError(f"trace lacks columns {missing}")
    col = header.index
    t = data[:, col("t")]
    x = data[:, col("x"):col("x") + 3]
    v = data[:, col("vx"):col("vx") + 3]
    a = data[:, col("ax"):col("ax") + 3]
    Om = data[:, col("Omega_x"):col("Omega_x") + 3]
    w = a.copy()
    w[:, 2] += args.g
    s = args.gamma * excitation.pe_integrand(a, args.g)
    Omd = np.gradient(Om, t, axis=0)
    jerk = np.gradient(a, t, axis=0)
    hydro = excitation.hydrostatic_validity(a, Om, Omd, jerk, args.tank_radius, args.eps_max, args.jerk_max, args.g)
    H = excitation.energy(x, v, args.g)

    reports = []
    for sl in excitation.window_slices(t, args.T):
        rep = excitation.pe_window_check(t[sl], s[sl, None, None], args.mu,
                                         np.inf if args.M_cap is None else args.M_cap)
        if args.M_cap is None:
            rep.verdicts["upper"] = None
        rep.S11_int = rep.int_lmin
        rep.H_drift = abs(float(H[sl][-1] - H[sl][0]))
        rep.eps_max = float(hydro.eps[sl].max())
        rep.jerk_max = float(hydro.jerk[sl].max())
        rep.verdicts["hydrostatic"] = not bool(hydro.flags[sl].any())
        reports.append(rep)
    if not reports:
        raise InputError(f"trace spans {t[-1] - t[0]:.3g} s, shorter than one window of {args.T:g} s")
    if args.report:
        excitation.write_window_report(args.report, reports)
    worst = min(reports, key=lambda r: r.int_lmin)
    ok = all(r.verdicts["lower"] for r in reports)
    print(f"windows: {len(reports)}  worst integral: {worst.int_lmin:.6g} at t={worst.t_start:.3f} s  "
          f"mu: {args.mu:g}  excitation: {'PASS' if ok else 'FAIL'}")
    print(f"hydrostatic flags: {hydro.flagged_fraction:.3f} of samples")
    return EXIT_OK


def _parse_grid(text):
    try:
        parts = [int(p) for p in text.lower().split("x")]
    except ValueError as exc:
        raise ParseError(f"grid must look like 21x13x24, got {text!r}", field="grid") from exc
    if len(parts) != 3 or min(parts) < 2:
        raise ParseError(f"grid must have three sizes of at least 2, got {text!r}", field="grid")
    return parts


def _load_tank(path):
    try:
        with open(path, encoding="utf-8") as fh:
            d = json.load(fh)
    except OSError as exc:
        raise InputError(f"cannot read tank file: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, line=exc.lineno) from exc
    if "tank" in d and isinstance(d["tank"], dict):
        d = d["tank"]
    try:
        return inertia_lut.TankGeometry.from_dict(d, base_dir=os.path.dirname(os.path.abspath(path)))
    except (KeyError, TypeError, ValueError) as exc:
        raise ValidationError([f"tank: {exc}"]) from exc


def cmd_build_lut(args):
    tank = _load_tank(args.tank)
    ns, nt, npf = _parse_grid(args.grid)
    lut = inertia_lut.build_lut(tank, ns, nt, npf, resolution=args.res, workers=args.workers)
    inertia_lut.save_lut(lut, args.out)
    print(f"wrote {args.out}: grid {ns}x{nt}x{npf}, resolution {args.res}, "
          f"max plane residual {float(np.max(lut.residuals)):.3e} m^3")
    return EXIT_OK


def _parse_floats(text, name):
    try:
        return [float(p) for p in text.replace(",", " ").split()]
    except ValueError as exc:
        raise ParseError(f"{name}: expected numbers, got {text!r}", field=name) from exc


def cmd_query(args):
    try:
        lut = inertia_lut.load_lut(args.lut)
    except OSError as exc:
        raise InputError(f"cannot read table: {exc}") from exc
    vals = _parse_floats(" ".join(args.attitude), "attitude") if args.attitude else [1.0, 0.0, 0.0, 0.0]
    if len(vals) == 4:
        R = quaternion_to_rotation(np.array(vals))
    elif len(vals) == 9:
        R = np.array(vals).reshape(3, 3)
        if np.linalg.norm(R.T @ R - np.eye(3)) > 1e-6 or np.linalg.det(R) <= 0:
            raise ValidationError(["attitude: nine values must form a rotation matrix (row-major)"])
    else:
        raise ValidationError(["attitude: give a quaternion (w x y z) or nine matrix entries"])
    s = inertia_lut.query(lut, args.mass, R)
    out = {"mass": args.mass, "sigma": s.sigma, "J": s.J.tolist(), "O_cm": s.O_cm.tolist()}
    print(json.dumps(out, indent=2))
    return EXIT_OK


def _load_waypoints(path):
    try:
        with open(path, encoding="utf-8") as fh:
            d = json.load(fh)
    except OSError as exc:
        raise InputError(f"cannot read waypoints: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, line=exc.lineno) from exc
    try:
        if isinstance(d, list):
            arr = np.asarray(d, dtype=float)
            return trajectory.Waypoints(arr[:, 0], arr[:, 1:4])
        return trajectory.Waypoints(d["t"], d["x"], d.get("v0"), d.get("v1"))
    except (KeyError, IndexError, TypeError, ValueError) as exc:
        raise ValidationError([f"waypoints: {exc}"]) from exc


def cmd_plan(args):
    wp = _load_waypoints(args.waypoints)
    if args.kind == "tension":
        plan = trajectory.tension_spline(wp, args.tau)
    elif args.kind == "cubic":
        plan = trajectory.cubic_spline(wp)
    else:
        plan = trajectory.min_jerk_quintic(wp)
    if args.dither:
        vals = _parse_floats(args.dither, "dither")
        if len(vals) != 2:
            raise ValidationError(["dither: expected 'amplitude,frequency'"])
        a, om = vals
        plan = trajectory.add_dither(plan, [a, a, a], [om, om, om], accel_cap=args.accel_cap,
                                     freq_cap=args.freq_cap, pe_T=args.pe_T)
    t = np.arange(plan.t0, plan.t1 + 0.5 * args.dt, args.dt)
    plan.to_csv(args.out, t)
    msg = f"wrote {args.out}: {len(t)} samples, kind {plan.kind}"
    if plan.report:
        msg += (f", worst {plan.report['pe_T']:g} s window integral "
                f"{plan.report['worst_before']:.4g} -> {plan.report['worst_after']:.4g}")
    print(msg)
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="fluidlift", description="Cooperative transport of a draining load.")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="run one or more scenario files")
    s.add_argument("--scenario", nargs="+", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--horizon", type=float, default=None, help="override the scenario horizon [s]")
    s.add_argument("--jobs", type=int, default=1)
    s.add_argument("--no-plots", action="store_true")
    s.set_defaults(func=cmd_simulate)

    c = sub.add_parser("check-pe", help="windowed excitation check on a trace CSV")
    c.add_argument("--trace", required=True)
    c.add_argument("--T", type=float, default=2.0)
    c.add_argument("--mu", type=float, required=True)
    c.add_argument("--M-cap", type=float, default=None)
    c.add_argument("--gamma", type=float, default=1.0)
    c.add_argument("--g", type=float, default=9.81)
    c.add_argument("--tank-radius", type=float, default=0.0)
    c.add_argument("--eps-max", type=float, default=excitation.EPS_MAX)
    c.add_argument("--jerk-max", type=float, default=excitation.JERK_MAX)
    c.add_argument("--report", default=None, help="window report CSV path")
    c.set_defaults(func=cmd_check_pe)

    b = sub.add_parser("build-lut", help="tabulate load inertia over fill level and gravity direction")
    b.add_argument("--tank", required=True)
    b.add_argument("--out", required=True)
    b.add_argument("--res", type=int, default=128)
    b.add_argument("--grid", default="21x13x24")
    b.add_argument("--workers", type=int, default=1)
    b.set_defaults(func=cmd_build_lut)

    q = sub.add_parser("query", help="interpolate a table at a mass and attitude")
    q.add_argument("--lut", required=True)
    q.add_argument("--mass", type=float, required=True)
    q.add_argument("--attitude", nargs="+", default=None, help="quaternion w x y z or 9 row-major entries")
    q.set_defaults(func=cmd_query)

    t = sub.add_parser("plan", help="build a reference trajectory and export it as CSV")
    t.add_argument("--waypoints", required=True)
    t.add_argument("--kind", choices=("tension", "cubic", "quintic"), default="tension")
    t.add_argument("--tau", type=float, default=0.0)
    t.add_argument("--dither", default=None, help="amplitude,frequency")
    t.add_argument("--accel-cap", type=float, default=None)
    t.add_argument("--freq-cap", type=float, default=None)
    t.add_argument("--pe-T", type=float, default=2.0)
    t.add_argument("--dt", type=float, default=0.01)
    t.add_argument("--out", default="plan.csv")
    t.set_defaults(func=cmd_plan)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ValidationError as exc:
        for v in exc.violations:
            print(f"invalid: {v}", file=sys.stderr)
        return EXIT_INPUT
    except (ParseError, InputError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except harness.SimulationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC if isinstance(exc.cause, NumericalError) else EXIT_INPUT
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
