"""Command-line front end.

Every command writes a JSON report (sorted keys) that embeds the full run
configuration and the tool version.  Exit status is 0 on success, 1 for a
malformed invocation or unreadable input, 2 for a numerical failure; in the
failure cases a structured error report goes to stderr.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import tempfile
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .approx import DEFAULT_DEGREE_CAP, ApproximationError, BumpSpec, shifted_bump_polynomial
from .bifurcate import (ModelMapDomainError, ModelMapSpec, PolycycleFlow, PolycycleReturn,
                        detect_cycles, detect_sigma0, model_map_roots,
                        model_map_search, solve_connection_break, trapping_curve,
                        return_side)
from .builder import BuiltPolycycle, PolycycleSpec, build_main3_family, build_polycycle, verify_invariants
from .flow import FlowError, integrate
from .graphic import (check_ch_conditions, delta_for_permutation, delta_max, graphic_number,
                      stability)
from .melnikov import PerturbationFamily, bump_family, melnikov_matrix
from .plot import render_svg

COMMANDS = ("build", "analyze", "simulate", "dulac", "melnikov", "break", "cycles",
            "modelmap", "bump-approx", "plot")


class UsageError(Exception):
    """Malformed configuration or input file (exit 1)."""


@dataclass
class RunConfig:
    command: str
    parameters: dict
    seed: int | None = None
    outputs: dict = field(default_factory=dict)
    threads: int = 1


# --- plumbing ----------------------------------------------------------------------

def threads_from_env() -> int:
    raw = os.environ.get("POLYCYCLE_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise UsageError(f"POLYCYCLE_THREADS must be an integer, got {raw!r}") from None
    if n < 1:
        raise UsageError("POLYCYCLE_THREADS must be >= 1")
    return n


def _default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, Path):
        return str(o)
    raise TypeError(f"not serializable: {type(o).__name__}")


def dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2, default=_default) + "\n"


def write_atomic(path, text: str) -> None:
    """Write ``text`` to ``path`` via a temp file in the same directory."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def report(cfg: RunConfig, result) -> dict:
    return {"tool": "polycycle", "version": __version__, "config": asdict(cfg), "result": result}


def emit(cfg: RunConfig, result, out: str | None) -> dict:
    rep = report(cfg, result)
    text = dumps(rep)
    if out:
        write_atomic(out, text)
    else:
        sys.stdout.write(text)
    return rep


def _floats(text: str, name: str, count: int | None = None) -> list:
    try:
        vals = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"--{name}: expected comma-separated numbers, got {text!r}") from None
    if count is not None and len(vals) != count:
        raise UsageError(f"--{name}: expected {count} values, got {len(vals)}")
    if not all(math.isfinite(v) for v in vals):
        raise UsageError(f"--{name}: values must be finite")
    return vals


def _load_json(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise UsageError(f"input file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path} is not valid JSON: {exc}") from None


def load_polycycle(path) -> tuple:
    """``(built, mu, family_name)`` from a build or break report (or raw polycycle JSON)."""
    data = _load_json(path)
    result = data.get("result", data)
    poly = result.get("polycycle", result)
    try:
        built = BuiltPolycycle.from_json(poly)
    except (KeyError, TypeError) as exc:
        raise UsageError(f"{path} does not describe a built polycycle ({exc})") from None
    mu = result.get("mu")
    return built, (None if mu is None else [float(m) for m in mu]), result.get("family")


def make_family(built, name: str) -> PerturbationFamily:
    if name == "main3":
        return build_main3_family(built)
    if name == "bump":
        return bump_family(built)
    raise UsageError(f"unknown family {name!r} (main3, bump)")


# --- commands ---------------------------------------------------------------------

def cmd_build(args, cfg):
    ratios = _floats(args.ratios, "ratios")
    if len(ratios) != args.n:
        raise UsageError(f"--ratios needs {args.n} values")
    try:
        built = build_polycycle(PolycycleSpec(args.n, tuple(ratios), args.orientation))
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    result = {"polycycle": built.to_json(), "invariants": verify_invariants(built)}
    emit(cfg, result, args.out)


def cmd_analyze(args, cfg):
    r = _floats(args.ratios, "ratios")
    try:
        d, plan = delta_max(r, args.tol)
        ok, witness = check_ch_conditions(r, args.tol)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    result = {"ratios": r, "graphic_number": graphic_number(r), "stability": stability(r, args.tol),
              "delta": d, "best_permutation": list(plan.permutation), "plan": plan.to_json(),
              "ch_pass": ok, "ch_witness": None if witness is None else list(witness)}
    emit(cfg, result, args.out)


def _field_at(built, family, mu):
    if mu is None or not any(mu):
        return built.field
    return make_family(built, family or "main3").field_at(mu)


def cmd_simulate(args, cfg):
    built, mu, family = load_polycycle(args.field)
    f = _field_at(built, family, mu)
    x0 = _floats(args.seed, "seed", 2)
    t0, t1 = _floats(args.tspan, "tspan", 2)
    tr = integrate(f, x0, (t0, t1), rtol=args.rtol, atol=args.atol)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t", "x1", "x2"])
    for t, (a, b) in zip(tr.times, tr.states):
        w.writerow([repr(float(t)), repr(float(a)), repr(float(b))])
    write_atomic(args.out, buf.getvalue())
    result = {"points": len(tr.times), "final": list(tr.final), "step_stats": tr.step_stats,
              "csv": args.out}
    emit(cfg, result, args.report)


def _svalues(text):
    try:
        a, b, k = text.split(":")
        a, b, k = float(a), float(b), int(k)
    except ValueError:
        raise UsageError("--svalues must be lo:hi:count") from None
    if not (0 < a < b) or k < 2:
        raise UsageError("--svalues needs 0 < lo < hi and count >= 2")
    return np.geomspace(a, b, k)


def cmd_dulac(args, cfg):
    built, mu, family = load_polycycle(args.field)
    if not 1 <= args.saddle_index <= built.n:
        raise UsageError("--saddle-index out of range")
    sv = _svalues(args.svalues)
    flow = PolycycleFlow(built, make_family(built, family or "main3") if mu else None, mu)
    side = return_side(built, detect_sigma0(built))
    fwd = flow.passage_exponent(args.saddle_index, sv, side=side)
    bwd = flow.passage_exponent(args.saddle_index, sv, side=side, backward=True)
    r = built.ratios[args.saddle_index - 1]
    result = {"saddle": args.saddle_index, "ratio": r, "forward": fwd.to_json(),
              "backward": bwd.to_json(), "s_values": sv.tolist(),
              "relative_error": abs(fwd.exponent - r) / r,
              "reverse_relative_error": abs(bwd.exponent - 1 / r) * r}
    emit(cfg, result, args.out)


def cmd_melnikov(args, cfg):
    built, _, _ = load_polycycle(args.field)
    fam = make_family(built, args.family)
    rep = melnikov_matrix(fam, built, workers=cfg.threads)
    result = rep.to_json()
    result.update(family=args.family, diagonal_scale=rep.diagonal_scale,
                  offdiag_ratio=rep.offdiag_ratio)
    emit(cfg, result, args.out)


def cmd_break(args, cfg):
    built, _, _ = load_polycycle(args.field)
    fam = make_family(built, args.family)
    if args.plan == "auto":
        _, plan = delta_max(built.ratios)
    else:
        try:
            plan = delta_for_permutation(built.ratios, [int(v) for v in args.plan.split(",")])
        except ValueError as exc:
            raise UsageError(f"--plan: {exc}") from None
    res = solve_connection_break(fam, built, plan, args.free, tol=args.tol,
                                 regime=None if args.raw_sign else "bypass")
    result = {"polycycle": built.to_json(), "family": args.family, "mu": res.mu.tolist(),
              "plan": plan.to_json(), "break": res.to_json()}
    emit(cfg, result, args.out)


def cmd_cycles(args, cfg):
    built, mu, family = load_polycycle(args.field)
    lo, hi = _floats(args.window, "window", 2)
    if not 0 <= lo < hi:
        raise UsageError("--window must be lo,hi with 0 <= lo < hi")
    fam = make_family(built, family or "main3") if mu else None
    flow = PolycycleFlow(built, fam, mu)
    sigma0 = detect_sigma0(built)
    side = return_side(built, sigma0)
    # the window is a distance from the polycycle on its return side
    search = tuple(sorted((side * lo, side * hi)))
    polygon = np.vstack([built.polygon(), built.polygon()[:1]])
    cyc = detect_cycles(None, None, search, args.grid, system=PolycycleReturn(flow, args.edge),
                        polygon=polygon, anchor=0.0)
    f = flow.fam.field_at(flow.mu) if flow.fam is not None else built.field
    result = {"sigma0": sigma0, "edge": args.edge, "search": list(search),
              "skipped": list(detect_cycles.skipped), "mu": mu,
              "polycycle": built.to_json(), "family": family,
              "cycles": [c.to_json(with_orbit=True) for c in cyc]}
    if args.trap:
        tc = trapping_curve(built, f)
        result["trapping_curve"] = {"method": tc.method, "h": tc.h, "verdict": tc.verdict,
                                    "direction": tc.direction, "margin": tc.margin,
                                    "curve": tc.curve.tolist()}
    emit(cfg, result, args.out)


def cmd_modelmap(args, cfg):
    ratios = _floats(args.ratios, "ratios")
    window = _floats(args.window, "window", 2)
    if args.search:
        best = model_map_search(ratios, args.alpha, window, args.box, args.samples, args.grid,
                                cfg.seed or 0)
        emit(cfg, best, args.out)
        return
    offsets = _floats(args.offsets, "offsets")
    try:
        spec = ModelMapSpec(tuple(ratios), tuple(offsets), args.alpha, tuple(window))
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    roots, tang = model_map_roots(spec, args.grid, return_tangencies=True)
    dense = model_map_roots(spec, 10 * args.grid)
    result = {"spec": spec.to_json(), "roots": roots, "tangencies": tang,
              "dense_count": len(dense), "stable_under_refinement": len(dense) == len(roots)}
    emit(cfg, result, args.out)


def cmd_bump(args, cfg):
    center = _floats(args.center, "center", 2)
    box = _floats(args.box, "box", 4)
    try:
        spec = BumpSpec(args.delta1, args.delta2, tuple(center))
        q = shifted_bump_polynomial(spec, box, args.eps, args.order, grid=args.grid,
                                    degree_cap=args.degree_cap)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    xs, ys, qv, phi = q.grid(args.grid)
    gap = qv - phi
    result = {"q": q.to_json(), "degree": list(q.degree),
              "sandwich_min": float(gap.min()), "sandwich_max": float(gap.max()),
              "sandwich_holds": bool(np.all(gap > 0.25 * args.eps) and np.all(gap < 0.75 * args.eps))}
    emit(cfg, result, args.out)


def _read_csv(path):
    try:
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
    except FileNotFoundError:
        raise UsageError(f"input file not found: {path}") from None
    try:
        return np.array([[float(r["x1"]), float(r["x2"])] for r in rows])
    except (KeyError, ValueError):
        raise UsageError(f"{path}: expected columns t,x1,x2") from None


def cmd_plot(args, cfg):
    built, _, _ = load_polycycle(args.field)
    trajs = [_read_csv(p) for p in args.traj]
    cycles, bounds = [], []
    for p in args.cycles:
        res = _load_json(p).get("result", {})
        cycles += [c["orbit"] for c in res.get("cycles", []) if "orbit" in c]
        if "trapping_curve" in res:
            bounds.append(res["trapping_curve"]["curve"])
    svg = render_svg(built.polygon(), trajs, cycles, boundaries=bounds, title=args.title)
    write_atomic(args.out, svg)
    if args.report:
        emit(cfg, {"svg": args.out, "trajectories": len(trajs), "cycles": len(cycles)},
             args.report)


HANDLERS = {"build": cmd_build, "analyze": cmd_analyze, "simulate": cmd_simulate,
            "dulac": cmd_dulac, "melnikov": cmd_melnikov, "break": cmd_break,
            "cycles": cmd_cycles, "modelmap": cmd_modelmap, "bump-approx": cmd_bump,
            "plot": cmd_plot}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="polycycle", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"polycycle {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("build", help="construct a polycycle field")
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--ratios", required=True)
    s.add_argument("--orientation", choices=["cw", "ccw", "clockwise", "counterclockwise"],
                   default="cw")
    s.add_argument("--out", default="field.json")

    s = sub.add_parser("analyze", help="graphic number, stability, delta and [CH]")
    s.add_argument("--ratios", required=True)
    s.add_argument("--tol", type=float, default=1e-9)
    s.add_argument("--out")

    s = sub.add_parser("simulate", help="integrate one orbit to CSV")
    s.add_argument("--field", required=True)
    s.add_argument("--seed", required=True, help="initial point x1,x2")
    s.add_argument("--tspan", default="0,50")
    s.add_argument("--rtol", type=float, default=1e-10)
    s.add_argument("--atol", type=float, default=1e-12)
    s.add_argument("--out", default="traj.csv")
    s.add_argument("--report")

    s = sub.add_parser("dulac", help="passage exponent at one saddle")
    s.add_argument("--field", required=True)
    s.add_argument("--saddle-index", type=int, required=True)
    s.add_argument("--svalues", default="1e-5:1e-3:8")
    s.add_argument("--out")

    s = sub.add_parser("melnikov", help="Melnikov matrix of a perturbation family")
    s.add_argument("--field", required=True)
    s.add_argument("--family", default="main3")
    s.add_argument("--out")

    s = sub.add_parser("break", help="break the expelled connection, keep the rest")
    s.add_argument("--field", required=True)
    s.add_argument("--family", default="main3")
    s.add_argument("--plan", default="auto", help="'auto' or a permutation like 1,2,3")
    s.add_argument("--free", type=float, required=True)
    s.add_argument("--tol", type=float, default=1e-9)
    s.add_argument("--raw-sign", action="store_true",
                   help="use --free as given instead of orienting it towards the return side")
    s.add_argument("--out", default="broken.json")

    s = sub.add_parser("cycles", help="limit cycles near the polycycle")
    s.add_argument("--field", required=True)
    s.add_argument("--window", default="0,0.1",
                   help="distances from the polycycle on its return side")
    s.add_argument("--grid", type=int, default=64)
    s.add_argument("--edge", type=int, default=1)
    s.add_argument("--trap", action="store_true", help="also certify a trapping curve")
    s.add_argument("--out", default="cycles.json")

    s = sub.add_parser("modelmap", help="roots of the nested model return map")
    s.add_argument("--ratios", required=True)
    s.add_argument("--offsets", default="")
    s.add_argument("--alpha", type=float, default=1.0)
    s.add_argument("--window", default="0,0.3")
    s.add_argument("--grid", type=int, default=2000)
    s.add_argument("--search", action="store_true", help="random search over offsets")
    s.add_argument("--box", type=float, default=0.05)
    s.add_argument("--samples", type=int, default=2000)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out")

    s = sub.add_parser("bump-approx", help="shifted Bernstein approximation of a bump")
    s.add_argument("--delta1", type=float, required=True)
    s.add_argument("--delta2", type=float, required=True)
    s.add_argument("--center", default="0,0")
    s.add_argument("--eps", type=float, required=True)
    s.add_argument("--box", default="-1,-1,1,1")
    s.add_argument("--order", type=int, default=0)
    s.add_argument("--grid", type=int, default=100)
    s.add_argument("--degree-cap", type=int, default=DEFAULT_DEGREE_CAP)
    s.add_argument("--out")

    s = sub.add_parser("plot", help="SVG phase portrait")
    s.add_argument("--field", required=True)
    s.add_argument("--traj", action="append", default=[])
    s.add_argument("--cycles", action="append", default=[])
    s.add_argument("--title")
    s.add_argument("--out", default="portrait.svg")
    s.add_argument("--report")
    return p


def config_from_args(args) -> RunConfig:
    params = {k: v for k, v in vars(args).items() if k != "command"}
    outputs = {k: params[k] for k in ("out", "report") if params.get(k)}
    return RunConfig(args.command, params, params.get("seed") if args.command == "modelmap" else None,
                     outputs, threads_from_env())


def _join_negative_values(argv):
    """``--box -1,-1,1,1`` -> ``--box=-1,-1,1,1`` (argparse reads the value as a flag)."""
    out, k = [], 0
    while k < len(argv):
        tok = argv[k]
        nxt = argv[k + 1] if k + 1 < len(argv) else None
        if (tok.startswith("--") and "=" not in tok and nxt is not None and len(nxt) > 1
                and nxt[0] == "-" and (nxt[1].isdigit() or nxt[1] == ".")):
            out.append(f"{tok}={nxt}")
            k += 2
        else:
            out.append(tok)
            k += 1
    return out


def run(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = build_parser().parse_args(_join_negative_values(argv))
        cfg = config_from_args(args)
        HANDLERS[args.command](args, cfg)
    except UsageError as exc:
        sys.stderr.write(dumps({"status": "error", "kind": "usage", "message": str(exc)}))
        return 1
    except (FlowError, ApproximationError, ModelMapDomainError, np.linalg.LinAlgError,
            ArithmeticError) as exc:
        sys.stderr.write(dumps({"status": "error", "kind": "numerical",
                                "error": type(exc).__name__, "message": str(exc)}))
        return 2
    return 0


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
