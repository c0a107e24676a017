"""Command-line front end.

Exit codes: 0 success, 2 config error, 3 numerical blow-up,
4 gate failure (convergence order out of range).
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import analysis
from .config import ConfigError, bundled_scenarios, load_scenario
from .incidence import check_hypotheses
from .model import State, equilibrium_report, feasible_bounds
from .solvers import Scheme, SchemeConfig, simulate

EXIT_OK, EXIT_CONFIG, EXIT_BLOWUP, EXIT_GATE = 0, 2, 3, 4

ORDER_GATES = {Scheme.NSFD: (0.8, 1.2), Scheme.RK2: (1.8, 2.2)}


class BlowUp(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# helpers


def _resolve_config(value):
    path = Path(value)
    if path.exists():
        return path
    bundled = bundled_scenarios()
    if value in bundled:
        return bundled[value]
    raise ConfigError(f"{value}: no such file or bundled scenario ({', '.join(sorted(bundled))})")


def _emit(text):
    print(text, end="" if text.endswith("\n") else "\n")


def _table(headers, rows):
    cells = [headers] + [[str(c) for c in r] for r in rows]
    widths = [max(len(r[i]) for r in cells) for i in range(len(headers))]
    lines = ["  ".join(c.rjust(w) for c, w in zip(r, widths)) for r in cells]
    return "\n".join(lines) + "\n"


def _csv(headers, rows):
    return "\n".join([",".join(headers)] + [",".join(map(str, r)) for r in rows]) + "\n"


def _render(fmt, headers, rows, doc):
    if fmt == "machine":
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"
    if fmt == "csv":
        return _csv(headers, rows)
    return _table(headers, rows)


def _fmt(x):
    return f"{x:.6g}"


def _traj_name(prefix, cfg, j=None):
    name = f"{prefix}_{cfg.scheme.value}_dt{cfg.dt:g}"
    if j is not None:
        name += f"_x{j}"
    return name + ".csv"


def _distance(x, target):
    return math.sqrt(sum((a - b) ** 2 for a, b in zip(x, target)))


# ---------------------------------------------------------------------------
# command bodies (return (text, exit_code) and write artifacts)


def equilibria_doc(params):
    rep = equilibrium_report(params)
    return rep, rep.to_dict()


def cmd_equilibria(scn, fmt):
    rep, doc = equilibria_doc(scn.params)
    if fmt == "machine":
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"
    if fmt == "csv":
        rows = [("r0", repr(rep.r0))]
        rows += [(f"dfe_{k}", repr(v)) for k, v in zip("SIR", rep.dfe)]
        if rep.dee is not None:
            rows += [(f"dee_{k}", repr(v)) for k, v in zip("SIR", rep.dee)]
        rows.append(("dfe_stability", rep.dfe_stability.verdict.value))
        if rep.dee_stability is not None:
            rows.append(("dee_stability", rep.dee_stability.verdict.value))
        return _csv(["key", "value"], rows)
    text = rep.to_text()
    if scn.audit:
        quoted = scn.audit.get("quoted", {})
        text += f"audit: quoted values {json.dumps(quoted, sort_keys=True)} are not reproduced; "
        text += scn.audit.get("note", "") + "\n"
    return text


def run_compare(params, x0, dt, steps):
    rep = equilibrium_report(params)
    target = rep.gas
    results = []
    for scheme in Scheme:
        tr = simulate(params, x0, SchemeConfig(scheme, dt, steps))
        results.append((scheme, tr))
    rows, doc = [], []
    for scheme, tr in results:
        finite = not tr.blew_up
        dist = _distance(tr.final, target)
        mn = tr.min_component()
        rows.append((scheme.value, _fmt(mn), "finite" if finite else "blow-up", _fmt(dist)))
        doc.append({"scheme": scheme.value, "min_component": mn, "finite": finite, "terminal_distance": dist})
    return results, rows, doc


def cmd_compare(scn, fmt, out, x0=None, dt=None, steps=None):
    x0 = x0 or scn.initial[0]
    dt = dt if dt is not None else scn.schemes[0].dt
    steps = steps if steps is not None else scn.schemes[0].steps
    results, rows, doc = run_compare(scn.params, x0, dt, steps)
    out.mkdir(parents=True, exist_ok=True)
    for scheme, tr in results:
        tr.to_csv(out / f"{scn.name}_compare_{scheme.value}_dt{dt:g}.csv")
    headers = ["scheme", "min_component", "status", "terminal_distance"]
    text = _render(fmt, headers, rows, {"dt": dt, "steps": steps, "x0": list(x0), "rows": doc})
    return text, any(tr.blew_up for _, tr in results)


def run_convergence(params, x0, scheme, dt_list, T, dt_ref=None):
    study = analysis.estimate_convergence_order(params, x0, scheme, dt_list, T, dt_ref=dt_ref)
    bounds = None
    if study.scheme is Scheme.NSFD and study.dt_list:
        ref = simulate(params, x0, SchemeConfig(Scheme.RK2, study.dt_ref, round(T / study.dt_ref)))
        trs = [simulate(params, x0, SchemeConfig(Scheme.NSFD, d, round(T / d))) for d in study.dt_list]
        region = analysis.region_hull(params, ref, *trs)
        consts = analysis.estimate_bound_constants(
            params, region, grid_n=32, dt_max=max(study.dt_list), reference=ref
        )
        bounds = (consts, [analysis.error_bound(consts, d, T) for d in study.dt_list])
    return study, bounds


def cmd_convergence(scn, fmt, T=None, dt_list=None, scheme=None, x0=None, dt_ref=None):
    conv = scn.convergence
    T = T if T is not None else conv.get("T")
    dt_list = dt_list or conv.get("dt_list")
    scheme = Scheme(scheme or conv.get("scheme", "nsfd"))
    dt_ref = dt_ref if dt_ref is not None else conv.get("dt_ref")
    x0 = x0 or (State(*conv["x0"]) if "x0" in conv else scn.initial[0])
    if T is None or not dt_list:
        raise ConfigError("convergence: T and dt_list are required")
    if len(dt_list) < 4:
        raise ConfigError("convergence: dt_list needs at least 4 entries")
    try:
        study, bounds = run_convergence(scn.params, x0, scheme, sorted(dt_list, reverse=True), T, dt_ref)
    except ValueError as exc:
        raise ConfigError(f"convergence: {exc}") from None
    except RuntimeError as exc:
        raise BlowUp(str(exc)) from None
    rows = []
    for i, (d, e) in enumerate(zip(study.dt_list, study.errors)):
        b = bounds[1][i] if bounds else None
        rows.append((_fmt(d), _fmt(e), "-" if b is None else _fmt(b)))
    doc = study.to_dict()
    if bounds:
        doc["bound_constants"] = bounds[0].to_dict()
        doc["bounds"] = bounds[1]
    lo, hi = ORDER_GATES.get(study.scheme, (-math.inf, math.inf))
    ok = lo <= study.fitted_order <= hi
    doc["order_gate"] = {"low": lo, "high": hi, "pass": ok}
    text = _render(fmt, ["dt", "error_at_T", "error_bound"], rows, doc)
    if fmt != "machine":
        text += f"fitted order ({study.scheme.value}) = {study.fitted_order:.4f}"
        text += f"  gate [{lo}, {hi}] {'pass' if ok else 'FAIL'}\n"
        if study.excluded:
            text += f"excluded (non-finite): {study.excluded}\n"
    return text, ok, study


def cmd_hypotheses(scn, fmt, S_max=None, I_max=None, grid_n=None):
    h = scn.hypotheses
    rep = check_hypotheses(
        scn.params.incidence,
        S_max if S_max is not None else h.get("S_max", 1000.0),
        I_max if I_max is not None else h.get("I_max", 1000.0),
        grid_n if grid_n is not None else h.get("grid_n", 64),
    )
    rows = [(k, "pass" if v else "fail") for k, v in rep.verdicts.items()]
    text = _render(fmt, ["hypothesis", "verdict"], rows, rep.to_dict())
    if fmt == "report":
        text += f"eta (scanned sup f/S) = {rep.eta_estimate:.6g}, analytic bound = {rep.eta_analytic:.6g}\n"
        for w in rep.witnesses:
            text += f"witness {w.hypothesis}: S={w.S:.6g} I={w.I:.6g} value={w.value:.6g}\n"
    return text, rep


def ring_states(box, n_points, R):
    """n_points starts on the boundary of box = [S_lo, S_hi, I_lo, I_hi].

    Points are evenly spaced with each edge counted as length 1, so 8 points
    gives the four corners and four edge midpoints.
    """
    S_lo, S_hi, I_lo, I_hi = map(float, box)
    pts = []
    for k in range(n_points):
        s = 4.0 * k / n_points
        edge, u = int(s), s - int(s)
        if edge == 0:
            pts.append((S_lo + u * (S_hi - S_lo), I_lo))
        elif edge == 1:
            pts.append((S_hi, I_lo + u * (I_hi - I_lo)))
        elif edge == 2:
            pts.append((S_hi - u * (S_hi - S_lo), I_hi))
        else:
            pts.append((S_lo, I_hi - u * (I_hi - I_lo)))
    return [State(S, I, R) for S, I in pts]


def run_portrait(params, starts, dt, steps):
    rep = equilibrium_report(params)
    target = rep.gas
    out = []
    for x0 in starts:
        tr = simulate(params, x0, SchemeConfig(Scheme.NSFD, dt, steps))
        rel = _distance(tr.final, target) / max(_distance(target, (0.0, 0.0, 0.0)), 1e-300)
        out.append((x0, tr, rel))
    return rep, out


def cmd_portrait(scn, fmt, out, seed=None, random_starts=0):
    pc = scn.portrait
    fb = feasible_bounds(scn.params)
    box = pc.get("box", [0.1 * fb.S_max, fb.S_max, 0.01 * fb.SI_max, 0.5 * fb.SI_max])
    dt = float(pc.get("dt", 1.0))
    steps = int(pc.get("steps", 1000))
    rep = equilibrium_report(scn.params)
    starts = ring_states(box, int(pc.get("points", 8)), rep.gas.R)
    if random_starts:
        rng = np.random.default_rng(seed)
        for _ in range(random_starts):
            S = rng.uniform(box[0], box[1])
            I = rng.uniform(box[2], box[3])
            starts.append(State(float(S), float(I), rep.gas.R))
    rep, runs = run_portrait(scn.params, starts, dt, steps)
    out.mkdir(parents=True, exist_ok=True)
    rows, doc = [], []
    for j, (x0, tr, rel) in enumerate(runs):
        tr.to_csv(out / f"{scn.name}_portrait_x{j}.csv")
        rows.append((j, _fmt(x0.S), _fmt(x0.I), _fmt(rel)))
        doc.append({"start": list(x0), "final": list(tr.final), "relative_distance": rel})
    target = "DEE" if rep.dee is not None else "DFE"
    text = _render(fmt, ["start", "S0", "I0", "rel_distance_to_" + target], rows,
                   {"target": target, "equilibrium": list(rep.gas), "dt": dt, "steps": steps,
                    "seed": seed, "runs": doc})
    return text, any(tr.blew_up for _, tr, _ in runs)


def run_scenario(path, out, fmt="report", seed=None):
    """Run every artifact a scenario requests; returns (summary text, exit code)."""
    scn = load_scenario(path)
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    lines, code = [], EXIT_OK
    if "trajectory" in scn.outputs:
        multi = len(scn.initial) > 1
        seen = set()
        for cfg in scn.schemes:
            for j, x0 in enumerate(scn.initial):
                name = _traj_name(scn.name, cfg, j if multi else None)
                if name in seen:
                    name = name[:-4] + f"_n{cfg.steps}.csv"
                seen.add(name)
                tr = simulate(scn.params, x0, cfg)
                tr.to_csv(out / name)
                status = "blow-up" if tr.blew_up else "ok"
                if tr.blew_up:
                    code = EXIT_BLOWUP
                lines.append(f"{name}: {len(tr)} rows, min={tr.min_component():.6g}, {status}")
    if "equilibria" in scn.outputs:
        rep, doc = equilibria_doc(scn.params)
        if scn.audit:
            doc["audit"] = scn.audit
        (out / f"{scn.name}_equilibria.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
        (out / f"{scn.name}_equilibria.txt").write_text(cmd_equilibria(scn, "report"))
        lines.append(f"{scn.name}_equilibria.json: R0={rep.r0:.4f}")
    if "comparison" in scn.outputs:
        cfg = scn.schemes[0]
        text, blew = cmd_compare(scn, "csv", out, dt=cfg.dt, steps=cfg.steps)
        (out / f"{scn.name}_comparison.csv").write_text(text)
        lines.append(f"{scn.name}_comparison.csv")
    if "hypotheses" in scn.outputs:
        _, rep = cmd_hypotheses(scn, "machine")
        (out / f"{scn.name}_hypotheses.json").write_text(json.dumps(rep.to_dict(), indent=2) + "\n")
        lines.append(f"{scn.name}_hypotheses.json: {'all pass' if rep.all_pass else 'FAILURES'}")
    if "phase_portrait" in scn.outputs:
        text, blew = cmd_portrait(scn, "csv", out, seed=seed)
        (out / f"{scn.name}_portrait.csv").write_text(text)
        if blew:
            code = EXIT_BLOWUP
        lines.append(f"{scn.name}_portrait.csv")
    if "convergence" in scn.outputs:
        text, ok, study = cmd_convergence(scn, "machine")
        (out / f"{scn.name}_convergence.json").write_text(text)
        lines.append(f"{scn.name}_convergence.json: order={study.fitted_order:.4f}")
        if not ok and code == EXIT_OK:
            code = EXIT_GATE
    if fmt == "machine":
        return json.dumps({"scenario": scn.name, "artifacts": lines, "exit": code}, indent=2) + "\n", code
    return "\n".join(lines) + "\n", code


# ---------------------------------------------------------------------------
# argument parsing


def _floats(n):
    def parse(text):
        parts = [float(v) for v in text.replace(",", " ").split()]
        if n is not None and len(parts) != n:
            raise argparse.ArgumentTypeError(f"expected {n} numbers")
        return parts
    return parse


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="scenario JSON file or bundled scenario name")
    common.add_argument("--out", default="out", help="directory for artifact files")
    common.add_argument("--format", choices=("csv", "report", "machine"), default="report")
    common.add_argument("--seed", type=int, default=None, help="seed for randomized starts")

    parser = argparse.ArgumentParser(prog="hbv-nsfd", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("simulate", parents=[common], help="run every output a scenario requests")
    sub.add_parser("equilibria", parents=[common], help="DFE, R0, DEE and local stability")
    p = sub.add_parser("compare", parents=[common], help="NSFD vs Euler vs RK2 on one setting")
    p.add_argument("--x0", type=_floats(3))
    p.add_argument("--dt", type=float)
    p.add_argument("--steps", type=int)
    p = sub.add_parser("convergence", parents=[common], help="fitted order of accuracy")
    p.add_argument("--T", type=float)
    p.add_argument("--dt-list", type=_floats(None))
    p.add_argument("--scheme", choices=[s.value for s in Scheme])
    p.add_argument("--dt-ref", type=float)
    p.add_argument("--x0", type=_floats(3))
    p = sub.add_parser("check-hypotheses", parents=[common], help="sampled check of H1-H5")
    p.add_argument("--s-max", type=float)
    p.add_argument("--i-max", type=float)
    p.add_argument("--grid-n", type=int)
    p = sub.add_parser("phase-portrait", parents=[common], help="NSFD runs from a ring of starts")
    p.add_argument("--random-starts", type=int, default=0)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    out = Path(args.out)
    try:
        path = _resolve_config(args.config)
        if args.command == "simulate":
            text, code = run_scenario(path, out, args.format, args.seed)
            _emit(text)
            return code
        scn = load_scenario(path)
        if args.command == "equilibria":
            _emit(cmd_equilibria(scn, args.format))
            return EXIT_OK
        if args.command == "compare":
            x0 = State(*args.x0) if args.x0 else None
            text, blew = cmd_compare(scn, args.format, out, x0, args.dt, args.steps)
            _emit(text)
            return EXIT_BLOWUP if blew else EXIT_OK
        if args.command == "convergence":
            x0 = State(*args.x0) if args.x0 else None
            text, ok, _ = cmd_convergence(scn, args.format, args.T, args.dt_list, args.scheme, x0, args.dt_ref)
            _emit(text)
            return EXIT_OK if ok else EXIT_GATE
        if args.command == "check-hypotheses":
            text, _ = cmd_hypotheses(scn, args.format, args.s_max, args.i_max, args.grid_n)
            _emit(text)
            return EXIT_OK
        if args.command == "phase-portrait":
            text, blew = cmd_portrait(scn, args.format, out, args.seed, args.random_starts)
            _emit(text)
            return EXIT_BLOWUP if blew else EXIT_OK
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except BlowUp as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_BLOWUP
    parser.error(f"unknown command {args.command}")


if __name__ == "__main__":
    sys.exit(main())
