"""Command-line surface.

Subcommands: regime, potential, lorentz, minimize, gap, lemma, scenario,
report.  Structured inputs come from config files (key = value sections);
flags carry scalars only.  Exit codes: 0 success / all assertions pass,
1 assertion failure, 2 usage or config error.  Diagnostics go to stderr,
data to stdout or to files under --out.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import experiments as ex
from . import integrands as ig
from . import potentials as pt
from . import solve as sv
from .lattice import Ball, GridFunction, load_csv, save_csv


def _err(msg: str) -> None:
    print(f"nelab: {msg}", file=sys.stderr)


def _build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="nelab",
                                 description="numerical laboratory for nonuniformly "
                                             "elliptic variational problems")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("regime", help="classify a (n, p, q, alpha) tuple")
    p.add_argument("--n", type=int, required=True, help="ambient dimension")
    p.add_argument("--p", type=float, required=True, help="lower growth exponent")
    p.add_argument("--q", type=float, required=True, help="upper growth exponent")
    p.add_argument("--alpha", type=float, required=True,
                   help="Hoelder exponent of the coefficient")
    p.add_argument("--bounded", action="store_true",
                   help="assume locally bounded minimizers")
    p.add_argument("--family", default="DoublePhase", choices=ig.FAMILIES,
                   help="integrand family the verdict refers to")
    p.add_argument("--omega", default=None,
                   help="modulus descriptor for variable exponents, "
                        "e.g. 'holder 1 0.5' or 'log_lipschitz 0.5'")

    p = sub.add_parser("potential", help="evaluate a radial potential of a measure")
    p.add_argument("--kind", choices=("riesz", "wolff", "p"), required=True)
    p.add_argument("--x0", type=float, nargs=2, required=True, metavar=("X", "Y"))
    p.add_argument("--r", type=float, required=True, help="truncation radius")
    p.add_argument("--beta", type=float, default=1.0)
    p.add_argument("--p", type=float, default=2.0, help="nonlinearity exponent")
    p.add_argument("--t", type=float, default=1.0)
    p.add_argument("--delta", type=float, default=1.0)
    p.add_argument("--m", type=float, default=1.0)
    p.add_argument("--theta", type=float, default=1.0)
    p.add_argument("--dim", type=int, default=2, help="dimension tag of the measure")
    p.add_argument("--atom", type=float, nargs=3, action="append", default=[],
                   metavar=("X", "Y", "W"), help="point mass (repeatable)")
    p.add_argument("--density", default=None, help="density CSV (x,y,value)")
    p.add_argument("--out", default=None,
                   help="write x,y,potential over all grid nodes of the density")

    p = sub.add_parser("lorentz", help="Lorentz norm of a grid function")
    p.add_argument("--t", type=float, required=True)
    p.add_argument("--gamma", type=float, required=True, help="inf for weak type")
    p.add_argument("--csv", required=True, help="grid function CSV")
    p.add_argument("--ball", type=float, nargs=3, default=None, metavar=("X", "Y", "R"))

    p = sub.add_parser("minimize", help="solve a Dirichlet problem from a config file")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default=None, help="directory for the solution CSV")
    p.add_argument("--id", default="problem")
    p.add_argument("--tolerance", type=float, default=1e-9)
    p.add_argument("--max-iter", type=int, default=200)

    p = sub.add_parser("gap", help="two-space Lavrentiev gap estimate")
    p.add_argument("--config", required=True)
    p.add_argument("--radii", type=float, nargs="+", default=(4, 3, 2),
                   help="mollification radii in units of the grid spacing")

    p = sub.add_parser("lemma", help="run the synthetic lemma validity suite")
    p.add_argument("--cases", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    p = sub.add_parser("scenario", help="run a registered scenario from a config file")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--no-figures", action="store_true")

    p = sub.add_parser("report", help="summarize records and re-render figures")
    p.add_argument("--records", required=True, help="records.csv from a scenario run")
    p.add_argument("--plotdata", default=None)
    p.add_argument("--out", required=True)
    return ap


def _measure_from_args(args) -> pt.Measure:
    density = load_csv(args.density) if args.density else None
    return pt.Measure(tuple((x, y, w) for x, y, w in args.atom), density, args.dim)


def cmd_regime(args) -> int:
    omega = ig.Omega.parse(args.omega) if args.omega else None
    rep = ig.classify_regime(args.n, args.p, args.q, args.alpha,
                             assume_bounded=args.bounded, family=args.family,
                             omega=omega)
    print(f"verdict: {rep.verdict}")
    for name in ("schauder_gap", "schauder_gap_strict", "bounded_schauder_gap",
                 "counterexample_window", "lipschitz_gap_interior",
                 "lipschitz_gap_sharp", "bounded_minima_gap", "bounded_improved_gap",
                 "quadratic_schauder_gap", "quadratic_equation_gap", "nondiff_gap",
                 "interpolation_gap", "nearly_linear_gap", "moser_gap", "lorentz_gap"):
        print(f"{name}: {getattr(rep, name)}")
    if rep.log_modulus_bounded is not None:
        print(f"log_modulus_bounded: {rep.log_modulus_bounded}")
    return 0


def cmd_potential(args) -> int:
    mu = _measure_from_args(args)

    def evaluate(x0):
        if args.kind == "riesz":
            return pt.riesz(mu, x0, args.r, args.beta, args.dim)
        if args.kind == "wolff":
            return pt.wolff(mu, x0, args.r, args.beta, args.p, args.dim)
        return pt.p_potential(mu, x0, args.r, args.t, args.delta, args.m, args.theta)

    if args.out:
        if mu.density is None:
            _err("--out sweeps require a density grid")
            return 2
        pts = mu.density.grid.nodes()
        vals = np.array([evaluate(tuple(pt_)) for pt_ in pts])
        pt.save_potential_report(args.out, pts, vals)
        print(args.out)
        return 0
    print(f"{evaluate(tuple(args.x0)):.12g}")
    return 0


def cmd_lorentz(args) -> int:
    f = load_csv(args.csv)
    idx = pt.LorentzIndex(args.t, args.gamma)
    mask = None
    if args.ball:
        mask = Ball((args.ball[0], args.ball[1]), args.ball[2]).node_mask(f.grid)
    print(f"{pt.lorentz_norm(f, idx, mask):.12g}")
    return 0


def cmd_minimize(args) -> int:
    with open(args.config) as fh:
        prob = sv.problem_from_text(fh.read())
    res = sv.minimize(prob, tolerance=args.tolerance, max_iter=args.max_iter)
    print(sv.summary_line(args.id, res))
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        save_csv(res.u, os.path.join(args.out, f"{args.id}_solution.csv"))
    return 0 if res.converged else 1


def cmd_gap(args) -> int:
    with open(args.config) as fh:
        prob = sv.problem_from_text(fh.read())
    h = prob.grid.spacing
    rep = sv.lavrentiev_gap(prob, [c * h for c in args.radii])
    print(f"inf_broad,{rep.inf_broad:.12g}")
    print(f"inf_smooth,{rep.inf_smooth:.12g}")
    print(f"gap,{rep.gap:.12g}")
    print(f"gap_positive,{rep.gap_positive}")
    print(f"radius_used,{rep.radius_used}")
    return 0


def cmd_lemma(args) -> int:
    sc = ex.Scenario("lemma_suite", seed=args.seed,
                     parameters={k: args.cases for k in
                                 ("de_giorgi", "moser", "hole_filling", "embedding")}
                     | {"sup_potential": max(args.cases // 2, 5), "grid_n": 33})
    records, plotrows = ex.run_scenario(sc)
    failures = ex.emit_report(records, plotrows, sc.id, args.out)
    print(f"records: {sum(len(r.assertions) for r in records)} assertions, "
          f"{failures} failures")
    return 1 if failures else 0


def cmd_scenario(args) -> int:
    with open(args.config) as fh:
        sc = ex.scenario_from_text(fh.read())
    records, plotrows = ex.run_scenario(sc)
    failures = ex.emit_report(records, plotrows, sc.id, args.out,
                              figures=not args.no_figures)
    print(f"scenario {sc.id}: {len(records)} records, {failures} failed assertions")
    return 1 if failures else 0


def cmd_report(args) -> int:
    failures = 0
    rows = 0
    with open(args.records) as fh:
        for line in fh:
            if line.startswith("#") or line.startswith("scenario,"):
                continue
            rows += 1
            cells = line.rstrip("\n").split(",")
            if cells[4] == "assertion" and cells[7] == "false":
                failures += 1
    print(f"{rows} rows, {failures} failed assertions")
    os.makedirs(args.out, exist_ok=True)
    if args.plotdata:
        import csv as _csv

        with open(args.plotdata) as fh:
            fh.readline()  # schema comment
            reader = _csv.DictReader(fh)
            plotrows = []
            for row in reader:
                parsed = {}
                for k, v in row.items():
                    try:
                        parsed[k] = float(v)
                    except (TypeError, ValueError):
                        parsed[k] = v
                plotrows.append(parsed)
        name = os.path.basename(args.plotdata).replace("plotdata_", "").replace(".csv", "")
        ex.render_figure(plotrows, name, os.path.join(args.out, f"plot_{name}.png"))
    return 1 if failures else 0


COMMANDS = {
    "regime": cmd_regime,
    "potential": cmd_potential,
    "lorentz": cmd_lorentz,
    "minimize": cmd_minimize,
    "gap": cmd_gap,
    "lemma": cmd_lemma,
    "scenario": cmd_scenario,
    "report": cmd_report,
}


def dispatch(argv=None) -> int:
    ap = _build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code not in (0, None) else 0
    try:
        return COMMANDS[args.command](args)
    except FileNotFoundError as exc:
        _err(f"missing file: {exc.filename}")
        return 2
    except (ValueError, KeyError, OSError) as exc:
        _err(str(exc))
        return 2


def main() -> None:
    sys.exit(dispatch())


if __name__ == "__main__":
    main()
