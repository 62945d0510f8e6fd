"""``mbridge`` command line: feasibility checks, solves and oracle cross-checks.

Exit codes: 0 success, 2 infeasible, 3 non-convergence, 5 oracle mismatch,
64 unreadable or invalid instance file.
"""

from __future__ import annotations

import argparse
import contextlib
import csv
import json
import os
import sys

import numpy as np

from .core import canonical_gauge
from .exceptions import Infeasible, MeasureError, NonConvergence
from .measures import ProblemInstance, check_feasibility, make_instance, validate_measure
from .oracle import (
    GeneratorSpec,
    coupling_distance,
    dykstra_solve,
    generate_instance,
    two_point_closed_form,
)
from .solver import Mode, SolverConfig, solve, solve_relaxed

EXIT_OK = 0
EXIT_INFEASIBLE = 2
EXIT_NONCONVERGENCE = 3
EXIT_MISMATCH = 5
EXIT_PARSE = 64


class InstanceFileError(Exception):
    pass


def _measure_field(doc, key):
    if key not in doc:
        raise InstanceFileError(f"field '{key}': missing")
    block = doc[key]
    if not isinstance(block, dict):
        raise InstanceFileError(f"field '{key}': expected an object with atoms and weights")
    for sub in ("atoms", "weights"):
        if sub not in block:
            raise InstanceFileError(f"field '{key}.{sub}': missing")
        vals = block[sub]
        if not isinstance(vals, list) or not all(
            isinstance(v, (int, float)) and not isinstance(v, bool) for v in vals
        ):
            raise InstanceFileError(f"field '{key}.{sub}': expected a list of numbers")
    try:
        return validate_measure(block["atoms"], block["weights"])
    except MeasureError as exc:
        raise InstanceFileError(f"field '{key}': {type(exc).__name__}: {exc}") from None


def parse_instance_text(text: str):
    """Parse instance JSON into ``(mu, nu, name)`` of validated measures."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InstanceFileError(f"line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    if not isinstance(doc, dict):
        raise InstanceFileError("line 1: top level must be an object with 'mu' and 'nu'")
    name = doc.get("name")
    if name is not None and not isinstance(name, str):
        raise InstanceFileError("field 'name': expected a string")
    return _measure_field(doc, "mu"), _measure_field(doc, "nu"), name


def read_instance(path):
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise InstanceFileError(f"cannot read {path}: {exc.strerror}") from None
    return parse_instance_text(text)


def instance_to_dict(instance: ProblemInstance) -> dict:
    mu, nu = instance.original_pair
    d = {
        "mu": {"atoms": mu.atoms.tolist(), "weights": mu.weights.tolist()},
        "nu": {"atoms": nu.atoms.tolist(), "weights": nu.weights.tolist()},
    }
    if instance.name is not None:
        d["name"] = instance.name
    return d


def write_instance(instance: ProblemInstance, path):
    # json writes floats with the shortest repr that round-trips exactly
    with open(path, "w") as fh:
        json.dump(instance_to_dict(instance), fh, indent=1)
        fh.write("\n")


def _dump(obj, path=None):
    text = json.dumps(obj, indent=2, allow_nan=False)
    if path is None or path == "-":
        print(text)
    else:
        with open(path, "w") as fh:
            fh.write(text + "\n")


def _json_safe(obj):
    if isinstance(obj, float) and not np.isfinite(obj):
        return None
    if isinstance(obj, dict):
        return {k: _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    return obj


def _config_from(args) -> SolverConfig:
    return SolverConfig(tol=args.tol, max_iter=args.max_iter, h_max=args.h_max,
                        mode=Mode(getattr(args, "mode", "martingale")))


def write_coupling_csv(report, instance: ProblemInstance, path):
    x = instance.mu.atoms + instance.shift
    y = instance.nu.atoms + instance.shift
    w = report.coupling.weights
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(["i", "j", "x", "y", "pi"])
        for i in range(w.shape[0]):
            for j in range(w.shape[1]):
                out.writerow([i, j, repr(float(x[i])), repr(float(y[j])), repr(float(w[i, j]))])


def write_trace_csv(report, path):
    rows = report.trace
    keys = list(rows[0]) if rows else ["iteration"]
    with open(path, "w", newline="") as fh:
        out = csv.DictWriter(fh, fieldnames=keys)
        out.writeheader()
        for r in rows:
            out.writerow({k: repr(v) if isinstance(v, float) else v for k, v in r.items()})


def cmd_check(args) -> int:
    mu, nu, name = read_instance(args.instance)
    rep = check_feasibility(mu, nu)
    print(f"instance: {name or args.instance}")
    for key in ("means_equal", "convex_order", "irreducible", "endpoint_assumption"):
        print(f"  {key}: {str(getattr(rep, key)).lower()}")
    print(f"  interval_I: {rep.interval_I}")
    for line in rep.detail:
        print(f"  warning: {line}")
    _dump(_json_safe(rep.to_dict()))
    return EXIT_OK if rep.convex_order else EXIT_INFEASIBLE


def cmd_solve(args) -> int:
    mu, nu, name = read_instance(args.instance)
    instance = make_instance(mu, nu, name)
    config = _config_from(args)
    if config.mode is Mode.RELAXED:
        report = solve_relaxed(instance, config)
    else:
        report = solve(instance, config)

    doc = {"name": name, "shift": instance.shift, **instance_to_dict(instance),
           "feasibility": instance.feasibility.to_dict(), **report.to_dict(),
           "elapsed_seconds": report.elapsed}
    _dump(_json_safe(doc), args.out)
    if args.coupling:
        write_coupling_csv(report, instance, args.coupling)
    if args.trace:
        write_trace_csv(report, args.trace)
    return EXIT_OK if report.converged else EXIT_NONCONVERGENCE


def _symmetric_two_point(instance: ProblemInstance):
    nu = instance.nu
    if len(nu) != 2 or not np.allclose(nu.weights, 0.5, rtol=0, atol=1e-12):
        return None
    b = 0.5 * (nu.atoms[1] - nu.atoms[0])
    if np.all(np.abs(instance.mu.atoms) < b):
        return b
    return None


def _potential_diff(p, q):
    return {k: float(np.max(np.abs(getattr(p, k) - getattr(q, k)))) for k in ("f", "g", "h")}


def cmd_crosscheck(args) -> int:
    if args.generate is not None:
        seed, n_mu, n_nu = args.generate
        instance = generate_instance(GeneratorSpec(seed, n_mu, n_nu))
    elif args.instance:
        mu, nu, name = read_instance(args.instance)
        instance = make_instance(mu, nu, name)
    else:
        raise InstanceFileError("give an instance file or --generate SEED NMU NNU")
    if args.emit:
        write_instance(instance, args.emit)
    if not instance.feasibility.convex_order:
        raise Infeasible("; ".join(instance.feasibility.detail))

    config = SolverConfig(tol=args.tol, max_iter=args.max_iter, h_max=args.h_max)
    mu, nu = instance.mu, instance.nu
    mart = solve(instance, config)
    relaxed = solve_relaxed(instance, config)
    couplings = {"solve": mart.coupling, "relaxed": relaxed.coupling}
    converged = {"solve": mart.converged, "relaxed": relaxed.converged}
    try:
        couplings["dykstra"] = dykstra_solve(instance, tol=args.dykstra_tol)
        converged["dykstra"] = True
    except NonConvergence:
        converged["dykstra"] = False

    potential_diffs = {"relaxed": _potential_diff(mart.potentials, relaxed.potentials)}
    b = _symmetric_two_point(instance)
    if b is not None:
        closed_c, closed_p = two_point_closed_form(mu, b)
        couplings["closed_form"] = closed_c
        converged["closed_form"] = True
        potential_diffs["closed_form"] = _potential_diff(
            mart.potentials, canonical_gauge(closed_p, mu, nu))

    names = list(couplings)
    distances = {
        f"{a}~{c}": coupling_distance(couplings[a], couplings[c])
        for k, a in enumerate(names) for c in names[k + 1:]
    }
    ok = all(v <= args.xtol for v in distances.values())
    for key, val in distances.items():
        print(f"  tv[{key}] = {val:.3e}", file=sys.stderr)
    _dump(_json_safe({
        "name": instance.name,
        "shape": list(instance.shape),
        "xtol": args.xtol,
        "converged": converged,
        "tv_distances": distances,
        "potential_max_abs_diff": potential_diffs,
        "gap": mart.gap,
        "agree": ok,
    }))
    if not all(converged.values()):
        return EXIT_NONCONVERGENCE
    return EXIT_OK if ok else EXIT_MISMATCH


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mbridge", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def solver_flags(p):
        p.add_argument("--tol", type=float, default=1e-9)
        p.add_argument("--max-iter", type=int, default=10000)
        p.add_argument("--h-max", type=float, default=1e3)

    p = sub.add_parser("check", help="convex order / irreducibility report")
    p.add_argument("instance")
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("solve", help="solve the martingale bridge")
    p.add_argument("instance")
    solver_flags(p)
    p.add_argument("--mode", choices=[m.value for m in Mode], default="martingale")
    p.add_argument("--coupling", metavar="PATH", help="write coupling CSV")
    p.add_argument("--trace", metavar="PATH", help="write per-sweep trace CSV")
    p.add_argument("--out", metavar="PATH", help="report JSON path (default stdout)")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("crosscheck", help="compare solver, relaxed solver and oracles")
    p.add_argument("instance", nargs="?")
    p.add_argument("--generate", nargs=3, type=int, metavar=("SEED", "NMU", "NNU"))
    p.add_argument("--xtol", type=float, default=1e-6)
    p.add_argument("--dykstra-tol", type=float, default=1e-12)
    p.add_argument("--emit", metavar="PATH", help="write the instance JSON")
    solver_flags(p)
    p.set_defaults(func=cmd_crosscheck)
    return parser


def _thread_limit():
    n = os.environ.get("MBRIDGE_THREADS")
    if not n:
        return contextlib.nullcontext()
    from threadpoolctl import threadpool_limits

    return threadpool_limits(limits=max(1, int(n)))


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        with _thread_limit():
            return args.func(args)
    except InstanceFileError as exc:
        print(f"mbridge: parse error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except Infeasible as exc:
        print(f"mbridge: infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except NonConvergence as exc:
        print(f"mbridge: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGENCE


if __name__ == "__main__":
    sys.exit(main())
