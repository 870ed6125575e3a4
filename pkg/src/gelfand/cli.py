"""Command-line front end.

Every command writes one file (or stdout) that starts with a ``# {json}``
header line. Exit codes: 0 ok, 1 error, 2 verification failure, 64 usage,
78 configuration.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import io as gio
from .domain_green import ORDERS, Domain, GreenEvaluator
from .errors import ConfigError, GelfandError

EXIT_OK, EXIT_ERROR, EXIT_VERIFY, EXIT_USAGE, EXIT_CONFIG = 0, 1, 2, 64, 78

log = logging.getLogger("gelfand")


class UsageError(Exception):
    pass


class Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise UsageError(message)


def _floats(n):
    def parse(text):
        vals = [float(v) for v in text.replace(",", " ").split()]
        if n and len(vals) != n:
            raise argparse.ArgumentTypeError(f"expected {n} numbers")
        return vals
    return parse


def build_parser() -> Parser:
    p = Parser(prog="gelfand", description="Blow-up solutions of -Δu = λe^u and their Morse indices.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=Parser)

    def common(sp, domain=False):
        sp.add_argument("-o", "--output", help="output file or existing directory (default stdout)")
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--timestamps", action="store_true", help="add a timestamp to the header")
        if domain:
            sp.add_argument("--domain", default="disk",
                            help="'disk' or a JSON domain file ({\"kind\": \"mesh\", \"file\": ...})")

    s = sub.add_parser("green-eval", help="G, R and derivatives at a point pair")
    common(s, True)
    s.add_argument("--x", type=_floats(2), required=True, help="'x1 x2'")
    s.add_argument("--y", type=_floats(2), required=True, help="'y1 y2'")

    s = sub.add_parser("critical-points", help="critical points of H^m with indices")
    common(s, True)
    s.add_argument("--m", type=int, default=1)
    s.add_argument("--seeds", type=int, default=20)

    def branch_opts(sp):
        sp.add_argument("--m", type=int, default=1)
        sp.add_argument("--s-values", type=_floats(0), default=[8, 10, 12, 14, 15, 15.5, 16],
                        help="peak heights, e.g. '8 10 12'")
        sp.add_argument("--grading", type=float, default=0.02, help="disk mesh grading factor")

    s = sub.add_parser("solve-branch", help="continue the blow-up branch in the peak height")
    common(s, True)
    branch_opts(s)
    s.add_argument("--export-solution", help="write the deepest solution as vertex CSV here")

    s = sub.add_parser("spectrum", help="linearized spectra along the branch")
    common(s, True)
    branch_opts(s)
    s.add_argument("--K", type=int, default=None)

    s = sub.add_parser("verify-theorems", help="index and eigenvalue-asymptotics checks")
    common(s, True)
    branch_opts(s)
    s.add_argument("--theorem", choices=["1", "2", "all"], default="all")

    s = sub.add_parser("limit-spectrum", help="eigenvalues of the whole-plane limit problem")
    common(s)
    s.add_argument("--k-max", type=int, default=2)
    s.add_argument("--R-T", type=float, default=1e3)
    s.add_argument("--nodes", type=int, default=1000)

    s = sub.add_parser("integrals", help="moment integrals of the bubble")
    common(s)
    s.add_argument("--nodes", type=int, default=512)

    s = sub.add_parser("identities", help="Pohozaev, I-table and sign-preservation suite")
    common(s, True)
    s.add_argument("--pairs", type=int, default=50)
    s.add_argument("--trials", type=int, default=500)

    s = sub.add_parser("vortex", help="integrate the point-vortex system")
    common(s, True)
    s.add_argument("--points", type=_floats(0), required=True, help="'x1 y1 x2 y2 ...'")
    s.add_argument("--dt", type=float, default=1e-3)
    s.add_argument("--steps", type=int, default=1000)
    s.add_argument("--record-every", type=int, default=10)
    s.add_argument("--reverse", action="store_true", help="run with the opposite orientation")
    return p


# -- helpers ---------------------------------------------------------------


def load_domain(spec: str) -> Domain:
    if spec in ("disk", "unit-disk"):
        return Domain.unit_disk()
    path = Path(spec)
    if not path.is_file():
        raise ConfigError(f"domain file {spec} not found")
    try:
        return Domain.from_json(path)
    except (json.JSONDecodeError, KeyError) as exc:
        raise ConfigError(f"bad domain file {spec}: {exc}") from exc


def _config(args) -> dict:
    skip = {"output", "timestamps", "verbose", "export_solution"}
    return {k: v for k, v in sorted(vars(args).items()) if k not in skip}


def _head(args, **extra) -> dict:
    return gio.header(args.command, _config(args), args.seed, args.timestamps, **extra)


def emit(args, text: str, ext: str) -> None:
    if not args.output:
        sys.stdout.write(text)
        return
    out = Path(args.output)
    if out.is_dir():
        out = out / f"{args.command}.{ext}"
    gio.write_text(out, text)


def _check_branch_args(args):
    if args.m < 1:
        raise ConfigError("--m must be at least 1")
    if len(args.s_values) < 1 or any(s <= 0 for s in args.s_values):
        raise ConfigError("--s-values must be positive")
    if not 0 < args.grading < 0.5:
        raise ConfigError("--grading must lie in (0, 0.5)")


def _branch(args):
    from .pipeline import blowup_branch
    _check_branch_args(args)
    return blowup_branch(load_domain(args.domain), args.m, args.s_values, args.grading, seed=args.seed)


# -- commands ----------------------------------------------------------------


def cmd_green_eval(args) -> int:
    ev = GreenEvaluator(load_domain(args.domain))
    x, y = np.array(args.x), np.array(args.y)
    body = {"x": x, "y": y, "green": ev.green(x, y), "regular": ev.regular(x, y),
            "robin_x": ev.robin(x), "robin_gradient_x": ev.robin_gradient(x),
            "robin_hessian_x": ev.robin_hessian(x)}
    for order in ORDERS:
        body[order] = ev.green_derivatives(x, y, order)
    emit(args, gio.json_text(_head(args), body), "json")
    return EXIT_OK


def cmd_critical_points(args) -> int:
    from .hamiltonian import find_critical, sample_seeds
    if args.m < 1 or args.seeds < 1:
        raise ConfigError("--m and --seeds must be positive")
    ev = GreenEvaluator(load_domain(args.domain))
    failures = []
    found = find_critical(ev, sample_seeds(ev.domain, args.m, args.seeds, args.seed), failures=failures)
    body = {"critical_points": [r.to_dict() for _, r in found],
            "seeds": args.seeds, "failed_seeds": len(failures)}
    emit(args, gio.json_text(_head(args), body), "json")
    return EXIT_OK


def cmd_solve_branch(args) -> int:
    from .fem.solver import branch_csv
    run = _branch(args)
    if args.export_solution:
        gio.write_text(args.export_solution, run.branch[-1].solution.to_csv(
            command=args.command, config=_config(args), seed=args.seed))
    head = _head(args, vertices=run.mesh.n_vertices, critical_point=run.hreport.points)
    emit(args, branch_csv(run.branch, **head), "csv")
    return EXIT_OK


def cmd_spectrum(args) -> int:
    from .pipeline import branch_spectra
    run = _branch(args)
    reports = branch_spectra(run, args.K)
    body = [{"s": bp.s, **r.to_dict()} for bp, r in zip(run.branch, reports)]
    emit(args, gio.json_text(_head(args, vertices=run.mesh.n_vertices), body), "json")
    return EXIT_OK


def cmd_verify_theorems(args) -> int:
    from .pipeline import branch_spectra, theorem1, theorem2
    run = _branch(args)
    branch_spectra(run)
    body = {"m": args.m, "critical_point": run.hreport.to_dict(), "vertices": run.mesh.n_vertices}
    ok = True
    if args.theorem in ("1", "all"):
        t1 = theorem1(run)
        body["theorem1"] = t1
        ok &= t1["lower"] and t1["upper"] and t1["universal_bounds"]
    if args.theorem in ("2", "all"):
        t2 = theorem2(run)
        fits = []
        for f in t2.fits:
            err = float(np.max(f.relative_error()))
            tol = 0.2 if f.law == "inverse-log" else 0.15
            fits.append({"k": f.k, "law": f.law, "coefficient": f.coefficient, "target": f.target,
                         "residual": f.residual, "values": f.values, "lambdas": f.sample_lambdas,
                         "max_relative_error": err, "passed": err <= tol})
        body["theorem2"] = {"fits": fits, "mu_3m1_above_one": t2.above_one}
        ok &= all(f["passed"] for f in fits) and all(t2.above_one)
    body["passed"] = bool(ok)
    emit(args, gio.json_text(_head(args), body), "json")
    return EXIT_OK if ok else EXIT_VERIFY


def cmd_limit_spectrum(args) -> int:
    from .limit_problem import limit_eigenvalues, spectrum_csv
    if args.k_max < 0 or args.R_T < 1e2 or args.nodes < 1000:
        raise ConfigError("need --k-max >= 0, --R-T >= 100 and --nodes >= 1000")
    eigs = limit_eigenvalues(args.k_max, args.R_T, args.nodes)
    emit(args, spectrum_csv(eigs, **_head(args)), "csv")
    return EXIT_OK


def cmd_integrals(args) -> int:
    from .limit_problem import moment_integrals, moments_csv
    if args.nodes < 256:
        raise ConfigError("--nodes must be at least 256")
    rows = moment_integrals(args.nodes)
    emit(args, moments_csv(rows, **_head(args)), "csv")
    ok = all(r.error <= (1e-8 if r.reference else 1e-10) for r in rows)
    return EXIT_OK if ok else EXIT_VERIFY


def cmd_identities(args) -> int:
    from .identities import run_suite
    ev = GreenEvaluator(load_domain(args.domain))
    res = run_suite(ev, args.seed, args.pairs, args.trials)
    emit(args, gio.json_text(_head(args), res.to_dict()), "json")
    return EXIT_OK if res.passed else EXIT_VERIFY


def cmd_vortex(args) -> int:
    from .vortex import VortexState, integrate, trajectory_csv
    if len(args.points) % 2 or not args.points:
        raise ConfigError("--points needs an even, nonzero count of coordinates")
    if args.dt <= 0 or args.steps < 1 or args.record_every < 1:
        raise ConfigError("--dt, --steps and --record-every must be positive")
    ev = GreenEvaluator(load_domain(args.domain))
    start = VortexState.start(ev, np.reshape(args.points, (-1, 2)))
    traj = integrate(ev, start, args.dt, args.steps, -1 if args.reverse else 1, args.record_every)
    emit(args, trajectory_csv(traj, **_head(args)), "csv")
    return EXIT_OK


COMMANDS = {
    "green-eval": cmd_green_eval,
    "critical-points": cmd_critical_points,
    "solve-branch": cmd_solve_branch,
    "spectrum": cmd_spectrum,
    "verify-theorems": cmd_verify_theorems,
    "limit-spectrum": cmd_limit_spectrum,
    "integrals": cmd_integrals,
    "identities": cmd_identities,
    "vortex": cmd_vortex,
}


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError:
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"gelfand: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except GelfandError as exc:
        print(f"gelfand: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except (ValueError, OSError) as exc:
        print(f"gelfand: error: {exc}", file=sys.stderr)
        return EXIT_ERROR


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
