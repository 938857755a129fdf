"""Command-line interface.

Exit codes: 0 when the verdict is positive (valid, member, local, hit found, all stages
pass), 1 when it is negative, 2 on bad input, 3 when a solver fails.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import __version__, fixtures
from .aq import SolverError, aq_bound, membership_sdp
from .assemblage import (Assemblage, BipartiteAssemblage, evaluate_functional,
                         validate_bipartite_ns, validate_tripartite_ns)
from .ghjw import RealizationError, ghjw_realize
from .io import (decode_assemblage, decode_bipartite, decode_functional, decode_minimal, dumps,
                 encode_matrix, encode_vector, read_json, write_json)
from .locality import MU_OCTAGON, LPSolverError, locality_for_all_projective

EXIT_OK, EXIT_NEGATIVE, EXIT_INPUT, EXIT_SOLVER = 0, 1, 2, 3

FIXTURES = {
    "fixture:assemblage": fixtures.example_assemblage_json,
    "fixture:functional": fixtures.example_functional_json,
}


class InputError(Exception):
    pass


def _load(path: str) -> dict:
    if path in FIXTURES:
        return FIXTURES[path]()
    try:
        return read_json(path)
    except FileNotFoundError as exc:
        raise InputError(f"no such file: {path}") from exc
    except json.JSONDecodeError as exc:
        raise InputError(f"{path} is not valid JSON: {exc}") from exc


def _is_bipartite(d: dict) -> bool:
    return d.get("type") == "bipartite_assemblage" or ("setB" in d and "scenario" not in d)


def _assemblage(path: str) -> Assemblage:
    d = _load(path)
    if _is_bipartite(d):
        raise InputError(f"{path} holds a bipartite assemblage; a tripartite one is required")
    try:
        return decode_assemblage(d)
    except (KeyError, ValueError, TypeError, IndexError) as exc:
        raise InputError(f"cannot read assemblage from {path}: {exc}") from exc


def _functional(path: str):
    try:
        return decode_functional(_load(path))
    except (KeyError, ValueError, TypeError, IndexError) as exc:
        raise InputError(f"cannot read functional from {path}: {exc}") from exc


def _emit(args, payload: dict, text: str) -> None:
    print(dumps(payload) if args.json else text)


# ---------------------------------------------------------------- commands

def cmd_validate(args) -> int:
    d = _load(args.path)
    try:
        if _is_bipartite(d):
            report = validate_bipartite_ns(decode_bipartite(d), args.tolerance)
        else:
            report = validate_tripartite_ns(decode_assemblage(d), args.tolerance)
    except (KeyError, ValueError, TypeError, IndexError) as exc:
        raise InputError(f"cannot read assemblage from {args.path}: {exc}") from exc
    lines = [f"{'PASS' if report.passed else 'FAIL'} (tolerance {report.tol:g})"]
    lines += [f"  {k}: {v:.3g}" for k, v in report.violations.items()]
    _emit(args, report.as_dict(), "\n".join(lines))
    return EXIT_OK if report.passed else EXIT_NEGATIVE


def cmd_evaluate(args) -> int:
    asm, F = _assemblage(args.assemblage), _functional(args.functional)
    if F.scenario != asm.scenario:
        raise InputError("functional and assemblage scenarios differ")
    beta = evaluate_functional(F, asm)
    _emit(args, {"beta": beta}, f"beta = {beta:.10g}")
    return EXIT_OK


def cmd_aq(args) -> int:
    if args.mode == "bound":
        res = aq_bound(_functional(args.path), dump_path=args.solver_dump)
        _emit(args, res.as_dict(), f"almost-quantum bound = {res.value:.10g}")
        return EXIT_OK
    asm = _assemblage(args.path)
    ns_tol = max(args.tolerance, 1e-6)
    if not validate_tripartite_ns(asm, ns_tol).passed:
        raise InputError("assemblage fails the no-signalling checks")
    res = membership_sdp(asm, ns_tol=ns_tol, dump_path=args.solver_dump)
    text = f"{res.status} (min eigenvalue slack {res.min_eig_slack:.3g})"
    if not res.member:
        text += (f"\n  witness: bound {res.certificate_bound:.8g}, value {res.certificate_value:.8g},"
                 f" separation {res.separation:.3g}")
    _emit(args, res.as_dict(), text)
    return EXIT_OK if res.member else EXIT_NEGATIVE


def cmd_local(args) -> int:
    asm = _assemblage(args.path)
    try:
        verdict = locality_for_all_projective(asm, args.mu, check_tol=args.tolerance)
    except ValueError as exc:
        raise InputError(str(exc)) from exc
    _emit(args, verdict.as_dict(), f"{'PASS' if verdict.passed else 'FAIL'}: {verdict.reason}")
    return EXIT_OK if verdict.passed else EXIT_NEGATIVE


def _as_bipartite(d: dict) -> BipartiteAssemblage:
    """Bipartite input as is; a tripartite one with Bob and Charlie merged into one party."""
    if _is_bipartite(d):
        return decode_bipartite(d)
    asm = decode_assemblage(d)
    sc = asm.scenario
    # axes are already (b, c, y, z): merge (b, c) into one outcome and (y, z) into one setting
    blocks = asm.blocks.reshape(sc.outB * sc.outC, sc.setB * sc.setC, sc.dimA, sc.dimA)
    return BipartiteAssemblage(sc.dimA, blocks)


def cmd_ghjw(args) -> int:
    d = _load(args.path)
    try:
        asm = _as_bipartite(d)
    except (KeyError, ValueError, TypeError, IndexError) as exc:
        raise InputError(f"cannot read assemblage from {args.path}: {exc}") from exc
    try:
        real = ghjw_realize(asm, max(args.tolerance, 1e-10))
    except RealizationError as exc:
        _emit(args, {"realized": False, "reason": str(exc)}, f"FAIL: {exc}")
        return EXIT_NEGATIVE
    err = float(np.max(np.abs(real.reconstruct() - asm.blocks)))
    payload = {"realized": True, "reconstruction_error": err, "support_dim": real.support_dim,
               "state": encode_vector(real.state),
               "povms": {f"{b},{y}": encode_matrix(real.povms[b, y])
                         for b in range(asm.outB) for y in range(asm.setB)}}
    _emit(args, payload, f"realized with a rank-{real.support_dim} state; "
                         f"reconstruction error {err:.3g}")
    return EXIT_OK


def cmd_search(args) -> int:
    from .search import SUCCESS, SearchConfig, run_search

    initial = None
    if args.initial:
        d = _load(args.initial)
        try:
            initial = decode_minimal(d) if "F_A" in d else None
            if initial is None:
                from .assemblage import minimal_form

                initial = minimal_form(decode_functional(d))
        except (KeyError, ValueError, TypeError, IndexError) as exc:
            raise InputError(f"cannot read functional from {args.initial}: {exc}") from exc
    try:
        cfg = SearchConfig(rng_seed=args.seed, max_restarts=args.restarts, mu_target=args.mu_target,
                           symmetrize=not args.no_symmetrize, objective=args.objective,
                           gradient=args.gradient, max_descent_steps=args.descent_steps,
                           initial=initial)
    except ValueError as exc:
        raise InputError(str(exc)) from exc
    result = run_search(cfg)
    if args.out:
        write_json(result.to_dict(), args.out)
    mu = "n/a" if result.mu_critical is None else f"{result.mu_critical:.6f}"
    text = (f"{result.status} at restart {result.restart} after {result.descent_steps} descent steps\n"
            f"  mu_critical {mu}, beta {result.beta}, beta_aq {result.beta_aq}")
    print(result.to_json() if args.json else text)
    return EXIT_OK if result.status == SUCCESS else EXIT_NEGATIVE


def cmd_verify(args) -> int:
    from .search import verify_result

    d = _load(args.path)
    if d.get("status") != "SUCCESS":
        raise InputError("only SUCCESS search results carry the full certificate bundle")
    try:
        checks = verify_result(d)
    except (KeyError, ValueError, TypeError, IndexError) as exc:
        raise InputError(f"malformed search result: {exc}") from exc
    ok = all(checks.values())
    _emit(args, checks, "\n".join(f"{'PASS' if v else 'FAIL'}  {k}" for k, v in checks.items()))
    return EXIT_OK if ok else EXIT_NEGATIVE


def cmd_bloch(args) -> int:
    from .plotting import write_bloch_svg

    asm = _assemblage(args.path)
    try:
        write_bloch_svg(asm, args.out)
    except ValueError as exc:
        raise InputError(str(exc)) from exc
    _emit(args, {"written": args.out}, f"wrote {args.out}")
    return EXIT_OK


def cmd_reproduce(args) -> int:
    from .reproduce import TABLE_TOL, reproduce_paper

    tol = args.tolerance if args.tolerance_given else TABLE_TOL
    asm_json = _load(args.assemblage) if args.assemblage else None
    fun_json = _load(args.functional) if args.functional else None
    report = reproduce_paper(asm_json, fun_json, tol)
    _emit(args, report.as_dict(), "\n".join(report.lines()))
    return EXIT_OK if report.passed else EXIT_NEGATIVE


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--tolerance", type=float, default=None,
                        help="validation tolerance (default 1e-10; 1e-3 for reproduce-paper)")
    common.add_argument("--json", action="store_true", help="machine-readable output")
    common.add_argument("--solver-dump", metavar="PATH", default=None,
                        help="write the conic program in standard form as JSON")

    p = argparse.ArgumentParser(prog="poststeer", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)
    path_help = "JSON file, or fixture:assemblage / fixture:functional"

    s = sub.add_parser("validate", parents=[common], help="no-signalling checks")
    s.add_argument("path", help=path_help)
    s.set_defaults(func=cmd_validate)

    s = sub.add_parser("evaluate", parents=[common], help="value of a steering functional")
    s.add_argument("assemblage", help=path_help)
    s.add_argument("functional", help=path_help)
    s.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("aq", parents=[common], help="almost-quantum membership or bound")
    s.add_argument("mode", choices=["member", "bound"])
    s.add_argument("path", help=path_help)
    s.set_defaults(func=cmd_aq)

    s = sub.add_parser("local", parents=[common], help="locality for all projective measurements")
    s.add_argument("path", help=path_help)
    s.add_argument("--mu", type=float, default=MU_OCTAGON, help="visibility (default cos(pi/8))")
    s.set_defaults(func=cmd_local)

    s = sub.add_parser("ghjw", parents=[common], help="explicit quantum realisation")
    s.add_argument("path", help=path_help)
    s.set_defaults(func=cmd_ghjw)

    s = sub.add_parser("search", parents=[common], help="randomised search for examples")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--restarts", type=int, default=500)
    s.add_argument("--mu-target", type=float, default=MU_OCTAGON)
    s.add_argument("--descent-steps", type=int, default=200)
    s.add_argument("--objective", choices=["gap", "mu"], default="gap")
    s.add_argument("--gradient", choices=["envelope", "fd"], default="envelope")
    s.add_argument("--no-symmetrize", action="store_true",
                   help="do not symmetrise sampled functionals under Bob-Charlie exchange")
    s.add_argument("--initial", metavar="PATH", help="functional for the first restart")
    s.add_argument("--out", metavar="PATH", help="write the result JSON here")
    s.set_defaults(func=cmd_search)

    s = sub.add_parser("verify", parents=[common], help="re-check a saved search result")
    s.add_argument("path")
    s.set_defaults(func=cmd_verify)

    s = sub.add_parser("bloch", parents=[common], help="Bloch-disk SVG of a real qubit assemblage")
    s.add_argument("path", help=path_help)
    s.add_argument("out")
    s.set_defaults(func=cmd_bloch)

    s = sub.add_parser("reproduce-paper", parents=[common],
                       help="check the bundled published example stage by stage")
    s.add_argument("--assemblage", metavar="PATH", help="replace the bundled assemblage")
    s.add_argument("--functional", metavar="PATH", help="replace the bundled functional")
    s.set_defaults(func=cmd_reproduce)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    args.tolerance_given = args.tolerance is not None
    if args.tolerance is None:
        args.tolerance = 1e-10
    try:
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (SolverError, LPSolverError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
