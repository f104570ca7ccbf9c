"""Command line front end: run checks and measurements on scenario files.

Every subcommand writes one JSON report (stdout unless ``--out``).  Exit status is
0 when everything passed, 1 when a check failed and 2 for usage or parse errors.
"""
from __future__ import annotations

import argparse
import functools
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from datetime import datetime, timezone
from pathlib import Path

from . import constants as cst
from . import hilbert as hm
from .condexp import ConstructionError, validate_ce
from .scenario import CHECK_IDS, ScenarioError, load_scenario, random_scenario
from .suite import FAIL, INFINITE, PASS, REPORT_VERSION, _cert_witness, _jsonable, run_suite

RESIDUAL = 1e-8


class UsageError(Exception):
    pass


def _stamp(command: str, body: dict) -> dict:
    doc = {"report_version": REPORT_VERSION, "command": command,
           "timestamp": datetime.now(timezone.utc).isoformat(timespec="seconds")}
    doc.update(body)
    return doc


def _emit(doc: dict, out: str | None) -> None:
    text = json.dumps(doc, indent=2, ensure_ascii=False) + "\n"
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _inputs(paths: list[str] | None) -> list[Path]:
    if not paths:
        raise UsageError("--input is required")
    files = []
    for p in map(Path, paths):
        if p.is_dir():
            files.extend(sorted(p.glob("*.json")))
        elif p.exists():
            files.append(p)
        else:
            raise UsageError(f"{p}: no such file or directory")
    if not files:
        raise UsageError("no scenario files found")
    return files


def _load(path: Path, args):
    try:
        sc = load_scenario(path)
    except ScenarioError as exc:
        raise UsageError(f"{path}: {exc}") from None
    except ValueError as exc:  # embedding unitality and similar construction errors
        raise UsageError(f"{path}: {exc}") from None
    if args.tol is not None:
        sc = replace(sc, tolerances=replace(sc.tolerances, tol=args.tol))
    if args.checks:
        try:
            sc = sc.with_checks(args.checks)
        except ScenarioError as exc:
            raise UsageError(str(exc)) from None
    return sc


def _single(args):
    files = _inputs(args.input)
    if len(files) != 1:
        raise UsageError(f"{args.command} takes exactly one scenario file")
    return _load(files[0], args)


def _seed(sc, args) -> int:
    return sc.seed if args.seed is None else args.seed


def _build(sc, args):
    """Build the map; a failure of faithfulness alone is allowed (it means infinite index)."""
    E = sc.build(validate=False)
    bad = [f for f in validate_ce(E, sc.tolerances, seed=_seed(sc, args)).failures()
           if f != "faithful"]
    if bad:
        raise ConstructionError(f"{sc.name}: not a conditional expectation ({', '.join(bad)})")
    return E


# -- subcommands ----------------------------------------------------------------------

def cmd_check(args) -> tuple[dict, bool]:
    sc = _single(args)
    E = sc.build(validate=False)
    rep = validate_ce(E, sc.tolerances, seed=_seed(sc, args))
    axioms = [{"name": a.name, "passed": a.passed, "residual": a.residual,
               **({"witness": a.witness} if a.witness is not None else {})} for a in rep.axioms]
    body = {"scenario": sc.name, "status": PASS if rep.ok else FAIL, "axioms": axioms}
    return _jsonable(body), rep.ok


def cmd_constants(args) -> tuple[dict, bool]:
    sc = _single(args)
    E = _build(sc, args)
    K = cst.compute_K(E, args.restarts, _seed(sc, args), sc.tolerances)
    L = cst.compute_L(E, sc.tolerances)
    body = {"scenario": sc.name}
    for name, c in (("K", K), ("L", L)):
        body[name] = {"value": c.value, "method": c.method, "residual": c.residual,
                      "restarts_used": c.restarts_used, "converged": c.converged,
                      "witnesses": _cert_witness(c)}
    if not (K.is_finite and L.is_finite):
        body["status"] = INFINITE
        return _jsonable(body), True
    fk = cst.floor_k(K.value)
    ok = K.value <= L.value + 1e-6 and L.value <= K.value * fk + 1e-6
    body.update({"floor_K": fk, "sandwich": {"lower": K.value, "upper": K.value * fk},
                 "status": PASS if ok else FAIL})
    return _jsonable(body), ok


def cmd_index(args) -> tuple[dict, bool]:
    sc = _single(args)
    E = _build(sc, args)
    L = cst.compute_L(E, sc.tolerances)
    if not L.is_finite:
        return _jsonable({"scenario": sc.name, "status": INFINITE, "L": L.value}), True
    ind = hm.index_element(E, seed=_seed(sc, args), tols=sc.tolerances, strict=False)
    ok = ind.is_central and max(ind.basis_residual, ind.reconstruction_residual) <= RESIDUAL
    body = {"scenario": sc.name, "status": PASS if ok else FAIL, "index": ind.value,
            "block_scalars": list(ind.scalars), "norm": ind.norm, "L": L.value,
            "is_central": ind.is_central, "min_spectrum": ind.min_spectrum,
            "reconstruction_residual": ind.reconstruction_residual,
            "basis_residual": ind.basis_residual}
    return _jsonable(body), ok


def cmd_tower(args) -> tuple[dict, bool]:
    sc = _single(args)
    E = sc.build()
    try:
        tw = hm.jones_tower(E, args.levels, args.dim_budget, sc.tolerances)
    except ConstructionError as exc:
        return _jsonable({"scenario": sc.name, "status": FAIL, "error": str(exc)}), False
    levels, ok = [], True
    for lv in tw.levels:
        rec = {"level": lv.level, "shape": str(lv.algebra_shape),
               "index_blocks": list(lv.index.scalars), "index_norm": lv.index.norm}
        if lv.level:
            rec.update({"E1_of_e_residual": lv.jones_residual, "theta_residual": lv.theta_residual,
                        "stabilization_applies": lv.stabilization_applies,
                        "stabilization_residual": lv.stabilization_residual})
            ok &= max(lv.jones_residual, lv.theta_residual) <= RESIDUAL
            if lv.stabilization_applies:
                ok &= lv.stabilization_residual <= RESIDUAL * max(1.0, lv.index.norm)
        levels.append(rec)
    body = {"scenario": sc.name, "status": PASS if ok else FAIL, "requested": tw.requested,
            "truncated": tw.truncated, "truncation_reason": tw.truncation_reason,
            "levels": levels}
    return _jsonable(body), bool(ok)


def _suite_one(sc, args):
    return run_suite(sc, restarts=args.restarts, seed=args.seed, levels=args.levels,
                     dim_budget=args.dim_budget, samples=args.samples)


def cmd_suite(args) -> tuple[dict, bool]:
    scenarios = sorted((_load(p, args) for p in _inputs(args.input)), key=lambda s: s.name)
    jobs = min(args.jobs or os.cpu_count() or 1, len(scenarios))
    work = functools.partial(_suite_one, args=args)
    if jobs > 1:
        with ProcessPoolExecutor(jobs) as pool:
            reports = list(pool.map(work, scenarios))
    else:
        reports = list(map(work, scenarios))
    if args.verbose:
        for rep in reports:
            print(f"{rep.scenario}: {rep.status}", file=sys.stderr)
    ok = all(r.ok for r in reports)
    body = {"status": PASS if ok else FAIL, "scenarios": len(reports),
            "failed": [r.scenario for r in reports if not r.ok],
            "reports": [r.to_dict() for r in reports]}
    return body, ok


def cmd_gen(args) -> tuple[dict | None, bool]:
    seed = 1 if args.seed is None else args.seed
    scs = [random_scenario(s, args.max_blocks, args.max_block_dim)
           for s in range(seed, seed + args.count)]
    if args.checks:
        scs = [s.with_checks(args.checks) for s in scs]
    if args.count == 1 and (args.out is None or not Path(args.out).is_dir()):
        text = scs[0].to_json()
        if args.out:
            Path(args.out).write_text(text, encoding="utf-8")
        else:
            sys.stdout.write(text)
        return None, True
    if args.out is None:
        raise UsageError("gen --count > 1 needs --out DIRECTORY")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for sc in scs:
        (out / f"{sc.name}.json").write_text(sc.to_json(), encoding="utf-8")
    return None, True


COMMANDS = {"check": cmd_check, "constants": cmd_constants, "index": cmd_index,
            "tower": cmd_tower, "suite": cmd_suite, "gen": cmd_gen}


def _check_list(text: str) -> list[str]:
    ids = [c.strip() for c in text.split(",") if c.strip()]
    for c in ids:
        if c not in CHECK_IDS:
            raise argparse.ArgumentTypeError(f"unknown check identifier {c!r}")
    return ids


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--input", action="append", metavar="PATH",
                        help="scenario file or directory of *.json (repeatable)")
    common.add_argument("--out", metavar="PATH", help="write the report here instead of stdout")
    common.add_argument("--tol", type=float, help="override the scenario's base tolerance")
    common.add_argument("--seed", type=int, help="override the scenario seed")
    common.add_argument("--restarts", type=int, default=64, help="see-saw restarts for K")
    common.add_argument("--levels", type=int, default=3, help="tower levels")
    common.add_argument("--dim-budget", type=int, default=20000,
                        help="largest ambient dimension the tower may build")
    common.add_argument("--checks", type=_check_list, metavar="LIST",
                        help="comma-separated check identifiers")
    p = argparse.ArgumentParser(prog="findex", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("check", parents=[common], help="validate the expectation axioms")
    sub.add_parser("constants", parents=[common], help="certified K and L")
    sub.add_parser("index", parents=[common], help="index element from a quasi-basis")
    sub.add_parser("tower", parents=[common], help="iterate the basic construction")
    s = sub.add_parser("suite", parents=[common], help="run the inequality and identity checks")
    s.add_argument("--samples", type=int, default=500, help="random elements per inequality")
    s.add_argument("-j", "--jobs", type=int, default=0,
                   help="worker processes (default: one per CPU)")
    s.add_argument("-v", "--verbose", action="store_true", help="progress on stderr")
    s.set_defaults(levels=1)
    g = sub.add_parser("gen", parents=[common], help="write seeded random scenarios")
    g.add_argument("--count", type=int, default=1)
    g.add_argument("--max-blocks", type=int, default=3)
    g.add_argument("--max-block-dim", type=int, default=6)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.levels < 1 or args.restarts < 1:
        print("findex: --levels and --restarts must be >= 1", file=sys.stderr)
        return 2
    try:
        body, ok = COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"findex: {exc}", file=sys.stderr)
        return 2
    except ConstructionError as exc:
        print(f"findex: {exc}", file=sys.stderr)
        return 1
    if body is not None:
        _emit(_stamp(args.command, body), args.out)
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
