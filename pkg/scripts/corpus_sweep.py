"""Seeded random sweep: build scenarios, run the suite and summarize the constants.

    python3 scripts/corpus_sweep.py --count 100 [--start 1] [--checks sandwich,gap_law]
"""
import argparse
import collections
import time

from findex.scenario import random_scenario
from findex.suite import FAIL, run_suite


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--count", type=int, default=100)
    ap.add_argument("--start", type=int, default=1)
    ap.add_argument("--max-blocks", type=int, default=3)
    ap.add_argument("--max-block-dim", type=int, default=6)
    ap.add_argument("--checks", help="comma-separated check identifiers (default: all)")
    ap.add_argument("--restarts", type=int, default=64)
    args = ap.parse_args()
    checks = args.checks.split(",") if args.checks else None

    failures = collections.Counter()
    ratios, t_all = [], time.perf_counter()
    for seed in range(args.start, args.start + args.count):
        sc = random_scenario(seed, args.max_blocks, args.max_block_dim)
        t0 = time.perf_counter()
        rep = run_suite(sc, checks=checks, restarts=args.restarts)
        bad = [r.id for r in rep.records if r.status == FAIL]
        failures.update(bad)
        sw = next((r.measured for r in rep.records if r.id == "sandwich"), None)
        if sw:
            ratios.append(sw["L"] / sw["K"])
        print(f"{seed:5d} {str(sc.embedding.sub_shape):>14} ⊂ {str(sc.embedding.amb_shape):<14} "
              f"{rep.status:<5} {time.perf_counter() - t0:6.2f}s {' '.join(bad)}", flush=True)
    print(f"\n{args.count} scenarios in {time.perf_counter() - t_all:.1f}s")
    if ratios:
        print(f"L/K ranges over [{min(ratios):.4f}, {max(ratios):.4f}]")
    print("failures:", dict(failures) or "none")


if __name__ == "__main__":
    main()
