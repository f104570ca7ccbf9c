"""Run the full check suite on every golden scenario and print one row per scenario.

    python3 scripts/run_golden.py [--levels 3] [--out reports.json]
"""
import argparse
import json
import time
from pathlib import Path

from findex.scenario import load_scenario
from findex.suite import FAIL, INFINITE, run_suite

CORPUS = Path(__file__).resolve().parent.parent / "corpus"


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--corpus", type=Path, default=CORPUS)
    ap.add_argument("--levels", type=int, default=3)
    ap.add_argument("--restarts", type=int, default=64)
    ap.add_argument("--out", type=Path, help="also write the full reports as JSON")
    args = ap.parse_args()

    reports = []
    print(f"{'scenario':<18} {'status':<15} {'K':>10} {'L':>10} {'failed/infinite':<30} time")
    for path in sorted(args.corpus.glob("*.json")):
        t0 = time.perf_counter()
        rep = run_suite(load_scenario(path), restarts=args.restarts, levels=args.levels)
        dt = time.perf_counter() - t0
        reports.append(rep.to_dict())
        sw = next((r.measured for r in rep.records if r.id == "sandwich"), {})
        odd = [r.id for r in rep.records if r.status in (FAIL, INFINITE)]
        k, l = (f"{float(sw[x]):10.6f}" if x in sw else f"{'-':>10}" for x in ("K", "L"))
        print(f"{rep.scenario:<18} {rep.status:<15} {k} {l} {','.join(odd)[:30]:<30} {dt:5.1f}s",
              flush=True)
    if args.out:
        args.out.write_text(json.dumps(reports, indent=2) + "\n", encoding="utf-8")


if __name__ == "__main__":
    main()
