"""Regenerate the golden scenario files in corpus/.

    python3 scripts/make_golden.py [--out corpus]
"""
import argparse
from pathlib import Path

import numpy as np

from findex.algebra import AlgebraShape
from findex.inclusion import Embedding
from findex.scenario import DEFAULT_CHECKS, Scenario


def reflection(n: int) -> list[int]:
    return [(-x) % n for x in range(n)]


def golden() -> list[Scenario]:
    c_ = AlgebraShape((1,))
    ex1 = Embedding(c_, AlgebraShape((2,)), np.array([[2]]))
    out = [Scenario("ex1", "trace", {"trace_weights": None}, 0, ex1)]
    for tag, lam in (("0.5", 0.5), ("1_3", 1 / 3), ("0.9", 0.9)):
        out.append(Scenario(f"elambda-{tag}", "weighted_corner",
                            {"n_blocks": [1], "lambda": lam}))
    # λ = 1/(2+ε) with ε = 0.25: L exceeds floor(K)² here
    out.append(Scenario("elambda-1_2.25", "weighted_corner", {"n_blocks": [1], "lambda": 1 / 2.25},
                        checks=DEFAULT_CHECKS + ("floor_k_squared",),
                        expect_counterexample=("floor_k_squared",)))
    c3 = np.diag([0.5, 0.3, 0.2]).astype(complex)
    out.append(Scenario("tensor-h1-k3", "tensor_state", {"h_dim": 1, "density": c3}))
    out.append(Scenario("tensor-h2-k3", "tensor_state", {"h_dim": 2, "density": c3}))
    out.append(Scenario("tensor-h2-k2", "tensor_state",
                        {"h_dim": 2, "density": np.eye(2, dtype=complex) / 2}))
    for n in (2, 3, 8, 64):
        out.append(Scenario(f"circle-n{n}", "group_average",
                            {"space_size": n, "involutions": [reflection(n)]}))
    # a non-faithful map: K and L are infinite, index checks are skipped
    out.append(Scenario("infinite-demo", "custom",
                        {"densities": {(0, 0): np.diag([1.0, 0.0]).astype(complex)}}, 0, ex1))
    return out


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default=str(Path(__file__).resolve().parent.parent / "corpus"))
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for sc in golden():
        (out / f"{sc.name}.json").write_text(sc.to_json(), encoding="utf-8")
        print(out / f"{sc.name}.json")


if __name__ == "__main__":
    main()
