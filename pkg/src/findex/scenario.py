"""Scenario documents: JSON with a schema version and numbers as decimal strings."""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

import numpy as np

from .algebra import DEFAULT_TOL, AlgebraShape, Tolerances, random_unitary
from .condexp import (KINDS, CondExp, density_ce, group_average_ce, tensor_state_ce, trace_ce,
                      weighted_corner_ce)
from .inclusion import Embedding
from .serialize import matrix_from_json, matrix_to_json, num_from_json, num_to_json

SCHEMA_VERSION = "1"

CHECK_IDS = (
    "validate", "sandwich", "gap_law", "commutative_collapse", "monotone_soundness",
    "l_equals_norm_ind", "l_equals_k_squared", "floor_k_squared", "index_bound",
    "quasi_basis", "basis_independence", "projection_basis", "dim_bound",
    "commutative_dim_bound", "relative_commutant", "pmp_bound", "summand_count",
    "pure_state_extensions", "minimal_projection_law", "kadison", "pimsner_popa",
    "jones_relations", "tower_stabilization", "stinespring", "pointwise_index",
)
# checks run when a scenario lists none; floor_k_squared is opt-in because
# L ≤ [K]² is not a theorem (it is the bound the weighted-corner family breaks)
DEFAULT_CHECKS = tuple(c for c in CHECK_IDS if c != "floor_k_squared")


class ScenarioError(ValueError):
    """Schema violation; ``path`` names the offending field."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


@dataclass(frozen=True, eq=False)
class Scenario:
    name: str
    kind: str
    params: dict
    seed: int = 0
    embedding: Embedding | None = None
    tolerances: Tolerances = DEFAULT_TOL
    checks: tuple[str, ...] = DEFAULT_CHECKS
    expect_counterexample: tuple[str, ...] = ()
    raw: dict | None = field(default=None, repr=False, compare=False)

    def build(self, validate: bool = True) -> CondExp:
        p, t = self.params, self.tolerances
        if self.kind == "trace":
            return trace_ce(self.embedding, p.get("trace_weights"), t, validate)
        if self.kind == "tensor_state":
            return tensor_state_ce(p["h_dim"], p["density"], t, validate)
        if self.kind == "weighted_corner":
            return weighted_corner_ce(AlgebraShape(tuple(p["n_blocks"])), p["lambda"], t, validate)
        if self.kind == "group_average":
            return group_average_ce(p["space_size"], p["involutions"], p.get("weights"), t,
                                    validate)
        if self.kind == "custom":
            return density_ce(self.embedding, p["densities"], t, validate)
        raise ScenarioError("expectation.kind", f"unknown kind {self.kind!r}")

    def to_dict(self) -> dict:
        d = {"schema_version": SCHEMA_VERSION, "name": self.name, "seed": self.seed,
             "expectation": {"kind": self.kind, "params": _params_to_json(self.kind, self.params)}}
        if self.embedding is not None:
            d["embedding"] = self.embedding.to_dict()
        if self.tolerances != DEFAULT_TOL:
            d["tolerances"] = {k: num_to_json(v) for k, v in vars(self.tolerances).items()}
        d["checks"] = list(self.checks)
        if self.expect_counterexample:
            d["expect_counterexample"] = list(self.expect_counterexample)
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, ensure_ascii=False) + "\n"

    def with_checks(self, checks) -> Scenario:
        return replace(self, checks=tuple(_check_ids(list(checks), "checks")))


def _params_to_json(kind: str, p: dict) -> dict:
    if kind == "trace":
        out = {}
        if p.get("trace_weights") is not None:
            out["trace_weights"] = [num_to_json(w) for w in p["trace_weights"]]
        return out
    if kind == "tensor_state":
        return {"h_dim": int(p["h_dim"]), "density": matrix_to_json(p["density"])}
    if kind == "weighted_corner":
        return {"n_blocks": list(p["n_blocks"]), "lambda": num_to_json(p["lambda"])}
    if kind == "group_average":
        out = {"space_size": int(p["space_size"]),
               "involutions": [list(map(int, s)) for s in p["involutions"]]}
        if p.get("weights") is not None:
            out["weights"] = [num_to_json(w) for w in p["weights"]]
        return out
    if kind == "custom":
        return {"densities": {f"{i},{j}": matrix_to_json(c)
                              for (i, j), c in sorted(p["densities"].items())}}
    raise ValueError(kind)


def _require(d: dict, key: str, path: str):
    if key not in d:
        raise ScenarioError(f"{path}.{key}" if path else key, "missing required field")
    return d[key]


def _check_ids(checks, path: str) -> list[str]:
    if not isinstance(checks, list):
        raise ScenarioError(path, "must be a list of check identifiers")
    for k, c in enumerate(checks):
        if c not in CHECK_IDS:
            raise ScenarioError(f"{path}[{k}]", f"unknown check identifier {c!r}")
    return checks


def _number(v, path: str) -> float:
    if not isinstance(v, str):
        raise ScenarioError(path, "numbers are written as decimal strings")
    try:
        return num_from_json(v)
    except ValueError:
        raise ScenarioError(path, f"not a decimal number: {v!r}") from None


def _params_from_json(kind: str, p: dict) -> dict:
    path = "expectation.params"
    if kind == "trace":
        w = p.get("trace_weights")
        return {"trace_weights": None if w is None else
                [_number(x, f"{path}.trace_weights[{k}]") for k, x in enumerate(w)]}
    if kind == "tensor_state":
        return {"h_dim": int(_require(p, "h_dim", path)),
                "density": matrix_from_json(_require(p, "density", path))}
    if kind == "weighted_corner":
        return {"n_blocks": [int(x) for x in _require(p, "n_blocks", path)],
                "lambda": _number(_require(p, "lambda", path), f"{path}.lambda")}
    if kind == "group_average":
        out = {"space_size": int(_require(p, "space_size", path)),
               "involutions": [list(map(int, s)) for s in _require(p, "involutions", path)]}
        if "weights" in p:
            out["weights"] = [_number(x, f"{path}.weights[{k}]") for k, x in enumerate(p["weights"])]
        return out
    if kind == "custom":
        dens = {}
        for key, m in _require(p, "densities", path).items():
            i, j = (int(t) for t in key.split(","))
            dens[(i, j)] = matrix_from_json(m)
        return {"densities": dens}
    raise ScenarioError("expectation.kind", f"unknown kind {kind!r}; expected one of {KINDS}")


def scenario_from_dict(d: dict) -> Scenario:
    if not isinstance(d, dict):
        raise ScenarioError("<root>", "expected an object")
    version = _require(d, "schema_version", "")
    if version != SCHEMA_VERSION:
        raise ScenarioError("schema_version", f"unsupported version {version!r}")
    name = _require(d, "name", "")
    exp = _require(d, "expectation", "")
    kind = _require(exp, "kind", "expectation")
    if kind not in KINDS:
        raise ScenarioError("expectation.kind", f"unknown kind {kind!r}; expected one of {KINDS}")
    params = _params_from_json(kind, exp.get("params", {}))
    emb = None
    if "embedding" in d:
        ed = d["embedding"]
        for key in ("sub_blocks", "amb_blocks", "inclusion_matrix"):
            _require(ed, key, "embedding")
        emb = Embedding.from_dict(ed)  # unitality errors name the A-block
    elif kind in ("trace", "custom"):
        raise ScenarioError("embedding", f"kind {kind!r} needs an embedding")
    tols = DEFAULT_TOL
    if "tolerances" in d:
        fields = vars(DEFAULT_TOL)
        over = {}
        for key, v in d["tolerances"].items():
            if key not in fields:
                raise ScenarioError(f"tolerances.{key}", "unknown tolerance")
            over[key] = _number(v, f"tolerances.{key}")
        tols = replace(DEFAULT_TOL, **over)
    checks = tuple(_check_ids(d.get("checks", list(DEFAULT_CHECKS)), "checks"))
    expect = tuple(_check_ids(d.get("expect_counterexample", []), "expect_counterexample"))
    return Scenario(name, kind, params, int(d.get("seed", 0)), emb, tols, checks, expect, d)


def parse_scenario(text: str) -> Scenario:
    try:
        d = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"line {exc.lineno}", exc.msg) from None
    return scenario_from_dict(d)


def load_scenario(path) -> Scenario:
    with open(path, encoding="utf-8") as fh:
        return parse_scenario(fh.read())


def condexp_to_dict(E: CondExp) -> dict:
    d = {"kind": E.kind, "params": _params_to_json(E.kind, E.params)
         if E.kind != "custom" or "densities" in E.params else dict(E.params)}
    d["embedding"] = E.embedding.to_dict()
    return d


# -- random corpus ----------------------------------------------------------------

def _draw_inclusion(rng: np.random.Generator, max_blocks: int, max_block_dim: int):
    q = int(rng.integers(1, max_blocks + 1))
    m = rng.integers(1, max_block_dim + 1, size=q)
    p = int(rng.integers(1, max_blocks + 1))
    lam = np.zeros((p, q), dtype=int)
    for i in range(p):
        room = max_block_dim
        order = rng.permutation(q)
        for j in order:
            if m[j] <= room and rng.random() < 0.7:
                k = int(rng.integers(1, room // m[j] + 1))
                lam[i, j] = k
                room -= k * m[j]
    return m, lam


def random_scenario(seed: int, max_blocks: int = 3, max_block_dim: int = 6,
                    max_tries: int = 1000) -> Scenario:
    """A trace-preserving expectation on a random inclusion with Haar block unitaries."""
    if max_blocks < 1 or max_block_dim < 1:
        raise ValueError("bounds must be >= 1")
    rng = np.random.default_rng(seed)
    for _ in range(max_tries):
        m, lam = _draw_inclusion(rng, max_blocks, max_block_dim)
        if (lam.sum(axis=1) == 0).any() or (lam.sum(axis=0) == 0).any():
            continue
        break
    else:
        raise RuntimeError("no admissible inclusion found")
    n = lam @ m
    us = tuple(random_unitary(int(k), rng) for k in n)
    weights = [float(x) for x in rng.uniform(0.5, 2.0, size=len(n))]
    emb = Embedding(AlgebraShape(tuple(int(x) for x in m)), AlgebraShape(tuple(int(x) for x in n)),
                    lam, us)
    # round-trip the unitaries through the decimal encoding so file and memory agree
    emb = Embedding.from_dict(json.loads(json.dumps(emb.to_dict())))
    return Scenario(f"random-{seed}", "trace", {"trace_weights": weights}, seed, emb)
