import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from findex.algebra import AlgebraShape, Element, LinearMap, random_element
from findex.condexp import (CondExp, ConstructionError, density_ce, faithfulness_gap,
                            group_average_ce, orbits, tensor_state_ce, trace_ce, validate_ce,
                            weighted_corner_ce)
from strategies import embeddings, seeds


def _tau(x: Element, w) -> complex:
    return sum(wi * np.trace(b) for wi, b in zip(w, x.blocks))


@given(embeddings(), seeds)
def test_trace_expectation_is_tau_orthogonal_projection(e, seed):
    rng = np.random.default_rng(seed)
    w = rng.uniform(0.5, 2.0, e.amb_shape.n_blocks)
    E = trace_ce(e, w)
    x = random_element(e.amb_shape, rng)
    y = e.embed(random_element(e.sub_shape, rng))
    # τ(E(x) y) = τ(x y) for every y in ι(B), and E(x) lies in ι(B)
    assert _tau(E(x) @ y, w) == pytest.approx(_tau(x @ y, w), abs=1e-10)
    assert e.range_residual(E(x)) < 1e-10


def test_tensor_state_formula(rng):
    c = np.diag([0.5, 0.3, 0.2]).astype(complex)
    E = tensor_state_ce(2, c)
    t = rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2))
    s = rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3))
    x = Element.from_ambient(E.shape, np.kron(t, s))
    expect = np.kron(t, np.eye(3)) * np.trace(c @ s)
    assert np.allclose(E(x).ambient(), expect)


def test_weighted_corner_formula(rng):
    lam = 0.3
    E = weighted_corner_ce(AlgebraShape((2, 1)), lam)
    x = random_element(E.shape, rng)
    for blk, out in zip(x.blocks, E(x).blocks):
        n = len(blk) // 2
        corner = lam * blk[:n, :n] + (1 - lam) * blk[n:, n:]
        assert np.allclose(out, np.kron(np.eye(2), corner))


def test_group_average_formula():
    n = 6
    flip = [(-x) % n for x in range(n)]
    w = np.array([1.0, 2.0, 1.0, 3.0, 1.0, 2.0])
    E = group_average_ce(n, flip, w)
    f = np.arange(n, dtype=float) ** 2
    got = np.real(E(Element.diag(E.shape, f)).compact)
    for x in range(n):
        orb = sorted({x, flip[x]})
        assert got[x] == pytest.approx(np.dot(w[orb], f[orb]) / w[orb].sum())


def test_orbits_of_commuting_involutions():
    n = 8
    flip = [(-x) % n for x in range(n)]
    shift = [(x + 4) % n for x in range(n)]
    assert orbits(n, [flip]) == [[0], [1, 7], [2, 6], [3, 5], [4]]
    assert orbits(n, [flip, shift]) == [[0, 4], [1, 3, 5, 7], [2, 6]]


@pytest.mark.parametrize("build", [
    lambda: tensor_state_ce(2, np.diag([0.5, 0.5])),
    lambda: weighted_corner_ce(AlgebraShape((1,)), 0.25),
    lambda: group_average_ce(5, [0, 4, 3, 2, 1]),
])
def test_constructors_pass_validation(build):
    E = build()
    rep = validate_ce(E)
    assert rep.ok, rep.failures()
    assert {a.name for a in rep.axioms} == {"idempotent", "unital", "range", "bimodule",
                                            "positive", "faithful"}


@pytest.mark.parametrize("call, match", [
    (lambda: tensor_state_ce(1, np.diag([0.7, 0.7])), "state"),
    (lambda: tensor_state_ce(1, np.diag([1.0, 0.0])), "singular"),
    (lambda: tensor_state_ce(1, np.array([[0.5, 1.0], [0.0, 0.5]])), "self-adjoint"),
    (lambda: weighted_corner_ce(AlgebraShape((1,)), 1.0), "lambda"),
    (lambda: group_average_ce(3, [1, 2, 0]), "involutive"),
    (lambda: group_average_ce(3, [0, 0, 1]), "permutation"),
    (lambda: group_average_ce(4, [[1, 0, 2, 3], [0, 2, 1, 3]]), "commute"),
])
def test_constructors_reject_bad_parameters(call, match):
    with pytest.raises(ConstructionError, match=match):
        call()


def _corrupt(E: CondExp, m: np.ndarray) -> CondExp:
    return CondExp(E.embedding, LinearMap(E.shape, E.shape, m), "custom", {})


def test_validation_names_the_broken_axiom():
    E = weighted_corner_ce(AlgebraShape((1,)), 0.5)
    # twice E is neither unital nor idempotent
    rep = validate_ce(_corrupt(E, 2 * E.map.compact))
    assert {"unital", "idempotent"} <= set(rep.failures())
    assert rep["idempotent"].witness is not None


def test_non_positive_functional_fails_positivity():
    from findex.inclusion import Embedding
    e = Embedding(AlgebraShape((1,)), AlgebraShape((2,)), np.array([[2]]))
    # E(x) = φ(x) 1 with φ(x) = x00 + x01 + x10: unital, idempotent, a C-bimodule map,
    # but φ(ξξ*) = -1/2 for ξ = (1, -1)/√2
    phi = np.array([1.0, 1.0, 1.0, 0.0])
    m = np.outer(np.array([1.0, 0.0, 0.0, 1.0]), phi)
    E = CondExp(e, LinearMap(e.amb_shape, e.amb_shape, m), "custom", {})
    rep = validate_ce(E)
    # Tr E(a* a) = 2 φ(a* a) so the trace form is indefinite as well
    assert rep.failures() == ["positive", "faithful"]
    assert rep["positive"].residual >= 0.5 - 1e-9
    w = rep["positive"].witness
    assert min(np.linalg.eigvalsh(E(w).blocks[0])) < 0


def test_non_faithful_density_is_detected():
    from findex.inclusion import Embedding
    e = Embedding(AlgebraShape((1,)), AlgebraShape((2,)), np.array([[2]]))
    E = density_ce(e, {(0, 0): np.diag([1.0, 0.0])}, validate=False)
    rep = validate_ce(E)
    assert rep.failures() == ["faithful"]
    gap, wit = faithfulness_gap(E)
    assert gap == pytest.approx(0.0, abs=1e-12)
    # the witness w has E(w* w) = 0
    assert np.allclose(E(wit.adj @ wit).compact, 0)
    with pytest.raises(ConstructionError, match="faithful"):
        density_ce(e, {(0, 0): np.diag([1.0, 0.0])})


@given(embeddings(max_mult=2), seeds)
def test_density_expectation_round_trips_its_densities(e, seed):
    from findex.structure import edge_densities
    rng = np.random.default_rng(seed)
    dens = {}
    for j in range(e.sub_shape.n_blocks):
        raw = {}
        for i in range(e.amb_shape.n_blocks):
            lam = int(e.lam[i, j])
            if lam:
                g = rng.standard_normal((lam, lam)) + 1j * rng.standard_normal((lam, lam))
                raw[(i, j)] = g @ g.conj().T + 0.1 * np.eye(lam)
        total = sum(np.trace(c).real for c in raw.values())
        dens.update({k: c / total for k, c in raw.items()})
    E = density_ce(e, dens)
    got = edge_densities(E)
    for k, c in dens.items():
        assert np.allclose(got[k], c, atol=1e-10)


@given(st.floats(0.05, 0.95), seeds)
def test_expectation_is_contractive_on_random_elements(lam, seed):
    E = weighted_corner_ce(AlgebraShape((2,)), lam)
    a = random_element(E.shape, np.random.default_rng(seed))
    from findex.algebra import operator_norm
    assert operator_norm(E(a)) <= operator_norm(a) + 1e-10
