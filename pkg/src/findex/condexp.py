"""Conditional expectations E: A → ι(B) and their validation."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .algebra import (DEFAULT_TOL, AlgebraShape, Element, LinearMap, Tolerances,
                      left_mult_apply, matrix_units, precompose_left_mult,
                      precompose_right_mult, right_mult_apply, unit_at)
from .inclusion import Embedding

KINDS = ("trace", "tensor_state", "weighted_corner", "group_average", "custom")


class ConstructionError(ValueError):
    """The requested expectation cannot be built (bad parameters or failed axioms)."""

    def __init__(self, message: str, report: ValidationReport | None = None):
        super().__init__(message)
        self.report = report


@dataclass(frozen=True, eq=False)
class CondExp:
    embedding: Embedding
    map: LinearMap
    kind: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown kind {self.kind!r}")

    @property
    def shape(self) -> AlgebraShape:
        return self.embedding.amb_shape

    def __call__(self, a: Element) -> Element:
        return self.map(a)

    def to_b(self, a: Element) -> Element:
        """E(a) read back in B."""
        return self.embedding.restrict(self.map(a))

    def is_identity(self, tol: float = 1e-9) -> bool:
        return bool(np.max(np.abs(self.map.compact - np.eye(self.shape.dim))) <= tol)

    def to_dict(self) -> dict:
        from .scenario import condexp_to_dict
        return condexp_to_dict(self)


# -- validation ---------------------------------------------------------------

@dataclass(frozen=True)
class AxiomResult:
    name: str
    passed: bool
    residual: float
    witness: Element | None = None


@dataclass(frozen=True)
class ValidationReport:
    axioms: tuple[AxiomResult, ...]

    @property
    def ok(self) -> bool:
        return all(a.passed for a in self.axioms)

    def __getitem__(self, name: str) -> AxiomResult:
        for a in self.axioms:
            if a.name == name:
                return a
        raise KeyError(name)

    def failures(self) -> list[str]:
        return [a.name for a in self.axioms if not a.passed]


def _worst_column(diff: np.ndarray, shape: AlgebraShape) -> tuple[float, Element | None]:
    if diff.size == 0:
        return 0.0, None
    col_err = np.max(np.abs(diff), axis=0)
    k = int(np.argmax(col_err))
    return float(col_err[k]), unit_at(shape, k)


def validate_ce(E: CondExp, tols: Tolerances = DEFAULT_TOL, restarts: int = 8,
                seed: int = 0) -> ValidationReport:
    from .constants import positivity_margin

    e = E.embedding
    shape = E.shape
    m = E.map.compact
    thr = 1e-10
    results = []

    diff = m @ m - m
    res, wit = _worst_column(diff, shape)
    results.append(AxiomResult("idempotent", res <= thr, res, wit if res > thr else None))

    one = Element.identity(shape)
    d1 = E(one) - one
    res = max(float(np.max(np.abs(b), initial=0.0)) for b in d1.blocks)
    results.append(AxiomResult("unital", res <= thr, res, one if res > thr else None))

    diff = e.embed_matrix @ (e.restrict_matrix @ m) - m
    res, wit = _worst_column(diff, shape)
    results.append(AxiomResult("range", res <= thr, res, wit if res > thr else None))

    res, wit = 0.0, None
    for g in e.generators():
        for diff in (precompose_left_mult(shape, m, g) - left_mult_apply(shape, m, g),
                     precompose_right_mult(shape, m, g) - right_mult_apply(shape, m, g)):
            r, w = _worst_column(diff, shape)
            if r > res:
                res, wit = r, w
    results.append(AxiomResult("bimodule", res <= thr, res, wit if res > thr else None))

    margin = positivity_margin(E.map, restarts=restarts, seed=seed, tols=tols)
    ok = margin.value >= -tols.tol
    wit = None
    if not ok:
        wit = _rank_one(shape, margin.witness_xi)
    results.append(AxiomResult("positive", ok, max(0.0, -margin.value), wit))

    res, wit = faithfulness_gap(E)
    ok = res > tols.tol
    results.append(AxiomResult("faithful", ok, res, None if ok else wit))
    return ValidationReport(tuple(results))


def _rank_one(shape: AlgebraShape, tagged) -> Element:
    block, vec = tagged
    blocks = [np.zeros((n, n), dtype=complex) for n in shape.blocks]
    blocks[block] = np.outer(vec, vec.conj())
    return Element(shape, tuple(blocks))


def faithfulness_gap(E: CondExp) -> tuple[float, Element]:
    """Smallest eigenvalue of the Gram form (a, b) ↦ Tr E(a* b) and a witness.

    On block i the form is 1 ⊗ T_i with T_i[b, d] = Tr E(e_bd), so the blocks T_i
    decide faithfulness.
    """
    shape = E.shape
    worst, wit = np.inf, None
    tr = np.zeros(shape.dim, dtype=complex)
    for o, k in zip(shape.compact_offsets, shape.blocks):
        tr[o + np.arange(k) * (k + 1)] = 1.0
    row = tr @ E.map.compact
    for k, n in enumerate(shape.blocks):
        off = shape.compact_offsets[k]
        t = row[off:off + n * n].reshape(n, n)
        w, v = np.linalg.eigh((t + t.conj().T) / 2)
        if w[0] < worst:
            worst = float(w[0])
            blocks = [np.zeros((q, q), dtype=complex) for q in shape.blocks]
            blocks[k][0, :] = v[:, 0]
            wit = Element(shape, tuple(blocks))
    return worst, wit


def _finish(E: CondExp, tols: Tolerances, validate: bool) -> CondExp:
    if validate:
        report = validate_ce(E, tols)
        if not report.ok:
            bad = report.failures()
            raise ConstructionError(f"{E.kind} expectation fails axioms {bad}", report)
    return E


# -- constructors ---------------------------------------------------------------

def trace_ce(e: Embedding, trace_weights: Sequence[float] | None = None,
             tols: Tolerances = DEFAULT_TOL, validate: bool = True) -> CondExp:
    """τ-orthogonal projection onto ι(B), τ(x) = Σ_i w_i Tr(x_i)."""
    shape = e.amb_shape
    w = np.ones(shape.n_blocks) if trace_weights is None else np.asarray(trace_weights, float)
    if w.shape != (shape.n_blocks,) or (w <= 0).any():
        raise ConstructionError("trace weights must be positive, one per A-block")
    m = np.zeros((shape.dim, shape.dim), dtype=complex)
    for j, mj in enumerate(e.sub_shape.blocks):
        beta = float(e.lam[:, j] @ w)
        for k in range(mj):
            for l in range(mj):
                out = e.embed(Element.matrix_unit(e.sub_shape, j, k, l))
                back = e.embed(Element.matrix_unit(e.sub_shape, j, l, k))
                # τ(y x) = Σ_i w_i Σ_ab y_ba x_ab
                r = np.concatenate([wi * blk.T.ravel() for wi, blk in zip(w, back.blocks)])
                m += np.outer(out.compact, r) / beta
    E = CondExp(e, LinearMap(shape, shape, m), "trace",
                {"trace_weights": [float(x) for x in w]})
    return _finish(E, tols, validate)


def _swap_unitary(h: int, k: int) -> np.ndarray:
    """U with U (1_k ⊗ b) U* = b ⊗ 1_k for b in M_h."""
    u = np.zeros((h * k, h * k))
    for r in range(k):
        for s in range(h):
            u[s * k + r, r * h + s] = 1.0
    return u


def tensor_state_ce(h_dim: int, density: np.ndarray, tols: Tolerances = DEFAULT_TOL,
                    validate: bool = True) -> CondExp:
    """E(T ⊗ S) = T ⊗ Tr(C S) 1 on M_h ⊗ M_k (lexicographic tensor order)."""
    c = np.asarray(density, dtype=complex)
    k = c.shape[0]
    if c.shape != (k, k) or h_dim < 1:
        raise ConstructionError("density must be square and h_dim >= 1")
    if np.max(np.abs(c - c.conj().T)) > 1e-12:
        raise ConstructionError("density is not self-adjoint")
    w = np.linalg.eigvalsh(c)
    if w[0] < -tols.tol or abs(np.trace(c).real - 1) > 1e-9:
        raise ConstructionError("density is not a state (positive with unit trace)")
    if w[0] <= tols.tol:
        raise ConstructionError(
            f"density is singular (smallest eigenvalue {w[0]:.3g}): expectation not faithful")
    h = int(h_dim)
    m = np.einsum("ax,cy,pq,db->apcqxbyd", np.eye(h), np.eye(h), np.eye(k), c)
    m = m.reshape((h * k) ** 2, (h * k) ** 2)
    shape = AlgebraShape((h * k,))
    e = Embedding(AlgebraShape((h,)), shape, np.array([[k]]), (_swap_unitary(h, k),))
    E = CondExp(e, LinearMap(shape, shape, m), "tensor_state",
                {"h_dim": h, "density": c})
    return _finish(E, tols, validate)


def weighted_corner_ce(n_shape: AlgebraShape, lam: float, tols: Tolerances = DEFAULT_TOL,
                       validate: bool = True) -> CondExp:
    """E_λ on M_2(N): [[a, b], [c, d]] ↦ (λa + (1-λ)d) ⊗ 1_2."""
    if not 0 < lam < 1:
        raise ConstructionError(f"lambda must lie in (0, 1), got {lam}")
    shape = AlgebraShape(tuple(2 * n for n in n_shape.blocks))
    wts = np.array([lam, 1 - lam])
    m = np.zeros((shape.dim, shape.dim), dtype=complex)
    for off, n in zip(shape.compact_offsets, n_shape.blocks):
        blk = np.einsum("tq,ax,cy,uv,u->taqcuxvy", np.eye(2), np.eye(n), np.eye(n),
                        np.eye(2), wts)
        size = (2 * n) ** 2
        m[off:off + size, off:off + size] = blk.reshape(size, size)
    e = Embedding(n_shape, shape, 2 * np.eye(n_shape.n_blocks, dtype=int))
    E = CondExp(e, LinearMap(shape, shape, m), "weighted_corner",
                {"n_blocks": list(n_shape.blocks), "lambda": float(lam)})
    return _finish(E, tols, validate)


def orbits(space_size: int, perms: Sequence[Sequence[int]]) -> list[list[int]]:
    """Orbits of the group generated by ``perms``, ordered by smallest point."""
    seen = [-1] * space_size
    out = []
    for x in range(space_size):
        if seen[x] >= 0:
            continue
        orb, stack = [], [x]
        seen[x] = len(out)
        while stack:
            y = stack.pop()
            orb.append(y)
            for p in perms:
                z = p[y]
                if seen[z] < 0:
                    seen[z] = len(out)
                    stack.append(z)
        out.append(sorted(orb))
    return out


def group_average_ce(space_size: int, involution, weights: Sequence[float] | None = None,
                     tols: Tolerances = DEFAULT_TOL, validate: bool = True) -> CondExp:
    """Averaging over the orbits of involutive permutations of {0..n-1} on A = C^n.

    ``involution`` is one permutation or a list of commuting ones; ``weights``
    (optional, positive, one per point) are normalized on each orbit.
    """
    n = int(space_size)
    perms = [list(involution)] if np.ndim(involution) == 1 else [list(p) for p in involution]
    for p in perms:
        if sorted(p) != list(range(n)):
            raise ConstructionError("not a permutation of {0..n-1}")
        if any(p[p[x]] != x for x in range(n)):
            raise ConstructionError("permutation is not involutive")
    for p in perms:
        for q in perms:
            if any(p[q[x]] != q[p[x]] for x in range(n)):
                raise ConstructionError("involutions do not commute")
    w = np.ones(n) if weights is None else np.asarray(weights, float)
    if w.shape != (n,) or (w <= 0).any():
        raise ConstructionError("weights must be positive, one per point")
    orbs = orbits(n, perms)
    lam = np.zeros((n, len(orbs)), dtype=int)
    m = np.zeros((n, n))
    for o, orb in enumerate(orbs):
        tot = w[orb].sum()
        for x in orb:
            lam[x, o] = 1
            for y in orb:
                m[x, y] = w[y] / tot
    shape = AlgebraShape((1,) * n)
    e = Embedding(AlgebraShape((1,) * len(orbs)), shape, lam)
    params = {"space_size": n, "involutions": perms}
    if weights is not None:
        params["weights"] = [float(x) for x in w]
    E = CondExp(e, LinearMap(shape, shape, m), "group_average", params)
    return _finish(E, tols, validate)


def density_ce(e: Embedding, densities: dict[tuple[int, int], np.ndarray],
               tols: Tolerances = DEFAULT_TOL, validate: bool = True) -> CondExp:
    """The expectation with prescribed edge densities (see :mod:`findex.structure`).

    Singular densities give non-faithful maps; they are accepted when
    ``validate`` is false so that infinite-index behaviour can be studied.
    """
    shape = e.amb_shape
    m = np.zeros((shape.dim, shape.dim), dtype=complex)
    for j, mj in enumerate(e.sub_shape.blocks):
        total = 0.0
        for i in range(shape.n_blocks):
            lam = int(e.lam[i, j])
            if lam == 0:
                continue
            c = np.asarray(densities[(i, j)], dtype=complex)
            if c.shape != (lam, lam):
                raise ConstructionError(f"density ({i},{j}) must be {lam}x{lam}")
            if np.linalg.eigvalsh((c + c.conj().T) / 2)[0] < -tols.tol:
                raise ConstructionError(f"density ({i},{j}) is not positive")
            total += np.trace(c).real
        if abs(total - 1) > 1e-9:
            raise ConstructionError(f"densities into B-block {j} have total trace {total}")
    units = matrix_units(shape)
    for col, x in enumerate(units):
        b = [np.zeros((mj, mj), dtype=complex) for mj in e.sub_shape.blocks]
        for i, (u, xb) in enumerate(zip(e.block_unitaries, x.blocks)):
            if not xb.any():
                continue
            rot = u.conj().T @ xb @ u
            for j, mj in enumerate(e.sub_shape.blocks):
                lam = int(e.lam[i, j])
                if lam == 0:
                    continue
                o = e.column_offsets[i][j]
                sl = rot[o:o + lam * mj, o:o + lam * mj].reshape(lam, mj, lam, mj)
                b[j] += np.einsum("rq,rsqt->st", np.asarray(densities[(i, j)]), sl)
        m[:, col] = e.embed(Element(e.sub_shape, tuple(b))).compact
    dens = {f"{i},{j}": np.asarray(c, dtype=complex) for (i, j), c in densities.items()}
    E = CondExp(e, LinearMap(shape, shape, m), "custom", {"densities": dens})
    return _finish(E, tols, validate)
