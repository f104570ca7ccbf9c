"""A viewed as a Hilbert module over ι(B): quasi-bases, the index, the basic
construction, the tower and the Stinespring-type dilation.

Coordinates used throughout
---------------------------
For B-block j (size m_j) write the columns of each A-block i, after rotating by
U_i, as triples (j, r, s) with r < Λ_ij, s < m_j.  An element a is then the
family of D_j x m_j matrices

    Y_j[(i, r, row), s] = (a_i U_i)[row, (j, r, s)],      D_j = Σ_i Λ_ij n_i,

on which right multiplication by ι(b) is ``Y_j b_j`` and left multiplication by
a' is ``π(a')_j Y_j`` with π(a')_j = ⊕_i 1_{Λ_ij} ⊗ a'_i.  The module inner
product is E(a* a')_j = Y_j^H G_j Y'_j with G_j = ⊕_i c_ij ⊗ 1_{n_i} (edge
densities).  In Z = G^{1/2} Y the inner product is the plain one, so the
adjointable operators form A₁ = ⊕_j M_{D_j} with the ordinary adjoint.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .algebra import (DEFAULT_TOL, AlgebraShape, Element, LinearMap, Tolerances, distance,
                      left_mult_apply, matrix_units, operator_norm, precompose_left_mult,
                      random_element, random_unitary)
from .condexp import CondExp, validate_ce
from .inclusion import Embedding
from .structure import edge_densities


class IndexComputationError(ValueError):
    pass


# -- Gram operator and quasi-bases -------------------------------------------------

@dataclass(frozen=True, eq=False)
class GramOperator:
    """Q_kl = E(g_k* g_l) stored as one (m·m_j) x (m·m_j) matrix per B-block j."""

    generators: tuple[Element, ...]
    blocks: tuple[np.ndarray, ...]

    @property
    def size(self) -> int:
        return len(self.generators)

    def entry(self, e: Embedding, k: int, l: int) -> Element:
        """Q_kl as an element of ι(B)."""
        bs = []
        for j, mj in enumerate(e.sub_shape.blocks):
            bs.append(self.blocks[j][k * mj:(k + 1) * mj, l * mj:(l + 1) * mj])
        return e.embed(Element(e.sub_shape, tuple(bs)))

    def min_eigenvalue(self) -> float:
        return min(float(np.linalg.eigvalsh(b)[0]) for b in self.blocks)


def _products_expectation(E: CondExp, gens: np.ndarray) -> np.ndarray:
    """E(g_k* g_l) restricted to B, as compact B-vectors, shape (m, m, dim B)."""
    shape, e = E.shape, E.embedding
    m = gens.shape[0]
    prods = np.zeros((m, m, shape.dim), dtype=complex)
    for off, n in zip(shape.compact_offsets, shape.blocks):
        g = gens[:, off:off + n * n].reshape(m, n, n)
        prods[:, :, off:off + n * n] = np.einsum(
            "kba,lbc->klac", g.conj(), g).reshape(m, m, n * n)
    img = prods.reshape(m * m, -1) @ (e.restrict_matrix @ E.map.compact).T
    return img.reshape(m, m, -1)


def gram_operator(E: CondExp, generators: list[Element]) -> GramOperator:
    e = E.embedding
    gens = np.stack([g.compact for g in generators])
    m = len(generators)
    prods = _products_expectation(E, gens)
    blocks = []
    for j, (off, mj) in enumerate(zip(e.sub_shape.compact_offsets, e.sub_shape.blocks)):
        q = prods[:, :, off:off + mj * mj].reshape(m, m, mj, mj)
        q = q.transpose(0, 2, 1, 3).reshape(m * mj, m * mj)
        blocks.append((q + q.conj().T) / 2)
    return GramOperator(tuple(generators), tuple(blocks))


def _y_rows(e: Embedding, j: int) -> list[tuple[int, int, int]]:
    return [(i, r, row) for i in range(e.amb_shape.n_blocks)
            for r in range(int(e.lam[i, j])) for row in range(e.amb_shape.blocks[i])]


def module_generators(e: Embedding) -> list[Element]:
    """A small generating set of A as a right ι(B)-module.

    Every row copy (i, r, row) of B-block j is a cyclic module e_00 M_{m_j};
    m_j of them fit into one free generator, so max_j ⌈D_j / m_j⌉ elements suffice.
    """
    amb = e.amb_shape
    dims = [len(_y_rows(e, j)) for j in range(e.sub_shape.n_blocks)]
    count = max(-(-d // m) for d, m in zip(dims, e.sub_shape.blocks))
    gens = [[np.zeros((n, n), dtype=complex) for n in amb.blocks] for _ in range(count)]
    for j, mj in enumerate(e.sub_shape.blocks):
        for c, (i, r, row) in enumerate(_y_rows(e, j)):
            t, s = divmod(c, mj)
            col = e.column_offsets[i][j] + r * mj + s
            u = e.block_unitaries[i]
            gens[t][i][row, :] += u.conj().T[col, :]
    return [Element(amb, tuple(g)) for g in gens]


def generator_set(E: CondExp, which: str = "auto") -> list[Element]:
    if which == "auto":
        big = E.shape.dim * max(E.embedding.sub_shape.blocks)
        which = "units" if big <= 128 else "module"
    if which == "units":
        return matrix_units(E.shape)
    if which == "module":
        return module_generators(E.embedding)
    raise ValueError(f"unknown generator set {which!r}")


def rotate_generators(gens: list[Element], seed: int) -> list[Element]:
    """g'_k = Σ_l g_l C_lk for a seeded Haar unitary C."""
    c = random_unitary(len(gens), np.random.default_rng(seed))
    stack = np.stack([g.compact for g in gens])
    shape = gens[0].shape
    return [Element.from_compact(shape, v) for v in c.T @ stack]


@dataclass(frozen=True, eq=False)
class QuasiBasis:
    vectors: tuple[Element, ...]
    gram_pinv_rank: int
    reconstruction_residual: float

    def index(self) -> Element:
        shape = self.vectors[0].shape
        out = Element.zeros(shape)
        for u in self.vectors:
            out = out + u @ u.adj
        return out


def _psd_power(q: np.ndarray, power: float, tols: Tolerances) -> tuple[np.ndarray, int]:
    w, v = np.linalg.eigh(q)
    keep = w > tols.rank_cutoff * max(w[-1], 1e-300)
    d = np.zeros_like(w)
    d[keep] = w[keep] ** power
    return (v * d) @ v.conj().T, int(keep.sum())


def reconstruction_residual(E: CondExp, vectors) -> float:
    """max over matrix units x of |Σ u_i E(u_i* x) − x|."""
    shape = E.shape
    acc = np.zeros((shape.dim, shape.dim), dtype=complex)
    for u in vectors:
        acc += left_mult_apply(shape, precompose_left_mult(shape, E.map.compact, u.adj), u)
    return float(np.max(np.abs(acc - np.eye(shape.dim))))


def quasi_basis(E: CondExp, generators: list[Element] | str = "auto",
                tols: Tolerances = DEFAULT_TOL, check: bool = True) -> QuasiBasis:
    """u_i = Σ_k g_k ι((Q^{+1/2})_{ki}) for the Gram operator Q of the generators."""
    gens = generator_set(E, generators) if isinstance(generators, str) else list(generators)
    e = E.embedding
    q = gram_operator(E, gens)
    m = len(gens)
    roots, rank = [], 0
    for blk in q.blocks:
        r, k = _psd_power(blk, -0.5, tols)
        roots.append(r)
        rank += k
    # in Y-coordinates right multiplication by ι(b) is Y_j b_j, so u = g·Q^{+1/2}
    # is one matrix product per B-block
    ys = [to_y(e, g) for g in gens]
    cols = []
    for j, mj in enumerate(e.sub_shape.blocks):
        yj = np.hstack([y[j] for y in ys]) @ roots[j]
        cols.append(yj.reshape(len(yj), m, mj))
    vectors = [from_y(e, [c[:, i, :] for c in cols]) for i in range(m)]
    res = reconstruction_residual(E, vectors) if check else float("nan")
    return QuasiBasis(tuple(vectors), rank, res)


def projection_basis(E: CondExp) -> QuasiBasis:
    """Quasi-basis of weighted rank-one partial isometries.

    For each edge (i, j) diagonalize c_ij = Σ μ v v*; the vectors
    μ^{-1/2} U_i |x><φ| U_i*, with x running over block i and
    φ = Σ_r conj(v_r) |(j, r, 0)>, reconstruct every element.
    """
    e = E.embedding
    dens = edge_densities(E)
    shape = E.shape
    vectors = []
    for (i, j), c in sorted(dens.items()):
        n, mj, lam = shape.blocks[i], e.sub_shape.blocks[j], int(e.lam[i, j])
        w, v = np.linalg.eigh(c)
        u = e.block_unitaries[i]
        o = e.column_offsets[i][j]
        for t in range(lam):
            phi = np.zeros(n, dtype=complex)
            phi[o + np.arange(lam) * mj] = v[:, t].conj()
            for x in range(n):
                blk = np.zeros((n, n), dtype=complex)
                blk[x, :] = phi.conj() / np.sqrt(w[t])
                blocks = [np.zeros((k, k), dtype=complex) for k in shape.blocks]
                blocks[i] = u @ blk @ u.conj().T
                vectors.append(Element(shape, tuple(blocks)))
    return QuasiBasis(tuple(vectors), len(vectors), reconstruction_residual(E, vectors))


# -- index ----------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class IndexElement:
    value: Element
    norm: float
    is_central: bool
    min_spectrum: float
    basis_residual: float = 0.0
    reconstruction_residual: float = 0.0

    @property
    def scalars(self) -> tuple[float, ...]:
        """The index as one scalar per A-block."""
        return tuple(float(np.trace(b).real / len(b)) for b in self.value.blocks)


def centrality_residual(a: Element) -> float:
    return max(float(np.max(np.abs(b - np.trace(b) / len(b) * np.eye(len(b))))) for b in a.blocks)


def index_element(E: CondExp, generators: list[Element] | str = "auto", seed: int = 0,
                  tols: Tolerances = DEFAULT_TOL, strict: bool = True) -> IndexElement:
    """Ind(E) = Σ u_i u_i*, recomputed from a randomly rotated generator set."""
    gens = generator_set(E, generators) if isinstance(generators, str) else list(generators)
    qb = quasi_basis(E, gens, tols)
    value = qb.index()
    other = quasi_basis(E, rotate_generators(gens, seed), tols, check=False).index()
    norm = operator_norm(value)
    basis_res = distance(value, other) / max(1.0, norm)
    central = centrality_residual(value) <= tols.scaled(norm)
    min_spec = min(float(np.linalg.eigvalsh((b + b.conj().T) / 2)[0]) for b in value.blocks)
    out = IndexElement(value, norm, central, min_spec, basis_res, qb.reconstruction_residual)
    if strict:
        problems = []
        if qb.reconstruction_residual > 1e-8:
            problems.append(f"reconstruction residual {qb.reconstruction_residual:.3g}")
        if not central:
            problems.append(f"centrality residual {centrality_residual(value):.3g}")
        if min_spec < 1 - 1e-8:
            problems.append(f"smallest eigenvalue {min_spec:.6g} < 1")
        if problems:
            raise IndexComputationError("; ".join(problems))
    return out


# -- basic construction ------------------------------------------------------------

def to_y(e: Embedding, a: Element) -> list[np.ndarray]:
    out = []
    for j, mj in enumerate(e.sub_shape.blocks):
        parts = []
        for i, lam in e.edges_into[j]:
            ai, u = a.blocks[i], e.block_unitaries[i]
            o = e.column_offsets[i][j]
            m = (ai @ u)[:, o:o + lam * mj].reshape(len(ai), lam, mj)
            parts.append(m.transpose(1, 0, 2).reshape(lam * len(ai), mj))
        out.append(np.vstack(parts))
    return out


def from_y(e: Embedding, ys: list[np.ndarray]) -> Element:
    blocks = [np.zeros((n, n), dtype=complex) for n in e.amb_shape.blocks]
    for j, mj in enumerate(e.sub_shape.blocks):
        pos = 0
        for i, lam in e.edges_into[j]:
            n = e.amb_shape.blocks[i]
            o = e.column_offsets[i][j]
            chunk = ys[j][pos:pos + lam * n].reshape(lam, n, mj).transpose(1, 0, 2)
            blocks[i][:, o:o + lam * mj] = chunk.reshape(n, lam * mj)
            pos += lam * n
    return Element(e.amb_shape, tuple(b @ u.conj().T for b, u in
                                      zip(blocks, e.block_unitaries)))


@dataclass(frozen=True, eq=False)
class ModuleCoordinates:
    """The Y/Z coordinates of A over ι(B) (see the module docstring)."""

    embedding: Embedding
    rows: tuple[tuple[tuple[int, int, int], ...], ...]
    g_half: tuple[np.ndarray, ...]
    g_half_inv: tuple[np.ndarray, ...]

    @classmethod
    def of(cls, E: CondExp) -> ModuleCoordinates:
        e = E.embedding
        dens = edge_densities(E)
        rows, half, half_inv = [], [], []
        for j in range(e.sub_shape.n_blocks):
            rows.append(tuple(_y_rows(e, j)))
            parts = [np.kron(dens[(i, j)], np.eye(e.amb_shape.blocks[i]))
                     for i in range(e.amb_shape.n_blocks) if (i, j) in dens]
            g = _block_diag(parts)
            w, v = np.linalg.eigh(g)
            if w[0] <= 0:
                raise IndexComputationError("edge densities are singular (non-faithful E)")
            half.append((v * np.sqrt(w)) @ v.conj().T)
            half_inv.append((v / np.sqrt(w)) @ v.conj().T)
        return cls(e, tuple(rows), tuple(half), tuple(half_inv))

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(len(r) for r in self.rows)

    def to_y(self, a: Element) -> list[np.ndarray]:
        return to_y(self.embedding, a)

    def from_y(self, ys: list[np.ndarray]) -> Element:
        return from_y(self.embedding, ys)

    def to_z(self, a: Element) -> list[np.ndarray]:
        return [h @ y for h, y in zip(self.g_half, self.to_y(a))]

    def from_z(self, zs: list[np.ndarray]) -> Element:
        return self.from_y([h @ z for h, z in zip(self.g_half_inv, zs)])


def _block_diag(parts: list[np.ndarray]) -> np.ndarray:
    n = sum(p.shape[0] for p in parts)
    out = np.zeros((n, n), dtype=complex)
    o = 0
    for p in parts:
        k = p.shape[0]
        out[o:o + k, o:o + k] = p
        o += k
    return out


@dataclass(frozen=True, eq=False)
class BasicConstruction:
    """A₁ = ⊕_j M_{D_j} acting on Z-coordinates, with blocks listed in ``order``.

    ``order[t]`` is the B-block whose module gives block t of A₁; blocks are
    sorted by ascending dimension, then by B-block index.
    """

    expectation: CondExp
    coords: ModuleCoordinates
    shape: AlgebraShape
    order: tuple[int, ...]
    pi: Embedding
    jones: Element
    theta_residual: float
    jones_relation_residual: float

    def lift(self, ops: list[np.ndarray]) -> Element:
        """Element of A₁ from operators indexed by B-block."""
        return Element(self.shape, tuple(ops[j] for j in self.order))

    def unlift(self, x: Element) -> list[np.ndarray]:
        out = [None] * len(self.order)
        for t, j in enumerate(self.order):
            out[j] = x.blocks[t]
        return out

    def apply(self, x: Element, a: Element) -> Element:
        """The module operator x ∈ A₁ acting on a ∈ A."""
        return self.coords.from_z([op @ z for op, z in zip(self.unlift(x), self.coords.to_z(a))])

    def theta(self, a1: Element, a2: Element) -> Element:
        """θ_{a1,a2}: x ↦ a2 E(a1* x)."""
        z1, z2 = self.coords.to_z(a1), self.coords.to_z(a2)
        return self.lift([q @ p.conj().T for p, q in zip(z1, z2)])


def basic_construction(E: CondExp) -> BasicConstruction:
    e = E.embedding
    coords = ModuleCoordinates.of(E)
    dims = coords.dims
    order = tuple(sorted(range(len(dims)), key=lambda j: (dims[j], j)))
    shape = AlgebraShape(tuple(dims[j] for j in order))
    pi = Embedding(E.shape, shape, e.lam.T[list(order)])
    z1 = coords.to_z(Element.identity(E.shape))
    jones = Element(shape, tuple(z1[j] @ z1[j].conj().T for j in order))
    bc = BasicConstruction(E, coords, shape, order, pi, jones, 0.0, 0.0)

    units = matrix_units(E.shape)
    # Z(a) = π(a) Z(1) on a basis gives θ_{a1,a2} = π(a2) e π(a1*) for all pairs;
    # a seeded sample of pairs checks the identity directly as well
    th = 0.0
    for a in units:
        za = coords.to_z(a)
        pa = bc.unlift(pi.embed(a))
        th = max(th, max(float(np.max(np.abs(x - p @ z))) for x, p, z in zip(za, pa, z1)))
    rng = np.random.default_rng(0)
    for _ in range(8):
        a1, a2 = random_element(E.shape, rng), random_element(E.shape, rng)
        lhs = pi.embed(a2) @ jones @ pi.embed(a1.adj)
        th = max(th, distance(lhs, bc.theta(a1, a2)) / max(1.0, operator_norm(lhs)))
    # e π(a) e = π(E(a)) e
    jr = 0.0
    for a in units:
        lhs = jones @ pi.embed(a) @ jones
        jr = max(jr, distance(lhs, pi.embed(E(a)) @ jones))
    return BasicConstruction(E, coords, shape, order, pi, jones, th, jr)


def _pair_products(shape: AlgebraShape, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """(g, k) grid of products x_g y_k for compact rows ``xs`` and ``ys``."""
    out = np.zeros((len(xs), len(ys), shape.dim), dtype=complex)
    for off, n in zip(shape.compact_offsets, shape.blocks):
        sl = slice(off, off + n * n)
        out[:, :, sl] = np.einsum("gab,kbc->gkac", xs[:, sl].reshape(-1, n, n),
                                  ys[:, sl].reshape(-1, n, n)).reshape(len(xs), len(ys), n * n)
    return out


def _f1_matrix(bc: BasicConstruction, qb: QuasiBasis) -> np.ndarray:
    """Compact matrix of F₁(T) = Σ_k π(T(u_k) u_k*) on A₁.

    For T = e_pq in block j of A₁, T(u_k) has the single Z-row p equal to row q of
    Z(u_k)[j], so T(u_k) = Σ_r Z(u_k)[j][q, r] g_pr with g_pr = from_z(e_p ⊗ e_r).
    """
    coords = bc.coords
    shape = bc.expectation.shape
    zs = [coords.to_z(u) for u in qb.vectors]
    uadj = np.stack([u.adj.compact for u in qb.vectors])
    dims, ms = coords.dims, bc.expectation.embedding.sub_shape.blocks
    accs = []
    for j in bc.order:
        d, m = dims[j], ms[j]
        g = np.empty((d * m, shape.dim), dtype=complex)
        for p in range(d):
            for r in range(m):
                unit = [np.zeros((dd, mm), dtype=complex) for dd, mm in zip(dims, ms)]
                unit[j][p, r] = 1.0
                g[p * m + r] = coords.from_z(unit).compact
        h = _pair_products(shape, g, uadj).reshape(d, m, len(zs), shape.dim)
        zj = np.stack([z[j] for z in zs])
        accs.append(np.einsum("kqr,prkx->pqx", zj, h).reshape(d * d, shape.dim))
    return bc.pi.embed_matrix @ np.vstack(accs).T


def next_expectation(E: CondExp, bc: BasicConstruction | None = None,
                     index: IndexElement | None = None, tols: Tolerances = DEFAULT_TOL,
                     validate: bool = True) -> CondExp:
    """E₁ = π(Ind(E)⁻¹) F₁ on A₁, onto π(A)."""
    from .condexp import ConstructionError
    bc = basic_construction(E) if bc is None else bc
    qb = quasi_basis(E, generator_set(E, "auto"), tols, check=False)
    ind = qb.index() if index is None else index.value
    f1 = _f1_matrix(bc, qb)
    inv = bc.pi.embed(ind.inv())
    m = left_mult_apply(bc.shape, f1, inv)
    level = int(E.params.get("tower_level", 0)) + 1
    E1 = CondExp(bc.pi, LinearMap(bc.shape, bc.shape, m), "custom", {"tower_level": level})
    if validate:
        report = validate_ce(E1, tols)
        if not report.ok:
            raise ConstructionError(f"E1 fails axioms {report.failures()}", report)
    return E1


# -- tower ----------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class TowerLevel:
    level: int
    algebra_shape: AlgebraShape
    expectation: CondExp
    jones_projection: Element | None
    index: IndexElement
    jones_residual: float = 0.0        # |E_k(e_k) − π(Ind⁻¹)|
    stabilization_residual: float = 0.0  # |Ind(E_k) − π(Ind(E_{k-1}))|
    theta_residual: float = 0.0
    # π(Ind(E_{k-1})) is central in A_k; otherwise it cannot equal the central Ind(E_k)
    stabilization_applies: bool = True


@dataclass(frozen=True, eq=False)
class JonesTower:
    levels: tuple[TowerLevel, ...]
    truncated: bool
    requested: int
    truncation_reason: str = ""

    @property
    def shapes(self) -> list[AlgebraShape]:
        return [lv.algebra_shape for lv in self.levels]


# Expectations are dense maps on the compact vectorization, so the next algebra's
# Σ D_j² is capped as well (3000² complex entries is ~144 MB).
COMPACT_BUDGET = 3000


def jones_tower(E: CondExp, levels: int = 3, dim_budget: int = 20000,
                tols: Tolerances = DEFAULT_TOL,
                compact_budget: int = COMPACT_BUDGET) -> JonesTower:
    """Iterate the basic construction; stops early (``truncated``) at either budget.

    ``dim_budget`` bounds the ambient size Σ D_j of the next algebra and
    ``compact_budget`` its vector-space dimension Σ D_j².
    """
    if levels < 1:
        raise ValueError("levels must be >= 1")
    ind = index_element(E, tols=tols)
    out = [TowerLevel(0, E.shape, E, None, ind)]
    cur, cur_ind = E, ind
    truncated, reason = False, ""
    for k in range(1, levels + 1):
        coords_dims = [len(_y_rows(cur.embedding, j))
                       for j in range(cur.embedding.sub_shape.n_blocks)]
        if sum(coords_dims) > dim_budget:
            truncated, reason = True, f"ambient dimension {sum(coords_dims)} > {dim_budget}"
            break
        compact = sum(d * d for d in coords_dims)
        if compact > compact_budget:
            truncated, reason = True, f"algebra dimension {compact} > {compact_budget}"
            break
        bc = basic_construction(cur)
        nxt = next_expectation(cur, bc, cur_ind, tols)
        target = bc.pi.embed(cur_ind.value.inv())
        jres = distance(nxt(bc.jones), target)
        nind = index_element(nxt, tols=tols)
        lifted = bc.pi.embed(cur_ind.value)
        sres = distance(nind.value, lifted)
        applies = centrality_residual(lifted) <= tols.scaled(cur_ind.norm)
        out.append(TowerLevel(k, bc.shape, nxt, bc.jones, nind, jres, sres,
                              max(bc.theta_residual, bc.jones_relation_residual), applies))
        cur, cur_ind = nxt, nind
    return JonesTower(tuple(out), truncated, levels, reason)


# -- Stinespring-type dilation ---------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Dilation:
    """E(a) = V* π(a) V on the completed module A ⊗_B A.

    ``pi`` maps a ∈ A to an operator on C^module_dim; ``v`` is the matrix of V
    from A (matrix-unit coordinates) and ``v_star`` its adjoint for the inner
    product Tr E(x* y) on A.
    """

    module_dim: int
    pi: object = field(repr=False)
    v: np.ndarray = field(repr=False)
    v_star: np.ndarray = field(repr=False)
    residual: float
    span_rank: int


def left_mult_matrix(z: Element) -> np.ndarray:
    """Compact matrix of x ↦ z x (row-major: vec(z x) = (z ⊗ 1) vec x, blockwise)."""
    parts = [np.kron(b, np.eye(len(b))) for b in z.blocks]
    return _block_diag(parts)


def _left_mult_stack(shape: AlgebraShape, z: np.ndarray) -> np.ndarray:
    """left_mult_matrix for a (p, q) grid of compact vectors -> (p, dim, q, dim)."""
    p, q, da = z.shape
    out = np.zeros((p, da, q, da), dtype=complex)
    for off, n in zip(shape.compact_offsets, shape.blocks):
        zi = z[:, :, off:off + n * n].reshape(p, q, n, n)
        blk = np.einsum("lkac,bd->labkcd", zi, np.eye(n)).reshape(p, n * n, q, n * n)
        out[:, off:off + n * n, :, off:off + n * n] = blk
    return out


def _trace_form(E: CondExp) -> list[np.ndarray]:
    """T_i[b, d] = Tr E(e^{(i)}_{bd})."""
    shape = E.shape
    out = []
    for i, n in enumerate(shape.blocks):
        off = shape.compact_offsets[i]
        cols = E.map.compact[:, off:off + n * n]
        tr = np.zeros(shape.dim, dtype=complex)
        for o, k in zip(shape.compact_offsets, shape.blocks):
            tr[o + np.arange(k) * (k + 1)] = 1.0
        out.append((tr @ cols).reshape(n, n))
    return out


def _unit_products(E: CondExp, uu: np.ndarray, a: Element) -> np.ndarray:
    """(l, k) grid of E(u_l* a u_k) for compact rows ``uu``."""
    shape = E.shape
    nu, da = uu.shape
    au = left_mult_apply(shape, uu.T, a).T
    prods = np.zeros((nu, nu, da), dtype=complex)
    for off, n in zip(shape.compact_offsets, shape.blocks):
        l_ = uu[:, off:off + n * n].reshape(nu, n, n)
        r_ = au[:, off:off + n * n].reshape(nu, n, n)
        prods[:, :, off:off + n * n] = np.einsum(
            "lba,kbc->lkac", l_.conj(), r_).reshape(nu, nu, n * n)
    return (prods.reshape(nu * nu, da) @ E.map.compact.T).reshape(nu, nu, da)


def stinespring(E: CondExp, tols: Tolerances = DEFAULT_TOL) -> Dilation:
    shape = E.shape
    qb = quasi_basis(E, module_generators(E.embedding), tols, check=False)
    us = list(qb.vectors)
    nu, da = len(us), shape.dim
    tform = _trace_form(E)
    if min(float(np.linalg.eigvalsh((t + t.conj().T) / 2)[0]) for t in tform) <= tols.rank_cutoff:
        raise ValueError("the dilation needs a faithful expectation (Tr E(x*y) is degenerate)")
    # Gram of the spanning set u_k ⊗ f_x is Tr E(f_x* E(u_k* u_l) f_y).  It only couples
    # f_x, f_y in the same block i, where it equals Q_i ⊗ T_i with
    # Q_i[(k,a),(l,c)] = E(u_k* u_l)_i[a,c]; everything below is done block by block
    q = [[E(uk.adj @ ul) for ul in us] for uk in us]
    uu = np.stack([u.compact for u in us])
    ek = np.stack([E(uk.adj).compact for uk in us])
    vmat = _left_mult_stack(shape, ek[:, None, :])[:, :, 0, :].reshape(nu * da, da)
    gram_a = np.zeros((da, da), dtype=complex)
    parts = []  # (rows, cols, eigenvalues, coordinate map, V*-side factor)
    for i, n in enumerate(shape.blocks):
        idx = shape.compact_offsets[i] + np.arange(n * n)
        rows = (np.arange(nu)[:, None] * da + idx[None, :]).ravel()
        qi = np.array([[q[k][l].blocks[i] for l in range(nu)] for k in range(nu)])
        qi = qi.transpose(0, 2, 1, 3).reshape(nu * n, nu * n)
        qi, ti = (qi + qi.conj().T) / 2, (tform[i] + tform[i].conj().T) / 2
        ga = np.kron(np.eye(n), ti)
        gram_a[np.ix_(idx, idx)] = ga
        wq, vq = np.linalg.eigh(qi)
        wt, vt = np.linalg.eigh(ti)
        vm = vmat[np.ix_(rows, idx)]
        # V* π(a) V = G_A⁻¹ Vmat^H Gram P_a Vmat: the coordinate map and its right
        # inverse compose to the support projection, which Gram absorbs
        left = np.linalg.solve(ga, vm.conj().T @ np.kron(qi, ti))
        parts.append([rows, idx, np.kron(wq, wt), np.kron(vq, vt), left])
    top = max(float(p_[2].max()) for p_ in parts)
    for p_ in parts:
        keep = p_[2] > tols.rank_cutoff * top
        p_[2], p_[3] = p_[2][keep], np.sqrt(p_[2][keep])[:, None] * p_[3][:, keep].conj().T
    w = np.concatenate([p_[2] for p_ in parts])
    coord = np.zeros((len(w), nu * da), dtype=complex)  # c(w) = Λ^{1/2} V^H w
    back = np.zeros((nu * da, len(w)), dtype=complex)   # right inverse on the quotient
    r0 = 0
    for rows, _, wi, ci, _ in parts:
        coord[r0:r0 + len(wi), rows] = ci
        back[rows, r0:r0 + len(wi)] = ci.conj().T / wi
        r0 += len(wi)

    def pi_coeff(a: Element) -> np.ndarray:
        # coefficient of u_l ⊗ f_y in π(a)(u_k ⊗ f_x) = Σ_l u_l ⊗ E(u_l* a u_k) f_x
        img = _unit_products(E, uu, a)
        return _left_mult_stack(shape, img).reshape(nu * da, nu * da)

    def pi(a: Element) -> np.ndarray:
        return coord @ pi_coeff(a) @ back

    vc = coord @ vmat
    v_star = np.linalg.solve(gram_a, vc.conj().T)

    # π(a) V f_x = Σ_l u_l ⊗ c_l f_x with c_l = Σ_k E(u_l* a u_k) E(u_k*)
    residual = 0.0
    spans = [np.zeros((len(p_[2]), len(p_[2])), dtype=complex) for p_ in parts]
    for a in matrix_units(shape):
        img = _unit_products(E, uu, a)
        c = np.zeros((nu, da), dtype=complex)
        for off, n in zip(shape.compact_offsets, shape.blocks):
            sl = slice(off, off + n * n)
            c[:, sl] = np.einsum("lkab,kbc->lac", img[:, :, sl].reshape(nu, nu, n, n),
                                 ek[:, sl].reshape(nu, n, n)).reshape(nu, n * n)
        pv = _left_mult_stack(shape, c[:, None, :])[:, :, 0, :].reshape(nu * da, da)
        ea = left_mult_matrix(E(a))
        for (rows, idx, _, ci, left), span in zip(parts, spans):
            pvi = pv[np.ix_(rows, idx)]
            residual = max(residual, float(np.max(np.abs(left @ pvi - ea[np.ix_(idx, idx)]))))
            im = ci @ pvi
            span += im @ im.conj().T
    svals = [np.linalg.eigvalsh((sp + sp.conj().T) / 2) for sp in spans]
    smax = max(float(sv.max()) for sv in svals)
    rank = sum(int((sv > tols.rank_cutoff * smax).sum()) for sv in svals)
    return Dilation(len(w), pi, vc, v_star, residual, rank)
