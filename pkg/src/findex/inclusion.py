"""Unital embeddings B ⊆ A of multi-matrix algebras."""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .algebra import (DEFAULT_TOL, AlgebraShape, Element, ShapeError, Tolerances,
                      center_basis, matrix_units)


class EmbeddingError(ValueError):
    pass


class ProjectionError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Embedding:
    """ι: B → A, block i of ι(b) = U_i (⊕_j 1_{Λ_ij} ⊗ b_j) U_i*.

    ``inclusion_matrix`` has rows indexed by A-blocks and columns by B-blocks.
    """

    sub_shape: AlgebraShape
    amb_shape: AlgebraShape
    inclusion_matrix: np.ndarray
    block_unitaries: tuple[np.ndarray, ...] | None = field(default=None, repr=False)

    def __post_init__(self):
        lam = np.array(self.inclusion_matrix, dtype=int)
        if lam.shape != (self.amb_shape.n_blocks, self.sub_shape.n_blocks):
            raise EmbeddingError(
                f"inclusion matrix has shape {lam.shape}, expected "
                f"{(self.amb_shape.n_blocks, self.sub_shape.n_blocks)}")
        if (lam < 0).any():
            raise EmbeddingError("inclusion matrix must be nonnegative")
        m = np.array(self.sub_shape.blocks)
        for i, n in enumerate(self.amb_shape.blocks):
            if int(lam[i] @ m) != n:
                raise EmbeddingError(
                    f"unitality fails in A-block {i}: sum_j Λ_ij m_j = {int(lam[i] @ m)} "
                    f"but the block has dimension {n}")
        for j in range(lam.shape[1]):
            if lam[:, j].sum() == 0:
                raise EmbeddingError(f"B-block {j} is not represented (embedding not injective)")
        lam.setflags(write=False)
        object.__setattr__(self, "inclusion_matrix", lam)
        if self.block_unitaries is None:
            us = tuple(np.eye(n, dtype=complex) for n in self.amb_shape.blocks)
        else:
            us = tuple(np.array(u, dtype=complex) for u in self.block_unitaries)
            if len(us) != self.amb_shape.n_blocks:
                raise EmbeddingError("one unitary per A-block is required")
            for u, n in zip(us, self.amb_shape.blocks):
                if u.shape != (n, n) or not np.allclose(u.conj().T @ u, np.eye(n), atol=1e-10):
                    raise EmbeddingError("block unitaries must be unitary of the block size")
        for u in us:
            u.setflags(write=False)
        object.__setattr__(self, "block_unitaries", us)

    @classmethod
    def identity(cls, shape: AlgebraShape) -> Embedding:
        return cls(shape, shape, np.eye(shape.n_blocks, dtype=int))

    @property
    def lam(self) -> np.ndarray:
        return self.inclusion_matrix

    @cached_property
    def edges_from(self) -> list[list[tuple[int, int]]]:
        """edges_from[i]: the (j, Λ_ij) with Λ_ij > 0, in B-block order."""
        return [[(j, int(x)) for j, x in enumerate(row) if x] for row in self.lam]

    @cached_property
    def edges_into(self) -> list[list[tuple[int, int]]]:
        """edges_into[j]: the (i, Λ_ij) with Λ_ij > 0, in A-block order."""
        return [[(i, int(x)) for i, x in enumerate(col) if x] for col in self.lam.T]

    @cached_property
    def column_offsets(self) -> list[list[int]]:
        """offset[i][j]: first rotated coordinate of the j-isotypic part of A-block i."""
        m = self.sub_shape.blocks
        out = []
        for i in range(self.amb_shape.n_blocks):
            row, acc = [], 0
            for j, mj in enumerate(m):
                row.append(acc)
                acc += int(self.lam[i, j]) * mj
            out.append(row)
        return out

    def embed(self, b: Element) -> Element:
        if b.shape != self.sub_shape:
            raise ShapeError(f"embed expects {self.sub_shape}, got {b.shape}")
        out = []
        for i, u in enumerate(self.block_unitaries):
            parts = []
            for j, lam in self.edges_from[i]:
                parts += [b.blocks[j]] * lam
            blk = _block_diag(parts)
            out.append(u @ blk @ u.conj().T)
        return Element(self.amb_shape, tuple(out))

    def restrict(self, x: Element) -> Element:
        """Recover b from x = ι(b) (reads the first copy of each B-block)."""
        if x.shape != self.amb_shape:
            raise ShapeError(f"restrict expects {self.amb_shape}, got {x.shape}")
        blocks = []
        for j, mj in enumerate(self.sub_shape.blocks):
            i = self.edges_into[j][0][0]
            u = self.block_unitaries[i]
            o = self.column_offsets[i][j]
            rot = u.conj().T @ x.blocks[i] @ u
            blocks.append(rot[o:o + mj, o:o + mj])
        return Element(self.sub_shape, tuple(blocks))

    @cached_property
    def restrict_matrix(self) -> np.ndarray:
        """Compact matrix of :meth:`restrict` (dim B x dim A)."""
        from .algebra import LinearMap
        return LinearMap.from_function(self.amb_shape, self.sub_shape, self.restrict).compact

    @cached_property
    def embed_matrix(self) -> np.ndarray:
        """Compact matrix of :meth:`embed` (dim A x dim B)."""
        from .algebra import LinearMap
        return LinearMap.from_function(self.sub_shape, self.amb_shape, self.embed).compact

    def range_residual(self, x: Element) -> float:
        """How far x is from ι(B)."""
        from .algebra import distance
        return distance(self.embed(self.restrict(x)), x)

    def generators(self) -> list[Element]:
        """ι(D), ι(S), ι(S*): D diagonal with distinct entries 1, 2, ... across all
        B-blocks, S the blockwise shift Σ e_{k,k+1}.

        Polynomials in D give every e_kk, and e_kk S e_{k+1,k+1} = e_{k,k+1}, so the
        three generate ι(B) as an algebra; any identity that is linear and
        multiplicative in b (commuting, bimodule) needs checking on these only.
        """
        d, s = [], []
        start = 1
        for mj in self.sub_shape.blocks:
            d.append(np.diag(np.arange(start, start + mj, dtype=float)))
            s.append(np.eye(mj, k=1))
            start += mj
        dd, ss = Element(self.sub_shape, tuple(d)), Element(self.sub_shape, tuple(s))
        return [self.embed(dd), self.embed(ss), self.embed(ss.adj)]

    def homomorphism_residual(self) -> float:
        """max over B matrix units of the *-homomorphism defects (and unitality)."""
        from .algebra import distance
        units = matrix_units(self.sub_shape)
        res = distance(self.embed(Element.identity(self.sub_shape)),
                       Element.identity(self.amb_shape))
        for x in units:
            res = max(res, distance(self.embed(x.adj), self.embed(x).adj))
            for y in units:
                if x.blocks and y.blocks:
                    res = max(res, distance(self.embed(x @ y), self.embed(x) @ self.embed(y)))
        return res

    def to_dict(self) -> dict:
        from .serialize import matrix_to_json
        d = {
            "sub_blocks": list(self.sub_shape.blocks),
            "amb_blocks": list(self.amb_shape.blocks),
            "inclusion_matrix": self.lam.tolist(),
        }
        if any(not np.allclose(u, np.eye(len(u))) for u in self.block_unitaries):
            d["unitaries"] = [matrix_to_json(u) for u in self.block_unitaries]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> Embedding:
        from .serialize import matrix_from_json
        us = d.get("unitaries")
        return cls(AlgebraShape(tuple(d["sub_blocks"])), AlgebraShape(tuple(d["amb_blocks"])),
                   np.array(d["inclusion_matrix"], dtype=int),
                   None if us is None else tuple(matrix_from_json(u) for u in us))


def _block_diag(parts: list[np.ndarray]) -> np.ndarray:
    n = sum(p.shape[0] for p in parts)
    out = np.zeros((n, n), dtype=complex)
    o = 0
    for p in parts:
        k = p.shape[0]
        out[o:o + k, o:o + k] = p
        o += k
    return out


def embed(e: Embedding, b: Element) -> Element:
    return e.embed(b)


@dataclass(frozen=True, eq=False)
class SubspaceBasis:
    ambient: AlgebraShape
    vectors: tuple[Element, ...]

    @property
    def dim(self) -> int:
        return len(self.vectors)

    def gram(self) -> np.ndarray:
        v = np.stack([x.compact for x in self.vectors]) if self.vectors else np.zeros((0, 0))
        return v.conj() @ v.T

    def contains(self, x: Element, tol: float = 1e-9) -> bool:
        if not self.vectors:
            return np.allclose(x.compact, 0, atol=tol)
        v = np.stack([b.compact for b in self.vectors]).T
        coef, *_ = np.linalg.lstsq(v, x.compact, rcond=None)
        return float(np.linalg.norm(v @ coef - x.compact)) <= tol * max(1.0, np.linalg.norm(x.compact))


def _null_space(m: np.ndarray, tols: Tolerances) -> np.ndarray:
    if m.shape[0] == 0:
        return np.eye(m.shape[1], dtype=complex)
    _, s, vh = np.linalg.svd(m)
    # rows come from generators of norm >= 1, so an all-noise matrix must not set the scale
    cut = tols.rank_cutoff * max(s[0] if s.size else 0.0, 1.0)
    rank = int((s > cut).sum())
    return vh[rank:].conj().T


def relative_commutant(e: Embedding, tols: Tolerances = DEFAULT_TOL) -> SubspaceBasis:
    """Basis of ι(B)' ∩ A, solved block by block as a commutator null space."""
    shape = e.amb_shape
    gens = e.generators()
    vectors = []
    for k, n in enumerate(shape.blocks):
        eye = np.eye(n)
        rows = []
        for g in gens:
            gb = g.blocks[k]
            # row-major vec: vec(x g) = (I ⊗ gᵀ) vec x, vec(g x) = (g ⊗ I) vec x
            rows.append(np.kron(eye, gb.T) - np.kron(gb, eye))
        ns = _null_space(np.vstack(rows) if rows else np.zeros((0, n * n)), tols)
        for col in ns.T:
            blocks = [np.zeros((m, m), dtype=complex) for m in shape.blocks]
            blocks[k] = col.reshape(n, n)
            vectors.append(Element(shape, tuple(blocks)))
    return SubspaceBasis(shape, tuple(vectors))


def is_projection(p: Element, tol: float = 1e-9) -> bool:
    from .algebra import distance
    return distance(p, p.adj) <= tol and distance(p @ p, p) <= tol


def block_ranks(p: Element, tols: Tolerances = DEFAULT_TOL) -> list[int]:
    ranks = []
    for b in p.blocks:
        w = np.linalg.eigvalsh((b + b.conj().T) / 2)
        ranks.append(int((w > 0.5).sum()))
    return ranks


def check_minimal_in_image(e: Embedding, p: Element, tols: Tolerances = DEFAULT_TOL) -> None:
    if not is_projection(p, 1e-8):
        raise ProjectionError("p is not a projection")
    if e.range_residual(p) > 1e-8:
        raise ProjectionError("p does not lie in ι(B)")
    q = e.restrict(p)
    if sum(block_ranks(q, tols)) != 1:
        raise ProjectionError("p is not minimal in ι(B)")


@dataclass(frozen=True)
class OrthogonalFamily:
    size: int
    corner_dim: int
    block_ranks: tuple[int, ...]


def max_orthogonal_family(e: Embedding, p: Element,
                          tols: Tolerances = DEFAULT_TOL) -> OrthogonalFamily:
    """Largest family of pairwise orthogonal nonzero projections of A summing to p,
    together with dim(pAp)."""
    check_minimal_in_image(e, p, tols)
    ranks = block_ranks(p, tols)
    return OrthogonalFamily(size=sum(ranks), corner_dim=sum(r * r for r in ranks),
                            block_ranks=tuple(ranks))


def minimal_projections(e: Embedding) -> list[Element]:
    """The minimal projections ι(e^j_00), one per B-block."""
    return [e.embed(Element.matrix_unit(e.sub_shape, j, 0, 0))
            for j in range(e.sub_shape.n_blocks)]


def center_of_sub(e: Embedding) -> list[Element]:
    return [e.embed(z) for z in center_basis(e.sub_shape)]
