"""Multi-matrix algebras ⊕ M_{n_i}(C), their elements and linear maps between them.

Elements are kept block by block.  Two vectorizations are used:

* the *compact* vector, concatenating the row-major flattening of each block
  (length ``sum(n_i**2)``), which is what every computation runs on;
* the *ambient* vector, the row-major flattening of the full ``n x n``
  block-diagonal matrix, only materialized for Choi-type constructions.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np


@dataclass(frozen=True)
class Tolerances:
    """The one tolerance record threaded through every numerical decision."""

    tol: float = 1e-9
    rank_cutoff: float = 1e-8
    pinv_cutoff: float = 1e-10
    outside_support: float = 1e-8

    def scaled(self, norm: float) -> float:
        return self.tol * max(1.0, norm)


DEFAULT_TOL = Tolerances()


class ShapeError(ValueError):
    pass


class NotSelfAdjointError(ValueError):
    pass


@dataclass(frozen=True)
class AlgebraShape:
    blocks: tuple[int, ...]

    def __post_init__(self):
        blocks = tuple(int(b) for b in self.blocks)
        if not blocks:
            raise ShapeError("an algebra needs at least one block")
        if any(b < 1 for b in blocks):
            raise ShapeError(f"block dimensions must be >= 1, got {blocks}")
        object.__setattr__(self, "blocks", blocks)

    @property
    def ambient_dim(self) -> int:
        return sum(self.blocks)

    @property
    def dim(self) -> int:
        """Linear dimension of the algebra."""
        return sum(b * b for b in self.blocks)

    @property
    def n_blocks(self) -> int:
        return len(self.blocks)

    @property
    def is_commutative(self) -> bool:
        return all(b == 1 for b in self.blocks)

    @cached_property
    def offsets(self) -> tuple[int, ...]:
        """Start of each block on the ambient diagonal."""
        return tuple(int(x) for x in np.concatenate([[0], np.cumsum(self.blocks)[:-1]]))

    @cached_property
    def compact_offsets(self) -> tuple[int, ...]:
        sq = [b * b for b in self.blocks]
        return tuple(int(x) for x in np.concatenate([[0], np.cumsum(sq)[:-1]]))

    @cached_property
    def ambient_index(self) -> np.ndarray:
        """Position of each compact coordinate inside the ambient vector."""
        n = self.ambient_dim
        out = []
        for off, b in zip(self.offsets, self.blocks):
            rows, cols = np.divmod(np.arange(b * b), b)
            out.append((off + rows) * n + off + cols)
        return np.concatenate(out)

    def __str__(self) -> str:
        return " ⊕ ".join(f"M{b}" for b in self.blocks)


def _freeze(m: np.ndarray) -> np.ndarray:
    m = np.array(m, dtype=complex)
    m.setflags(write=False)
    return m


@dataclass(frozen=True, eq=False)
class Element:
    shape: AlgebraShape
    blocks: tuple[np.ndarray, ...] = field(repr=False)

    def __post_init__(self):
        if len(self.blocks) != self.shape.n_blocks:
            raise ShapeError(
                f"{len(self.blocks)} blocks given for shape {self.shape}")
        frozen = []
        for b, n in zip(self.blocks, self.shape.blocks):
            b = _freeze(b)
            if b.shape != (n, n):
                raise ShapeError(f"block of shape {b.shape}, expected {(n, n)}")
            frozen.append(b)
        object.__setattr__(self, "blocks", tuple(frozen))

    # -- constructors -----------------------------------------------------
    @classmethod
    def zeros(cls, shape: AlgebraShape) -> Element:
        return cls(shape, tuple(np.zeros((n, n)) for n in shape.blocks))

    @classmethod
    def identity(cls, shape: AlgebraShape) -> Element:
        return cls(shape, tuple(np.eye(n) for n in shape.blocks))

    @classmethod
    def from_compact(cls, shape: AlgebraShape, vec: np.ndarray) -> Element:
        vec = np.asarray(vec)
        if vec.shape != (shape.dim,):
            raise ShapeError(f"compact vector of length {vec.shape}, expected {shape.dim}")
        return cls(shape, tuple(
            vec[o:o + n * n].reshape(n, n)
            for o, n in zip(shape.compact_offsets, shape.blocks)))

    @classmethod
    def from_ambient(cls, shape: AlgebraShape, mat: np.ndarray) -> Element:
        """Take the diagonal blocks of an ambient matrix (off-block entries dropped)."""
        mat = np.asarray(mat)
        return cls(shape, tuple(
            mat[o:o + n, o:o + n] for o, n in zip(shape.offsets, shape.blocks)))

    @classmethod
    def matrix_unit(cls, shape: AlgebraShape, block: int, row: int, col: int) -> Element:
        blocks = [np.zeros((n, n)) for n in shape.blocks]
        blocks[block][row, col] = 1.0
        return cls(shape, tuple(blocks))

    @classmethod
    def diag(cls, shape: AlgebraShape, values: Sequence[complex]) -> Element:
        """Element whose ambient diagonal is ``values``."""
        values = np.asarray(values)
        return cls(shape, tuple(
            np.diag(values[o:o + n]) for o, n in zip(shape.offsets, shape.blocks)))

    # -- views ------------------------------------------------------------
    @cached_property
    def compact(self) -> np.ndarray:
        return np.concatenate([b.ravel() for b in self.blocks])

    def ambient(self) -> np.ndarray:
        n = self.shape.ambient_dim
        out = np.zeros((n, n), dtype=complex)
        for off, b in zip(self.shape.offsets, self.blocks):
            out[off:off + b.shape[0], off:off + b.shape[0]] = b
        return out

    # -- algebra ----------------------------------------------------------
    def _check(self, other: Element) -> None:
        if self.shape != other.shape:
            raise ShapeError(f"shape mismatch: {self.shape} vs {other.shape}")

    def __add__(self, other: Element) -> Element:
        self._check(other)
        return Element(self.shape, tuple(a + b for a, b in zip(self.blocks, other.blocks)))

    def __sub__(self, other: Element) -> Element:
        self._check(other)
        return Element(self.shape, tuple(a - b for a, b in zip(self.blocks, other.blocks)))

    def __neg__(self) -> Element:
        return Element(self.shape, tuple(-a for a in self.blocks))

    def __mul__(self, scalar: complex) -> Element:
        return Element(self.shape, tuple(scalar * a for a in self.blocks))

    __rmul__ = __mul__

    def __truediv__(self, scalar: complex) -> Element:
        return Element(self.shape, tuple(a / scalar for a in self.blocks))

    def __matmul__(self, other: Element) -> Element:
        return multiply(self, other)

    @property
    def adj(self) -> Element:
        return Element(self.shape, tuple(a.conj().T for a in self.blocks))

    def hermitian_part(self) -> Element:
        return Element(self.shape, tuple((a + a.conj().T) / 2 for a in self.blocks))

    def trace(self, weights: Sequence[float] | None = None) -> complex:
        if weights is None:
            weights = [1.0] * self.shape.n_blocks
        return sum(w * np.trace(a) for w, a in zip(weights, self.blocks))

    def self_adjoint_residual(self) -> float:
        return max(float(np.max(np.abs(a - a.conj().T), initial=0.0)) for a in self.blocks)

    def is_self_adjoint(self, tol: float = DEFAULT_TOL.tol) -> bool:
        return self.self_adjoint_residual() <= tol * max(1.0, operator_norm(self))

    def funcm(self, fn) -> Element:
        """Apply a real function to a self-adjoint element by spectral calculus."""
        out = []
        for a in self.blocks:
            w, v = np.linalg.eigh((a + a.conj().T) / 2)
            out.append((v * fn(w)) @ v.conj().T)
        return Element(self.shape, tuple(out))

    def inv(self) -> Element:
        return Element(self.shape, tuple(np.linalg.inv(a) for a in self.blocks))

    def allclose(self, other: Element, atol: float = 1e-10) -> bool:
        self._check(other)
        return distance(self, other) <= atol

    def __repr__(self) -> str:
        return f"Element({self.shape}, norm={operator_norm(self):.6g})"


def multiply(a: Element, b: Element) -> Element:
    a._check(b)
    return Element(a.shape, tuple(x @ y for x, y in zip(a.blocks, b.blocks)))


def distance(a: Element, b: Element) -> float:
    """Largest entrywise deviation; cheap and shape-agnostic."""
    return max(float(np.max(np.abs(x - y), initial=0.0)) for x, y in zip(a.blocks, b.blocks))


def spectrum(a: Element, tol: float = DEFAULT_TOL.tol) -> list[tuple[float, int]]:
    """Eigenvalues of a self-adjoint element, ascending, tagged by block.

    Ties are broken by block index so the listing is canonical.
    """
    if a.self_adjoint_residual() > tol * max(1.0, operator_norm(a)):
        raise NotSelfAdjointError(
            f"element is not self-adjoint (residual {a.self_adjoint_residual():.3g})")
    pairs = []
    for k, blk in enumerate(a.blocks):
        for w in np.linalg.eigvalsh((blk + blk.conj().T) / 2):
            pairs.append((float(w), k))
    return sorted(pairs)


def min_eigenvalue(a: Element) -> float:
    """Smallest eigenvalue of the Hermitian part."""
    return min(float(np.linalg.eigvalsh((b + b.conj().T) / 2)[0]) for b in a.blocks)


def operator_norm(a: Element) -> float:
    return max(float(np.linalg.norm(b, 2)) if b.size else 0.0 for b in a.blocks)


def is_positive_element(a: Element, tol: float = DEFAULT_TOL.tol) -> bool:
    scale = max(1.0, operator_norm(a))
    if a.self_adjoint_residual() > tol * scale:
        return False
    return min_eigenvalue(a) >= -tol * scale


def center_basis(shape: AlgebraShape) -> list[Element]:
    out = []
    for k in range(shape.n_blocks):
        blocks = [np.zeros((n, n)) for n in shape.blocks]
        blocks[k] = np.eye(shape.blocks[k])
        out.append(Element(shape, tuple(blocks)))
    return out


def matrix_units(shape: AlgebraShape) -> list[Element]:
    """The standard linear basis, in compact-vector order."""
    return [Element.matrix_unit(shape, k, r, c)
            for k, n in enumerate(shape.blocks) for r in range(n) for c in range(n)]


def unit_at(shape: AlgebraShape, k: int) -> Element:
    """The k-th element of :func:`matrix_units` without building the others."""
    for b, (off, n) in enumerate(zip(shape.compact_offsets, shape.blocks)):
        if k < off + n * n:
            r, c = divmod(k - off, n)
            return Element.matrix_unit(shape, b, r, c)
    raise IndexError(k)


def random_element(shape: AlgebraShape, rng: np.random.Generator,
                   hermitian: bool = False) -> Element:
    blocks = []
    for n in shape.blocks:
        m = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
        blocks.append((m + m.conj().T) / 2 if hermitian else m)
    return Element(shape, tuple(blocks))


def random_unitary(n: int, rng: np.random.Generator) -> np.ndarray:
    """Haar unitary from the QR decomposition of a complex Gaussian matrix."""
    z = (rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    d = np.diagonal(r)
    return q * (d / np.abs(d))


class LinearMap:
    """A linear map between multi-matrix algebras.

    Stored as the compact matrix (``cod.dim x dom.dim``).  The ambient matrix of
    size ``cod.ambient_dim**2 x dom.ambient_dim**2`` is available through
    :meth:`ambient_matrix`; its columns for off-block inputs are zero.
    """

    def __init__(self, domain: AlgebraShape, codomain: AlgebraShape, compact: np.ndarray):
        compact = np.array(compact, dtype=complex)
        if compact.shape != (codomain.dim, domain.dim):
            raise ShapeError(
                f"matrix {compact.shape} does not fit {domain} -> {codomain}")
        compact.setflags(write=False)
        self.domain = domain
        self.codomain = codomain
        self.compact = compact

    @classmethod
    def identity(cls, shape: AlgebraShape) -> LinearMap:
        return cls(shape, shape, np.eye(shape.dim))

    @classmethod
    def from_function(cls, domain: AlgebraShape, codomain: AlgebraShape, fn) -> LinearMap:
        cols = [fn(u).compact for u in matrix_units(domain)]
        return cls(domain, codomain, np.stack(cols, axis=1))

    @classmethod
    def from_ambient(cls, domain: AlgebraShape, codomain: AlgebraShape,
                     matrix: np.ndarray) -> LinearMap:
        matrix = np.asarray(matrix)
        return cls(domain, codomain,
                   matrix[np.ix_(codomain.ambient_index, domain.ambient_index)])

    def ambient_matrix(self) -> np.ndarray:
        nd, nc = self.domain.ambient_dim, self.codomain.ambient_dim
        out = np.zeros((nc * nc, nd * nd), dtype=complex)
        out[np.ix_(self.codomain.ambient_index, self.domain.ambient_index)] = self.compact
        return out

    def __call__(self, a: Element) -> Element:
        if a.shape != self.domain:
            raise ShapeError(f"map expects {self.domain}, got {a.shape}")
        return Element.from_compact(self.codomain, self.compact @ a.compact)

    def apply_batch(self, vecs: np.ndarray) -> np.ndarray:
        """Apply to compact vectors stacked along the last axis."""
        return vecs @ self.compact.T

    def adjoint(self) -> LinearMap:
        """Adjoint for the Hilbert-Schmidt inner product Tr(x* y)."""
        return LinearMap(self.codomain, self.domain, self.compact.conj().T)

    def compose(self, other: LinearMap) -> LinearMap:
        """``self ∘ other``."""
        if other.codomain != self.domain:
            raise ShapeError("cannot compose: shapes do not chain")
        return LinearMap(other.domain, self.codomain, self.compact @ other.compact)

    def _same(self, other: LinearMap) -> None:
        if (self.domain, self.codomain) != (other.domain, other.codomain):
            raise ShapeError("maps act between different algebras")

    def __add__(self, other: LinearMap) -> LinearMap:
        self._same(other)
        return LinearMap(self.domain, self.codomain, self.compact + other.compact)

    def __sub__(self, other: LinearMap) -> LinearMap:
        self._same(other)
        return LinearMap(self.domain, self.codomain, self.compact - other.compact)

    def __mul__(self, scalar: complex) -> LinearMap:
        return LinearMap(self.domain, self.codomain, scalar * self.compact)

    __rmul__ = __mul__

    def __repr__(self) -> str:
        return f"LinearMap({self.domain} -> {self.codomain})"


def left_mult_apply(shape: AlgebraShape, m: np.ndarray, x: Element) -> np.ndarray:
    """Compose a compact matrix ``m`` (rows over ``shape``) with left multiplication by ``x``.

    Returns the compact matrix of ``v -> L_x(m v)`` without forming L_x.
    """
    out = np.empty_like(m, dtype=complex)
    for off, n, xb in zip(shape.compact_offsets, shape.blocks, x.blocks):
        blk = m[off:off + n * n].reshape(n, -1)
        out[off:off + n * n] = (xb @ blk).reshape(n * n, -1)
    return out


def right_mult_apply(shape: AlgebraShape, m: np.ndarray, x: Element) -> np.ndarray:
    """Compact matrix of ``v -> R_x(m v)`` where ``R_x(y) = y x``."""
    out = np.empty_like(m, dtype=complex)
    for off, n, xb in zip(shape.compact_offsets, shape.blocks, x.blocks):
        blk = m[off:off + n * n].reshape(n, n, -1).transpose(0, 2, 1)
        out[off:off + n * n] = (blk @ xb).transpose(0, 2, 1).reshape(n * n, -1)
    return out


def precompose_left_mult(shape: AlgebraShape, m: np.ndarray, x: Element) -> np.ndarray:
    """Compact matrix of ``v -> m(L_x v)`` (columns over ``shape``)."""
    return left_mult_apply(shape, m.T, _transpose(x)).T


def precompose_right_mult(shape: AlgebraShape, m: np.ndarray, x: Element) -> np.ndarray:
    """Compact matrix of ``v -> m(R_x v)``."""
    return right_mult_apply(shape, m.T, _transpose(x)).T


def _transpose(x: Element) -> Element:
    return Element(x.shape, tuple(b.T for b in x.blocks))


def stack_compact(elements: Iterable[Element]) -> np.ndarray:
    return np.stack([e.compact for e in elements])
