"""Edge densities of a conditional expectation onto ι(B).

Any conditional expectation onto ι(B) ⊆ ⊕ M_{n_i} is fixed by one positive
matrix c_ij of size Λ_ij x Λ_ij per edge (i, j) of the inclusion, with
``sum_i Tr c_ij = 1``: in the rotated coordinates (j, r, s) of A-block i,

    E(x)_j[s, s'] = sum_i sum_{r, r'} c_ij[r, r'] x̃_i[(j, r, s), (j, r', s')].

Reading the densities off a map gives closed forms for K(E) and Ind(E) that do
not go through any optimizer or frame computation.
"""
from __future__ import annotations

import numpy as np

from .algebra import Element


def rotated_unit(e, i: int, j: int, r: int, s: int, r2: int, s2: int) -> Element:
    """U_i |(j,r,s)><(j,r2,s2)| U_i* placed in A-block i."""
    m = e.sub_shape.blocks[j]
    o = e.column_offsets[i][j]
    n = e.amb_shape.blocks[i]
    v = np.zeros((n, n), dtype=complex)
    v[o + r * m + s, o + r2 * m + s2] = 1.0
    u = e.block_unitaries[i]
    blocks = [np.zeros((k, k), dtype=complex) for k in e.amb_shape.blocks]
    blocks[i] = u @ v @ u.conj().T
    return Element(e.amb_shape, tuple(blocks))


def edge_densities(E) -> dict[tuple[int, int], np.ndarray]:
    e = E.embedding
    out = {}
    for i in range(e.amb_shape.n_blocks):
        for j in range(e.sub_shape.n_blocks):
            lam = int(e.lam[i, j])
            if lam == 0:
                continue
            c = np.zeros((lam, lam), dtype=complex)
            for r in range(lam):
                for r2 in range(lam):
                    b = e.restrict(E(rotated_unit(e, i, j, r, 0, r2, 0)))
                    c[r, r2] = b.blocks[j][0, 0]
            out[(i, j)] = (c + c.conj().T) / 2
    return out


def _inverse_eigs(c: np.ndarray) -> np.ndarray:
    w = np.linalg.eigvalsh(c)
    with np.errstate(divide="ignore"):
        return np.where(w > 1e-14, 1.0 / np.maximum(w, 1e-300), np.inf)


def k_from_densities(E, dens=None) -> float:
    """max_i sum_j (sum of the min(m_j, Λ_ij) largest eigenvalues of c_ij^{-1})."""
    e = E.embedding
    dens = edge_densities(E) if dens is None else dens
    best = 0.0
    for i in range(e.amb_shape.n_blocks):
        tot = 0.0
        for j, mj in enumerate(e.sub_shape.blocks):
            if (i, j) not in dens:
                continue
            inv = np.sort(_inverse_eigs(dens[(i, j)]))[::-1]
            tot += float(inv[:min(mj, len(inv))].sum())
        best = max(best, tot)
    return best


def index_from_densities(E, dens=None) -> Element:
    """Ind(E) = ⊕_i (sum_j Tr c_ij^{-1}) 1_{n_i}."""
    e = E.embedding
    dens = edge_densities(E) if dens is None else dens
    blocks = []
    for i, n in enumerate(e.amb_shape.blocks):
        tot = sum(float(_inverse_eigs(dens[(i, j)]).sum())
                  for j in range(e.sub_shape.n_blocks) if (i, j) in dens)
        blocks.append(tot * np.eye(n))
    return Element(e.amb_shape, tuple(blocks))
