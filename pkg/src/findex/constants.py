"""The positivity constant K(E) and the complete-positivity constant L(E).

K(E) is the least K with K·E − id positive, L(E) the least L with L·E − id
completely positive.  K is found by a see-saw over unit vectors (a certified
lower bound), L exactly from a Choi-matrix pencil.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .algebra import (DEFAULT_TOL, AlgebraShape, Element, LinearMap, Tolerances,
                      min_eigenvalue, operator_norm, random_element)
from .condexp import CondExp
from .structure import edge_densities, k_from_densities

MAX_ITER = 300
CLOSED_FORM_KINDS = ("tensor_state", "weighted_corner", "group_average")


@dataclass(frozen=True)
class Certificate:
    """A constant with the vectors that witness it.

    Witnesses are ``(block, vector)`` pairs; ``residual`` is the method's own
    consistency measure (see the individual functions).
    """

    value: float
    witness_xi: tuple[int, np.ndarray] | None
    witness_eta: tuple[int, np.ndarray] | None
    residual: float
    method: str
    restarts_used: int = 0
    converged: bool = True

    @property
    def is_finite(self) -> bool:
        return bool(np.isfinite(self.value))


def _block_map(m: LinearMap, i: int, j: int) -> np.ndarray:
    """Compact sub-matrix from input block i to output block j."""
    ci, ni = m.domain.compact_offsets[i], m.domain.blocks[i]
    cj, nj = m.codomain.compact_offsets[j], m.codomain.blocks[j]
    return m.compact[cj:cj + nj * nj, ci:ci + ni * ni]


def _rank_one(v: np.ndarray) -> np.ndarray:
    """Row-major vec of v v* for a stack of vectors (R, n) -> (R, n*n)."""
    return np.einsum("ra,rb->rab", v, v.conj()).reshape(v.shape[0], -1)


def _normalize(v: np.ndarray) -> np.ndarray:
    nrm = np.linalg.norm(v, axis=-1, keepdims=True)
    return v / np.where(nrm > 0, nrm, 1.0)


def _herm(m: np.ndarray) -> np.ndarray:
    return (m + np.swapaxes(m, -1, -2).conj()) / 2


def _starts(n: int, count: int, rng_seeds) -> np.ndarray:
    """Standard basis vectors followed by ``count`` seeded Gaussian vectors."""
    rand = []
    for ss in rng_seeds:
        g = np.random.default_rng(ss)
        rand.append(g.standard_normal(n) + 1j * g.standard_normal(n))
    parts = [np.eye(n, dtype=complex)]
    if rand:
        parts.append(np.array(rand))
    return _normalize(np.vstack(parts)[: n + count])


# -- positivity margin ----------------------------------------------------------

def positivity_margin(phi: LinearMap, restarts: int = 8, seed: int = 0,
                      tols: Tolerances = DEFAULT_TOL) -> Certificate:
    """min over block-unit ξ and unit η of Re<η, Φ(ξξ*) η>, by alternating eigenvectors."""
    shape = phi.domain
    seeds = np.random.SeedSequence(seed).spawn(restarts * shape.n_blocks)
    best = Certificate(np.inf, None, None, 0.0, "seesaw", 0, True)
    adj = phi.adjoint()
    for i, n in enumerate(shape.blocks):
        xi = _starts(n, restarts, seeds[i * restarts:(i + 1) * restarts])
        cols = [_block_map(phi, i, j) for j in range(phi.codomain.n_blocks)]
        rows = [_block_map(adj, j, i) for j in range(phi.codomain.n_blocks)]
        prev = np.full(len(xi), np.inf)
        converged = False
        for _ in range(MAX_ITER):
            vec = _rank_one(xi)
            # η: smallest eigenvector of Φ(ξξ*) over all output blocks
            vals = np.full(len(xi), np.inf)
            eta = [None] * len(xi)
            eta_block = np.zeros(len(xi), dtype=int)
            for j, cm in enumerate(cols):
                nj = phi.codomain.blocks[j]
                out = _herm((vec @ cm.T).reshape(-1, nj, nj))
                w, v = np.linalg.eigh(out)
                for r in range(len(xi)):
                    if w[r, 0] < vals[r]:
                        vals[r], eta[r], eta_block[r] = w[r, 0], v[r, :, 0], j
            if np.all(np.abs(prev - vals) <= 1e-13 * np.maximum(1, np.abs(vals))):
                converged = True
                break
            prev = vals
            # ξ: smallest eigenvector of block i of Φ†(ηη*)
            new = np.empty_like(xi)
            for r in range(len(xi)):
                j = eta_block[r]
                back = _herm((rows[j] @ _rank_one(eta[r][None])[0]).reshape(n, n))
                new[r] = np.linalg.eigh(back)[1][:, 0]
            xi = new
        r = int(np.argmin(vals))
        if vals[r] < best.value:
            best = Certificate(float(vals[r]), (i, xi[r]), (int(eta_block[r]), eta[r]), 0.0,
                               "seesaw", restarts, converged)
    return best


# -- K(E) ---------------------------------------------------------------------

def k_ratio(E: CondExp, xi: tuple[int, np.ndarray], eta: tuple[int, np.ndarray]) -> float:
    """|<ξ, η>|² / <η, E(ξξ*) η> for block-tagged unit vectors (inf on a zero denominator)."""
    (bi, x), (bj, y) = xi, eta
    num = abs(np.vdot(x, y)) ** 2 if bi == bj else 0.0
    blocks = [np.zeros((n, n), dtype=complex) for n in E.shape.blocks]
    blocks[bi] = np.outer(x, x.conj())
    img = E(Element(E.shape, tuple(blocks))).blocks[bj]
    den = float(np.vdot(y, img @ y).real)
    if den <= 1e-12:
        return np.inf if num > 1e-9 else 0.0
    return float(num / den)


def _pinv_apply(p: np.ndarray, v: np.ndarray, cutoff: float):
    """(P⁺v, v^H P⁺ v, mass of v in the near-kernel) for stacked Hermitian P."""
    w, u = np.linalg.eigh(p)
    top = np.max(w, axis=-1, keepdims=True)
    keep = w > cutoff * np.maximum(top, 1e-300)
    null = w < 1e-12
    alpha = np.einsum("rab,ra->rb", u.conj(), v)
    inv = np.where(keep, 1.0 / np.where(keep, w, 1.0), 0.0)
    out = np.einsum("rab,rb->ra", u, inv * alpha)
    val = np.sum(inv * np.abs(alpha) ** 2, axis=-1)
    lost = np.sum(np.where(null, np.abs(alpha) ** 2, 0.0), axis=-1)
    null_part = np.einsum("rab,rb->ra", u, np.where(null, alpha, 0.0))
    return out, val, lost, null_part


def _seesaw_k(E: CondExp, restarts: int, seed: int, tols: Tolerances) -> Certificate:
    shape = E.shape
    seeds = np.random.SeedSequence(seed).spawn(restarts * shape.n_blocks)
    best = Certificate(0.0, None, None, 0.0, "seesaw", restarts, True)
    for i, n in enumerate(shape.blocks):
        mii = _block_map(E.map, i, i)
        xi = _starts(n, restarts, seeds[i * restarts:(i + 1) * restarts])
        prev = np.full(len(xi), -np.inf)
        converged = False
        for _ in range(MAX_ITER):
            p = _herm((_rank_one(xi) @ mii.T).reshape(-1, n, n))
            eta, val, lost, _ = _pinv_apply(p, xi, tols.pinv_cutoff)
            if np.any(lost > 1e-9):
                r = int(np.argmax(lost))
                _, _, _, null_part = _pinv_apply(p[r:r + 1], xi[r:r + 1], tols.pinv_cutoff)
                w_eta = _normalize(null_part)[0]
                return Certificate(np.inf, (i, xi[r]), (i, w_eta), 0.0, "seesaw",
                                   restarts, True)
            if np.all(np.abs(val - prev) <= 1e-12 * np.maximum(1, val)):
                converged = True
                break
            prev = val
            eta = _normalize(eta)
            mm = _herm((_rank_one(eta) @ mii.conj()).reshape(-1, n, n))
            new, _, _, null_part = _pinv_apply(mm, eta, tols.pinv_cutoff)
            xi = _normalize(new + null_part)
        else:
            p = _herm((_rank_one(xi) @ mii.T).reshape(-1, n, n))
            eta, val, _, _ = _pinv_apply(p, xi, tols.pinv_cutoff)
        r = int(np.argmax(val))
        if val[r] > best.value:
            w_eta = _normalize(eta[r:r + 1])[0]
            best = Certificate(float(val[r]), (i, xi[r]), (i, w_eta), 0.0, "seesaw",
                               restarts, converged)
    if best.witness_xi is not None:
        best = _with_residual(E, best)
    return best


def _with_residual(E: CondExp, cert: Certificate) -> Certificate:
    ratio = k_ratio(E, cert.witness_xi, cert.witness_eta)
    res = abs(ratio - cert.value) if np.isfinite(cert.value) else 0.0
    return Certificate(cert.value, cert.witness_xi, cert.witness_eta, float(res), cert.method,
                       cert.restarts_used, cert.converged)


def closed_form_witness(E: CondExp) -> tuple[float, tuple[int, np.ndarray], tuple[int, np.ndarray]]:
    """The edge-density value of K together with a vector attaining it.

    In A-block i the extremal ξ has, for every B-block j, rotated coefficients
    X_j = conj(c_ij^{-1/2} V_j) where V_j spans the top eigenvectors of c_ij^{-1}.
    """
    e = E.embedding
    dens = edge_densities(E)
    value = k_from_densities(E, dens)
    best_i, best = 0, -1.0
    for i in range(e.amb_shape.n_blocks):
        tot = 0.0
        for j, mj in enumerate(e.sub_shape.blocks):
            if (i, j) in dens:
                w = np.linalg.eigvalsh(dens[(i, j)])
                tot += float(np.sort(1 / w)[::-1][:mj].sum())
        if tot > best:
            best_i, best = i, tot
    i = best_i
    n = e.amb_shape.blocks[i]
    rot = np.zeros(n, dtype=complex)
    for j, mj in enumerate(e.sub_shape.blocks):
        lam = int(e.lam[i, j])
        if lam == 0:
            continue
        w, v = np.linalg.eigh(dens[(i, j)])
        k = min(mj, lam)
        x = np.zeros((lam, mj), dtype=complex)
        x[:, :k] = (v[:, :k] / np.sqrt(w[:k]))  # smallest c-eigenvalues first
        o = e.column_offsets[i][j]
        rot[o:o + lam * mj] = x.conj().ravel()
    xi = e.block_unitaries[i] @ rot
    xi = xi / np.linalg.norm(xi)
    blocks = [np.zeros((q, q), dtype=complex) for q in E.shape.blocks]
    blocks[i] = np.outer(xi, xi.conj())
    p = E(Element(E.shape, tuple(blocks))).blocks[i]
    eta, *_ = _pinv_apply(p[None], xi[None], 1e-10)
    return value, (i, xi), (i, _normalize(eta)[0])


def compute_K(E: CondExp, restarts: int = 64, seed: int = 0,
              tols: Tolerances = DEFAULT_TOL) -> Certificate:
    if E.kind in CLOSED_FORM_KINDS:
        value, xi, eta = closed_form_witness(E)
        check = _seesaw_k(E, min(restarts, 8), seed, tols)
        if check.value > value + 1e-8 * max(1.0, value):
            return check
        cert = Certificate(value, xi, eta, 0.0, "closed_form", check.restarts_used,
                           check.converged)
        return _with_residual(E, cert)
    return _seesaw_k(E, restarts, seed, tols)


# -- L(E) ---------------------------------------------------------------------

def choi_block(E: CondExp, block: int) -> np.ndarray:
    """Choi matrix of E restricted to inputs from ``block`` and outputs into ``block``.

    C[(k,a),(l,b)] = E(e_kl)[a,b]; the off-diagonal (input, output) block pairs
    carry no identity component, so only these diagonal pieces bound L.
    """
    n = E.shape.blocks[block]
    sub = _block_map(E.map, block, block)  # (a,b) x (k,l)
    return sub.reshape(n, n, n, n).transpose(2, 0, 3, 1).reshape(n * n, n * n)


def compute_L(E: CondExp, tols: Tolerances = DEFAULT_TOL) -> Certificate:
    best = Certificate(0.0, None, None, 0.0, "choi_pencil")
    residual = 0.0
    for i, n in enumerate(E.shape.blocks):
        c = _herm(choi_block(E, i))
        omega = np.eye(n, dtype=complex).ravel()  # Choi vector of the identity
        w, u = np.linalg.eigh(c)
        keep = w > tols.pinv_cutoff * max(w[-1], 1e-300)
        alpha = u.conj().T @ omega
        outside = float(np.linalg.norm(alpha[~keep]))
        if outside > tols.outside_support:
            v = u[:, ~keep] @ alpha[~keep]
            return Certificate(np.inf, (i, omega / np.sqrt(n)), (i, v / np.linalg.norm(v)),
                               outside, "choi_pencil")
        val = float(np.sum(np.abs(alpha[keep]) ** 2 / w[keep]))
        if val > best.value:
            vec = u[:, keep] @ (alpha[keep] / w[keep])
            best = Certificate(val, (i, omega / np.sqrt(n)), (i, vec / np.linalg.norm(vec)),
                               0.0, "choi_pencil")
    for i, n in enumerate(E.shape.blocks):
        c = _herm(choi_block(E, i))
        omega = np.eye(n, dtype=complex).ravel()
        gap = best.value * c - np.outer(omega, omega)
        residual = min(residual, float(np.linalg.eigvalsh(gap)[0]) / best.value)
    return Certificate(best.value, best.witness_xi, best.witness_eta, residual, "choi_pencil")


def cp_margin(E: CondExp, L: float) -> float:
    """Smallest eigenvalue of the Choi matrix of L·E − id (all block pairs)."""
    out = np.inf
    for i, n in enumerate(E.shape.blocks):
        for j, q in enumerate(E.shape.blocks):
            sub = _block_map(E.map, i, j).reshape(q, q, n, n)
            c = L * sub.transpose(2, 0, 3, 1).reshape(n * q, n * q)
            if i == j:
                om = np.eye(n, dtype=complex).ravel()
                c = c - np.outer(om, om)
            out = min(out, float(np.linalg.eigvalsh(_herm(c))[0]))
    return out


# -- pointwise inequalities ----------------------------------------------------

@dataclass(frozen=True)
class InequalityReport:
    name: str
    samples: int
    min_left: float
    min_right: float
    passed: bool
    witness: Element | None = None


def kadison_check(E: CondExp, K: float, a: Element, tol: float = 1e-8) -> InequalityReport:
    """0 ⪯ (E(a)−a)² ⪯ (K−1)(E(a²)−E(a)²) for self-adjoint a."""
    if not a.is_self_adjoint(1e-9):
        from .algebra import NotSelfAdjointError
        raise NotSelfAdjointError("kadison_check needs a self-adjoint element")
    ea = E(a)
    d = ea - a
    left = d @ d
    right = (K - 1) * (E(a @ a) - ea @ ea) - left
    lmin, rmin = min_eigenvalue(left), min_eigenvalue(right)
    ok = lmin >= -tol and rmin >= -tol
    return InequalityReport("kadison", 1, lmin, rmin, ok, None if ok else a)


def kadison_sweep(E: CondExp, K: float, samples: int = 500, seed: int = 0,
                  tol: float = 1e-8) -> InequalityReport:
    rng = np.random.default_rng(seed)
    lmin = rmin = np.inf
    wit = None
    for _ in range(samples):
        a = random_element(E.shape, rng, hermitian=True)
        rep = kadison_check(E, K, a, tol)
        if rep.min_right < rmin or rep.min_left < lmin:
            if not rep.passed and wit is None:
                wit = a
        lmin, rmin = min(lmin, rep.min_left), min(rmin, rep.min_right)
    ok = lmin >= -tol and rmin >= -tol
    return InequalityReport("kadison", samples, lmin, rmin, ok, wit)


def pimsner_popa_check(E: CondExp, K: float, samples: int = 500, seed: int = 0,
                       tol: float = 1e-8) -> InequalityReport:
    """K(ε + E(a*a)) − a*a ⪰ 0 for ε ∈ {1e-3, 1e-6}, and ‖a‖² ≤ K ‖E(a*a)‖.

    ``min_left`` is the worst operator gap, ``min_right`` the worst norm gap
    K‖E(a*a)‖ − ‖a‖² (relative to ‖a‖²).
    """
    rng = np.random.default_rng(seed)
    one = Element.identity(E.shape)
    gap = norm_gap = np.inf
    wit = None
    for _ in range(samples):
        a = random_element(E.shape, rng)
        aa = a.adj @ a
        eaa = E(aa)
        for eps in (1e-3, 1e-6):
            g = min_eigenvalue(K * (eps * one + eaa) - aa) / max(1.0, operator_norm(aa))
            if g < -tol and wit is None:
                wit = a
            gap = min(gap, g)
        na = operator_norm(a) ** 2
        ng = (K * operator_norm(eaa) - na) / max(1.0, na)
        if ng < -tol and wit is None:
            wit = a
        norm_gap = min(norm_gap, ng)
    ok = gap >= -tol and norm_gap >= -tol
    return InequalityReport("pimsner_popa", samples, gap, norm_gap, ok, wit)


def floor_k(K: float, slack: float = 1e-6) -> int:
    """[K] with a small upward slack so that K = 2 − 1e-12 counts as 2."""
    if not np.isfinite(K):
        raise ValueError("floor of an infinite constant")
    return int(np.floor(K + slack))


def scaled_map(E: CondExp, K: float) -> LinearMap:
    """K·E − id."""
    return E.map * K - LinearMap.identity(E.shape)


__all__ = ["Certificate", "positivity_margin", "compute_K", "compute_L", "kadison_check",
           "kadison_sweep", "pimsner_popa_check", "k_ratio", "cp_margin", "floor_k",
           "scaled_map", "choi_block", "InequalityReport", "AlgebraShape"]
