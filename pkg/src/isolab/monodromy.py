"""Monodromy by analytic continuation along loops, and common invariant flags."""

from __future__ import annotations

import itertools
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
import warnings

import numpy as np
import scipy.linalg

from .errors import PoleProximityError, ShapeError, SingularMatrixError, StepUnderflow
from .fuchsian import FuchsianSystem
from .numerics import (
    DEFAULT_ATOL,
    DEFAULT_RTOL,
    ZPath,
    as_cmatrix,
    cluster_eigenvalues,
    eig,
    integrate_linear_ode,
    opnorm,
    sort_key,
)

LOOP_RADIUS_FACTOR = 0.4
DETOUR_RADIUS_FACTOR = 0.45
CIRCLE_SIDES = 16
DETOUR_SIDES = 8


@dataclass(frozen=True)
class LoopSet:
    z0: complex
    loops: tuple  # ZPath per pole, each closed at z0
    radii: tuple


@dataclass(frozen=True)
class MonodromySet:
    z0: complex
    generators: np.ndarray  # shape (n, p, p)

    def __post_init__(self):
        G = np.array(self.generators, dtype=complex)
        if G.ndim != 3 or G.shape[1] != G.shape[2]:
            raise ShapeError("generators must have shape (n, p, p)")
        G.setflags(write=False)
        object.__setattr__(self, "generators", G)


def _clearances(poles, z0):
    """Distance from each pole to the nearest other pole or to z0."""
    out = []
    for i, a in enumerate(poles):
        d = abs(a - z0)
        for j, b in enumerate(poles):
            if j != i:
                d = min(d, abs(a - b))
        out.append(d)
    return np.array(out)


def _corridor(start, end, obstacles):
    """Polyline from ``start`` to ``end`` detouring around discs (centre, radius).

    A disc the straight segment would enter is skirted along its boundary on
    the side away from the centre (left side on exact ties).
    """
    d = end - start
    L = abs(d)
    u = d / L
    hits = []
    for c, rho in obstacles:
        rel = (c - start) / u
        along, across = rel.real, rel.imag
        if abs(across) >= rho:
            continue
        half = np.sqrt(rho * rho - across * across)
        t_in, t_out = along - half, along + half
        if t_out <= 0 or t_in >= L:
            continue
        hits.append((t_in, t_out, c, rho, across))
    hits.sort(key=lambda h: h[0])
    pts = [start]
    for t_in, t_out, c, rho, across in hits:
        p_in = start + t_in * u
        p_out = start + t_out * u
        th_in = np.angle(p_in - c)
        th_out = np.angle(p_out - c)
        # across > 0: the centre lies left of the travel direction -> go round the right (clockwise)
        clockwise = across > 0
        delta = (th_out - th_in) % (2 * np.pi)
        if clockwise:
            delta = delta - 2 * np.pi
        pts.append(p_in)
        for m in range(1, DETOUR_SIDES):
            pts.append(c + rho * np.exp(1j * (th_in + delta * m / DETOUR_SIDES)))
        pts.append(p_out)
    pts.append(end)
    clean = [pts[0]]
    for q in pts[1:]:
        if abs(q - clean[-1]) > 1e-14 * max(1.0, abs(q)):
            clean.append(q)
    return clean


def standard_loops(sys: FuchsianSystem, z0) -> LoopSet:
    """One counterclockwise loop per pole: corridor, 16-gon of radius r_i, corridor back."""
    z0 = complex(z0)
    poles = sys.poles
    if sys.n == 0:
        return LoopSet(z0, (), ())
    dist = np.abs(poles - z0)
    if np.min(dist) <= 1e-8 * max(1.0, float(np.max(np.abs(poles)))):
        raise PoleProximityError(f"base point {z0} is too close to a pole")
    clear = _clearances(poles, z0)
    radii = LOOP_RADIUS_FACTOR * clear
    loops = []
    for i, a in enumerate(poles):
        r = radii[i]
        entry = a + r * (z0 - a) / abs(z0 - a)
        obstacles = [(poles[j], DETOUR_RADIUS_FACTOR * clear[j]) for j in range(sys.n) if j != i]
        out = _corridor(z0, entry, obstacles)
        th0 = np.angle(entry - a)
        circle = [a + r * np.exp(1j * (th0 + 2 * np.pi * m / CIRCLE_SIDES)) for m in range(1, CIRCLE_SIDES)]
        verts = out + circle + [entry] + out[-2::-1]
        loops.append(ZPath(np.array(verts)))
    return LoopSet(z0, tuple(loops), tuple(radii))


def winding_number(path: ZPath, point) -> float:
    """Discrete argument sum of a closed polyline around ``point``, divided by 2*pi."""
    v = path.vertices - complex(point)
    return float(np.sum(np.angle(v[1:] / v[:-1])) / (2 * np.pi))


def _threads():
    try:
        return max(1, int(os.environ.get("ISOLAB_THREADS", "1")))
    except ValueError:
        return 1


def _continue(sys, loop, rtol, atol):
    A_poles = sys.poles
    B = sys.residues

    def rhs(z, dz, Y):
        A = np.tensordot(dz / (z - A_poles), B, axes=1)
        return A @ Y

    return integrate_linear_ode(rhs, loop, np.eye(sys.p, dtype=complex), rtol=rtol, atol=atol).y


def compute_monodromy(sys: FuchsianSystem, loops: LoopSet | None = None, rtol=DEFAULT_RTOL,
                      atol=DEFAULT_ATOL, z0=None) -> MonodromySet:
    """Continue Y with Y(z0) = I around every loop; G_i is the continued Y at z0."""
    if loops is None:
        loops = standard_loops(sys, default_base_point([sys.poles]) if z0 is None else z0)
    for i, (loop, r) in enumerate(zip(loops.loops, loops.radii)):
        if np.min(np.abs(loop.vertices[:, None] - sys.poles[None, :])) < 0.5 * min(loops.radii):
            raise PoleProximityError(f"loop {i} violates the clearance around a pole")
    try:
        workers = _threads()
        if workers > 1 and len(loops.loops) > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                gens = list(pool.map(lambda lp: _continue(sys, lp, rtol, atol), loops.loops))
        else:
            gens = [_continue(sys, lp, rtol, atol) for lp in loops.loops]
    except StepUnderflow as exc:
        raise PoleProximityError(f"continuation failed near a pole: {exc}") from exc
    G = np.array(gens).reshape(sys.n, sys.p, sys.p)
    for i, g in enumerate(G):
        s = np.linalg.svd(g, compute_uv=False)
        if s[-1] <= 1e-12 * s[0]:
            raise SingularMatrixError(f"generator {i} is numerically singular")
    return MonodromySet(loops.z0, G)


def conjugate_set(ms: MonodromySet, C) -> MonodromySet:
    C = as_cmatrix(C)
    s = np.linalg.svd(C, compute_uv=False)
    if s[-1] <= 1e-14 * s[0]:
        raise SingularMatrixError("conjugating matrix is singular")
    Cinv = np.linalg.inv(C)
    return MonodromySet(ms.z0, np.einsum("ab,ibc,cd->iad", Cinv, ms.generators, C))


def ordered_product(ms: MonodromySet, poles) -> np.ndarray:
    """Product of generators in order of increasing arg(a_i - z0).

    Polyline loops are not guaranteed to compose to a loop homotopic to
    zero, so this is reported, never asserted.
    """
    order = sorted(range(len(poles)), key=lambda i: np.angle(poles[i] - ms.z0))
    P = np.eye(ms.generators.shape[1], dtype=complex)
    for i in order:
        P = P @ ms.generators[i]
    return P


def default_base_point(configurations, direction=None):
    """A point far from every pole of every configuration.

    The direction is chosen so that, seen from far away along it, the poles
    of each configuration stay well separated across the ray and keep their
    order; straight corridors then do not sweep over other poles while the
    configuration moves, so loop classes stay comparable.
    """
    configs = [np.asarray(c, dtype=complex).ravel() for c in configurations]
    allp = np.concatenate(configs)
    centre = complex(np.mean(allp))
    spread = float(np.max(np.abs(allp - centre))) if allp.size else 1.0
    R = 4.0 * max(spread, 1.0) + 2.0
    if direction is None:
        thetas = np.linspace(0, 2 * np.pi, 360, endpoint=False) + 0.0123
        u = np.exp(1j * thetas)
        sizes = {len(c) for c in configs}
        groups = [np.array([c for c in configs if len(c) == m]) for m in sorted(sizes)]
        score = np.full(thetas.shape, np.inf)
        for C in groups:
            m = C.shape[1]
            across = ((C[None, :, :] - centre) / u[:, None, None]).imag  # (T, configs, poles)
            if m > 1:
                iu = np.triu_indices(m, 1)
                gaps = np.abs(across[:, :, iu[0]] - across[:, :, iu[1]])
                score = np.minimum(score, gaps.min(axis=(1, 2)))
            order = np.argsort(across, axis=2)
            same = np.all(order == order[:, :1, :], axis=(1, 2))
            score[~same] = -np.inf
        k = int(np.argmax(score))
        if not np.isfinite(score[k]) or score[k] <= 0:
            warnings.warn("no base-point direction keeps the poles in a fixed transverse order; "
                          "loop classes of different configurations may not correspond",
                          RuntimeWarning, stacklevel=2)
        direction = u[k]
    return centre + R * direction


# ---------------------------------------------------------------------------
# Invariant flags
# ---------------------------------------------------------------------------


def block_residual(matrices, dims) -> float:
    """Largest norm of any block strictly below the block diagonal."""
    worst = 0.0
    edges = [0] + list(dims)
    for M in matrices:
        for r in range(1, len(edges) - 1):
            lo = edges[r]
            # rows of block r and below, columns of blocks before r
            if lo < M.shape[0]:
                worst = max(worst, opnorm(M[lo:, :lo]))
    return worst


def _orth(U, tol=1e-10):
    if U.shape[1] == 0:
        return U
    Q, s, _ = np.linalg.svd(U, full_matrices=False)
    return Q[:, s > tol * max(s[0], 1e-300)]


def _null_basis(M, tol):
    if M.size == 0:
        return np.zeros((M.shape[1], 0), dtype=complex)
    _, s, Vh = np.linalg.svd(M)
    rank = int(np.sum(s > tol))
    return Vh[rank:].conj().T


def _generic_elements(matrices, rng_seed=0, count=2):
    rng = np.random.default_rng(rng_seed)
    out = []
    m = len(matrices)
    norms = [max(opnorm(M), 1e-300) for M in matrices]
    unit = [M / s for M, s in zip(matrices, norms)]
    for _ in range(count):
        c = rng.standard_normal(m) + 1j * rng.standard_normal(m)
        X = sum(ci * Mi for ci, Mi in zip(c, unit))
        c2 = rng.standard_normal((m, m)) + 1j * rng.standard_normal((m, m))
        for i in range(m):
            for j in range(m):
                X = X + 0.3 * c2[i, j] * (unit[i] @ unit[j])
        out.append(X)
    return out


def _cluster_candidates(X, tol_rel):
    """Per eigenvalue cluster of X: list of X-invariant subspaces inside it."""
    p = X.shape[0]
    scale = max(opnorm(X), 1e-300)
    w = np.linalg.eigvals(X)
    clusters = cluster_eigenvalues(w, tol_rel * scale)
    centres = np.array([np.mean(w[idx]) for idx in clusters])
    out = []
    for c, idx in enumerate(clusters):
        lam = complex(centres[c])

        def select(z, c=c):
            return int(np.argmin(np.abs(centres - z))) == c

        T, Q, k = scipy.linalg.schur(X, output="complex", sort=select)
        if k != len(idx):
            continue
        W = Q[:, :k]
        m = W.shape[1]
        N = W.conj().T @ X @ W - lam * np.eye(m)
        cands = [np.zeros((p, 0), dtype=complex)]
        Nr = np.eye(m, dtype=complex)
        for _ in range(1, m):
            Nr = Nr @ N
            K = _null_basis(Nr, 1e-8 * scale)
            if 0 < K.shape[1] < m:
                cands.append(W @ K)
        K1 = _null_basis(N, 1e-8 * scale)
        g = K1.shape[1]
        if 1 < g:
            for r in range(1, g):
                for sub in itertools.combinations(range(g), r):
                    cands.append(W @ K1[:, list(sub)])
        cands.append(W)
        out.append((lam, cands))
    return out


def _same_subspace(U, V):
    if U.shape != V.shape:
        return False
    return np.linalg.svd(V.conj().T @ U, compute_uv=False)[-1] > 1 - 1e-8


def _invariance_residual(matrices, U):
    if U.shape[1] == 0 or U.shape[1] == U.shape[0]:
        return 0.0
    P = np.eye(U.shape[0]) - U @ U.conj().T
    return max(opnorm(P @ M @ U) for M in matrices)


def common_invariant_subspaces(matrices, d, tol):
    """Orthonormal bases of d-dimensional subspaces invariant under every matrix.

    Candidates are direct sums of invariant pieces of generic elements of the
    generated algebra, one piece per eigenvalue cluster; each candidate is
    accepted only if its invariance residual is within ``tol``.
    """
    p = matrices[0].shape[0]
    if d == 0:
        return [np.zeros((p, 0), dtype=complex)]
    if d == p:
        return [np.eye(p, dtype=complex)]
    found = []
    for X in _generic_elements(matrices):
        for tol_rel in (1e-8, 1e-5, 1e-3):
            per_cluster = _cluster_candidates(X, tol_rel)
            # enumerate by increasing dimension within clusters sorted by (Re, Im)
            lists = [sorted(c, key=lambda U: U.shape[1]) for _, c in per_cluster]
            for combo in itertools.product(*lists):
                if sum(U.shape[1] for U in combo) != d:
                    continue
                U = _orth(np.hstack(combo))
                if U.shape[1] != d:
                    continue
                if _invariance_residual(matrices, U) > tol:
                    continue
                if any(_same_subspace(U, V) for V in found):
                    continue
                found.append(U)
    return found


def _complete_unitary(U):
    p, d = U.shape
    Q, _ = np.linalg.qr(np.hstack([U, np.eye(p, dtype=complex)]), mode="complete")
    # keep the span of U first: QR of [U, I] starts with an orthonormal basis of U
    Q = Q[:, :p]
    return np.hstack([U, Q[:, d:]])


def _search_flag(matrices, dims, tol):
    p = matrices[0].shape[0]
    if len(dims) == 1:
        return np.eye(p, dtype=complex)
    d = dims[0]
    for U in common_invariant_subspaces(matrices, d, tol):
        V = _complete_unitary(U)
        W = V[:, d:]
        quotient = [W.conj().T @ M @ W for M in matrices]
        sub = _search_flag(quotient, [x - d for x in dims[1:]], tol)
        if sub is not None:
            return np.hstack([U, W @ sub])
    return None


def invariant_flag(matrices, target_dims, rtol=1e-8):
    """C making every C M C^{-1} block upper-triangular with the given flag, or None.

    ``target_dims`` are the cumulative block sizes, strictly increasing and
    ending at the matrix size.  The returned C is unitary.
    """
    mats = [as_cmatrix(M) for M in matrices]
    if not mats:
        raise ShapeError("need at least one matrix")
    p = mats[0].shape[0]
    if any(M.shape != (p, p) for M in mats):
        raise ShapeError("all matrices must have the same size")
    if p > 8:
        raise ShapeError("invariant_flag supports p <= 8")
    dims = [int(x) for x in target_dims]
    if not dims or dims[-1] != p or any(b <= a for a, b in zip(dims, dims[1:])) or dims[0] <= 0:
        raise ShapeError(f"target_dims {dims} must be strictly increasing and end at {p}")
    scale = max(max(opnorm(M) for M in mats), 1e-300)
    tol = rtol * scale
    if block_residual(mats, dims) <= tol:
        return np.eye(p, dtype=complex)
    V = _search_flag(mats, dims, tol)
    if V is None:
        return None
    C = V.conj().T
    if block_residual([C @ M @ V for M in mats], dims) > tol:
        return None
    return C


# ---------------------------------------------------------------------------
# Fingerprints
# ---------------------------------------------------------------------------


def fingerprint(ms: MonodromySet) -> np.ndarray:
    """Conjugation invariants: sorted eigenvalues of each G_i and traces of
    all words of length <= 2 (G_i and G_i G_j, i <= j)."""
    G = ms.generators
    parts = []
    for g in G:
        parts.extend(sorted(np.linalg.eigvals(g), key=sort_key))
    parts.extend(np.trace(g) for g in G)
    for i in range(len(G)):
        for j in range(i, len(G)):
            parts.append(np.trace(G[i] @ G[j]))
    return np.array(parts, dtype=complex)


def fingerprint_distance(f0, f1) -> float:
    """max_k |f0_k - f1_k| / max(1, |f0_k|): absolute for small invariants, relative for large ones."""
    if not f0.size:
        return 0.0
    return float(np.max(np.abs(f0 - f1) / np.maximum(1.0, np.abs(f0))))


def local_exponent_check(sys: FuchsianSystem, ms: MonodromySet) -> float:
    """Max distance between eigenvalues of G_i and exp(2 pi i beta_i^j)."""
    worst = 0.0
    for B, G in zip(sys.residues, ms.generators):
        want = np.exp(2j * np.pi * eig(B).values)
        got = np.linalg.eigvals(G)
        # match greedily by nearest neighbour
        left = list(got)
        for w in want:
            k = int(np.argmin([abs(w - g) for g in left]))
            worst = max(worst, abs(w - left.pop(k)))
    return worst
