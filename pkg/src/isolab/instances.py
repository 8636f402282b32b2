"""Seeded random instances for tests and the verification suite."""

from __future__ import annotations

import numpy as np

from .fuchsian import FuchsianSystem
from .numerics import ZPath, random_complex
from .schlesinger import segment_diagonal_distance

EXPONENT_RADIUS = 0.4
OFFDIAG_SCALE = 0.5
MIN_POLE_GAP = 0.6


def rng_for(seed) -> np.random.Generator:
    return np.random.default_rng(seed)


def random_poles(rng, n, radius=1.5, min_gap=MIN_POLE_GAP) -> np.ndarray:
    """n points in a disk, pairwise at least ``min_gap`` apart."""
    while True:
        r = radius * np.sqrt(rng.uniform(size=n))
        a = r * np.exp(2j * np.pi * rng.uniform(size=n))
        d = np.abs(a[:, None] - a[None, :]) + np.eye(n) * 1e9
        if n < 2 or d.min() >= min_gap:
            return a


def _disk(rng, size, radius):
    r = radius * np.sqrt(rng.uniform(size=size))
    return r * np.exp(2j * np.pi * rng.uniform(size=size))


def random_exponents(rng, n, p, radius=EXPONENT_RADIUS, threshold=None) -> np.ndarray:
    """(n, p) exponents in the disk |beta| <= r with zero column sums.

    r is ``radius``, shrunk to 0.9 |threshold| when a threshold is given and
    tighter, so every draw satisfies Re beta > threshold.  Columns are
    centred and draws leaving the disk are rejected.
    """
    r = radius if threshold is None else min(radius, 0.9 * abs(threshold))
    for _ in range(100000):
        beta = _disk(rng, (n, p), r)
        beta -= beta.mean(axis=0)
        if np.max(np.abs(beta)) <= r:
            return beta
    raise RuntimeError("rejection sampling for exponents did not terminate")


def full_flag_threshold(n, p):
    """Exponent threshold for the complete flag (blocks of size one)."""
    return -1.0 / (n * (p - 1)) if p > 1 else None


def random_triangular_residues(rng, n, p, radius=EXPONENT_RADIUS, offdiag=OFFDIAG_SCALE) -> np.ndarray:
    """Upper-triangular residues summing to zero, with exponents inside the full-flag threshold."""
    beta = random_exponents(rng, n, p, radius, full_flag_threshold(n, p))
    B = np.zeros((n, p, p), dtype=complex)
    iu = np.triu_indices(p, 1)
    for i in range(n - 1):
        B[i][iu] = random_complex(rng, len(iu[0]), offdiag)
    B[n - 1][iu] = -B[: n - 1].sum(axis=0)[iu]
    for i in range(n):
        B[i][np.diag_indices(p)] = beta[i]
    return B


def random_triangular_system(rng, n, p, **kw) -> FuchsianSystem:
    return FuchsianSystem(random_poles(rng, n), random_triangular_residues(rng, n, p, **kw))


def random_gauge(rng, p, max_cond=50.0) -> np.ndarray:
    while True:
        S = np.eye(p) + random_complex(rng, (p, p), 0.6)
        if np.linalg.cond(S) < max_cond:
            return S


def conjugated_triangular_system(rng, n, p, **kw):
    """(system with residues S^{-1} T_i S, S, triangular T)."""
    T = random_triangular_residues(rng, n, p, **kw)
    S = random_gauge(rng, p)
    Sinv = np.linalg.inv(S)
    B = np.einsum("ab,ibc,cd->iad", Sinv, T, S)
    B[-1] = -B[:-1].sum(axis=0)
    return FuchsianSystem(random_poles(rng, n), B), S, T


def random_generic_system(rng, n, p, scale=0.35) -> FuchsianSystem:
    B = random_complex(rng, (n, p, p), scale)
    B[-1] = -B[:-1].sum(axis=0)
    return FuchsianSystem(random_poles(rng, n), B)


def irreducible_pair_system(rng, n=3, min_det=1e-2) -> FuchsianSystem:
    """p=2 system whose residues share no eigenvector (det [B_1, B_2] bounded away from 0)."""
    while True:
        sys = random_generic_system(rng, n, 2)
        B1, B2 = sys.residues[0], sys.residues[1]
        if abs(np.linalg.det(B1 @ B2 - B2 @ B1)) > min_det:
            return sys


def random_config_path(rng, a, length=1.0, nseg=3, clearance=0.1) -> ZPath:
    """Polyline in configuration space from ``a`` with total displacement ~``length``."""
    a = np.asarray(a, dtype=complex)
    n = a.shape[0]
    while True:
        pts = [a]
        for _ in range(nseg):
            step = random_complex(rng, n, 1.0)
            step *= (length / nseg) / np.linalg.norm(step)
            pts.append(pts[-1] + step)
        ok = all(segment_diagonal_distance(pts[k], pts[k + 1]) >= clearance for k in range(nseg))
        if ok:
            return ZPath(np.array(pts))


def closed_loop(rng, a, size=0.15, corners=3) -> ZPath:
    """Small closed polygon around ``a`` that stays inside a diagonal-free polydisk."""
    a = np.asarray(a, dtype=complex)
    n = a.shape[0]
    gap = min(abs(a[i] - a[j]) for i in range(n) for j in range(i + 1, n)) if n > 1 else 1.0
    r = min(size, gap / 5)
    pts = [a]
    for _ in range(corners):
        d = random_complex(rng, n, 1.0)
        pts.append(a + r * d / np.max(np.abs(d)))
    pts.append(a)
    return ZPath(np.array(pts))
