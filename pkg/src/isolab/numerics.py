"""Dense complex linear algebra, matrix functions, adaptive path integration
and endpoint-singular quadrature.

Matrices are plain ``numpy`` complex arrays throughout the package.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass
from typing import Callable, NamedTuple, Sequence

import numpy as np
import scipy.linalg
import scipy.special
from scipy.integrate import DOP853

from .errors import (
    DivergentCycleError,
    EigenFailure,
    ShapeError,
    SingularMatrixError,
    StepUnderflow,
)

TWO_PI_I = 2j * np.pi

DEFAULT_RTOL = 1e-10
DEFAULT_ATOL = 1e-12
MAX_STEPS = 10**6


def as_cmatrix(M, square=True) -> np.ndarray:
    A = np.array(M, dtype=complex)
    if A.ndim != 2:
        raise ShapeError(f"expected a 2-d matrix, got shape {A.shape}")
    if square and A.shape[0] != A.shape[1]:
        raise ShapeError(f"expected a square matrix, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise ShapeError("matrix has non-finite entries")
    return A


def opnorm(M) -> float:
    return float(np.linalg.norm(M, 2)) if np.size(M) else 0.0


# ---------------------------------------------------------------------------
# Paths
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ZPath:
    """Polyline in the complex plane (1-d vertices) or in C^n (rows of a 2-d array)."""

    vertices: np.ndarray

    def __post_init__(self):
        v = np.array(self.vertices, dtype=complex)
        if v.ndim not in (1, 2):
            raise ShapeError("path vertices must be a 1-d or 2-d array")
        if v.shape[0] < 2:
            raise ShapeError("a path needs at least two vertices")
        steps = np.diff(v, axis=0)
        lengths = np.abs(steps) if v.ndim == 1 else np.linalg.norm(steps, axis=1)
        if np.any(lengths == 0):
            raise ShapeError("consecutive path vertices must be distinct")
        v.setflags(write=False)
        object.__setattr__(self, "vertices", v)

    @property
    def nseg(self) -> int:
        return self.vertices.shape[0] - 1

    def segment(self, k):
        return self.vertices[k], self.vertices[k + 1] - self.vertices[k]

    def point(self, s):
        """Point at global parameter ``s`` in [0, nseg]."""
        k = min(int(np.floor(s)), self.nseg - 1)
        start, d = self.segment(k)
        return start + (s - k) * d

    def reversed(self) -> "ZPath":
        return ZPath(self.vertices[::-1])

    def refined(self, factor: int) -> "ZPath":
        """Same polyline with every segment split into ``factor`` equal pieces."""
        pts = [self.vertices[0]]
        for k in range(self.nseg):
            start, d = self.segment(k)
            for m in range(1, factor + 1):
                pts.append(start + d * (m / factor))
        return ZPath(np.array(pts))

    def length(self) -> float:
        steps = np.diff(self.vertices, axis=0)
        if self.vertices.ndim == 1:
            return float(np.sum(np.abs(steps)))
        return float(np.sum(np.linalg.norm(steps, axis=1)))


# ---------------------------------------------------------------------------
# Eigenproblems
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EigResult:
    values: np.ndarray
    vectors: np.ndarray
    cluster_values: tuple
    algebraic: tuple
    geometric: tuple
    residual: float = 0.0

    @property
    def jordan_defect(self) -> tuple:
        """Per-cluster deficit: algebraic minus geometric multiplicity."""
        return tuple(a - g for a, g in zip(self.algebraic, self.geometric))

    @property
    def total_defect(self) -> int:
        return int(sum(self.jordan_defect))


def sort_key(z):
    return (round(float(np.real(z)), 12), round(float(np.imag(z)), 12))


def cluster_eigenvalues(values, tol) -> list[list[int]]:
    """Single-linkage clusters of ``values`` at distance ``tol``; index lists."""
    values = np.asarray(values)
    n = len(values)
    parent = list(range(n))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i in range(n):
        for j in range(i + 1, n):
            if abs(values[i] - values[j]) <= tol:
                parent[find(i)] = find(j)
    groups: dict[int, list[int]] = {}
    for i in range(n):
        groups.setdefault(find(i), []).append(i)
    clusters = list(groups.values())
    clusters.sort(key=lambda g: sort_key(np.mean(values[g])))
    return clusters


def nullity(M, tol) -> int:
    if M.size == 0:
        return 0
    s = np.linalg.svd(M, compute_uv=False)
    return int(np.sum(s <= tol))


def eig(M, cluster_rtol=1e-8, max_size=16) -> EigResult:
    """Eigenvalues sorted by (Re, Im), matching eigenvectors, and Jordan defects.

    LAPACK's ``zgeev`` (Hessenberg reduction + shifted QR) does the work.
    Eigenvalues closer than ``cluster_rtol * ||M||`` are treated as one.
    """
    A = as_cmatrix(M)
    p = A.shape[0]
    if p > max_size:
        raise ShapeError(f"eigenproblems are limited to size {max_size}, got {p}")
    scale = max(opnorm(A), 1.0) if p else 1.0
    try:
        w, V = np.linalg.eig(A)
    except np.linalg.LinAlgError as exc:
        raise EigenFailure(f"eigensolver did not converge: {exc}") from exc
    order = sorted(range(p), key=lambda i: sort_key(w[i]))
    w = w[order]
    V = V[:, order]
    residual = 0.0
    if p:
        residual = float(np.max(np.linalg.norm(A @ V - V * w, axis=0))) / scale
    if residual > 1e-10:
        raise EigenFailure(f"eigenpair residual {residual:.3e} exceeds 1e-10", residual)

    tol = cluster_rtol * scale
    clusters = cluster_eigenvalues(w, tol)
    cvals, alg, geo = [], [], []
    for idx in clusters:
        lam = complex(np.mean(w[idx]))
        cvals.append(lam)
        alg.append(len(idx))
        g = nullity(A - lam * np.eye(p), tol)
        geo.append(max(1, min(g, len(idx))))
    return EigResult(w, V, tuple(cvals), tuple(alg), tuple(geo), residual)


# ---------------------------------------------------------------------------
# Matrix functions
# ---------------------------------------------------------------------------


def spectral_projector(M, select) -> np.ndarray:
    """Riesz projector of ``M`` onto the eigenvalues for which ``select`` is true."""
    A = as_cmatrix(M)
    p = A.shape[0]
    T, Q, k = scipy.linalg.schur(A, output="complex", sort=select)
    if k == 0:
        return np.zeros((p, p), dtype=complex)
    if k == p:
        return np.eye(p, dtype=complex)
    X = scipy.linalg.solve_sylvester(T[:k, :k], -T[k:, k:], -T[:k, k:])
    P = np.zeros((p, p), dtype=complex)
    P[:k, :k] = np.eye(k)
    P[:k, k:] = -X
    return Q @ P @ Q.conj().T


def normalized_log(G, cut_tol=1e-9) -> np.ndarray:
    """E with exp(2*pi*i*E) = G and every eigenvalue satisfying 0 <= Re < 1.

    The principal logarithm puts Re in (-1/2, 1/2]; the spectral part with
    negative real part is then shifted by one.  Eigenvalues within
    ``cut_tol`` of the cut at Re = 0 are left on the zero side.
    """
    A = as_cmatrix(G)
    p = A.shape[0]
    if p == 0:
        return A
    s = np.linalg.svd(A, compute_uv=False)
    if s[-1] <= 1e-14 * max(s[0], 1.0):
        raise SingularMatrixError("normalized_log needs an invertible matrix")
    L = scipy.linalg.logm(A)
    E0 = np.asarray(L, dtype=complex) / TWO_PI_I
    P = spectral_projector(E0, lambda z: z.real < -cut_tol)
    return E0 + P


def expm(M) -> np.ndarray:
    return scipy.linalg.expm(as_cmatrix(M))


# ---------------------------------------------------------------------------
# Adaptive integration along polylines
# ---------------------------------------------------------------------------


class ODEResult(NamedTuple):
    y: np.ndarray
    samples: list
    stopped_at: float | None
    steps: int


def integrate_linear_ode(
    rhs: Callable,
    path: ZPath,
    Y0,
    rtol: float = DEFAULT_RTOL,
    atol: float = DEFAULT_ATOL,
    nodes: Sequence[float] | None = None,
    guard: Callable | None = None,
    max_steps: int = MAX_STEPS,
) -> ODEResult:
    """Continue a state along ``path`` with an embedded 8(5,3) Runge-Kutta pair.

    ``rhs(z, dz, Y)`` is the derivative of the state for a displacement ``dz``
    at the path point ``z`` (for dY/dz = A(z) Y this is ``A(z) @ Y * dz``).
    Each segment is pulled back to a real parameter in [0, 1].

    Samples are ``(s, Y)`` pairs with global parameter ``s = k + local``.
    When ``nodes`` is given, samples are taken at those local parameters of
    every segment through dense output; otherwise at every accepted step.
    ``guard(z, Y)`` returning true stops the integration; ``stopped_at`` then
    holds the parameter of the last good sample.
    """
    Y = np.array(Y0, dtype=complex)
    shape = Y.shape
    y = Y.ravel().copy()
    node_arr = None if nodes is None else np.sort(np.asarray(nodes, dtype=float))
    samples = [(0.0, Y.copy())]
    total_steps = 0

    for k in range(path.nseg):
        start, d = path.segment(k)

        def fun(s, yy, start=start, d=d):
            return rhs(start + s * d, d, yy.reshape(shape)).ravel()

        solver = DOP853(fun, 0.0, y, 1.0, rtol=rtol, atol=atol)
        pending = [] if node_arr is None else [t for t in node_arr if t > 0.0]
        while solver.status == "running":
            t_old = solver.t
            y_old = solver.y.copy()
            msg = solver.step()
            total_steps += 1
            if solver.status == "failed":
                raise StepUnderflow(f"step size underflow: {msg}", k + t_old, samples)
            if total_steps > max_steps:
                raise StepUnderflow(f"more than {max_steps} steps", k + solver.t, samples)
            if guard is not None and guard(start + solver.t * d, solver.y.reshape(shape)):
                return ODEResult(y_old.reshape(shape), samples, k + t_old, total_steps)
            if node_arr is None:
                samples.append((k + solver.t, solver.y.reshape(shape).copy()))
            else:
                due = [t for t in pending if t <= solver.t]
                if due:
                    dense = solver.dense_output()
                    for t in due:
                        val = solver.y if t == solver.t else dense(t)
                        samples.append((k + t, np.asarray(val).reshape(shape).copy()))
                    pending = pending[len(due):]
        y = solver.y.copy()
    return ODEResult(y.reshape(shape), samples, None, total_steps)


# ---------------------------------------------------------------------------
# Quadrature
# ---------------------------------------------------------------------------


def gauss_jacobi(n: int, alpha, beta):
    """Nodes and weights for the weight (1 - x)^alpha (1 + x)^beta on [-1, 1].

    Golub-Welsch on the Jacobi recurrence; complex parameters give a complex
    symmetric tridiagonal matrix whose eigen-decomposition yields a formal
    Gauss rule (nodes slightly off the real axis).  Rules are cached and
    returned read-only.
    """
    return _gauss_jacobi(int(n), complex(alpha), complex(beta))


@functools.lru_cache(maxsize=256)
def _gauss_jacobi(n: int, a: complex, b: complex):
    if n < 1:
        raise ValueError("need at least one node")
    diag = np.empty(n, dtype=complex)
    diag[0] = (b - a) / (a + b + 2)
    k = np.arange(1, n)
    s = 2 * k + a + b
    diag[1:] = (b * b - a * a) / (s * (s + 2))
    off2 = np.empty(max(n - 1, 0), dtype=complex)
    if n > 1:
        off2[0] = 4 * (1 + a) * (1 + b) / ((2 + a + b) ** 2 * (3 + a + b))
        m = np.arange(2, n)
        t = 2 * m + a + b
        off2[1:] = 4 * m * (m + a) * (m + b) * (m + a + b) / (t * t * (t + 1) * (t - 1))
    mu0 = (
        2 ** (a + b + 1)
        * scipy.special.gamma(a + 1)
        * scipy.special.gamma(b + 1)
        / scipy.special.gamma(a + b + 2)
    )
    if a.imag == 0 and b.imag == 0:
        J = np.diag(diag.real) + np.diag(np.sqrt(off2.real), 1) + np.diag(np.sqrt(off2.real), -1)
        x, V = np.linalg.eigh(J)
        w = mu0.real * V[0] ** 2
        return _frozen(x.astype(complex)), _frozen(w.astype(complex))
    off = np.sqrt(off2)
    J = np.diag(diag) + np.diag(off, 1) + np.diag(off, -1)
    x, V = np.linalg.eig(J)
    w = mu0 * V[0] ** 2 / np.sum(V * V, axis=0)
    order = np.argsort(x.real)
    return _frozen(x[order]), _frozen(w[order])


def _frozen(x):
    x.setflags(write=False)
    return x


def quad_endpoint(
    smooth: Callable,
    t0,
    t1,
    mu0=0.0,
    mu1=0.0,
    n: int | None = None,
    rtol: float = 1e-13,
    n_start: int = 16,
    n_max: int = 512,
) -> complex:
    """Integral of smooth(t) * (t - t0)^mu0 * (t1 - t)^mu1 over the segment [t0, t1].

    ``smooth`` maps an array of m points to shape (m,) or (m, K); in the
    second case a length-K array of integrals is returned.

    Both powers are principal; on the open segment they equal
    ((t1 - t0)/2)^mu * (1 +- x)^mu with x in (-1, 1).  With ``n`` fixed a
    single Gauss-Jacobi rule is used, otherwise the node count doubles from
    ``n_start`` until successive results agree to ``rtol``.
    """
    mu0 = complex(mu0)
    mu1 = complex(mu1)
    for name, mu in (("mu0", mu0), ("mu1", mu1)):
        if mu.real <= -1:
            raise DivergentCycleError(f"endpoint exponent {name}={mu} has Re <= -1")
    t0 = complex(t0)
    t1 = complex(t1)
    half = (t1 - t0) / 2
    centre = (t0 + t1) / 2
    # ((t1-t0)/2)^(mu0+mu1) * (t1-t0)/2 from the affine map
    jac = half * np.exp((mu0 + mu1) * np.log(half))

    def rule(m):
        x, w = gauss_jacobi(m, mu1, mu0)
        vals = np.asarray(smooth(centre + half * x), dtype=complex)
        return jac * np.tensordot(w, vals, axes=(0, 0))

    def out(v):
        return complex(v) if np.ndim(v) == 0 else np.asarray(v)

    if n is not None:
        return out(rule(n))
    m = n_start
    prev = rule(m)
    while m < n_max:
        m *= 2
        cur = rule(m)
        if np.max(np.abs(cur - prev)) <= rtol * max(np.max(np.abs(cur)), 1e-300):
            return out(cur)
        prev = cur
    return out(prev)


def clenshaw_curtis(m: int):
    """Clenshaw-Curtis nodes (ascending) and weights on [0, 1] with m + 1 points."""
    if m < 1:
        raise ValueError("need m >= 1")
    theta = np.pi * np.arange(m + 1) / m
    x = -np.cos(theta)
    w = np.zeros(m + 1)
    v = np.ones(m - 1)
    if m % 2 == 0:
        w[0] = w[m] = 1.0 / (m * m - 1)
        for k in range(1, m // 2):
            v -= 2 * np.cos(2 * k * theta[1:-1]) / (4 * k * k - 1)
        v -= np.cos(m * theta[1:-1]) / (m * m - 1)
    else:
        w[0] = w[m] = 1.0 / (m * m)
        for k in range(1, (m - 1) // 2 + 1):
            v -= 2 * np.cos(2 * k * theta[1:-1]) / (4 * k * k - 1)
    w[1:-1] = 2 * v / m
    return (x + 1) / 2, w / 2


def commutator(A, B):
    return A @ B - B @ A


def random_complex(rng, shape, scale=1.0):
    return scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)
