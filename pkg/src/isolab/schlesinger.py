"""Schlesinger deformations, isomonodromy checks and the tau function."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import BlowUpError, DiagonalApproachError, ShapeError, StepUnderflow
from .fuchsian import ExponentTable, FuchsianSystem
from .monodromy import (
    compute_monodromy,
    default_base_point,
    fingerprint,
    fingerprint_distance,
    standard_loops,
)
from .numerics import DEFAULT_ATOL, DEFAULT_RTOL, ZPath, clenshaw_curtis, integrate_linear_ode, opnorm

BLOWUP_NORM = 1e8
DIAGONAL_CLEARANCE = 1e-6
DEFAULT_NODES = 32


@dataclass(frozen=True)
class DeformationState:
    a: np.ndarray
    B: np.ndarray  # (n, p, p)

    def __post_init__(self):
        a = np.array(self.a, dtype=complex).ravel()
        B = np.array(self.B, dtype=complex)
        if B.ndim != 3 or B.shape[0] != a.shape[0] or B.shape[1] != B.shape[2]:
            raise ShapeError(f"state needs B of shape (n, p, p) with n={a.shape[0]}")
        a.setflags(write=False)
        B.setflags(write=False)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "B", B)

    @classmethod
    def from_system(cls, sys: FuchsianSystem) -> "DeformationState":
        return cls(sys.poles, sys.residues)

    def to_system(self) -> FuchsianSystem:
        return FuchsianSystem(self.a, self.B)

    def scale(self) -> float:
        return max(max((opnorm(b) for b in self.B), default=0.0), 1e-300)


@dataclass(frozen=True)
class DeformationTrace:
    path: ZPath
    s: np.ndarray  # (m,)
    a: np.ndarray  # (m, n)
    B: np.ndarray  # (m, n, p, p)
    tau: np.ndarray  # running ln tau increment, (m,)
    nodes: np.ndarray | None = None  # local sample parameters per segment
    blowup: bool = False
    message: str = ""
    meta: dict = field(default_factory=dict)

    @property
    def final(self) -> DeformationState:
        return DeformationState(self.a[-1], self.B[-1])

    @property
    def initial(self) -> DeformationState:
        return DeformationState(self.a[0], self.B[0])

    @property
    def tau_log(self) -> complex:
        """ln tau increment accumulated by the integrator alongside B."""
        return complex(self.tau[-1])


# ---------------------------------------------------------------------------
# The Schlesinger 1-form
# ---------------------------------------------------------------------------


def _pair_weights(a, da):
    """w[i, j] = (da_i - da_j)/(a_i - a_j), zero on the diagonal."""
    diff = a[:, None] - a[None, :]
    ddiff = da[:, None] - da[None, :]
    np.fill_diagonal(diff, 1.0)
    w = ddiff / diff
    np.fill_diagonal(w, 0.0)
    return w


def _check_distinct(a):
    n = len(a)
    for i in range(n):
        for j in range(i + 1, n):
            if a[i] == a[j]:
                raise DiagonalApproachError(f"poles {i} and {j} coincide")


def schlesinger_rhs(state: DeformationState, da) -> np.ndarray:
    """dB_i = -sum_{j != i} [B_i, B_j] (da_i - da_j)/(a_i - a_j), shape (n, p, p)."""
    a = state.a
    _check_distinct(a)
    da = np.asarray(da, dtype=complex).ravel()
    return _rhs(a, da, state.B)


def _rhs(a, da, B):
    w = _pair_weights(a, da)
    prod = np.einsum("ikl,jlm->ijkm", B, B)
    comm = prod - prod.transpose(1, 0, 2, 3)
    return -np.einsum("ij,ijkm->ikm", w, comm)


def tau_form(a, da, B) -> complex:
    """Miwa's 1-form: sum_{i<j} tr(B_i B_j) d(a_i - a_j)/(a_i - a_j)."""
    w = _pair_weights(a, da)
    tr = np.einsum("ikl,jlk->ij", B, B)
    return complex(0.5 * np.sum(w * tr))


# ---------------------------------------------------------------------------
# Deformation along a path
# ---------------------------------------------------------------------------


def segment_diagonal_distance(a0, a1) -> float:
    """Smallest |a_i(s) - a_j(s)| over s in [0, 1] on the straight segment a0 -> a1."""
    n = len(a0)
    best = np.inf
    for i in range(n):
        for j in range(i + 1, n):
            d0 = a0[i] - a0[j]
            d1 = a1[i] - a1[j]
            e = d1 - d0
            if e == 0:
                dist = abs(d0)
            else:
                t = np.clip(-(np.conj(e) * d0).real / abs(e) ** 2, 0.0, 1.0)
                dist = abs(d0 + t * e)
            best = min(best, dist)
    return float(best)


def check_path(apath: ZPath, clearance=DIAGONAL_CLEARANCE) -> float:
    if apath.vertices.ndim != 2:
        raise ShapeError("configuration paths need 2-d vertices (waypoint, pole)")
    worst = min(segment_diagonal_distance(apath.vertices[k], apath.vertices[k + 1])
                for k in range(apath.nseg))
    if worst < clearance:
        raise DiagonalApproachError(
            f"theta-divisor/diagonal: path comes within {worst:.3e} of a diagonal a_i = a_j")
    return worst


def deform(state0: DeformationState, apath: ZPath, rtol=DEFAULT_RTOL, atol=DEFAULT_ATOL,
           nodes_per_segment=DEFAULT_NODES, blowup_norm=BLOWUP_NORM) -> DeformationTrace:
    """Integrate the Schlesinger system for B_i along ``apath``.

    The path must start at ``state0.a``.  Samples are taken at the
    Clenshaw-Curtis points of every segment.  The ln tau increment is
    integrated together with B.  On blow-up (entries beyond ``blowup_norm``
    or step-size collapse) the trace ends at the last good sample and is
    flagged.
    """
    if apath.vertices.ndim != 2 or apath.vertices.shape[1] != state0.a.shape[0]:
        raise ShapeError("path dimension does not match the number of poles")
    if np.max(np.abs(apath.vertices[0] - state0.a)) > 1e-12 * max(1.0, np.max(np.abs(state0.a))):
        raise ShapeError("path must start at the state's pole configuration")
    check_path(apath)
    n, p = state0.B.shape[0], state0.B.shape[1]
    nb = n * p * p

    def rhs(a, da, y):
        B = y[:nb].reshape(n, p, p)
        out = np.empty_like(y)
        out[:nb] = _rhs(a, da, B).ravel()
        out[nb] = tau_form(a, da, B)
        return out

    def guard(a, y):
        return not np.all(np.abs(y[:nb]) < blowup_norm)

    y0 = np.concatenate([state0.B.ravel(), [0.0]]).astype(complex)
    nodes, _ = clenshaw_curtis(nodes_per_segment)
    blowup, message = False, ""
    try:
        res = integrate_linear_ode(rhs, apath, y0, rtol=rtol, atol=atol, nodes=nodes, guard=guard)
        samples = res.samples
        if res.stopped_at is not None:
            blowup = True
            message = f"theta-divisor approach: |B| exceeded {blowup_norm:g} after s={res.stopped_at:.6f}"
    except StepUnderflow as exc:
        blowup = True
        message = f"theta-divisor approach: {exc} at s={exc.s:.6f}"
        samples = getattr(exc, "samples", None) or [(0.0, y0)]
    s = np.array([t for t, _ in samples])
    Y = np.array([y for _, y in samples])
    a = np.array([apath.point(t) for t in s])
    return DeformationTrace(
        path=apath,
        s=s,
        a=a,
        B=Y[:, :nb].reshape(len(s), n, p, p),
        tau=Y[:, nb],
        nodes=nodes,
        blowup=blowup,
        message=message,
        meta={"rtol": rtol, "atol": atol, "nodes_per_segment": nodes_per_segment},
    )


def deformed_system(sys: FuchsianSystem, apath: ZPath, rtol=DEFAULT_RTOL) -> FuchsianSystem:
    trace = deform(DeformationState.from_system(sys), apath, rtol=rtol)
    if trace.blowup:
        raise BlowUpError(trace.message)
    return trace.final.to_system()


# ---------------------------------------------------------------------------
# Monitors
# ---------------------------------------------------------------------------


def conservation_defect(trace: DeformationTrace) -> float:
    """max_s ||sum_i B_i(s)|| / scale."""
    scale = max(max(opnorm(b) for b in trace.B[0]), 1e-300)
    return max(opnorm(Bs.sum(axis=0)) for Bs in trace.B) / scale


def spectral_drift(trace: DeformationTrace) -> float:
    """Largest movement of any eigenvalue of any B_i away from its s=0 value."""
    from .numerics import sort_key

    def spectra(Bs):
        return [np.array(sorted(np.linalg.eigvals(b), key=sort_key)) for b in Bs]

    ref = spectra(trace.B[0])
    worst = 0.0
    for Bs in trace.B[1:]:
        for r, cur in zip(ref, spectra(Bs)):
            # nearest-neighbour matching guards against sort flips of near-ties
            left = list(cur)
            for lam in r:
                k = int(np.argmin([abs(lam - c) for c in left]))
                worst = max(worst, abs(lam - left.pop(k)))
    return worst


def subtriangular_residual(trace: DeformationTrace, dims=None) -> float:
    """max_s of the below-block-diagonal magnitude over all B_i(s), relative to scale."""
    from .monodromy import block_residual

    p = trace.B.shape[-1]
    dims = list(range(1, p + 1)) if dims is None else list(dims)
    scale = max(max(opnorm(b) for b in trace.B[0]), 1e-300)
    return max(block_residual(list(Bs), dims) for Bs in trace.B) / scale


# ---------------------------------------------------------------------------
# Isomonodromy
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class IsomonodromyReport:
    defect: float
    z0: complex
    fingerprint0: np.ndarray
    fingerprint1: np.ndarray

    def to_dict(self):
        return {"defect": self.defect, "z0": [self.z0.real, self.z0.imag]}


def isomonodromy_check(sys0: FuchsianSystem, sys1: FuchsianSystem, rtol=DEFAULT_RTOL,
                       z0=None, configurations=None) -> IsomonodromyReport:
    """Compare conjugation-invariant monodromy fingerprints of two systems.

    Both monodromies use one base point far from the poles of both systems
    (and of any intermediate ``configurations`` visited by a deformation).
    """
    if z0 is None:
        configs = [sys0.poles, sys1.poles] + list(configurations or [])
        z0 = default_base_point(configs)
    m0 = compute_monodromy(sys0, standard_loops(sys0, z0), rtol=rtol)
    m1 = compute_monodromy(sys1, standard_loops(sys1, z0), rtol=rtol)
    f0, f1 = fingerprint(m0), fingerprint(m1)
    return IsomonodromyReport(fingerprint_distance(f0, f1), complex(z0), f0, f1)


# ---------------------------------------------------------------------------
# Tau function
# ---------------------------------------------------------------------------


def _segment_samples(trace: DeformationTrace):
    """Yield (k, local nodes, a(s), B(s)) per path segment from a node-sampled trace."""
    if trace.nodes is None:
        raise ValueError("trace was not sampled on quadrature nodes")
    nodes = np.asarray(trace.nodes)
    lookup = {}
    for idx, t in enumerate(trace.s):
        lookup[round(float(t), 12)] = idx
    for k in range(trace.path.nseg):
        idx = [lookup[round(k + float(x), 12)] for x in nodes]
        yield k, nodes, trace.a[idx], trace.B[idx]


def tau_log_increment(trace: DeformationTrace) -> complex:
    """Line integral of Miwa's 1-form along the trace, by Clenshaw-Curtis on the samples."""
    if trace.blowup:
        raise BlowUpError(f"cannot integrate tau across a blow-up: {trace.message}")
    m = len(trace.nodes) - 1
    _, weights = clenshaw_curtis(m)
    total = 0.0j
    for k, _, a_s, B_s in _segment_samples(trace):
        _, da = trace.path.segment(k)
        vals = np.array([tau_form(a, da, B) for a, B in zip(a_s, B_s)])
        total += np.sum(weights * vals)
    return complex(total)


def alpha_matrix(table: ExponentTable) -> np.ndarray:
    """alpha_ij = sum_k beta_i^k beta_j^k (exponents paired by diagonal position)."""
    r = table.rows
    return r @ r.T


def triangular_tau_closed_form(table: ExponentTable, a_start, a_end=None, path: ZPath | None = None) -> complex:
    """sum_{i<j} alpha_ij * (change of ln(a_i - a_j) continued along the path).

    ``path`` (or a ZPath passed as ``a_start``) fixes the branch of each
    logarithm; without one the straight segment a_start -> a_end is used.
    """
    if isinstance(a_start, ZPath):
        path = a_start
    elif path is None:
        path = ZPath(np.array([np.asarray(a_start, dtype=complex), np.asarray(a_end, dtype=complex)]))
    if path.vertices.ndim != 2:
        raise ShapeError("configuration paths need 2-d vertices (waypoint, pole)")
    n = table.n
    if path.vertices.shape[1] != n:
        raise ShapeError("exponent table and path disagree on the number of poles")
    for k in range(path.nseg):
        if segment_diagonal_distance(path.vertices[k], path.vertices[k + 1]) == 0.0:
            raise DiagonalApproachError("path crosses a diagonal a_i = a_j")
    alpha = alpha_matrix(table)
    total = 0.0j
    for i in range(n):
        for j in range(i + 1, n):
            d = path.vertices[:, i] - path.vertices[:, j]
            # a straight segment missing 0 turns by less than pi, so Log of the ratio is exact
            total += alpha[i, j] * np.sum(np.log(d[1:] / d[:-1]))
    return complex(total)
