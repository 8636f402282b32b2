"""Hypergeometric integrals over segment cycles as Jordan-Pochhammer solutions.

b_i(a) = beta_i * int_gamma F(t) dt / (t - a_i),  F(t) = prod_i (t - a_i)^beta_i,

with gamma the straight segment from pole j to pole k (0-based indices).

Branch convention on the segment: the endpoint factors are the principal
powers (t - a_j)^beta_j and (a_k - t)^beta_k, both of which are positive
multiples of a fixed direction on the open segment.  Every other factor is
the principal power at the segment midpoint continued along the segment.
A different choice multiplies b by a constant, so it is still a solution.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DivergentCycleError, PoleProximityError, ShapeError
from .jordan_pochhammer import JPForm, omega_apply
from .numerics import quad_endpoint

SEGMENT_CLEARANCE = 1e-6
QUAD_RTOL = 1e-12
N_START = 16
N_MAX = 1024
# below this relative residual the differences are exact up to rounding and no order can be read off
SLOPE_FLOOR = 1e-11


@dataclass(frozen=True)
class TwistedSegment:
    j: int
    k: int

    def __post_init__(self):
        if self.j == self.k:
            raise ValueError("segment endpoints must be different poles")


@dataclass(frozen=True)
class MasterFunctionSpec:
    a: np.ndarray
    beta: np.ndarray

    def __post_init__(self):
        a = np.array(self.a, dtype=complex).ravel()
        b = np.array(self.beta, dtype=complex).ravel()
        if a.shape != b.shape:
            raise ShapeError("need one exponent per pole")
        a.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "beta", b)

    @property
    def n(self):
        return self.a.shape[0]

    def with_poles(self, a) -> "MasterFunctionSpec":
        return MasterFunctionSpec(a, self.beta)


def _check_segment(spec: MasterFunctionSpec, seg: TwistedSegment):
    n = spec.n
    if not (0 <= seg.j < n and 0 <= seg.k < n):
        raise IndexError(f"segment ({seg.j}, {seg.k}) out of range for {n} poles")
    t0, t1 = spec.a[seg.j], spec.a[seg.k]
    length = abs(t1 - t0)
    if length == 0:
        raise PoleProximityError("segment endpoints coincide")
    e = (t1 - t0) / length
    for i in range(n):
        if i in (seg.j, seg.k):
            continue
        x = ((spec.a[i] - t0) * np.conj(e)).real
        x = min(max(x, 0.0), length)
        dist = abs(spec.a[i] - (t0 + x * e))
        if dist < SEGMENT_CLEARANCE * length:
            raise PoleProximityError(f"pole {i} lies within {dist:.2e} of the segment")


def _interior_log(spec, seg, t, i):
    """Branch of log(t - a_i) fixed by the principal value at the midpoint."""
    m = 0.5 * (spec.a[seg.j] + spec.a[seg.k])
    d0 = m - spec.a[i]
    return np.log(d0) + np.log((t - spec.a[i]) / d0)


def _smooth_part(spec, seg, t):
    """Product of the non-endpoint factors of F on the segment."""
    out = np.ones_like(t, dtype=complex)
    for i in range(spec.n):
        if i in (seg.j, seg.k) or spec.beta[i] == 0:
            continue
        out = out * np.exp(spec.beta[i] * _interior_log(spec, seg, t, i))
    return out


def master_function(spec: MasterFunctionSpec, seg: TwistedSegment, t) -> np.ndarray:
    """F(t) on the open segment with the branch fixed above."""
    _check_segment(spec, seg)
    t = np.asarray(t, dtype=complex)
    t0, t1 = spec.a[seg.j], spec.a[seg.k]
    length = abs(t1 - t0)
    frac = ((t - t0) / (t1 - t0))
    if np.any(np.abs(frac.imag) > 1e-9) or np.any(frac.real <= 0) or np.any(frac.real >= 1):
        raise PoleProximityError("t must lie strictly inside the segment")
    for i in range(spec.n):
        if i not in (seg.j, seg.k) and np.min(np.abs(t - spec.a[i])) < SEGMENT_CLEARANCE * length:
            raise PoleProximityError(f"t too close to pole {i}")
    bj, bk = spec.beta[seg.j], spec.beta[seg.k]
    ends = np.exp(bj * np.log(t - t0)) * np.exp(bk * np.log(t1 - t))
    return ends * _smooth_part(spec, seg, t)


def _exponent_pairs(spec, seg):
    """Group components by their endpoint weight (mu0, mu1, sign)."""
    bj, bk = spec.beta[seg.j], spec.beta[seg.k]
    groups = {}
    for i in range(spec.n):
        if spec.beta[i] == 0:
            continue
        if i == seg.j:
            key = (bj - 1, bk, 1.0)
        elif i == seg.k:
            # 1/(t - a_k) = -1/(a_k - t)
            key = (bj, bk - 1, -1.0)
        else:
            key = (bj, bk, 1.0)
        groups.setdefault(key, []).append(i)
    return groups


def _check_convergence(spec, seg):
    for i, (mu, where) in {seg.j: (spec.beta[seg.j], "start"), seg.k: (spec.beta[seg.k], "end")}.items():
        if mu.real <= -1:
            raise DivergentCycleError(f"divergent cycle: beta_{i}={mu} at the segment {where} has Re <= -1")
        if spec.beta[i] != 0 and mu.real <= 0:
            raise DivergentCycleError(
                f"divergent cycle: component {i} has merged endpoint exponent beta_{i}-1={mu - 1} with Re <= -1")


def _jp_integral_fixed(spec, seg, n_nodes):
    t0, t1 = spec.a[seg.j], spec.a[seg.k]
    b = np.zeros(spec.n, dtype=complex)
    for (mu0, mu1, sign), idx in _exponent_pairs(spec, seg).items():
        interior = [i for i in idx if i not in (seg.j, seg.k)]

        def smooth(t, idx=idx, interior=interior):
            base = _smooth_part(spec, seg, t)
            cols = []
            for i in idx:
                cols.append(base / (t - spec.a[i]) if i in interior else base)
            return np.stack(cols, axis=-1)

        vals = quad_endpoint(smooth, t0, t1, mu0, mu1, n=n_nodes)
        b[idx] = sign * spec.beta[idx] * np.atleast_1d(vals)
    return b


@dataclass(frozen=True)
class IntegralResult:
    b: np.ndarray
    nodes: int
    rel_change: float
    table: tuple  # ((nodes, b), ...) from the doubling sequence

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.b, dtype=dtype)


def jp_integral_table(spec: MasterFunctionSpec, seg: TwistedSegment, rtol=QUAD_RTOL,
                      n_start=N_START, n_max=N_MAX) -> IntegralResult:
    """All n components with node doubling until the relative change is below ``rtol``."""
    _check_segment(spec, seg)
    _check_convergence(spec, seg)
    m = n_start
    prev = _jp_integral_fixed(spec, seg, m)
    table = [(m, prev)]
    change = np.inf
    while m < n_max:
        m *= 2
        cur = _jp_integral_fixed(spec, seg, m)
        table.append((m, cur))
        scale = max(np.max(np.abs(cur)), 1e-300)
        change = float(np.max(np.abs(cur - prev)) / scale)
        prev = cur
        if change <= rtol:
            break
    return IntegralResult(prev, m, change, tuple(table))


def jp_integral(spec: MasterFunctionSpec, seg: TwistedSegment, rtol=QUAD_RTOL) -> np.ndarray:
    """b_i = beta_i * int F(t) dt/(t - a_i) over the segment, for every i."""
    return jp_integral_table(spec, seg, rtol=rtol).b


@dataclass(frozen=True)
class SolutionReport:
    residual: float  # max relative residual at step h
    h: float
    slope: float  # log2 of the residual ratio between 2h' and h'
    slope_steps: tuple
    per_direction: np.ndarray

    @property
    def slope_applicable(self) -> bool:
        return bool(np.isfinite(self.slope))

    def to_dict(self):
        return {"residual": self.residual, "h": self.h,
                "slope": self.slope if self.slope_applicable else None,
                "slope_steps": list(self.slope_steps)}


def _fd_residuals(spec, seg, h, rtol):
    n = spec.n
    form = JPForm(spec.beta)
    b = jp_integral(spec, seg, rtol=rtol)
    scale = max(np.max(np.abs(b)), 1e-300)
    out = []
    for l in range(n):
        for unit in (1.0, 1j):
            e = np.zeros(n, dtype=complex)
            e[l] = unit
            bp = jp_integral(spec.with_poles(spec.a + h * e), seg, rtol=rtol)
            bm = jp_integral(spec.with_poles(spec.a - h * e), seg, rtol=rtol)
            fd = (bp - bm) / (2 * h)
            out.append(np.max(np.abs(fd - omega_apply(form, spec.a, e, b))) / scale)
    return np.array(out)


def verify_jp_solution(spec: MasterFunctionSpec, seg: TwistedSegment, h=1e-4, rtol=QUAD_RTOL,
                       slope_steps=(1e-3, 5e-4)) -> SolutionReport:
    """Central differences of the integral in every real and imaginary pole direction vs Omega b.

    The residual is relative to max|b|.  The convergence order comes from
    two larger steps where truncation dominates quadrature noise; it is nan
    when b is polynomial of degree <= 2 in the poles (residual at rounding
    level), e.g. a two-pole integral with sum beta = 1.
    """
    res = _fd_residuals(spec, seg, h, rtol)
    if np.max(np.abs(spec.beta)) == 0:
        return SolutionReport(0.0, h, float("nan"), tuple(slope_steps), res)
    h1, h2 = slope_steps
    r1 = np.max(_fd_residuals(spec, seg, h1, rtol))
    r2 = np.max(_fd_residuals(spec, seg, h2, rtol))
    slope = float("nan")
    if r1 > SLOPE_FLOOR and r2 > 0:
        slope = float(np.log(r1 / r2) / np.log(h1 / h2))
    return SolutionReport(float(np.max(res)), h, slope, (h1, h2), res)
