"""Reducibility criteria: the exponent threshold, B-representations and
constant-gauge triangularization of residue tuples."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import BlowUpError, ShapeError, TriangularizationError
from .fuchsian import ExponentTable, FuchsianSystem, exponents
from .monodromy import (
    MonodromySet,
    block_residual,
    compute_monodromy,
    invariant_flag,
    standard_loops,
    default_base_point,
)
from .numerics import DEFAULT_RTOL, ZPath, eig, opnorm
from .schlesinger import DeformationState, deform, subtriangular_residual

FLAG_RTOL = 1e-8
NILPOTENT_RTOL = 1e-6


@dataclass(frozen=True)
class BlockStructure:
    sizes: tuple

    def __post_init__(self):
        sizes = tuple(int(m) for m in self.sizes)
        if not sizes or any(m <= 0 for m in sizes):
            raise ShapeError("block sizes must be positive integers")
        object.__setattr__(self, "sizes", sizes)

    @classmethod
    def full_flag(cls, p: int) -> "BlockStructure":
        return cls((1,) * p)

    @property
    def p(self) -> int:
        return sum(self.sizes)

    @property
    def k(self) -> int:
        return len(self.sizes)

    @property
    def dims(self) -> list:
        """Cumulative sizes m^1, m^1 + m^2, ..., p."""
        return list(np.cumsum(self.sizes).astype(int))


@dataclass(frozen=True)
class ThresholdResult:
    passes: bool
    threshold: float
    worst: tuple  # (i, j, margin) with margin = Re beta_i^j - threshold

    def to_dict(self):
        i, j, m = self.worst
        return {"passes": self.passes, "threshold": self.threshold,
                "worst": {"pole": i, "exponent": j, "margin": m}}


def theorem1_check(table: ExponentTable, blocks: BlockStructure) -> ThresholdResult:
    """Every Re beta_i^j must exceed -1/(n (p - m^k)), strictly."""
    n, p = table.n, table.p
    if blocks.p != p:
        raise ShapeError(f"blocks sum to {blocks.p}, exponents have p={p}")
    last = blocks.sizes[-1]
    if p == last:
        raise ValueError("p equals the last block size: the block structure is trivial and imposes no constraint")
    threshold = -1.0 / (n * (p - last))
    margins = table.rows.real - threshold
    i, j = np.unravel_index(int(np.argmin(margins)), margins.shape)
    worst = float(margins[i, j])
    return ThresholdResult(bool(worst > 0), threshold, (int(i), int(j), worst))


def _single_box(G, cluster_rtol=1e-8) -> bool:
    p = G.shape[0]
    res = eig(G, cluster_rtol=cluster_rtol)
    if len(res.cluster_values) == 1:
        return res.geometric[0] == 1
    # a Jordan block perturbed by eps splits its eigenvalue by ~eps^(1/p);
    # fall back to a direct nilpotency test of G - mean eigenvalue
    lam = np.trace(G) / p
    N = G - lam * np.eye(p)
    scale = max(opnorm(G), 1e-300)
    if opnorm(np.linalg.matrix_power(N, p)) > NILPOTENT_RTOL * scale ** p:
        return False
    sv = np.linalg.svd(N, compute_uv=False)
    rank = int(np.sum(sv > NILPOTENT_RTOL * scale))
    if rank != p - 1:
        return False
    warnings.warn("generator is close to a single Jordan box but its eigenvalues are split; "
                  "the verdict is ill-conditioned", RuntimeWarning, stacklevel=3)
    return True


def is_b_representation(ms: MonodromySet, rtol=FLAG_RTOL) -> bool:
    """Every generator is one Jordan box and the tuple has a common invariant line."""
    gens = [np.asarray(G, dtype=complex) for G in ms.generators]
    if not gens:
        return False
    p = gens[0].shape[0]
    if p > 8:
        raise ShapeError("is_b_representation supports p <= 8")
    if not all(_single_box(G) for G in gens):
        return False
    if p == 1:
        return True
    return invariant_flag(gens, [1, p], rtol=rtol) is not None


def triangularize_residues(sys: FuchsianSystem, blocks: BlockStructure, rtol=FLAG_RTOL):
    """C with every C B_i C^{-1} block upper-triangular for ``blocks``, or None."""
    if blocks.p != sys.p:
        raise ShapeError(f"blocks sum to {blocks.p}, system has p={sys.p}")
    if sys.p > 8:
        raise ShapeError("triangularize_residues supports p <= 8")
    C = invariant_flag(list(sys.residues), blocks.dims, rtol=rtol)
    if C is None:
        return None
    conj = sys.conjugated(C)
    if block_residual(list(conj.residues), blocks.dims) > rtol * sys.scale():
        return None
    return C


def monodromy_block_residual(sys: FuchsianSystem, blocks: BlockStructure, rtol=DEFAULT_RTOL, z0=None) -> float:
    """Relative sub-block magnitude of the monodromy generators of ``sys``."""
    z0 = default_base_point([sys.poles]) if z0 is None else z0
    ms = compute_monodromy(sys, standard_loops(sys, z0), rtol=rtol)
    scale = max(max(opnorm(G) for G in ms.generators), 1e-300)
    return block_residual(list(ms.generators), blocks.dims) / scale


@dataclass(frozen=True)
class TriangularFlowReport:
    C: np.ndarray
    hypothesis: str  # "threshold", "b-representation" or "none"
    initial_residual: float
    max_subtriangular: float
    samples: int

    def to_dict(self):
        return {
            "hypothesis": self.hypothesis,
            "initial_residual": self.initial_residual,
            "max_subtriangular": self.max_subtriangular,
            "samples": self.samples,
            "C": [[[z.real, z.imag] for z in row] for row in np.asarray(self.C)],
        }


def _hypothesis(sys, blocks):
    if blocks.sizes[-1] != sys.p and theorem1_check(exponents(sys), blocks).passes:
        return "threshold"
    try:
        ms = compute_monodromy(sys, standard_loops(sys, default_base_point([sys.poles])))
        if is_b_representation(ms):
            return "b-representation"
    except Exception:  # pragma: no cover - advisory only
        pass
    return "none"


def verify_propositions_2_3(sys: FuchsianSystem, blocks: BlockStructure, apath: ZPath,
                            rtol=DEFAULT_RTOL, check_hypothesis=True) -> TriangularFlowReport:
    """Triangularize by a constant gauge, deform, and scan the sub-block part along the trace.

    The returned residual is relative to the initial residue scale.
    """
    C = triangularize_residues(sys, blocks)
    if C is None:
        raise TriangularizationError("no constant gauge puts the residues in the requested block form")
    hyp = _hypothesis(sys, blocks) if check_hypothesis else "unchecked"
    conj = sys.conjugated(C)
    trace = deform(DeformationState.from_system(conj), apath, rtol=rtol)
    if trace.blowup:
        raise BlowUpError(trace.message)
    init = block_residual(list(conj.residues), blocks.dims) / sys.scale()
    worst = subtriangular_residual(trace, blocks.dims)
    return TriangularFlowReport(C, hyp, init, worst, len(trace.s))
