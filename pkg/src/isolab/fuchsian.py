"""Fuchsian systems dy/dz = sum_i B_i/(z - a_i) y with sum_i B_i = 0."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import PoleProximityError, ShapeError
from .numerics import eig, opnorm

SUM_RTOL = 1e-12
MIN_POLE_SEPARATION = 1e-10
POLE_CLEARANCE = 1e-12


@dataclass(frozen=True)
class FuchsianSystem:
    poles: np.ndarray
    residues: np.ndarray  # shape (n, p, p)

    def __post_init__(self):
        a = np.array(self.poles, dtype=complex).ravel()
        B = np.array(self.residues, dtype=complex)
        if B.ndim != 3 or B.shape[1] != B.shape[2]:
            raise ShapeError(f"residues must have shape (n, p, p), got {B.shape}")
        if B.shape[0] != a.shape[0]:
            raise ShapeError(f"{a.shape[0]} poles but {B.shape[0]} residue matrices")
        if not (np.all(np.isfinite(a)) and np.all(np.isfinite(B))):
            raise ShapeError("non-finite pole or residue entry")
        a.setflags(write=False)
        B.setflags(write=False)
        object.__setattr__(self, "poles", a)
        object.__setattr__(self, "residues", B)

    @property
    def n(self) -> int:
        return self.poles.shape[0]

    @property
    def p(self) -> int:
        return self.residues.shape[1]

    def scale(self) -> float:
        """Largest residue norm (at least 1e-300 so it can divide)."""
        if self.n == 0:
            return 1e-300
        return max(max(opnorm(B) for B in self.residues), 1e-300)

    def conjugated(self, C) -> "FuchsianSystem":
        """The system with residues C B_i C^{-1} (constant gauge y -> C y)."""
        C = np.asarray(C, dtype=complex)
        Cinv = np.linalg.inv(C)
        return FuchsianSystem(self.poles, np.einsum("ab,ibc,cd->iad", C, self.residues, Cinv))

    def with_poles(self, poles) -> "FuchsianSystem":
        return FuchsianSystem(poles, self.residues)


@dataclass(frozen=True)
class Violation:
    kind: str
    magnitude: float
    detail: str = ""


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple

    @property
    def ok(self) -> bool:
        return not self.violations

    def to_dict(self):
        return {
            "ok": self.ok,
            "violations": [
                {"kind": v.kind, "magnitude": v.magnitude, "detail": v.detail}
                for v in self.violations
            ],
        }


def validate(sys: FuchsianSystem) -> ValidationReport:
    """Check pole distinctness and the residue-sum condition; never raises."""
    out = []
    a = sys.poles
    for i in range(sys.n):
        for j in range(i + 1, sys.n):
            d = abs(a[i] - a[j])
            if d <= MIN_POLE_SEPARATION:
                out.append(Violation("coincident poles", d, f"poles {i} and {j}"))
    if sys.n:
        total = opnorm(sys.residues.sum(axis=0))
        bound = SUM_RTOL * max(opnorm(B) for B in sys.residues)
        if total > bound:
            out.append(Violation("residue sum", total, f"||sum B_i|| > {bound:.3e}"))
    return ValidationReport(tuple(out))


def coefficient_at(sys: FuchsianSystem, z) -> np.ndarray:
    """A(z) = sum_i B_i / (z - a_i)."""
    dz = complex(z) - sys.poles
    if sys.n and np.min(np.abs(dz)) <= POLE_CLEARANCE:
        raise PoleProximityError(f"z={z} is within {POLE_CLEARANCE} of a pole")
    return np.tensordot(1.0 / dz, sys.residues, axes=1)


@dataclass(frozen=True)
class ExponentTable:
    """rows[i][j] is the j-th exponent at pole i."""

    rows: np.ndarray

    def __post_init__(self):
        r = np.array(self.rows, dtype=complex)
        if r.ndim != 2:
            raise ShapeError("exponent table must be 2-d (n, p)")
        r.setflags(write=False)
        object.__setattr__(self, "rows", r)

    @property
    def n(self):
        return self.rows.shape[0]

    @property
    def p(self):
        return self.rows.shape[1]


def exponents(sys: FuchsianSystem) -> ExponentTable:
    """Eigenvalues of each residue, sorted by (Re, Im)."""
    return ExponentTable(np.array([eig(B).values for B in sys.residues]).reshape(sys.n, sys.p))


def diagonal_exponents(sys: FuchsianSystem) -> ExponentTable:
    """Exponents read off the diagonals of (upper-)triangular residues, in position order.

    This is the ordering the triangular tau closed form needs: the pairing
    of exponents between two poles follows diagonal position, not size.
    """
    return ExponentTable(np.array([np.diag(B) for B in sys.residues]).reshape(sys.n, sys.p))


def fuchs_defect(table: ExponentTable) -> complex:
    return complex(np.sum(table.rows))


# ---------------------------------------------------------------------------
# JSON system files
# ---------------------------------------------------------------------------


def _pair(z):
    z = complex(z)
    return [z.real, z.imag]


def _unpair(x):
    if isinstance(x, (list, tuple)):
        if len(x) != 2:
            raise ShapeError(f"complex entries are [re, im] pairs, got {x!r}")
        return complex(float(x[0]), float(x[1]))
    return complex(float(x))


def matrix_to_json(M):
    return [_pair(z) for z in np.asarray(M).ravel()]


def matrix_from_json(block, p):
    flat = []

    def walk(x):
        if isinstance(x, (list, tuple)) and len(x) == 2 and not isinstance(x[0], (list, tuple)):
            flat.append(_unpair(x))
        elif isinstance(x, (list, tuple)):
            for y in x:
                walk(y)
        else:
            flat.append(_unpair(x))

    walk(block)
    if len(flat) != p * p:
        raise ShapeError(f"residue block has {len(flat)} entries, expected {p * p}")
    return np.array(flat, dtype=complex).reshape(p, p)


def system_to_json(sys: FuchsianSystem) -> dict:
    return {
        "p": sys.p,
        "poles": [_pair(a) for a in sys.poles],
        "residues": [matrix_to_json(B) for B in sys.residues],
    }


def system_from_json(data: dict) -> FuchsianSystem:
    try:
        p = int(data["p"])
        poles = [_unpair(x) for x in data["poles"]]
        residues = [matrix_from_json(block, p) for block in data["residues"]]
    except (KeyError, TypeError) as exc:
        raise ShapeError(f"malformed system file: {exc}") from exc
    if len(residues) != len(poles):
        raise ShapeError("'poles' and 'residues' differ in length")
    return FuchsianSystem(np.array(poles), np.array(residues).reshape(len(poles), p, p))


def load_system(path) -> FuchsianSystem:
    return system_from_json(json.loads(Path(path).read_text()))


def save_system(sys: FuchsianSystem, path) -> None:
    Path(path).write_text(json.dumps(system_to_json(sys), indent=2) + "\n")
