"""Jordan-Pochhammer Pfaffian systems for triangular Schlesinger families.

Indices are 0-based throughout: ``jmatrix(form, j, k)`` needs 0 <= j < k < n.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeError, SingularMatrixError
from .numerics import DEFAULT_ATOL, DEFAULT_RTOL, ZPath, integrate_linear_ode, opnorm
from .schlesinger import _check_distinct, _pair_weights, check_path

DUALITY_SELF_CHECK = 1e-8


@dataclass(frozen=True)
class JPForm:
    """Coefficients beta_1..beta_n of Omega = sum_{j<k} J_jk d(a_j - a_k)/(a_j - a_k)."""

    beta: np.ndarray

    def __post_init__(self):
        b = np.array(self.beta, dtype=complex).ravel()
        if not np.all(np.isfinite(b)):
            raise ShapeError("beta must be finite")
        b.setflags(write=False)
        object.__setattr__(self, "beta", b)

    @property
    def n(self) -> int:
        return self.beta.shape[0]

    @property
    def invertible_pairing(self) -> bool:
        return bool(np.all(self.beta != 0))


def jmatrix(form: JPForm, j: int, k: int) -> np.ndarray:
    n = form.n
    if not (0 <= j < k < n):
        raise IndexError(f"need 0 <= j < k < {n}, got j={j}, k={k}")
    b = form.beta
    J = np.zeros((n, n), dtype=complex)
    J[j, j] = b[k]
    J[j, k] = -b[j]
    J[k, j] = -b[k]
    J[k, k] = b[j]
    return J


def omega_matrix(form: JPForm, a, da) -> np.ndarray:
    """Omega contracted with the direction da, as an n x n matrix."""
    a = np.asarray(a, dtype=complex).ravel()
    da = np.asarray(da, dtype=complex).ravel()
    if a.shape[0] != form.n or da.shape[0] != form.n:
        raise ShapeError("configuration length does not match the form")
    _check_distinct(a)
    w = _pair_weights(a, da)
    beta = form.beta
    # off-diagonal (i, j): -beta_i w_ij ; diagonal i: sum_j beta_j w_ij
    M = -beta[:, None] * w
    np.fill_diagonal(M, w @ beta)
    return M


def omega_apply(form: JPForm, a, da, b) -> np.ndarray:
    return omega_matrix(form, a, da) @ np.asarray(b, dtype=complex)


# ---------------------------------------------------------------------------
# Homogeneous integration
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class JPTrace:
    s: np.ndarray
    a: np.ndarray
    b: np.ndarray  # (m, n) or (m, n, r) for several columns

    @property
    def final(self):
        return self.b[-1]


def _config_path(apath: ZPath, n: int):
    if apath.vertices.ndim != 2 or apath.vertices.shape[1] != n:
        raise ShapeError("path dimension does not match the number of poles")
    check_path(apath)


def jp_integrate(form: JPForm, apath: ZPath, b0, rtol=DEFAULT_RTOL, atol=DEFAULT_ATOL, nodes=None) -> JPTrace:
    """Integrate db = Omega b along ``apath``; ``b0`` may be a vector or an n x r block."""
    _config_path(apath, form.n)
    b0 = np.asarray(b0, dtype=complex)
    if b0.shape[0] != form.n:
        raise ShapeError("initial vector length does not match the form")

    def rhs(a, da, y):
        return omega_matrix(form, a, da) @ y

    res = integrate_linear_ode(rhs, apath, b0, rtol=rtol, atol=atol, nodes=nodes)
    s = np.array([t for t, _ in res.samples])
    return JPTrace(s, np.array([apath.point(t) for t in s]), np.array([y for _, y in res.samples]))


# ---------------------------------------------------------------------------
# p = 3 triangular data
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Triangular3Data:
    """Exponent rows per pole (n, 3) and the entries u = B[0,1], v = B[1,2], b = B[0,2]."""

    exponents: np.ndarray
    u: np.ndarray
    v: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        e = np.array(self.exponents, dtype=complex)
        if e.ndim != 2 or e.shape[1] != 3:
            raise ShapeError("p=3 data needs an (n, 3) exponent table")
        n = e.shape[0]
        vecs = [np.array(x, dtype=complex).ravel() for x in (self.u, self.v, self.b)]
        if any(x.shape[0] != n for x in vecs):
            raise ShapeError("u, v, b must have one entry per pole")
        for name, val in zip(("exponents", "u", "v", "b"), [e] + vecs):
            val.setflags(write=False)
            object.__setattr__(self, name, val)

    @classmethod
    def from_residues(cls, B) -> "Triangular3Data":
        B = np.asarray(B, dtype=complex)
        if B.ndim != 3 or B.shape[1:] != (3, 3):
            raise ShapeError("need (n, 3, 3) residues")
        return cls(np.diagonal(B, axis1=1, axis2=2), B[:, 0, 1], B[:, 1, 2], B[:, 0, 2])

    @property
    def n(self):
        return self.exponents.shape[0]

    @property
    def beta_u(self):
        return self.exponents[:, 0] - self.exponents[:, 1]

    @property
    def beta_v(self):
        return self.exponents[:, 1] - self.exponents[:, 2]

    @property
    def beta(self):
        return self.exponents[:, 0] - self.exponents[:, 2]

    def forms(self):
        return JPForm(self.beta_u), JPForm(self.beta_v), JPForm(self.beta)


def p3_theta(data: Triangular3Data, a, da, u=None, v=None) -> np.ndarray:
    """theta_i = -sum_{j != i} (u_i v_j - u_j v_i) (da_i - da_j)/(a_i - a_j)."""
    a = np.asarray(a, dtype=complex).ravel()
    da = np.asarray(da, dtype=complex).ravel()
    _check_distinct(a)
    u = data.u if u is None else np.asarray(u, dtype=complex)
    v = data.v if v is None else np.asarray(v, dtype=complex)
    w = _pair_weights(a, da)
    bracket = np.outer(u, v) - np.outer(v, u)
    return -np.sum(bracket * w, axis=1)


@dataclass(frozen=True)
class P3Trace:
    s: np.ndarray
    a: np.ndarray
    u: np.ndarray
    v: np.ndarray
    b: np.ndarray


def p3_solve(data0: Triangular3Data, apath: ZPath, rtol=DEFAULT_RTOL, atol=DEFAULT_ATOL, nodes=None) -> P3Trace:
    """Integrate du = Omega^u u, dv = Omega^v v and db = Omega b + theta as one coupled system."""
    n = data0.n
    _config_path(apath, n)
    fu, fv, fb = data0.forms()

    def rhs(a, da, y):
        u, v, b = y[:n], y[n:2 * n], y[2 * n:]
        return np.concatenate([
            omega_matrix(fu, a, da) @ u,
            omega_matrix(fv, a, da) @ v,
            omega_matrix(fb, a, da) @ b + p3_theta(data0, a, da, u, v),
        ])

    y0 = np.concatenate([data0.u, data0.v, data0.b])
    res = integrate_linear_ode(rhs, apath, y0, rtol=rtol, atol=atol, nodes=nodes)
    s = np.array([t for t, _ in res.samples])
    Y = np.array([y for _, y in res.samples])
    return P3Trace(s, np.array([apath.point(t) for t in s]), Y[:, :n], Y[:, n:2 * n], Y[:, 2 * n:])


# ---------------------------------------------------------------------------
# Variation of parameters
# ---------------------------------------------------------------------------


class ZeroTheta:
    """theta = 0; no auxiliary state."""

    def initial(self):
        return np.zeros(0, dtype=complex)

    def aux_rhs(self, a, da, aux):
        return np.zeros(0, dtype=complex)

    def theta(self, a, da, aux, n):
        return np.zeros(n, dtype=complex)


class UVTheta:
    """theta built from u, v integrated alongside (the p=3 inhomogeneity)."""

    def __init__(self, data: Triangular3Data):
        self.data = data
        self.fu, self.fv, _ = data.forms()

    def initial(self):
        return np.concatenate([self.data.u, self.data.v])

    def aux_rhs(self, a, da, aux):
        n = self.data.n
        return np.concatenate([omega_matrix(self.fu, a, da) @ aux[:n],
                               omega_matrix(self.fv, a, da) @ aux[n:]])

    def theta(self, a, da, aux, n):
        return p3_theta(self.data, a, da, aux[:n], aux[n:])


@dataclass(frozen=True)
class VOPResult:
    b_end: np.ndarray
    c_end: np.ndarray
    Y_end: np.ndarray
    self_check: float  # |c(duality) - c(explicit inverse)|, nan if only one route ran

    def __iter__(self):
        yield self.b_end
        yield self.c_end


def variation_of_parameters(form: JPForm, apath: ZPath, Y0, theta_supplier=None, rtol=DEFAULT_RTOL,
                            atol=DEFAULT_ATOL, c0=None, use_duality=None) -> VOPResult:
    """Solve db = Omega b + theta as b = Y c with dc = Y^{-1} theta.

    Y is the fundamental matrix from Y0.  When every beta is non-zero the
    inverse comes from the dual solution Y* (dY* = -Omega Y*) as
    (Y*)^T Lambda, and an explicit-inverse route runs alongside as a self
    check.  ``c0`` defaults to Y0^{-1} b where the supplier has no b, i.e. 0.
    """
    n = form.n
    _config_path(apath, n)
    Y0 = np.asarray(Y0, dtype=complex)
    if Y0.shape != (n, n):
        raise ShapeError(f"Y0 must be {n}x{n}")
    if np.linalg.cond(Y0) > 1e12:
        raise SingularMatrixError("Y0 is singular")
    if use_duality is None:
        use_duality = form.invertible_pairing
    if use_duality and not form.invertible_pairing:
        raise ValueError("duality inversion needs every beta_i != 0")
    sup = ZeroTheta() if theta_supplier is None else theta_supplier
    aux0 = np.asarray(sup.initial(), dtype=complex)
    c0 = np.zeros(n, dtype=complex) if c0 is None else np.asarray(c0, dtype=complex)
    lam = 1.0 / form.beta if use_duality else None
    Ystar0 = (np.linalg.inv(Y0).T * form.beta[:, None]) if use_duality else None
    nn, na = n * n, aux0.shape[0]

    def unpack(y):
        Y = y[:nn].reshape(n, n)
        c = y[nn:nn + n]
        c_alt = y[nn + n:nn + 2 * n]
        aux = y[nn + 2 * n:nn + 2 * n + na]
        Ys = y[nn + 2 * n + na:].reshape(n, n) if use_duality else None
        return Y, c, c_alt, aux, Ys

    def rhs(a, da, y):
        Y, c, c_alt, aux, Ys = unpack(y)
        Om = omega_matrix(form, a, da)
        th = sup.theta(a, da, aux, n)
        explicit = np.linalg.solve(Y, th)
        parts = [(Om @ Y).ravel()]
        if use_duality:
            parts += [(Ys.T * lam[None, :]) @ th, explicit]
        else:
            parts += [explicit, explicit]
        parts.append(sup.aux_rhs(a, da, aux))
        if use_duality:
            parts.append((-Om @ Ys).ravel())
        return np.concatenate(parts)

    init = [Y0.ravel(), c0, c0, aux0]
    if use_duality:
        init.append(Ystar0.ravel())
    res = integrate_linear_ode(rhs, apath, np.concatenate(init), rtol=rtol, atol=atol)
    Y, c, c_alt, _, _ = unpack(res.y)
    check = float("nan")
    if use_duality:
        check = float(np.max(np.abs(c - c_alt)) / max(1.0, np.max(np.abs(c))))
        if check > DUALITY_SELF_CHECK:
            raise RuntimeError(f"duality and explicit inverses disagree by {check:.2e}")
    return VOPResult(Y @ c, c, Y, check)


# ---------------------------------------------------------------------------
# Duality
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DualityReport:
    pairing_deviation: float
    inverse_deviation: float
    pairing0: np.ndarray
    samples: int


def identity_dual(form: JPForm, Y0) -> np.ndarray:
    """Y*_0 with (Y*_0)^T Lambda Y_0 = I."""
    return np.linalg.inv(np.asarray(Y0, dtype=complex)).T * form.beta[:, None]


def dual_pairing_check(form: JPForm, apath: ZPath, Y0, Ystar0=None, rtol=DEFAULT_RTOL,
                       atol=DEFAULT_ATOL) -> DualityReport:
    """Integrate Y under Omega and Y* under -Omega and monitor P = (Y*)^T Lambda Y.

    ``pairing_deviation`` is max_s |P(s) - P(0)| relative to |P(0)|;
    ``inverse_deviation`` is max_s |Y^{-1} - P(0)^{-1} (Y*)^T Lambda| relative
    to |Y^{-1}|, which for the identity normalization is the statement
    Y^{-1} = (Y*)^T Lambda.
    """
    if not form.invertible_pairing:
        raise ValueError("the pairing needs every beta_i != 0")
    n = form.n
    _config_path(apath, n)
    Y0 = np.asarray(Y0, dtype=complex).reshape(n, -1)
    Ystar0 = identity_dual(form, Y0) if Ystar0 is None else np.asarray(Ystar0, dtype=complex).reshape(n, -1)
    r = Y0.shape[1]
    lam = 1.0 / form.beta

    def rhs(a, da, y):
        Om = omega_matrix(form, a, da)
        return np.concatenate([Om @ y[:, :r], -Om @ y[:, r:]], axis=1)

    res = integrate_linear_ode(rhs, apath, np.concatenate([Y0, Ystar0], axis=1), rtol=rtol, atol=atol)
    P0 = (Ystar0.T * lam[None, :]) @ Y0
    ref = max(opnorm(P0), 1e-300)
    square = Y0.shape == (n, n) and Ystar0.shape == (n, n) and np.linalg.cond(P0) < 1e12
    P0inv = np.linalg.inv(P0) if square else None
    dev = inv_dev = 0.0
    for _, y in res.samples:
        Y, Ys = y[:, :r], y[:, r:]
        P = (Ys.T * lam[None, :]) @ Y
        dev = max(dev, opnorm(P - P0) / ref)
        if square:
            Yinv = np.linalg.inv(Y)
            inv_dev = max(inv_dev, opnorm(Yinv - P0inv @ (Ys.T * lam[None, :])) / opnorm(Yinv))
    return DualityReport(dev, inv_dev if square else float("nan"), P0, len(res.samples))
