import mpmath
import numpy as np
import pytest
import scipy.linalg
import scipy.special
from hypothesis import given, settings
from hypothesis import strategies as st

from isolab.errors import DivergentCycleError, ShapeError, SingularMatrixError, StepUnderflow
from isolab.numerics import (
    TWO_PI_I,
    ZPath,
    clenshaw_curtis,
    eig,
    gauss_jacobi,
    integrate_linear_ode,
    normalized_log,
    quad_endpoint,
    spectral_projector,
)

from conftest import crandn


# --- eig ---------------------------------------------------------------------


def test_eig_identity_has_no_defect():
    r = eig(np.eye(2))
    np.testing.assert_allclose(r.values, [1, 1])
    assert r.jordan_defect == (0,)


def test_eig_diagonal_sorted():
    r = eig(np.diag([5.0, 2.0]))
    np.testing.assert_allclose(r.values, [2, 5])
    assert r.total_defect == 0


def test_eig_jordan_block():
    r = eig(np.array([[1.0, 1.0], [0.0, 1.0]]))
    assert r.algebraic == (2,)
    assert r.jordan_defect == (1,)


def test_eig_sort_and_residual(rng):
    M = crandn(rng, 6, 6)
    r = eig(M)
    keys = [(v.real, v.imag) for v in r.values]
    assert keys == sorted(keys)
    for lam, v in zip(r.values, r.vectors.T):
        assert np.linalg.norm(M @ v - lam * v) <= 1e-10 * np.linalg.norm(M, 2)


def test_eig_rejects_non_square():
    with pytest.raises(ShapeError):
        eig(np.zeros((2, 3)))


# --- normalized_log ------------------------------------------------------------


def test_normalized_log_identity():
    np.testing.assert_allclose(normalized_log(np.eye(3)), 0, atol=1e-14)


def test_normalized_log_scalar_shift():
    G = np.diag([np.exp(TWO_PI_I * 0.3), np.exp(TWO_PI_I * -0.2)])
    np.testing.assert_allclose(normalized_log(G), np.diag([0.3, 0.8]), atol=1e-12)


def test_normalized_log_unipotent():
    E = normalized_log(np.array([[1.0, 1.0], [0.0, 1.0]]))
    np.testing.assert_allclose(E, np.array([[0, 1], [0, 0]]) / TWO_PI_I, atol=1e-14)
    np.testing.assert_allclose(scipy.linalg.expm(TWO_PI_I * E), [[1, 1], [0, 1]], atol=1e-12)


def test_normalized_log_singular():
    with pytest.raises(SingularMatrixError):
        normalized_log(np.array([[1.0, 2.0], [2.0, 4.0]]))


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10**6), p=st.integers(1, 4))
def test_normalized_log_roundtrip(seed, p):
    rng = np.random.default_rng(seed)
    # eigenvalues kept away from the cut Re = 0 (mod 1)
    rho = rng.uniform(0.01, 0.99, p) + 1j * rng.uniform(-0.5, 0.5, p)
    S = np.eye(p) + 0.3 * crandn(rng, p, p)
    G = S @ np.diag(np.exp(TWO_PI_I * rho)) @ np.linalg.inv(S)
    E = normalized_log(G)
    back = scipy.linalg.expm(TWO_PI_I * E)
    assert np.linalg.norm(back - G) <= 1e-9 * np.linalg.norm(G)
    w = np.linalg.eigvals(E)
    assert np.all(w.real >= -1e-9) and np.all(w.real < 1)


def test_spectral_projector_is_projector(rng):
    M = crandn(rng, 4, 4)
    P = spectral_projector(M, lambda z: z.real > 0)
    np.testing.assert_allclose(P @ P, P, atol=1e-10)
    np.testing.assert_allclose(P @ M, M @ P, atol=1e-10)
    assert round(np.trace(P).real) == np.sum(np.linalg.eigvals(M).real > 0)


# --- ZPath and integration -------------------------------------------------------


def test_zpath_rejects_repeated_vertex():
    with pytest.raises(ShapeError):
        ZPath([0, 0, 1])
    with pytest.raises(ShapeError):
        ZPath([1.0])


def test_zpath_point_and_refine():
    p = ZPath([0, 1, 1 + 1j])
    assert p.point(1.5) == 1 + 0.5j
    assert p.refined(3).nseg == 6
    assert p.length() == pytest.approx(2.0)


def _field(B, a=0.0):
    return lambda z, dz, Y: (B @ Y) * dz / (z - a)


def test_zero_field_keeps_state(rng):
    Y0 = crandn(rng, 2, 2)
    res = integrate_linear_ode(lambda z, dz, Y: 0 * Y, ZPath([0, 1, 2j]), Y0)
    np.testing.assert_array_equal(res.y, Y0)


def test_scalar_exponential():
    lam = 0.7 - 0.4j
    res = integrate_linear_ode(lambda z, dz, y: lam * y * dz, ZPath([0, 1.5]), np.array([2.0]))
    np.testing.assert_allclose(res.y, 2 * np.exp(lam * 1.5), rtol=1e-11)


def test_circle_gives_residue_exponential():
    B = np.diag([0.25, -0.25])
    circle = ZPath(np.exp(2j * np.pi * np.arange(65) / 64))
    res = integrate_linear_ode(_field(B), circle, np.eye(2))
    # oracle: eigen-decomposition based exponential
    w, V = np.linalg.eig(TWO_PI_I * B)
    oracle = V @ np.diag(np.exp(w)) @ np.linalg.inv(V)
    np.testing.assert_allclose(res.y, oracle, atol=1e-9)


def test_path_and_reversal_compose_to_identity(rng):
    B = crandn(rng, 3, 3, scale=0.4)
    path = ZPath([1 + 1j, 2 - 0.5j, 0.5 - 1j])
    rtol = 1e-10
    fwd = integrate_linear_ode(_field(B), path, np.eye(3), rtol=rtol).y
    back = integrate_linear_ode(_field(B), path.reversed(), fwd, rtol=rtol).y
    assert np.max(np.abs(back - np.eye(3))) < 10 * rtol * max(1, np.max(np.abs(fwd)))


def test_halving_rtol_is_consistent(rng):
    B = crandn(rng, 2, 2, scale=0.5)
    path = ZPath([1, 1j, -1, -1j])
    y1 = integrate_linear_ode(_field(B), path, np.eye(2), rtol=1e-9).y
    y2 = integrate_linear_ode(_field(B), path, np.eye(2), rtol=5e-10).y
    assert np.linalg.norm(y1 - y2) < 10 * 1e-9 * np.linalg.norm(y2)


def test_node_sampling_and_guard():
    nodes, _ = clenshaw_curtis(4)
    res = integrate_linear_ode(lambda z, dz, y: y * dz, ZPath([0, 1, 2]), np.array([1.0]), nodes=nodes)
    s = [t for t, _ in res.samples]
    assert s == sorted(s) and len(s) == 1 + 2 * 4
    for t, y in res.samples:
        assert abs(y[0] - np.exp(t)) < 1e-9
    stop = integrate_linear_ode(lambda z, dz, y: y * dz, ZPath([0, 5]), np.array([1.0]),
                                guard=lambda z, y: abs(y[0]) > 10)
    assert stop.stopped_at is not None and abs(stop.y[0]) <= 10


def test_step_underflow_at_singularity():
    with pytest.raises(StepUnderflow) as info:
        integrate_linear_ode(lambda z, dz, y: y * dz / (z - 1) ** 3, ZPath([0, 2]), np.array([1.0 + 0j]),
                             max_steps=2000)
    assert 0 < info.value.s < 1.01


# --- quadrature ------------------------------------------------------------------


@pytest.mark.parametrize("n,a,b", [(5, 0.0, 0.0), (8, 0.5, -0.3), (12, -0.7, 1.5)])
def test_gauss_jacobi_matches_scipy(n, a, b):
    x, w = gauss_jacobi(n, a, b)
    xr, wr = scipy.special.roots_jacobi(n, a, b)
    np.testing.assert_allclose(x.real, xr, atol=1e-13)
    np.testing.assert_allclose(w.real, wr, rtol=1e-11)


def test_gauss_jacobi_complex_parameters_integrate_polynomials():
    a, b = 0.3 + 0.4j, -0.2 - 0.5j
    x, w = gauss_jacobi(10, a, b)
    f = lambda t: t ** 5 - 2 * t ** 2 + 1j
    got = np.sum(w * f(x))
    with mpmath.workdps(30):
        oracle = mpmath.quad(lambda t: (1 - t) ** a * (1 + t) ** b * f(t), [-1, 0, 1])
    assert abs(got - complex(oracle)) < 1e-12


def test_quad_endpoint_basic():
    one = lambda t: np.ones_like(t)
    assert quad_endpoint(one, 0, 1) == pytest.approx(1.0, abs=1e-14)
    assert quad_endpoint(one, 0, 1, mu0=-0.5) == pytest.approx(2.0, abs=1e-13)
    assert quad_endpoint(one, 0, 1, -0.5, 0.5) == pytest.approx(np.pi / 2, abs=1e-13)


def test_quad_endpoint_beta_and_oracle():
    mu0, mu1 = -0.4 + 0.3j, 0.7 - 0.2j
    got = quad_endpoint(lambda t: np.ones_like(t), 0, 1, mu0, mu1)
    assert abs(got - complex(mpmath.beta(mu0 + 1, mu1 + 1))) < 1e-12
    # tilted segment with a smooth factor; oracle = mpmath along the segment
    t0, t1 = 0.2 - 0.1j, 1.3 + 0.8j
    g = lambda t: np.exp(t) / (t - 3)
    got = quad_endpoint(g, t0, t1, -0.5, 0.25)
    with mpmath.workdps(30):
        T0, d = mpmath.mpc(t0), mpmath.mpc(t1 - t0)
        oracle = mpmath.quad(lambda s: mpmath.exp(T0 + s * d) / (T0 + s * d - 3)
                             * (s * d) ** -0.5 * ((1 - s) * d) ** 0.25 * d, [0, 1])
    assert abs(got - complex(oracle)) < 1e-11


def test_quad_endpoint_vector_valued():
    got = quad_endpoint(lambda t: np.stack([t, t * t], axis=-1), 0, 2)
    np.testing.assert_allclose(got, [2, 8 / 3], rtol=1e-13)


def test_quad_endpoint_divergent():
    with pytest.raises(DivergentCycleError):
        quad_endpoint(lambda t: np.ones_like(t), 0, 1, mu0=-1.0)


def test_quad_endpoint_doubling_differences_decrease():
    g = lambda t: 1 / (t - 2.5)
    vals = [quad_endpoint(g, 0, 1, -0.3, 0.4, n=m) for m in (4, 8, 16, 32)]
    diffs = np.abs(np.diff(vals))
    assert np.all(np.diff(diffs) < 0)


@settings(max_examples=30, deadline=None)
@given(m=st.integers(2, 40), deg=st.integers(0, 12))
def test_clenshaw_curtis_exact_on_polynomials(m, deg):
    if deg > m:
        return
    x, w = clenshaw_curtis(m)
    assert x[0] == pytest.approx(0) and x[-1] == pytest.approx(1)
    assert np.sum(w * x ** deg) == pytest.approx(1 / (deg + 1), abs=1e-13)
