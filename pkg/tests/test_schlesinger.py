import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from isolab.errors import BlowUpError, DiagonalApproachError, ShapeError
from isolab.fuchsian import ExponentTable, FuchsianSystem, diagonal_exponents
from isolab.instances import (
    closed_loop,
    random_config_path,
    random_generic_system,
    random_triangular_system,
)
from isolab.numerics import ZPath
from isolab.schlesinger import (
    DeformationState,
    alpha_matrix,
    check_path,
    conservation_defect,
    deform,
    deformed_system,
    isomonodromy_check,
    schlesinger_rhs,
    segment_diagonal_distance,
    spectral_drift,
    subtriangular_residual,
    tau_form,
    tau_log_increment,
    triangular_tau_closed_form,
)

from conftest import crandn


def comm(x, y):
    return x @ y - y @ x


def direct_rhs(a, da, B):
    # written straight from the defining sum, one term at a time
    n = len(a)
    out = np.zeros_like(B)
    for i in range(n):
        for j in range(n):
            if j != i:
                out[i] -= comm(B[i], B[j]) * (da[i] - da[j]) / (a[i] - a[j])
    return out


def test_rhs_vanishes_for_commuting(rng):
    d = crandn(rng, 3, 2)
    d[-1] = -d[:-1].sum(axis=0)
    st0 = DeformationState([0, 1, 2j], [np.diag(x) for x in d])
    np.testing.assert_array_equal(schlesinger_rhs(st0, crandn(rng, 3)), 0)


def test_rhs_two_poles(rng):
    B1 = crandn(rng, 2, 2)
    st0 = DeformationState([0.3, 1 - 1j], [B1, -B1])
    out = schlesinger_rhs(st0, [1, 0])
    c = comm(B1, -B1)
    np.testing.assert_allclose(out[0], -c / (0.3 - (1 - 1j)))
    np.testing.assert_allclose(out[1], c / (0.3 - (1 - 1j)))


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10**6), n=st.integers(2, 5), p=st.integers(1, 4))
def test_rhs_matches_direct_sum_and_conserves(seed, n, p):
    rng = np.random.default_rng(seed)
    sys = random_generic_system(rng, n, p)
    da = crandn(rng, n)
    out = schlesinger_rhs(DeformationState.from_system(sys), da)
    ref = direct_rhs(sys.poles, da, sys.residues)
    assert np.max(np.abs(out - ref)) < 1e-12 * max(1, np.max(np.abs(ref)))
    assert np.linalg.norm(out.sum(axis=0)) <= 1e-12 * max(1, np.max(np.abs(ref)))


def test_rhs_rejects_coincident_poles():
    with pytest.raises(DiagonalApproachError):
        schlesinger_rhs(DeformationState([0, 0], np.zeros((2, 1, 1))), [1, 0])


def test_diagonal_residues_are_constant(rng):
    d = crandn(rng, 3, 2, scale=0.3)
    d[-1] = -d[:-1].sum(axis=0)
    st0 = DeformationState([0, 1.5, 1j], [np.diag(x) for x in d])
    tr = deform(st0, random_config_path(rng, st0.a))
    assert np.max(np.abs(tr.B - st0.B[None])) < 1e-14


def test_closed_loop_returns_to_start(rng):
    sys = random_generic_system(rng, 4, 3)
    st0 = DeformationState.from_system(sys)
    rtol = 1e-10
    tr = deform(st0, closed_loop(rng, sys.poles, size=0.3), rtol=rtol)
    assert not tr.blowup
    assert np.max(np.abs(tr.final.B - st0.B)) < 10 * rtol * max(1, st0.scale())


def test_path_independence(rng):
    sys = random_generic_system(rng, 3, 2)
    a0 = sys.poles
    d1, d2 = 0.2 * crandn(rng, 3), 0.2 * crandn(rng, 3)
    p1 = ZPath([a0, a0 + d1, a0 + d1 + d2])
    p2 = ZPath([a0, a0 + d2, a0 + d1 + d2])
    rtol = 1e-10
    st0 = DeformationState.from_system(sys)
    b1, b2 = deform(st0, p1, rtol=rtol).final.B, deform(st0, p2, rtol=rtol).final.B
    assert np.max(np.abs(b1 - b2)) < 10 * rtol * max(1, st0.scale())


def test_conservation_and_rigidity(rng):
    for _ in range(3):
        sys = random_generic_system(rng, 3, 3)
        tr = deform(DeformationState.from_system(sys), random_config_path(rng, sys.poles))
        assert conservation_defect(tr) < 1e-10
        assert spectral_drift(tr) < 1e-8


def test_triangularity_propagates(rng):
    for p in (2, 3):
        sys = random_triangular_system(rng, 4, p)
        tr = deform(DeformationState.from_system(sys), random_config_path(rng, sys.poles, length=2))
        assert not tr.blowup
        assert subtriangular_residual(tr) < 1e-10


def test_trace_shape_and_monotone(rng):
    sys = random_generic_system(rng, 3, 2)
    path = random_config_path(rng, sys.poles, nseg=2)
    tr = deform(DeformationState.from_system(sys), path, nodes_per_segment=8)
    assert len(tr.s) == 1 + 2 * 8
    assert np.all(np.diff(tr.s) > 0)
    np.testing.assert_allclose(tr.a[-1], path.vertices[-1])


def test_path_must_start_at_state(rng):
    sys = random_generic_system(rng, 3, 2)
    with pytest.raises(ShapeError):
        deform(DeformationState.from_system(sys), ZPath([sys.poles + 1, sys.poles + 2]))


def test_diagonal_touching_path_is_rejected():
    a0 = np.array([0, 1, 2j])
    path = ZPath([a0, np.array([0.5, 0.5, 2j])])
    assert segment_diagonal_distance(*path.vertices) == 0
    with pytest.raises(DiagonalApproachError, match="theta-divisor/diagonal"):
        check_path(path)


def test_segment_diagonal_distance_exact():
    # a_1 - a_2 runs from 1 to -1 + 2i; the closest point of that line to 0 is 0.5 + 0.5i
    d = segment_diagonal_distance(np.array([1, 0]), np.array([-1 + 2j, 0]))
    assert d == pytest.approx(2 ** -0.5, rel=1e-12)
    dense = min(abs(1 + s * (-2 + 2j)) for s in np.linspace(0, 1, 100001))
    assert d <= dense < d + 1e-9


def test_blowup_is_flagged(rng):
    sys = random_generic_system(rng, 3, 2)
    st0 = DeformationState.from_system(sys)
    path = random_config_path(rng, sys.poles)
    free = deform(st0, path)
    m0, m1 = np.max(np.abs(free.B[0])), np.max(np.abs(free.B))
    assert m1 > m0 * 1.001
    tr = deform(st0, path, blowup_norm=0.5 * (m0 + m1))
    assert tr.blowup and "theta-divisor" in tr.message
    assert tr.s[-1] < free.s[-1]
    with pytest.raises(BlowUpError):
        tau_log_increment(tr)


# --- isomonodromy -------------------------------------------------------------


def test_isomonodromy_identical():
    B1 = np.array([[0.2, 0.4], [0.1, -0.2]])
    sys = FuchsianSystem([0, 1, 2j], [B1, -B1 / 2, -B1 / 2])
    assert isomonodromy_check(sys, sys).defect == 0


def test_isomonodromy_positive_and_negative(rng):
    sys = random_generic_system(rng, 3, 2)
    path = random_config_path(rng, sys.poles)
    sys1 = deformed_system(sys, path, rtol=1e-11)
    rep = isomonodromy_check(sys, sys1, rtol=1e-11, configurations=list(path.vertices))
    assert rep.defect < 1e-6
    B = np.array(sys.residues)
    B[0] += 0.1 * np.array([[0, 1], [0, 0]])
    B[1] -= 0.1 * np.array([[0, 1], [0, 0]])
    bad = isomonodromy_check(sys, FuchsianSystem(sys.poles, B))
    assert bad.defect > 1e-3


# --- tau ------------------------------------------------------------------------


def test_tau_zero_residues(rng):
    st0 = DeformationState([0, 1, 1j], np.zeros((3, 2, 2)))
    tr = deform(st0, random_config_path(rng, st0.a))
    assert tau_log_increment(tr) == 0


def test_tau_form_matches_pairwise_sum(rng):
    sys = random_generic_system(rng, 4, 2)
    a, B, da = sys.poles, sys.residues, crandn(rng, 4)
    ref = sum(np.trace(B[i] @ B[j]) * (da[i] - da[j]) / (a[i] - a[j])
              for i in range(4) for j in range(i + 1, 4))
    assert abs(tau_form(a, da, B) - ref) < 1e-13 * max(1, abs(ref))


def test_tau_closed_loop(rng):
    sys = random_generic_system(rng, 3, 2)
    tr = deform(DeformationState.from_system(sys), closed_loop(rng, sys.poles, size=0.3))
    assert abs(tau_log_increment(tr)) < 1e-8
    assert abs(tr.tau_log) < 1e-8


def test_tau_quadrature_agrees_with_integrated(rng):
    sys = random_generic_system(rng, 3, 3)
    tr = deform(DeformationState.from_system(sys), random_config_path(rng, sys.poles))
    assert abs(tau_log_increment(tr) - tr.tau_log) < 1e-9 * max(1, abs(tr.tau_log))


def test_closed_form_trivial_cases():
    a0, a1 = np.array([0, 1.0]), np.array([0, 2.0 + 1j])
    assert triangular_tau_closed_form(ExponentTable(np.zeros((2, 1))), a0, a1) == 0
    beta = 0.3 - 0.1j
    t = ExponentTable([[beta], [-beta]])
    assert alpha_matrix(t)[0, 1] == pytest.approx(-beta ** 2)
    got = triangular_tau_closed_form(t, a0, a1)
    # a_1 - a_2 runs straight from -1 to -2 - i, so the log changes by Log(2 + i)
    assert got == pytest.approx(-beta ** 2 * np.log(2 + 1j))


def test_closed_form_tracks_branch_around_loop():
    # a_2 circles a_1 once: ln(a_1 - a_2) changes by 2 pi i
    ang = np.linspace(0, 2 * np.pi, 9)
    verts = np.stack([np.zeros(9), np.exp(1j * ang)], axis=1)
    t = ExponentTable([[1.0], [-1.0]])
    assert triangular_tau_closed_form(t, ZPath(verts)) == pytest.approx(-2j * np.pi)


def test_closed_form_single_pole_p1(rng):
    # n=2, p=1: the Schlesinger flow is trivial and the tau form is exact
    B = np.array([[[0.25 + 0.1j]], [[-0.25 - 0.1j]]])
    st0 = DeformationState([0, 1], B)
    path = ZPath([st0.a, st0.a + np.array([0.3j, -0.5]), st0.a + np.array([1, 1j])])
    tr = deform(st0, path)
    ref = triangular_tau_closed_form(ExponentTable(B[:, :, 0]), path)
    assert abs(tau_log_increment(tr) - ref) < 1e-12


@pytest.mark.parametrize("p,n", [(2, 3), (3, 4)])
def test_miwa_equals_closed_form_on_triangular(rng, p, n):
    sys = random_triangular_system(rng, n, p)
    path = random_config_path(rng, sys.poles)
    tr = deform(DeformationState.from_system(sys), path)
    ref = triangular_tau_closed_form(diagonal_exponents(sys), path)
    assert abs(tau_log_increment(tr) - ref) < 1e-8
