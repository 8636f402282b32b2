import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from isolab.errors import PoleProximityError, ShapeError
from isolab.fuchsian import (
    ExponentTable,
    FuchsianSystem,
    coefficient_at,
    diagonal_exponents,
    exponents,
    fuchs_defect,
    load_system,
    save_system,
    system_from_json,
    system_to_json,
    validate,
)
from isolab.instances import random_generic_system

from conftest import crandn

B1 = np.diag([1.0, -1.0])


def two_pole(B=B1, poles=(0, 1)):
    return FuchsianSystem(poles, [B, -B])


def test_validate_ok():
    assert validate(two_pole()).ok


def test_validate_residue_sum_defect():
    sys = FuchsianSystem([0, 1], [B1, -B1 + 1e-3 * np.eye(2)])
    rep = validate(sys)
    assert not rep.ok
    (v,) = rep.violations
    assert v.kind == "residue sum"
    assert v.magnitude == pytest.approx(1e-3)


def test_validate_coincident_poles():
    rep = validate(two_pole(poles=(0, 0)))
    assert [v.kind for v in rep.violations] == ["coincident poles"]
    assert rep.to_dict()["ok"] is False


def test_system_shape_errors():
    with pytest.raises(ShapeError):
        FuchsianSystem([0, 1], np.zeros((3, 2, 2)))
    with pytest.raises(ShapeError):
        FuchsianSystem([0], np.zeros((1, 2, 3)))
    with pytest.raises(ShapeError):
        FuchsianSystem([np.nan], np.zeros((1, 1, 1)))


def test_coefficient_at():
    np.testing.assert_array_equal(coefficient_at(FuchsianSystem([0, 1], np.zeros((2, 2, 2))), 0.3j), 0)
    np.testing.assert_allclose(coefficient_at(two_pole(), 2), -B1 / 2)
    with pytest.raises(PoleProximityError):
        coefficient_at(two_pole(), 1 + 1e-13)


def test_coefficient_decays_faster_than_one_over_z(rng):
    sys = random_generic_system(rng, 3, 2)
    norms = [np.linalg.norm(z * coefficient_at(sys, z)) for z in (1e2, 1e4, 1e6)]
    assert norms[0] > norms[1] > norms[2]
    assert norms[2] < 1e-5


def test_residue_recovery(rng):
    sys = random_generic_system(rng, 4, 3)
    for i, a in enumerate(sys.poles):
        z = a + 1e-4 * np.exp(0.7j)
        err = np.linalg.norm((z - a) * coefficient_at(sys, z) - sys.residues[i])
        assert err < 10 * 1e-4 * sys.scale() * sys.n


def test_exponents_diagonal_and_triangular():
    B = np.array([[0.3, 5.0], [0.0, -0.1]])
    t = exponents(FuchsianSystem([0, 2], [B, -B]))
    np.testing.assert_allclose(t.rows, [[-0.1, 0.3], [-0.3, 0.1]])
    d = diagonal_exponents(FuchsianSystem([0, 2], [B, -B]))
    np.testing.assert_allclose(d.rows, [[0.3, -0.1], [-0.3, 0.1]])


def test_exponents_of_conjugated_diagonal(rng):
    C = np.eye(2) + 0.5 * crandn(rng, 2, 2)
    B = C @ np.diag([0.2, -0.2]) @ np.linalg.inv(C)
    t = exponents(FuchsianSystem([0, 1], [B, -B]))
    np.testing.assert_allclose(t.rows[0], [-0.2, 0.2], atol=1e-12)


def test_fuchs_defect_examples():
    assert fuchs_defect(ExponentTable(np.zeros((3, 2)))) == 0
    bad = FuchsianSystem([0, 1], [B1, -B1 + np.diag([1.0, 0.0])])
    assert fuchs_defect(exponents(bad)) == pytest.approx(1.0)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10**6), n=st.integers(2, 5), p=st.integers(1, 4))
def test_fuchs_relation_on_valid_systems(seed, n, p):
    sys = random_generic_system(np.random.default_rng(seed), n, p)
    assert validate(sys).ok
    total = sum(np.linalg.norm(B, 2) for B in sys.residues)
    assert abs(fuchs_defect(exponents(sys))) <= 1e-10 * total


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10**6), p=st.integers(1, 4))
def test_exponents_conjugation_invariant(seed, p):
    rng = np.random.default_rng(seed)
    sys = random_generic_system(rng, 3, p)
    C = np.eye(p) + 0.4 * crandn(rng, p, p)
    if np.linalg.cond(C) > 100:
        return
    r0 = exponents(sys).rows
    r1 = exponents(sys.conjugated(C)).rows
    # sorted lists compared as multisets to survive near-ties in the sort key
    for x, y in zip(r0, r1):
        d = np.abs(x[:, None] - y[None, :])
        assert np.max(np.min(d, axis=1)) < 1e-9


def test_json_roundtrip(tmp_path, rng):
    sys = random_generic_system(rng, 3, 2)
    data = system_to_json(sys)
    assert data["p"] == 2 and len(data["poles"]) == 3
    back = system_from_json(json.loads(json.dumps(data)))
    np.testing.assert_array_equal(back.poles, sys.poles)
    np.testing.assert_array_equal(back.residues, sys.residues)
    f = tmp_path / "s.json"
    save_system(sys, f)
    np.testing.assert_array_equal(load_system(f).residues, sys.residues)


def test_json_rejects_bad_shape():
    with pytest.raises(ShapeError):
        system_from_json({"p": 2, "poles": [[0, 0]], "residues": [[[0, 0]]]})
