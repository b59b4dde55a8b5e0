from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.linalg import polar
from scipy.optimize import minimize

from conftest import random_two_phase, rotation
from plate_homog.errors import SingularReduction, ValidationError
from plate_homog.material import (
    PeriodicMaterial,
    QuadraticForm3,
    eval_W,
    linearize_q3,
    load_material,
    material_from_dict,
    q2_of,
    reduce_q2,
    save_material,
)

Y = np.array([[0.3, 0.6]])


def test_identity_and_rotation_are_stress_free(laminate):
    c, s = math.cos(math.pi / 6), math.sin(math.pi / 6)
    R = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
    assert eval_W(laminate, Y, np.eye(3))[0] == 0.0
    assert abs(eval_W(laminate, Y, R)[0]) < 1e-15


def test_uniaxial_stretch_closed_form():
    mat = PeriodicMaterial.homogeneous(1.0, 0.0)
    d = 1e-3
    W = eval_W(mat, Y, np.diag([1 + d, 1.0, 1.0]))[0]
    # |F^T F - I|^2 / 4 with F^T F - I = diag(2d + d^2, 0, 0)
    assert W == pytest.approx((2 * d + d * d) ** 2 / 4, rel=1e-12)
    assert W == pytest.approx(1e-6, rel=2e-3)


def test_frame_indifference_random():
    rng = np.random.default_rng(1)
    mat = random_two_phase(rng, 3)
    y = rng.random((100, 2))
    F = rng.uniform(-1.5, 1.5, (100, 3, 3))
    R = np.stack([rotation(rng) for _ in range(100)])
    W0 = eval_W(mat, y, F)
    W1 = eval_W(mat, y, R @ F)
    assert np.all(W0 >= 0)
    assert np.max(np.abs(W1 - W0)) <= 1e-12


def test_q3_examples():
    q3 = linearize_q3(PeriodicMaterial.homogeneous(1.0, 0.0))
    assert q3.evaluate(Y, np.diag([1.0, 0.0, 0.0]))[0] == pytest.approx(1.0, abs=1e-15)
    q3 = linearize_q3(PeriodicMaterial.homogeneous(2.0, 0.0))
    G = np.zeros((3, 3))
    G[0, 1] = 1.0
    assert q3.evaluate(Y, G)[0] == pytest.approx(1.0, abs=1e-15)


@given(st.lists(st.floats(-3, 3), min_size=3, max_size=3))
def test_q3_vanishes_on_skew(w):
    a, b, c = w
    S = np.array([[0.0, a, b], [-a, 0.0, c], [-b, -c, 0.0]])
    q3 = linearize_q3(PeriodicMaterial.homogeneous(2.5, 1.5))
    assert abs(q3.evaluate(Y, S)[0]) <= 1e-12


def test_quadratic_expansion_remainder_decreases():
    rng = np.random.default_rng(2)
    mat = PeriodicMaterial.homogeneous(1.3, 0.7)
    q3 = linearize_q3(mat)
    G0 = rng.standard_normal((3, 3))
    G0 /= np.linalg.norm(G0)
    rel = []
    for delta in (1e-2, 1e-3, 1e-4):
        G = delta * G0
        r = eval_W(mat, Y, np.eye(3) + G)[0] - q3.evaluate(Y, G)[0]
        rel.append(abs(r) / delta ** 2)
    assert rel[0] > rel[1] > rel[2]


def test_nondegeneracy_ratio_positive():
    rng = np.random.default_rng(3)
    mat = PeriodicMaterial.homogeneous(1.0, 0.5)
    ratios = []
    for _ in range(1000):
        F = np.eye(3) + rng.uniform(-0.8, 0.8, (3, 3))
        if np.linalg.det(F) <= 0:
            continue
        Rot, _ = polar(F)
        d2 = float(np.sum((F - Rot) ** 2))
        if d2 < 1e-12:
            continue
        ratios.append(eval_W(mat, Y, F)[0] / d2)
    assert len(ratios) > 500
    assert min(ratios) > 0.0


def test_reduce_q2_examples():
    q2 = q2_of(PeriodicMaterial.homogeneous(1.0, 0.0))
    assert q2.evaluate(Y, np.eye(2))[0] == pytest.approx(2.0, abs=1e-14)
    assert np.allclose(q2.minimizing_column(Y, np.eye(2)), 0.0, atol=1e-15)
    q2 = q2_of(PeriodicMaterial.homogeneous(1.0, 1.0))
    assert q2.evaluate(Y, np.eye(2))[0] == pytest.approx(10.0 / 3.0, abs=1e-14)
    assert q2.evaluate(Y, np.zeros((2, 2)))[0] == 0.0


def test_reduce_q2_matches_generic_minimisation():
    rng = np.random.default_rng(4)
    for _ in range(20):
        mat = random_two_phase(rng)
        q3 = linearize_q3(mat)
        q2 = reduce_q2(q3)
        y = rng.random((1, 2))
        A = rng.standard_normal((2, 2))
        A = A + A.T

        def embedded(a):
            G = np.zeros((3, 3))
            G[:2, :2] = A
            G[:, 2] = a
            return q3.evaluate(y, G)[0]

        res = minimize(embedded, np.zeros(3), method="BFGS", options={"gtol": 1e-12})
        assert q2.evaluate(y, A)[0] == pytest.approx(res.fun, rel=1e-8, abs=1e-10)
        assert q2.evaluate(y, A)[0] <= embedded(np.zeros(3)) + 1e-12


def test_minimizer_map_is_linear():
    rng = np.random.default_rng(5)
    q2 = q2_of(random_two_phase(rng, 3))
    y = rng.random((10, 2))
    A, B = rng.standard_normal((2, 2, 2))
    A, B = A + A.T, B + B.T
    al, be = 0.7, -1.9
    lhs = q2.minimizing_column(y, al * A + be * B)
    rhs = al * q2.minimizing_column(y, A) + be * q2.minimizing_column(y, B)
    assert np.max(np.abs(lhs - rhs)) <= 1e-12


def test_material_validation():
    with pytest.raises(ValidationError):
        PeriodicMaterial(np.array([[0.0]]), np.array([[0.0]]))
    with pytest.raises(ValidationError):
        PeriodicMaterial(np.array([[1.0]]), np.array([[-1.0]]))
    with pytest.raises(ValidationError):
        material_from_dict({"resolution": 2, "mu": [1.0], "lambda": [0.0]})


def test_singular_reduction():
    with pytest.raises(SingularReduction):
        reduce_q2(QuadraticForm3(np.zeros((1, 1, 6, 6))))


def test_material_file_round_trip(tmp_path, laminate):
    path = tmp_path / "lam.json"
    save_material(laminate, path)
    back = load_material(path)
    assert np.array_equal(back.mu, laminate.mu)
    assert np.array_equal(back.lam, laminate.lam)
