from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_two_phase
from plate_homog.cell_moderate import assemble_qhom_m
from plate_homog.cell_supercritical import (
    GOLDEN_ANGLE,
    BendingTensor,
    classify_direction,
    direction_sweep,
    factor_bending,
    farey_pairs,
    oracle_penalized_2d,
    solve_cell_sc,
)
from plate_homog.errors import NotRankOne, ValidationError, ZeroDirection
from plate_homog.material import PeriodicMaterial, q2_of


def fibre_oracle(q2, p: int, q: int, lines: int = 2000, samples: int = 4000) -> float:
    """Harmonic mean over T.y of line averages of Q2(y, T(x)T), sampled along closed fibres."""
    norm = math.hypot(p, q)
    T = np.array([p, q]) / norm
    perp = np.array([-q, p]) / norm
    period = 1.0 / norm
    s = (np.arange(lines) + 0.5) / lines * period
    r = (np.arange(samples) + 0.5) / samples * norm
    y = (s[:, None, None] * T + r[None, :, None] * perp) % 1.0
    vals = q2.evaluate(y, np.outer(T, T))
    fibre = vals.mean(axis=1)
    return 1.0 / float(np.mean(1.0 / fibre))


def test_classify_examples():
    d = classify_direction(1, 0)
    assert np.allclose(d.T, (1.0, 0.0)) and d.period == 1.0
    d = classify_direction(3, 4)
    assert np.allclose(d.T, (0.6, 0.8), atol=1e-15)
    assert d.period == pytest.approx(0.2, abs=1e-15)
    assert classify_direction(6, 8) == d
    assert classify_direction(-3, -4) == d
    with pytest.raises(ZeroDirection):
        classify_direction(0, 0)
    irr = classify_direction(angle=GOLDEN_ANGLE)
    assert not irr.is_rational and irr.period is None


@given(st.integers(-20, 20), st.integers(-20, 20))
def test_rational_direction_invariants(p, q):
    if p == 0 and q == 0:
        return
    d = classify_direction(p, q)
    assert math.gcd(d.p, d.q) == 1
    assert np.linalg.norm(d.T) == pytest.approx(1.0, abs=1e-15)
    expected = abs(d.T[0] / d.p) if d.p != 0 else abs(d.T[1] / d.q)
    assert d.period == pytest.approx(expected, rel=1e-15)


def test_factor_bending_examples():
    b = factor_bending(-np.diag([1.0, 0.0]))
    assert b.c == 1.0 and np.allclose(b.direction.T, (1.0, 0.0))
    z = factor_bending(np.zeros((2, 2)))
    assert z.c == 0.0 and np.allclose(z.direction.T, (1.0, 0.0))
    v = np.array([3.0, 4.0])
    b = factor_bending(-np.outer(v, v) / 25.0)
    assert b.c == pytest.approx(1.0, abs=1e-12)
    assert np.allclose(b.direction.T, (0.6, 0.8), atol=1e-12)
    with pytest.raises(NotRankOne):
        factor_bending(np.eye(2))


@given(st.floats(-5, 5), st.floats(-math.pi, math.pi))
def test_factor_bending_reconstructs(c, angle):
    T = np.array([math.cos(angle), math.sin(angle)])
    ii = -c * np.outer(T, T)
    b = factor_bending(ii)
    assert np.max(np.abs(b.ii - ii)) <= 1e-12
    assert b.direction.T[0] > 0 or np.allclose(b.direction.T, (0.0, 1.0))


def test_declared_direction_must_match():
    ii = -np.diag([1.0, 0.0])
    assert factor_bending(ii, direction=classify_direction(1, 0)).direction.is_rational
    with pytest.raises(ValidationError):
        factor_bending(ii, direction=classify_direction(1, 1))


def test_homogeneous_material():
    q2 = q2_of(PeriodicMaterial.homogeneous(1.0, 1.0))
    for d in (classify_direction(1, 0), classify_direction(2, 3), classify_direction(angle=0.3)):
        sol = solve_cell_sc(q2, BendingTensor(d, 1.5))
        assert sol.energy == pytest.approx(q2.mean(BendingTensor(d, 1.5).ii), rel=1e-12)
        assert np.max(np.abs(sol.corrector.d2(np.linspace(0, 1, 50)))) <= 1e-12


def test_laminate_anchors(laminate_q2):
    sol = solve_cell_sc(laminate_q2, BendingTensor(classify_direction(1, 0), 1.0))
    assert sol.energy == pytest.approx(20 / 11, abs=1e-12)
    assert sol.residual_norm <= 1e-10
    irr = solve_cell_sc(laminate_q2, BendingTensor(classify_direction(angle=GOLDEN_ANGLE), 1.0))
    assert irr.energy == pytest.approx(5.5, abs=1e-12)


@pytest.mark.parametrize("pq", [(1, 0), (1, 1), (2, 1), (1, 3), (3, 2)])
def test_exact_profile_matches_fibre_sampling(pq):
    q2 = q2_of(random_two_phase(np.random.default_rng(11), 3))
    sol = solve_cell_sc(q2, BendingTensor(classify_direction(*pq), 1.0))
    assert sol.energy == pytest.approx(fibre_oracle(q2, *pq), rel=2e-4)


@pytest.mark.parametrize("pq", [(1, 0), (1, 1), (2, 1), (1, 3)])
def test_galerkin_profile_approaches_exact_from_above(pq):
    q2 = q2_of(random_two_phase(np.random.default_rng(12), 3))
    bt = BendingTensor(classify_direction(*pq), 1.0)
    exact = solve_cell_sc(q2, bt, method="exact").energy
    coarse = solve_cell_sc(q2, bt, 4, method="galerkin").energy
    fine = solve_cell_sc(q2, bt, 32, method="galerkin").energy
    assert exact - 1e-12 <= fine <= coarse + 1e-12
    assert fine == pytest.approx(exact, rel=2e-3)


def test_sandwich_random_instances():
    rng = np.random.default_rng(13)
    for _ in range(20):
        q2 = q2_of(random_two_phase(rng, 2))
        d = classify_direction(int(rng.integers(0, 4)), int(rng.integers(1, 4)))
        bt = BendingTensor(d, float(rng.uniform(0.2, 3.0)))
        qm = assemble_qhom_m(q2, 8)(bt.ii)
        qsc = solve_cell_sc(q2, bt).energy
        upper = q2.mean(bt.ii)
        assert qm <= qsc * (1 + 1e-8) and qsc <= upper * (1 + 1e-8)


def test_quadratic_scaling():
    q2 = q2_of(random_two_phase(np.random.default_rng(14), 2))
    d = classify_direction(2, 1)
    a = solve_cell_sc(q2, BendingTensor(d, 1.3))
    b = solve_cell_sc(q2, BendingTensor(d, 2.6))
    assert b.energy == pytest.approx(4 * a.energy, rel=1e-10)
    t = np.linspace(0, d.period, 37)
    assert np.allclose(b.corrector.d2(t), 2 * a.corrector.d2(t), atol=1e-10)


@pytest.mark.parametrize("method", ["exact", "galerkin"])
def test_period_multiples_agree(method):
    q2 = q2_of(random_two_phase(np.random.default_rng(15), 3))
    bt = BendingTensor(classify_direction(1, 2), 1.0)
    e = [solve_cell_sc(q2, bt, 8, method, period_multiple=k).energy for k in (1, 2, 3)]
    assert max(e) - min(e) <= 1e-9 * max(e)


def test_opposite_directions_agree(laminate_q2):
    a = solve_cell_sc(laminate_q2, BendingTensor(classify_direction(1, -2), 1.0)).energy
    b = solve_cell_sc(laminate_q2, BendingTensor(classify_direction(-1, 2), 1.0)).energy
    assert a == b


def test_irrational_rule():
    q2 = q2_of(random_two_phase(np.random.default_rng(16), 4))
    bt = BendingTensor(classify_direction(angle=0.7), 2.0)
    sol = solve_cell_sc(q2, bt)
    assert sol.corrector.modes == 0
    # piecewise-constant integrand: midpoints of a refined grid integrate it exactly
    g = (np.arange(64) + 0.5) / 64
    Y = np.stack(np.meshgrid(g, g, indexing="ij"), axis=-1)
    assert sol.energy == pytest.approx(float(np.mean(q2.evaluate(Y, bt.ii))), abs=1e-12)


def test_penalised_oracle_homogeneous():
    q2 = q2_of(PeriodicMaterial.homogeneous(1.0, 0.0))
    value = oracle_penalized_2d(q2, BendingTensor(classify_direction(1, 0), 1.0), 4)
    assert value == pytest.approx(1.0, abs=1e-6)


def test_penalised_oracle_needs_rational(laminate_q2):
    with pytest.raises(ValidationError):
        oracle_penalized_2d(laminate_q2, BendingTensor(classify_direction(angle=0.4), 1.0), 4)


def test_farey_pairs_order_and_count():
    pairs = farey_pairs(6)
    assert len(pairs) == 25
    assert pairs == sorted(pairs, key=lambda pq: (pq[1], pq[0]))
    assert all(math.gcd(p, q) == 1 for p, q in pairs)


def test_sweep_homogeneous_has_no_gap():
    q2 = q2_of(PeriodicMaterial.homogeneous(2.0, 1.0))
    rows = direction_sweep(q2, 4, 6, threads=1)
    for r in rows:
        assert abs(r["gap"]) <= 1e-12
        assert r["q_sc"] == pytest.approx(q2.mean(np.outer((r["T1"], r["T2"]), (r["T1"], r["T2"]))), rel=1e-12)


def test_sweep_laminate_rows(laminate_q2):
    rows = direction_sweep(laminate_q2, 6, 8, threads=1)
    by = {(r["p"], r["q"]): r for r in rows}
    assert by[1, 0]["q_sc"] == pytest.approx(20 / 11, abs=1e-12)
    assert by[5, 1]["q_sc"] > by[1, 0]["q_sc"]
    assert by[5, 1]["q_sc"] == pytest.approx(5.5, abs=1e-12)
    assert by[0, 1]["q_sc"] == pytest.approx(by[0, 1]["mean_q2"], abs=1e-12)
    assert rows[-1]["p"] == "" and rows[-1]["q_sc"] == pytest.approx(5.5, abs=1e-12)
    assert all(r["status"] == "ok" for r in rows)


def test_sweep_threads_do_not_change_rows(laminate_q2):
    assert direction_sweep(laminate_q2, 5, 4, threads=1) == direction_sweep(laminate_q2, 5, 4, threads=4)
