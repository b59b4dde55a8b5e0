from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_two_phase
from plate_homog.cell_moderate import assemble_qhom_m, cell_energy_direct, solve_cell_m
from plate_homog.errors import ValidationError
from plate_homog.material import PeriodicMaterial, q2_of

E11 = np.array([[1.0, 0.0], [0.0, 0.0]])


def random_sym(rng):
    A = rng.standard_normal((2, 2))
    return A + A.T


def quadrature(m: int, order: int = 24):
    x, w = np.polynomial.legendre.leggauss(order)
    nodes = (np.arange(m)[:, None] + 0.5 * (x[None, :] + 1.0)).ravel() / m
    weights = np.tile(0.5 * w / m, m)
    Y1, Y2 = np.meshgrid(nodes, nodes, indexing="ij")
    return np.stack([Y1, Y2], axis=-1), np.outer(weights, weights)


def dense_oracle(q2, ii, n: int) -> float:
    """Minimise the cell functional over all cos/sin waves with |k|_inf <= n.

    The quadratic is probed by point evaluations of the energy (polarisation)
    and minimised with a dense least-squares solve.
    """
    waves = [(a, b) for b in range(0, n + 1) for a in range(-n, n + 1) if b > 0 or a > 0]
    y, W = quadrature(q2.resolution)
    hess = []
    for k in waves:
        kk = np.array(k, dtype=float)
        ph = 2 * np.pi * (y @ kk)
        H = -4 * np.pi ** 2 * np.outer(kk, kk)
        hess.append(np.cos(ph)[..., None, None] * H)
        hess.append(np.sin(ph)[..., None, None] * H)

    def J(c):
        A = ii + sum(ci * Hi for ci, Hi in zip(c, hess))
        return float(np.sum(W * q2.evaluate(y, A)))

    d = len(hess)
    J0 = J(np.zeros(d))
    e = np.eye(d)
    Jp = np.array([J(e[i]) for i in range(d)])
    Jm = np.array([J(-e[i]) for i in range(d)])
    f = (Jp - Jm) / 4.0
    K = np.empty((d, d))
    diag = (Jp + Jm - 2 * J0) / 2.0
    for i in range(d):
        K[i, i] = diag[i]
        for j in range(i + 1, d):
            K[i, j] = K[j, i] = (J(e[i] + e[j]) - Jp[i] - Jp[j] + J0) / 2.0
    c = np.linalg.lstsq(K, -f, rcond=None)[0]
    return J(c)


@given(st.floats(0.2, 5.0), st.floats(0.0, 5.0), st.integers(1, 6),
       st.lists(st.floats(-2, 2), min_size=3, max_size=3))
@settings(max_examples=25)
def test_homogeneous_material_needs_no_corrector(mu, lam, modes, w):
    q2 = q2_of(PeriodicMaterial.homogeneous(mu, lam))
    ii = np.array([[w[0], w[2]], [w[2], w[1]]])
    sol = solve_cell_m(q2, ii, modes)
    assert sol.corrector.norm() <= 1e-10
    assert sol.energy == pytest.approx(q2.mean(ii), rel=1e-10, abs=1e-12)


def test_laminate_harmonic_mean(laminate_q2):
    sol = solve_cell_m(laminate_q2, -E11, 16)
    assert sol.energy == pytest.approx(20 / 11, abs=1e-6)
    assert sol.residual_norm <= 1e-10


def test_laminate_trigonometric_space_approaches_from_above(laminate_q2):
    values = [solve_cell_m(laminate_q2, -E11, n, enrich=False).energy for n in (2, 4, 8, 16)]
    assert all(v >= 20 / 11 - 1e-12 for v in values)
    assert all(b <= a + 1e-12 for a, b in zip(values, values[1:]))


def test_energy_matches_direct_quadrature(laminate_q2):
    rng = np.random.default_rng(7)
    q2 = q2_of(random_two_phase(rng, 2))
    ii = random_sym(rng)
    sol = solve_cell_m(q2, ii, 6)
    assert sol.energy == pytest.approx(cell_energy_direct(q2, ii, sol.corrector), rel=1e-9)


def test_doubling_the_bending_scales_energy_and_corrector(laminate_q2):
    ii = np.array([[-1.0, 0.3], [0.3, 0.5]])
    a = solve_cell_m(laminate_q2, ii, 8)
    b = solve_cell_m(laminate_q2, 2 * ii, 8)
    assert b.energy == pytest.approx(4 * a.energy, rel=1e-12)
    assert np.allclose(b.corrector.coefficient_vector(), 2 * a.corrector.coefficient_vector(), atol=1e-12)


def test_assembled_form_homogeneous():
    H = assemble_qhom_m(q2_of(PeriodicMaterial.homogeneous(1.0, 0.0)), 4)
    assert np.allclose(H.matrix, np.diag([1.0, 1.0, 2.0]), atol=1e-12)


def test_assembled_form_laminate(laminate_q2):
    H = assemble_qhom_m(laminate_q2, 16)
    assert np.max(np.abs(H.matrix - H.matrix.T)) <= 1e-12
    assert H.matrix[0, 0] == pytest.approx(20 / 11, abs=1e-6)
    assert np.min(np.linalg.eigvalsh(H.matrix)) >= -1e-12


def test_assembled_form_reproduces_solves():
    rng = np.random.default_rng(8)
    q2 = q2_of(random_two_phase(rng, 3))
    H = assemble_qhom_m(q2, 6)
    for _ in range(10):
        ii = random_sym(rng)
        assert H(ii) == pytest.approx(solve_cell_m(q2, ii, 6).energy, rel=1e-9)


def test_galerkin_monotone_and_bounded():
    rng = np.random.default_rng(9)
    for _ in range(10):
        q2 = q2_of(random_two_phase(rng, 2))
        ii = random_sym(rng)
        upper = q2.mean(ii)
        energies = [solve_cell_m(q2, ii, n).energy for n in range(1, 6)]
        assert all(e <= upper + 1e-12 for e in energies)
        assert all(b <= a + 1e-12 for a, b in zip(energies, energies[1:]))


def test_corrector_linear_in_bending():
    rng = np.random.default_rng(10)
    q2 = q2_of(random_two_phase(rng, 2))
    A, B = random_sym(rng), random_sym(rng)
    ca = solve_cell_m(q2, A, 5).corrector.coefficient_vector()
    cb = solve_cell_m(q2, B, 5).corrector.coefficient_vector()
    cab = solve_cell_m(q2, 0.4 * A - 1.3 * B, 5).corrector.coefficient_vector()
    assert np.max(np.abs(cab - (0.4 * ca - 1.3 * cb))) <= 1e-9


def test_checkerboard_against_dense_minimisation():
    mat = PeriodicMaterial(np.array([[1.0, 4.0], [4.0, 1.0]]), np.array([[0.5, 2.0], [2.0, 0.5]]))
    q2 = q2_of(mat)
    ii = np.array([[-1.0, 0.25], [0.25, 0.5]])
    galerkin = solve_cell_m(q2, ii, 2, enrich=False).energy
    assert galerkin == pytest.approx(dense_oracle(q2, ii, 2), abs=1e-8)


def test_invalid_modes(laminate_q2):
    with pytest.raises(ValidationError):
        solve_cell_m(laminate_q2, E11, 0)
