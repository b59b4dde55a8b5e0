from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from plate_homog.errors import DomainTooSmall, IncommensurateGrid, ValidationError
from plate_homog.recovery import CylinderSurface, build_recovery_moderate
from plate_homog.two_scale import (
    GridFunction,
    bending_bounds_report,
    integral_identity_check,
    mollifier_kernel,
    mollify,
    sample_deformation,
    transfer_factor,
    two_scale_error,
    unfold,
)


def disc_mask(x, y):
    return (x - 0.5) ** 2 + (y - 0.5) ** 2 < 0.16


def continuous_transfer(h: float) -> float:
    """Polar Gauss quadrature of the normalised bump against cos(2 pi h r cos theta)."""
    r, wr = np.polynomial.legendre.leggauss(200)
    r, wr = 0.5 * (r + 1), 0.5 * wr
    th, wt = np.polynomial.legendre.leggauss(200)
    th, wt = np.pi * (th + 1), np.pi * wt
    R, TH = np.meshgrid(r, th, indexing="ij")
    W = np.outer(wr, wt) * np.exp(-1 / (1 - R ** 2)) * R
    return float(np.sum(W * np.cos(2 * np.pi * h * R * np.cos(TH))) / np.sum(W))


def layered(values2d_fn, n: int, layers: int = 4):
    X, Y = GridFunction.nodes_of(n, n, 1 / n, (0.0, 0.0))
    z = (np.arange(layers) + 0.5) / layers - 0.5
    return GridFunction(np.stack([values2d_fn(X, Y, zz) for zz in z], axis=2), 1 / n)


def test_unfold_constant():
    u = unfold(GridFunction(np.full((16, 16), 3.0), 1 / 16), 0.25)
    assert u.values.shape[:2] == (4, 4)
    assert np.all(u.values == 3.0) and len(u.boundary) == 0


def test_unfold_periodic_function_is_cell_independent():
    rng = np.random.default_rng(0)
    rho = rng.standard_normal((8, 8))
    v = GridFunction(np.tile(rho, (4, 4)), 1 / 32)
    u = unfold(v, 0.25)
    assert np.all(u.values == rho[None, None])


def test_unfold_spot_value():
    v = GridFunction.sample(lambda x1, x2: x1, 8)
    u = unfold(v, 0.5)
    assert u.at(np.array([0.6, 0.2]), np.array([0.5, 0.5])) == pytest.approx(0.75, abs=1e-15)


def test_unfold_requires_commensurate_grid():
    v = GridFunction(np.zeros((10, 10)), 0.1)
    with pytest.raises(IncommensurateGrid):
        unfold(v, 0.25)


def test_identity_residuals():
    v = GridFunction(np.full((32, 32), 1.5), 1 / 32)
    assert integral_identity_check(v, 0.125) == 0.0
    rng = np.random.default_rng(1)
    for _ in range(10):
        v = GridFunction.sample(lambda x, y: rng.standard_normal(x.shape), 64)
        assert integral_identity_check(v, 0.125) <= 1e-12
        d = GridFunction.sample(lambda x, y: rng.standard_normal(x.shape), 64, mask_fn=disc_mask)
        assert len(unfold(d, 0.125).boundary) > 0
        assert integral_identity_check(d, 0.125) <= 1e-12


@given(st.integers(0, 2 ** 31), st.sampled_from([0.125, 0.25, 0.5]))
@settings(max_examples=25)
def test_unfolding_is_linear_and_isometric(seed, eps):
    rng = np.random.default_rng(seed)
    a = GridFunction.sample(lambda x, y: rng.standard_normal(x.shape), 32, mask_fn=disc_mask)
    b = GridFunction(rng.standard_normal(a.shape), a.step, a.origin, a.mask)
    ua, ub = unfold(a, eps), unfold(b, eps)
    comb = unfold(GridFunction(2 * a.values - 3 * b.values, a.step, a.origin, a.mask), eps)
    assert np.max(np.abs(comb.values - (2 * ua.values - 3 * ub.values))) <= 1e-12
    # interior cells of the unfolding cover exactly the pixels it keeps
    kept = np.zeros(a.shape, bool)
    r = int(round(eps / a.step))
    for i, j in zip(*np.nonzero(ua.interior)):
        kept[i * r:(i + 1) * r, j * r:(j + 1) * r] = True
    kept &= a.full_mask
    assert ua.l2_norm() == pytest.approx(a.l2_norm(kept), rel=1e-12, abs=1e-14)


def test_two_scale_error_halves():
    rho = np.random.default_rng(2).standard_normal((4, 4))

    def g(x, y):
        return np.sin(2 * np.pi * x) * np.cos(np.pi * y) + x

    errs = [two_scale_error(g, rho, eps, eps / 4) for eps in (1 / 8, 1 / 16, 1 / 32, 1 / 64)]
    assert all(b / a <= 0.6 for a, b in zip(errs, errs[1:]))


@pytest.mark.parametrize("h,step", [(1 / 16, 1 / 128), (1 / 8, 1 / 64), (0.05, 0.01)])
def test_mollifier_has_unit_mass(h, step):
    K = mollifier_kernel(h, step)
    assert abs(np.sum(K) * step * step - 1.0) <= 1e-12
    assert np.allclose(K, K.T) and np.allclose(K, K[::-1])


def test_mollifier_needs_two_pixels():
    with pytest.raises(ValidationError):
        mollifier_kernel(0.01, 0.01)


def test_mollify_constant_and_linear():
    c = mollify(GridFunction.sample(lambda x, y: 0 * x + 4.0, 128), 1 / 16)
    assert np.max(np.abs(c.values - 4.0)) <= 1e-12
    lin = mollify(GridFunction.sample(lambda x, y: 2 * x - 3 * y, 128), 1 / 16)
    X, Y = lin.nodes()
    assert np.max(np.abs(lin.values - (2 * X - 3 * Y))) <= 1e-12


def test_mollify_averages_layers():
    u = layered(lambda X, Y, z: X + z, 64)
    m = mollify(u, 1 / 16)
    X, _ = m.nodes()
    assert np.max(np.abs(m.values - X)) <= 1e-12


def test_mollify_masked_domain_and_too_small():
    m = mollify(GridFunction.sample(lambda x, y: 0 * x + 1.0, 64, mask_fn=disc_mask), 1 / 16)
    assert m.mask is not None and m.mask.any()
    assert np.max(np.abs(m.values[m.mask] - 1.0)) <= 1e-12
    with pytest.raises(DomainTooSmall):
        mollify(GridFunction(np.ones((8, 8)), 1 / 8), 0.5)


def test_transfer_factor_against_continuous_oracle():
    assert transfer_factor(1 / 16, 1 / 128) == pytest.approx(continuous_transfer(1 / 16), abs=1e-5)
    assert transfer_factor(1 / 16, 1 / 512) == pytest.approx(continuous_transfer(1 / 16), abs=1e-8)


def test_mollified_sine_is_damped_by_transfer_factor():
    m = mollify(GridFunction.sample(lambda x, y: np.sin(2 * np.pi * x), 128), 1 / 16)
    X, _ = m.nodes()
    factor = transfer_factor(1 / 16, 1 / 128)
    assert np.max(np.abs(m.values - factor * np.sin(2 * np.pi * X))) <= 1e-12


SCHEDULE = [1 / 8, 1 / 16, 1 / 32, 1 / 64, 1 / 128]


def test_bending_bounds_planar_family():
    rep = bending_bounds_report(lambda h: layered(lambda X, Y, z: np.stack([X, Y, h * z + 0 * X], -1), 256),
                                SCHEDULE)
    assert rep.all_bounded
    assert np.max(rep.column("hessian_l2")) <= 1e-10
    assert np.allclose(rep.column("gradient_linf"), np.sqrt(2.0))


def test_bending_bounds_cylinder_recovery_family():
    S = CylinderSurface.unit_square((1.0, 0.0), 1.0)

    def family(h):
        return sample_deformation(build_recovery_moderate(S, None, "zero", h, 0.25), 128)

    rep = bending_bounds_report(family, SCHEDULE[:4])
    assert rep.all_bounded
    assert rep.column("hessian_l2")[-1] == pytest.approx(1.0, abs=0.1)


def test_bending_bounds_flag_wild_family():
    def family(h):
        return layered(lambda X, Y, z: np.stack([X, Y, h * np.sin(X / h) + h * z], -1), 256)

    rep = bending_bounds_report(family, SCHEDULE)
    assert not rep.bounded["hessian_l2"]
    col = rep.column("hessian_l2")
    assert np.all(np.diff(col) > 0)
    assert rep.bounded["gradient_linf"]
