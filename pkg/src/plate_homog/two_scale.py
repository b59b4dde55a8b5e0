"""Periodic unfolding and mollification on uniform pixel grids.

A :class:`GridFunction` is piecewise constant on square pixels of side
``step``; pixel ``(i, j)`` covers ``[x0 + i step, x0 + (i+1) step) x
[y0 + j step, y0 + (j+1) step)`` and carries the value at its lower-left
node, so unfolding reproduces ``v(eps [x/eps] + eps y)`` exactly at the
grid nodes.  An optional boolean mask describes a
non-rectangular domain.  Unfolding maps ``v`` to
``T_eps v(x, y) = v(eps [x/eps] + eps y)`` on the eps-cells that lie inside
the domain and to zero on the cells that meet its boundary.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.signal import fftconvolve

from .errors import DomainTooSmall, IncommensurateGrid, ValidationError


def _ratio(a: float, b: float, what: str) -> int:
    r = a / b
    n = int(round(r))
    if n < 1 or abs(r - n) > 1e-9 * max(1.0, r):
        raise IncommensurateGrid(f"{what} must be a positive integer, got {r:.6g}")
    return n


@dataclass(frozen=True)
class GridFunction:
    """Pixel values ``values[i, j, ...]``; trailing axes are layers or components."""

    values: np.ndarray
    step: float
    origin: tuple = (0.0, 0.0)
    mask: np.ndarray | None = None

    def __post_init__(self) -> None:
        v = np.asarray(self.values, dtype=float)
        if v.ndim < 2 or min(v.shape[:2]) < 1:
            raise ValidationError("values need at least two grid axes")
        if not self.step > 0:
            raise ValidationError("step must be positive")
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "origin", tuple(float(o) for o in self.origin))
        if self.mask is not None:
            m = np.asarray(self.mask, dtype=bool)
            if m.shape != v.shape[:2]:
                raise ValidationError("mask must match the grid shape")
            object.__setattr__(self, "mask", m)

    @classmethod
    def sample(cls, f: Callable, n: int, extent=(0.0, 1.0, 0.0, 1.0), mask_fn: Callable | None = None) -> "GridFunction":
        """Sample ``f(x1, x2)`` at the pixel nodes of an ``n``-per-unit-length grid."""
        x0, x1, y0, y1 = extent
        step = 1.0 / n
        n1 = _ratio(x1 - x0, step, "x-extent / step")
        n2 = _ratio(y1 - y0, step, "y-extent / step")
        X, Y = cls.nodes_of(n1, n2, step, (x0, y0))
        mask = None if mask_fn is None else np.asarray(mask_fn(X, Y), dtype=bool)
        return cls(np.asarray(f(X, Y), dtype=float), step, (x0, y0), mask)

    @staticmethod
    def nodes_of(n1: int, n2: int, step: float, origin):
        xs = origin[0] + np.arange(n1) * step
        ys = origin[1] + np.arange(n2) * step
        return np.meshgrid(xs, ys, indexing="ij")

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape[:2]

    @property
    def full_mask(self) -> np.ndarray:
        return np.ones(self.shape, dtype=bool) if self.mask is None else self.mask

    def nodes(self):
        return self.nodes_of(*self.shape, self.step, self.origin)

    def integral(self) -> np.ndarray:
        m = self.full_mask
        return np.sum(self.values[m], axis=0) * self.step ** 2

    def l2_norm(self, region: np.ndarray | None = None) -> float:
        m = self.full_mask if region is None else region
        return float(math.sqrt(np.sum(self.values[m] ** 2) * self.step ** 2))


@dataclass(frozen=True)
class UnfoldedFunction:
    """Cell-indexed values ``values[a, b, k, l, ...]`` with in-cell pixel ``(k, l)``.

    ``cell_offset`` is the lattice index of cell ``(0, 0)``; ``interior`` flags
    cells fully inside the domain and ``boundary`` lists the cells meeting
    its boundary (the set Lambda_eps), on which the values are zero.
    """

    values: np.ndarray
    eps: float
    cell_offset: tuple
    interior: np.ndarray
    boundary: np.ndarray
    source: GridFunction = field(repr=False)

    @property
    def ratio(self) -> int:
        return self.values.shape[2]

    def at(self, x, y) -> np.ndarray:
        """``T_eps v(x, y)`` for points ``x`` in the plane and ``y`` in ``[0, 1)^2``."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        y = np.atleast_2d(np.asarray(y, dtype=float))
        cell = np.floor(x / self.eps).astype(int) - np.asarray(self.cell_offset)
        k = np.minimum((np.mod(y, 1.0) * self.ratio).astype(int), self.ratio - 1)
        nc = np.asarray(self.interior.shape)
        inside = np.all((cell >= 0) & (cell < nc), axis=1)
        out = np.zeros((len(x),) + self.values.shape[4:])
        c = cell[inside]
        out[inside] = self.values[c[:, 0], c[:, 1], k[inside, 0], k[inside, 1]]
        return out

    def integral(self) -> np.ndarray:
        """``int_{omega x Y} T_eps v`` computed cell by cell from in-cell means."""
        means = np.mean(self.values, axis=(2, 3))
        return np.sum(means[self.interior], axis=0) * self.eps ** 2

    def l2_norm(self) -> float:
        sq = np.mean(self.values ** 2, axis=(2, 3))
        return float(math.sqrt(np.sum(sq[self.interior]) * self.eps ** 2))


def _lattice_pad(v: GridFunction, r: int):
    """Pad the grid so it is a union of whole eps-cells of the lattice eps Z^2."""
    step = v.step
    o = [v.origin[0] / step, v.origin[1] / step]
    oi = [int(round(c)) for c in o]
    if any(abs(a - b) > 1e-9 * max(1.0, abs(a)) for a, b in zip(o, oi)):
        raise IncommensurateGrid("grid origin must lie on the step lattice")
    lead = [oi[0] % r, oi[1] % r]
    n1, n2 = v.shape
    tail = [(-(lead[0] + n1)) % r, (-(lead[1] + n2)) % r]
    pad = [(lead[0], tail[0]), (lead[1], tail[1])] + [(0, 0)] * (v.values.ndim - 2)
    vals = np.pad(v.values, pad)
    mask = np.pad(v.full_mask, pad[:2])
    offset = ((oi[0] - lead[0]) // r, (oi[1] - lead[1]) // r)
    return vals, mask, offset


def unfold(v: GridFunction, eps: float) -> UnfoldedFunction:
    r = _ratio(eps, v.step, "eps / step")
    n1, n2 = v.shape
    if eps > max(n1, n2) * v.step + 1e-12:
        raise IncommensurateGrid("eps exceeds the domain size")
    vals, mask, offset = _lattice_pad(v, r)
    c1, c2 = mask.shape[0] // r, mask.shape[1] // r
    rest = vals.shape[2:]
    cells = vals.reshape((c1, r, c2, r) + rest).swapaxes(1, 2)
    cmask = mask.reshape(c1, r, c2, r).swapaxes(1, 2)
    count = cmask.sum(axis=(2, 3))
    interior = count == r * r
    boundary_flag = (count > 0) & ~interior
    out = np.where(interior.reshape(c1, c2, 1, 1, *([1] * len(rest))), cells, 0.0)
    return UnfoldedFunction(out, float(eps), offset, interior, np.argwhere(boundary_flag), v)


def boundary_layer_integral(v: GridFunction, eps: float) -> np.ndarray:
    """``int_{Lambda_eps} v`` over the part of the boundary cells inside the domain."""
    r = _ratio(eps, v.step, "eps / step")
    vals, mask, _ = _lattice_pad(v, r)
    c1, c2 = mask.shape[0] // r, mask.shape[1] // r
    cmask = mask.reshape(c1, r, c2, r).swapaxes(1, 2)
    count = cmask.sum(axis=(2, 3))
    layer = (count > 0) & (count < r * r)
    pix = np.repeat(np.repeat(layer, r, axis=0), r, axis=1) & mask
    return np.sum(vals[pix], axis=0) * v.step ** 2


def integral_identity_check(v: GridFunction, eps: float) -> float:
    """``|int_omega v - int int T_eps v - int_{Lambda_eps} v|`` (max over components)."""
    u = unfold(v, eps)
    res = v.integral() - u.integral() - boundary_layer_integral(v, eps)
    return float(np.max(np.abs(res)))


def two_scale_error(g: Callable, rho: np.ndarray, eps: float, step: float) -> float:
    """``|| T_eps(g rho(./eps)) - g(x) rho(y) ||_{L2}`` on the unit square.

    ``rho`` holds pixel values of a Y-periodic function on a grid whose pixels
    match the grid pixels inside each eps-cell; ``x`` runs over the cell
    centres.
    """
    r = _ratio(eps, step, "eps / step")
    rho = np.asarray(rho, dtype=float)
    if rho.shape != (r, r):
        raise IncommensurateGrid("rho must have one value per in-cell pixel")
    n = _ratio(1.0, step, "1 / step")
    X, Y = GridFunction.nodes_of(n, n, step, (0.0, 0.0))
    v = GridFunction(g(X, Y) * np.tile(rho, (n // r, n // r)), step)
    u = unfold(v, eps)
    c = (np.arange(u.interior.shape[0]) + 0.5) * eps
    GX, GY = np.meshgrid(c, c, indexing="ij")
    target = g(GX, GY)[:, :, None, None] * rho[None, None]
    diff = (u.values - target)[u.interior]
    return float(math.sqrt(np.mean(diff ** 2) * np.sum(u.interior) * eps ** 2))


# ---------------------------------------------------------------- mollification

def bump(r) -> np.ndarray:
    """``exp(-1 / (1 - r^2))`` for ``r < 1`` and zero elsewhere (unnormalised)."""
    r = np.asarray(r, dtype=float)
    inside = r < 1.0
    out = np.zeros_like(r)
    out[inside] = np.exp(-1.0 / (1.0 - r[inside] ** 2))
    return out


def mollifier_kernel(h: float, step: float) -> np.ndarray:
    """Discrete ``phi_h`` on the grid offsets, normalised so ``sum phi_h step^2 = 1``."""
    if not h >= 2.0 * step * (1 - 1e-12):
        raise ValidationError("h must be at least two grid steps")
    R = int(math.floor(h / step))
    k = np.arange(-R, R + 1) * step
    K1, K2 = np.meshgrid(k, k, indexing="ij")
    phi = bump(np.hypot(K1, K2) / h)
    return phi / (np.sum(phi) * step * step)


def mollify(u: GridFunction, h: float) -> GridFunction:
    """Average over the third grid axis (if present) and convolve with ``phi_h``.

    Grids with more than two axes treat axis 2 as the transverse layers; any
    further axes are components.  The result lives on the pixels whose kernel
    footprint stays inside the domain.
    """
    vals = u.values
    if vals.ndim >= 3:
        vals = vals.mean(axis=2)
    K = mollifier_kernel(h, u.step)
    R = (K.shape[0] - 1) // 2
    n1, n2 = u.shape
    if n1 <= 2 * R or n2 <= 2 * R:
        raise DomainTooSmall("the mollified domain is empty")
    w = K * u.step * u.step
    comps = vals.reshape(n1, n2, -1)
    out = np.stack([fftconvolve(comps[..., c], w, mode="valid") for c in range(comps.shape[-1])], axis=-1)
    out = out.reshape(out.shape[:2] + vals.shape[2:])
    mask = None
    if u.mask is not None:
        support = (K > 0).astype(float)
        cover = fftconvolve(u.mask.astype(float), support, mode="valid")
        mask = cover > support.sum() - 0.5
        if not mask.any():
            raise DomainTooSmall("the mollified domain is empty")
    origin = (u.origin[0] + R * u.step, u.origin[1] + R * u.step)
    return GridFunction(out, u.step, origin, mask)


def transfer_factor(h: float, step: float, wavelength: float = 1.0) -> float:
    """Damping of ``cos(2 pi x1 / wavelength)`` by the discrete kernel."""
    K = mollifier_kernel(h, step)
    R = (K.shape[0] - 1) // 2
    k = np.arange(-R, R + 1) * step
    return float(np.sum(K.sum(axis=1) * np.cos(2 * np.pi * k / wavelength)) * step * step)


# ---------------------------------------------------------------- bending bounds

@dataclass(frozen=True)
class BendingBoundsRow:
    h: float
    h1_diff_over_h: float
    hessian_l2: float
    gradient_linf: float


@dataclass(frozen=True)
class BendingBoundsReport:
    rows: tuple
    bounded: dict

    @property
    def all_bounded(self) -> bool:
        return all(self.bounded.values())

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.rows])


BOUND_COLUMNS = ("h1_diff_over_h", "hessian_l2", "gradient_linf")


def _derivatives(vals: np.ndarray, step: float):
    g1 = np.gradient(vals, step, axis=0)
    g2 = np.gradient(vals, step, axis=1)
    return g1, g2


def bending_bounds_report(family: Callable[[float], GridFunction], schedule, ratio: float = 10.0,
                          atol: float = 1e-10) -> BendingBoundsReport:
    """The three quantities of the bending compactness bounds over an h schedule.

    ``family(h)`` returns samples of ``u_h`` on a grid over ``omega x I``
    with axes ``(x1, x2, x3, component)``.  A column counts as bounded when
    its largest value is at most ``ratio`` times its smallest (columns below
    ``atol`` are treated as zero).
    """
    rows = []
    for h in schedule:
        u = family(float(h))
        if u.values.ndim != 4:
            raise ValidationError("family must return values with axes (x1, x2, x3, component)")
        tilde = mollify(u, float(h))
        R = int(round((tilde.origin[0] - u.origin[0]) / u.step))
        n1, n2 = tilde.shape
        bar = u.values.mean(axis=2)[R:R + n1, R:R + n2]
        diff = tilde.values - bar
        d1, d2 = _derivatives(diff, u.step)
        a = u.step ** 2
        h1 = math.sqrt(np.sum(diff ** 2) * a + np.sum(d1 ** 2) * a + np.sum(d2 ** 2) * a)
        t1, t2 = _derivatives(tilde.values, u.step)
        t11, t12 = _derivatives(t1, u.step)
        _, t22 = _derivatives(t2, u.step)
        hess = math.sqrt(np.sum(t11 ** 2 + 2 * t12 ** 2 + t22 ** 2) * a)
        grad = float(np.max(np.sqrt(np.sum(t1 ** 2 + t2 ** 2, axis=-1))))
        rows.append(BendingBoundsRow(float(h), h1 / float(h), hess, grad))
    bounded = {}
    for name in BOUND_COLUMNS:
        col = np.array([getattr(r, name) for r in rows])
        lo, hi = float(np.min(col)), float(np.max(col))
        bounded[name] = hi <= atol or hi <= ratio * max(lo, atol)
    return BendingBoundsReport(tuple(rows), bounded)


def sample_deformation(deformation, n: int, layers: int = 4) -> GridFunction:
    """Samples of ``u_h`` at the pixel nodes and midpoint layers in ``x3``."""
    x0, x1, y0, y1 = deformation.domain
    step = 1.0 / n
    n1 = _ratio(x1 - x0, step, "x-extent / step")
    n2 = _ratio(y1 - y0, step, "y-extent / step")
    X, Y = GridFunction.nodes_of(n1, n2, step, (x0, y0))
    z = (np.arange(layers) + 0.5) / layers - 0.5
    xp = np.column_stack([X.ravel(), Y.ravel()])
    vals = np.stack([deformation.value(xp, np.full(len(xp), zz)).reshape(n1, n2, 3) for zz in z], axis=2)
    return GridFunction(vals, step, (x0, y0))
