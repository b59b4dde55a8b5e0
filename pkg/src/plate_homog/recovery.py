"""Recovery sequences and the rescaled three-dimensional plate energy.

Both constructions live on a single cylinder-type arm over the unit square:
the leading curve is straight with constant tangent ``T`` and the normal
curvature ``kappa`` is constant, so the mid-surface and its Darboux frame
are available in closed form.

* Moderate regime: ``u_h = u - eps^2 psi n + h x3 n_eps + h^2 x3^2 / 2 R d``
  with ``n_eps = n + eps (d_y1 psi d1u + d_y2 psi d2u)`` and ``R = (grad u | n)``.
* Supercritical regime: the tangent of the leading curve is tilted inside
  the ``(tau, n)`` plane by ``phi = eps kappa psi_T'``, which keeps the
  mid-surface exactly isometric, then thickness is added along the tilted
  normal.

:func:`energy_3d` integrates ``h^-2 int W(x'/eps, grad_h u_h)`` with tensor
Gauss rules on every (eps-cell x material subcell) block.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from ._core import svk_energy
from .cell_moderate import DEFAULT_MODES, PeriodicScalarField2, assemble_qhom_m, solve_cell_m
from .cell_supercritical import BendingTensor, Direction, classify_direction, solve_cell_sc
from .errors import ResolutionError, SqrtDomainError, ValidationError
from .geometry import Arm, canonical_frame
from .material import PeriodicMaterial, QuadraticForm2, q2_of, subcell_index, voigt2

MAX_POINTS = 20_000_000
_CHUNK = 400_000


# ---------------------------------------------------------------- base surface

def _sin_over(k: float, t):
    """``sin(k t) / k`` with the limit ``t`` at ``k = 0``."""
    return t * np.sinc(k * t / np.pi)


def _one_minus_cos_over(k: float, t):
    """``(1 - cos(k t)) / k`` with the limit ``0`` at ``k = 0``."""
    return t * np.sin(0.5 * k * t) * np.sinc(0.5 * k * t / np.pi)


@dataclass(frozen=True)
class CylinderSurface:
    """Isometry ``u(Gamma0 + t T + s N) = gamma(t) + s nu0`` with constant curvature ``kappa``.

    ``frame0`` holds ``(tau0, nu0, n0)`` as rows at ``t = 0``.
    """

    T: np.ndarray
    kappa: float
    start: np.ndarray
    frame0: np.ndarray
    origin: np.ndarray
    domain: tuple = (0.0, 1.0, 0.0, 1.0)

    def __post_init__(self) -> None:
        T = np.asarray(self.T, dtype=float)
        if T.shape != (2,) or not math.isclose(float(np.linalg.norm(T)), 1.0, rel_tol=0, abs_tol=1e-12):
            raise ValidationError("T must be a unit 2-vector")
        F = np.asarray(self.frame0, dtype=float)
        if F.shape != (3, 3) or np.max(np.abs(F @ F.T - np.eye(3))) > 1e-10 or np.linalg.det(F) <= 0:
            raise ValidationError("frame0 must be a right-handed orthonormal triad")
        x0, x1, y0, y1 = (float(v) for v in self.domain)
        if not (x0 < x1 and y0 < y1):
            raise ValidationError("domain must be (x_min, x_max, y_min, y_max) with positive extents")
        object.__setattr__(self, "T", T)
        object.__setattr__(self, "frame0", F)
        object.__setattr__(self, "start", np.asarray(self.start, dtype=float))
        object.__setattr__(self, "origin", np.asarray(self.origin, dtype=float))
        object.__setattr__(self, "domain", (x0, x1, y0, y1))

    @classmethod
    def unit_square(cls, T=(1.0, 0.0), kappa: float = 1.0) -> "CylinderSurface":
        T = np.asarray(T, dtype=float)
        T = T / np.linalg.norm(T)
        return cls(T, float(kappa), np.zeros(2), canonical_frame(T), np.zeros(3))

    @classmethod
    def from_arm(cls, arm: Arm, domain=(0.0, 1.0, 0.0, 1.0)) -> "CylinderSurface":
        c = arm.curve
        if not c.is_straight():
            raise ValidationError("recovery needs an arm with a straight leading curve")
        if np.max(np.abs(c.kappa_half - c.kappa_half[0])) > 1e-12:
            raise ValidationError("recovery needs constant normal curvature on the arm")
        return cls(c.tangent[0], float(c.kappa_half[0]), c.start, arm.frames.frames[0], arm.origin, domain)

    @property
    def N(self) -> np.ndarray:
        return np.array([-self.T[1], self.T[0]])

    @property
    def area(self) -> float:
        x0, x1, y0, y1 = self.domain
        return (x1 - x0) * (y1 - y0)

    @property
    def ii(self) -> np.ndarray:
        return -self.kappa * np.outer(self.T, self.T)

    def t_of(self, xp):
        return (np.asarray(xp, dtype=float) - self.start) @ self.T

    def s_of(self, xp):
        return (np.asarray(xp, dtype=float) - self.start) @ self.N

    def tau(self, t):
        a = self.kappa * np.asarray(t, dtype=float)[..., None]
        return np.cos(a) * self.frame0[0] + np.sin(a) * self.frame0[2]

    def normal(self, t):
        a = self.kappa * np.asarray(t, dtype=float)[..., None]
        return -np.sin(a) * self.frame0[0] + np.cos(a) * self.frame0[2]

    def gamma(self, t):
        t = np.asarray(t, dtype=float)[..., None]
        return self.origin + _sin_over(self.kappa, t) * self.frame0[0] + _one_minus_cos_over(self.kappa, t) * self.frame0[2]

    def value(self, xp):
        return self.gamma(self.t_of(xp)) + self.s_of(xp)[..., None] * self.frame0[1]

    def grad(self, xp):
        tau = self.tau(self.t_of(xp))
        nu = self.frame0[1]
        T, N = self.T, self.N
        return np.stack([T[0] * tau + N[0] * nu, T[1] * tau + N[1] * nu], axis=-1)


# ---------------------------------------------------------------- regimes

@dataclass(frozen=True)
class ScalingRegime:
    """``h = eps ** exponent``; moderate needs 1 < exponent < 2, supercritical exponent > 2."""

    kind: str
    exponent: float

    def __post_init__(self) -> None:
        kind = {"m": "moderate", "sc": "supercritical"}.get(self.kind, self.kind)
        if kind not in ("moderate", "supercritical"):
            raise ValidationError(f"unknown regime {self.kind!r}")
        a = float(self.exponent)
        if kind == "moderate" and not 1.0 < a < 2.0:
            raise ValidationError("moderate regime needs 1 < exponent < 2")
        if kind == "supercritical" and not a > 2.0:
            raise ValidationError("supercritical regime needs exponent > 2")
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "exponent", a)

    @classmethod
    def moderate(cls, exponent: float = 1.5) -> "ScalingRegime":
        return cls("moderate", exponent)

    @classmethod
    def supercritical(cls, exponent: float = 3.0) -> "ScalingRegime":
        return cls("supercritical", exponent)

    def h(self, eps: float) -> float:
        return float(eps) ** self.exponent


# ---------------------------------------------------------------- director fields

@dataclass(frozen=True)
class Director:
    """Local out-of-plane column ``a(y)`` given the local bending matrix ``B(y)``.

    ``kind`` is ``"minimizer"`` (the column realising Q2), ``"zero"`` or
    ``"constant"`` (``vector`` is used).  For the minimiser the column is
    linear in ``B`` with subcell-wise constant coefficients, so it is
    piecewise smooth and its y-gradient follows from ``dB``.
    """

    kind: str = "minimizer"
    vector: np.ndarray | None = None

    def evaluate(self, q2: QuadraticForm2 | None, y, B, dB):
        n = len(y)
        if self.kind == "zero":
            return np.zeros((n, 3)), np.zeros((n, 3, 2))
        if self.kind == "constant":
            v = np.asarray(self.vector, dtype=float)
            return np.tile(v, (n, 1)), np.zeros((n, 3, 2))
        if self.kind != "minimizer":
            raise ValidationError(f"unknown director kind {self.kind!r}")
        if q2 is None:
            raise ValidationError("the minimiser director needs the reduced form")
        i, j = subcell_index(y, q2.resolution)
        Mmap = q2.minimizer[i, j]
        a = np.einsum("nab,nb->na", Mmap, voigt2(B))
        dv = np.stack([voigt2(dB[..., c]) for c in range(2)], axis=-1)
        da = np.einsum("nab,nbc->nac", Mmap, dv)
        return a, da


def _as_director(d) -> Director:
    if d is None:
        return Director("minimizer")
    if isinstance(d, Director):
        return d
    if isinstance(d, str):
        return Director(d)
    return Director("constant", np.asarray(d, dtype=float))


# ---------------------------------------------------------------- deformations

@dataclass(frozen=True)
class PlateDeformation:
    """Evaluable plate deformation on ``omega x (-1/2, 1/2)``.

    ``grad_h(xp, x3)`` returns the rescaled gradient ``(d1 u, d2 u, h^-1 d3 u)``
    as an array ``(n, 3, 3)``.  A global rigid motion ``x -> Q x + b`` may be
    applied on top of the construction.
    """

    kind: str
    h: float
    eps: float
    surface: CylinderSurface | None
    _value: Callable = field(repr=False)
    _grad: Callable = field(repr=False)
    q2: QuadraticForm2 | None = field(default=None, repr=False)
    corrector: object = field(default=None, repr=False)
    director: Director | None = None
    frequency: float = 0.0
    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))
    domain: tuple = (0.0, 1.0, 0.0, 1.0)

    def value(self, xp, x3):
        xp = np.atleast_2d(np.asarray(xp, dtype=float))
        x3 = np.broadcast_to(np.asarray(x3, dtype=float), xp.shape[:1])
        return self._value(xp, x3) @ self.rotation.T + self.translation

    def grad_h(self, xp, x3):
        xp = np.atleast_2d(np.asarray(xp, dtype=float))
        x3 = np.broadcast_to(np.asarray(x3, dtype=float), xp.shape[:1])
        return np.einsum("ij,njk->nik", self.rotation, self._grad(xp, x3))

    def rotated(self, Q, b=(0.0, 0.0, 0.0)) -> "PlateDeformation":
        Q = np.asarray(Q, dtype=float)
        return replace(self, rotation=Q @ self.rotation, translation=Q @ self.translation + np.asarray(b, float))

    def midsurface_metric_defect(self, samples: int = 4096, seed: int = 0) -> float:
        """Max of ``|(grad' u)^T grad' u - I_2|`` for the mid-surface ``x3 = 0``."""
        rng = np.random.default_rng(seed)
        x0, x1, y0, y1 = self.domain
        xp = np.column_stack([rng.uniform(x0, x1, samples), rng.uniform(y0, y1, samples)])
        G = self.grad_h(xp, np.zeros(samples))[..., :2]
        D = np.einsum("nki,nkj->nij", G, G) - np.eye(2)
        return float(np.max(np.abs(D)))

    @classmethod
    def identity(cls, h: float, eps: float, domain=(0.0, 1.0, 0.0, 1.0)) -> "PlateDeformation":
        def value(xp, x3):
            return np.column_stack([xp, h * x3])

        def grad(xp, x3):
            return np.broadcast_to(np.eye(3), (len(xp), 3, 3)).copy()

        return cls("identity", float(h), float(eps), None, value, grad, domain=domain)


def _check_scales(h: float, eps: float) -> tuple[float, float]:
    h, eps = float(h), float(eps)
    if not (h > 0 and eps > 0):
        raise ValidationError("h and eps must be positive")
    return h, eps


def build_recovery_moderate(
    surface: CylinderSurface,
    psi: PeriodicScalarField2 | None,
    d,
    h: float,
    eps: float,
    q2: QuadraticForm2 | None = None,
) -> PlateDeformation:
    """Moderate-regime ansatz with corrector ``psi(y)`` and director column ``d``.

    ``d`` may be ``None``/``"minimizer"`` (needs ``q2``), ``"zero"``, a
    constant 3-vector (local frame) or a :class:`Director`.
    """
    h, eps = _check_scales(h, eps)
    scale = max(1.0, abs(surface.kappa))
    psi = PeriodicScalarField2.zero(0) if psi is None else psi.pruned(1e-13 * scale)
    director = _as_director(d)
    S = surface
    T, N, kap = S.T, S.N, S.kappa
    nu0 = S.frame0[1]
    TT = np.outer(T, T)
    II = S.ii

    def pieces(xp):
        t = S.t_of(xp)
        tau, nrm = S.tau(t), S.normal(t)
        du = np.stack([T[0] * tau + N[0] * nu0, T[1] * tau + N[1] * nu0], axis=-1)
        dn = -kap * np.einsum("a,ni->nia", T, tau)
        ddu = kap * np.einsum("ab,ni->niab", TT, nrm)
        return t, tau, nrm, du, dn, ddu

    def local(xp):
        y = xp / eps
        g = psi.gradient(y)
        H = psi.hessian(y)
        B = II + H
        a, da = director.evaluate(q2, y, B, psi.third(y))
        return y, g, H, a, da

    def value(xp, x3):
        t, tau, nrm, du, dn, ddu = pieces(xp)
        y, g, H, a, da = local(xp)
        p = psi.value(y)
        n_eps = nrm + eps * np.einsum("nia,na->ni", du, g)
        R = np.concatenate([du, nrm[..., None]], axis=-1)
        dvec = np.einsum("nij,nj->ni", R, a)
        return (S.value(xp) - eps * eps * p[:, None] * nrm + h * x3[:, None] * n_eps
                + 0.5 * h * h * (x3 * x3)[:, None] * dvec)

    def grad(xp, x3):
        t, tau, nrm, du, dn, ddu = pieces(xp)
        y, g, H, a, da = local(xp)
        p = psi.value(y)
        n_eps = nrm + eps * np.einsum("nia,na->ni", du, g)
        R = np.concatenate([du, nrm[..., None]], axis=-1)
        dvec = np.einsum("nij,nj->ni", R, a)
        dR = np.concatenate([ddu, dn[:, :, None, :]], axis=2)  # (n, 3, col, alpha)
        z = h * x3[:, None, None]
        q = 0.5 * h * h * (x3 * x3)[:, None, None]
        inplane = (du
                   - eps * np.einsum("ni,na->nia", nrm, g)
                   - eps * eps * p[:, None, None] * dn
                   + z * (dn + np.einsum("nib,nba->nia", du, H) + eps * np.einsum("nb,niab->nia", g, ddu))
                   + q * (np.einsum("nica,nc->nia", dR, a) + np.einsum("nij,nja->nia", R, da) / eps))
        third = n_eps + h * x3[:, None] * dvec
        return np.concatenate([inplane, third[..., None]], axis=-1)

    freq = float(np.max(np.abs(psi.waves))) if len(psi.waves) else 0.0
    return PlateDeformation("moderate", h, eps, S, value, grad, q2, psi, director, freq, domain=S.domain)


class _TiltIntegral:
    """``int_0^t tau_eps`` by Gauss rules on a grid aligned with the profile kinks."""

    _X, _W = np.polynomial.legendre.leggauss(10)

    def __init__(self, tilted: Callable, t_lo: float, t_hi: float, breaks: np.ndarray):
        lo, hi = min(t_lo, 0.0), max(t_hi, 0.0)
        nodes = np.unique(np.concatenate([[lo, hi, 0.0], breaks[(breaks > lo) & (breaks < hi)]]))
        self.nodes = nodes
        self.tilted = tilted
        a, b = nodes[:-1], nodes[1:]
        incr = self._segment(a, b)
        cum = np.concatenate([np.zeros((1, 3)), np.cumsum(incr, axis=0)])
        i0 = int(np.searchsorted(nodes, 0.0))
        self.cum = cum - cum[i0]

    def _segment(self, a, b):
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        mid, half = 0.5 * (a + b), 0.5 * (b - a)
        tq = mid[:, None] + half[:, None] * self._X[None, :]
        vals = self.tilted(tq.ravel()).reshape(tq.shape + (3,))
        return half[:, None] * np.einsum("nqi,q->ni", vals, self._W)

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        j = np.clip(np.searchsorted(self.nodes, t, side="right") - 1, 0, len(self.nodes) - 2)
        return self.cum[j] + self._segment(self.nodes[j], t)


def build_recovery_sc(
    surface: CylinderSurface,
    profile,
    d,
    h: float,
    eps: float,
    q2: QuadraticForm2 | None = None,
) -> PlateDeformation:
    """Supercritical ansatz with a tilted tangent and thickness along the tilted normal.

    ``profile`` is the one-dimensional corrector ``Psi`` with
    ``psi(y) = Psi(T.y)``, as returned by :func:`solve_cell_sc` (it contains
    the factor ``-kappa``), or ``None`` for no corrector.
    """
    h, eps = _check_scales(h, eps)
    S = surface
    T, N, kap = S.T, S.N, S.kappa
    nu0 = S.frame0[1]
    TT = np.outer(T, T)
    director = _as_director(d)
    if profile is None:
        from .profiles import TrigProfile
        profile = TrigProfile.zero()
    P = profile
    shift = float(S.start @ T)

    # largest |Psi'| over a period decides whether the tilt is admissible
    probe = np.linspace(0.0, P.period, 4097)
    dmax = float(np.max(np.abs(P.d1(probe)))) if getattr(P, "modes", 1) != 0 else 0.0
    if eps * dmax >= 1.0 - 1e-12:
        raise SqrtDomainError(f"eps |Psi'| reaches {eps * dmax:.3f}; the tilted tangent is undefined")

    def arg_of(t):
        return (t + shift) / eps

    def tilt(t):
        arg = arg_of(t)
        phi = -eps * P.d1(arg)
        c = np.sqrt(1.0 - phi * phi)
        return arg, phi, c

    def tilted_tangent(t):
        _, phi, c = tilt(t)
        return c[:, None] * S.tau(t) + phi[:, None] * S.normal(t)

    x0, x1, y0, y1 = S.domain
    corners = np.array([[x0, y0], [x0, y1], [x1, y0], [x1, y1]])
    tc = S.t_of(corners)
    t_lo, t_hi = float(tc.min()), float(tc.max())
    pieces = getattr(P, "pieces", None)
    if pieces:
        width = eps * P.period / pieces
        sub = 4
    else:
        nf = max(1.0, P.max_frequency() * P.period) if hasattr(P, "max_frequency") else 1.0
        width = eps * P.period / nf
        sub = 8
    k0 = math.floor((min(t_lo, 0.0) + shift) / width) - 1
    k1 = math.ceil((max(t_hi, 0.0) + shift) / width) + 1
    breaks = (np.arange(k0 * sub, k1 * sub + 1) / sub) * width - shift
    gamma_eps = _TiltIntegral(tilted_tangent, t_lo, t_hi, breaks)

    def frame(xp):
        t = S.t_of(xp)
        arg, phi, c = tilt(t)
        tau, nrm = S.tau(t), S.normal(t)
        tau_e = c[:, None] * tau + phi[:, None] * nrm
        n_e = c[:, None] * nrm - phi[:, None] * tau
        kap_e = kap - P.d2(arg) / c
        du = np.stack([T[0] * tau_e + N[0] * nu0, T[1] * tau_e + N[1] * nu0], axis=-1)
        return t, arg, tau_e, n_e, kap_e, du

    def director_terms(xp, arg, n_e, kap_e, du, tau_e):
        y = xp / eps
        # local bending matrix II + D^2 psi = -(kappa - Psi''(T.y)) T(x)T
        B = -(kap - P.d2(arg))[:, None, None] * TT
        dB = (P.d3(arg)[:, None, None, None] * TT[None, :, :, None]) * T[None, None, None, :]
        a, da = director.evaluate(q2, y, B, dB)
        R = np.concatenate([du, n_e[..., None]], axis=-1)
        return a, da, R

    def value(xp, x3):
        t, arg, tau_e, n_e, kap_e, du = frame(xp)
        a, _, R = director_terms(xp, arg, n_e, kap_e, du, tau_e)
        dvec = np.einsum("nij,nj->ni", R, a)
        mid = S.origin + gamma_eps(t) + S.s_of(xp)[:, None] * nu0
        return mid + h * x3[:, None] * n_e + 0.5 * h * h * (x3 * x3)[:, None] * dvec

    def grad(xp, x3):
        t, arg, tau_e, n_e, kap_e, du = frame(xp)
        a, da, R = director_terms(xp, arg, n_e, kap_e, du, tau_e)
        dvec = np.einsum("nij,nj->ni", R, a)
        dn = -np.einsum("n,a,ni->nia", kap_e, T, tau_e)
        ddu = np.einsum("n,ab,ni->niab", kap_e, TT, n_e)
        dR = np.concatenate([ddu, dn[:, :, None, :]], axis=2)
        z = h * x3[:, None, None]
        q = 0.5 * h * h * (x3 * x3)[:, None, None]
        inplane = du + z * dn + q * (np.einsum("nica,nc->nia", dR, a) + np.einsum("nij,nja->nia", R, da) / eps)
        third = n_e + h * x3[:, None] * dvec
        return np.concatenate([inplane, third[..., None]], axis=-1)

    # oscillation of the integrand in y, used to pick the quadrature subdivision
    if pieces:
        freq = float(pieces) / P.period
    elif hasattr(P, "max_frequency"):
        freq = P.max_frequency()
    else:
        freq = 0.0
    return PlateDeformation("supercritical", h, eps, S, value, grad, q2, P, director, freq, domain=S.domain)


# ---------------------------------------------------------------- quadrature

@dataclass(frozen=True)
class QuadSpec:
    """Gauss orders and the number of pieces each material subcell is split into."""

    inplane: int = 4
    transverse: int = 4
    subdivisions: int | None = None
    refine: bool = True
    max_points: int = MAX_POINTS


@dataclass(frozen=True)
class EnergyResult:
    value: float
    error_estimate: float
    points: int
    subdivisions: int

    def __float__(self) -> float:
        return self.value


def _axis_rule(lo: float, hi: float, eps: float, m: int, sub: int, order: int):
    cells = (hi - lo) / eps
    nc = int(round(cells))
    if nc < 1 or not math.isclose(cells, nc, rel_tol=0, abs_tol=1e-9):
        raise ResolutionError("eps-cells must tile the domain exactly")
    x, w = np.polynomial.legendre.leggauss(order)
    pieces = nc * m * sub
    edges = lo + (hi - lo) * np.arange(pieces + 1) / pieces
    a, b = edges[:-1], edges[1:]
    nodes = (0.5 * (a + b))[:, None] + (0.5 * (b - a))[:, None] * x[None, :]
    weights = (0.5 * (b - a))[:, None] * w[None, :]
    return nodes.ravel(), weights.ravel()


def _integrate(material: PeriodicMaterial, deformation: PlateDeformation, spec: QuadSpec, sub: int) -> tuple[float, int]:
    eps, h = deformation.eps, deformation.h
    m = material.resolution
    x0, x1, y0, y1 = deformation.domain
    xs, wx = _axis_rule(x0, x1, eps, m, sub, spec.inplane)
    ys, wy = _axis_rule(y0, y1, eps, m, sub, spec.inplane)
    zs, wz = np.polynomial.legendre.leggauss(spec.transverse)
    zs, wz = 0.5 * zs, 0.5 * wz
    total = len(xs) * len(ys) * len(zs)
    if total > spec.max_points:
        raise ResolutionError(f"{total} quadrature points exceed the desk-scale cap {spec.max_points}")
    rows = max(1, _CHUNK // (len(ys) * len(zs)))
    parts = []
    for r0 in range(0, len(xs), rows):
        X, Y, Z = np.meshgrid(xs[r0:r0 + rows], ys, zs, indexing="ij")
        Wt = (wx[r0:r0 + rows, None, None] * wy[None, :, None] * wz[None, None, :]).ravel()
        xp = np.column_stack([X.ravel(), Y.ravel()])
        F = deformation.grad_h(xp, Z.ravel())
        mu, lam = material.lame_at(xp / eps)
        parts.append(np.sum(Wt * svk_energy(F, mu, lam)))
    return float(np.sum(parts)) / (h * h), total


def energy_3d(material: PeriodicMaterial, deformation: PlateDeformation, quad: QuadSpec | None = None) -> EnergyResult:
    """``h^-2 int_Omega W(x'/eps, grad_h u_h) dx`` with a one-level refinement error estimate."""
    spec = quad or QuadSpec()
    m = material.resolution
    need = math.ceil(8 / (m * spec.inplane))
    osc = math.ceil(deformation.frequency / m) if deformation.frequency else 0
    sub = spec.subdivisions if spec.subdivisions is not None else max(1, need, osc)
    if m * sub * spec.inplane < 8:
        raise ResolutionError("fewer than 8 quadrature points per eps-cell and axis")
    value, points = _integrate(material, deformation, spec, sub)
    err = float("nan")
    if spec.refine:
        fine, more = _integrate(material, deformation, spec, 2 * sub)
        err = abs(fine - value)
        value, points = fine, points + more
    return EnergyResult(value, err, points, sub)


# ---------------------------------------------------------------- convergence study

@dataclass(frozen=True)
class RecoveryCase:
    """Material, cylinder and corrector choices for a convergence run."""

    material: PeriodicMaterial
    surface: CylinderSurface
    corrector: str = "solve"  # "solve" or "zero"
    director: str = "minimizer"
    modes: int = DEFAULT_MODES
    direction: Direction | None = None


@dataclass(frozen=True)
class ConvergenceRow:
    eps: float
    h: float
    energy: float
    target: float
    rel_error: float
    quad_error: float

    def as_dict(self) -> dict:
        return dict(eps=self.eps, h=self.h, energy=self.energy, target=self.target,
                    rel_error=self.rel_error, quad_error=self.quad_error)


@dataclass(frozen=True)
class ConvergenceTable:
    regime: ScalingRegime
    rows: tuple

    @property
    def improved(self) -> bool:
        return len(self.rows) < 2 or self.rows[-1].rel_error < self.rows[0].rel_error


def _direction_of(case: RecoveryCase) -> Direction:
    if case.direction is not None:
        return case.direction
    T = case.surface.T
    for p, q in ((1, 0), (0, 1)):
        if np.allclose(T, (p, q), atol=1e-12):
            return classify_direction(p, q)
    return classify_direction(angle=math.atan2(T[1], T[0]))


def recovery_deformation(case: RecoveryCase, regime: ScalingRegime, eps: float, ansatz: str | None = None):
    """Deformation for one ``eps`` together with the target limit energy."""
    q2 = q2_of(case.material)
    S = case.surface
    h = regime.h(eps)
    ansatz = ansatz or regime.kind
    if ansatz == "moderate":
        if case.corrector == "solve":
            psi = solve_cell_m(q2, S.ii, case.modes).corrector
        else:
            psi = None
        target = assemble_qhom_m(q2, case.modes)(S.ii) * S.area / 12.0
        dfm = build_recovery_moderate(S, psi, case.director, h, eps, q2)
    elif ansatz == "supercritical":
        direction = _direction_of(case)
        sol = solve_cell_sc(q2, BendingTensor(direction, S.kappa), case.modes)
        prof = sol.corrector if case.corrector == "solve" else None
        target = sol.energy * S.area / 12.0
        dfm = build_recovery_sc(S, prof, case.director, h, eps, q2)
    else:
        raise ValidationError(f"unknown ansatz {ansatz!r}")
    return dfm, target


def convergence_study(regime: ScalingRegime, case: RecoveryCase, schedule, quad: QuadSpec | None = None,
                      ansatz: str | None = None) -> ConvergenceTable:
    """``h^-2 E_h`` of the recovery ansatz over a decreasing eps schedule."""
    eps_list = [float(e) for e in schedule]
    if not eps_list or any(b >= a for a, b in zip(eps_list, eps_list[1:])):
        raise ValidationError("eps schedule must be nonempty and strictly decreasing")
    rows = []
    for eps in eps_list:
        dfm, target = recovery_deformation(case, regime, eps, ansatz)
        res = energy_3d(case.material, dfm, quad)
        denom = abs(target) if target != 0 else 1.0
        rel = abs(res.value - target) / denom if target != 0 else abs(res.value)
        rows.append(ConvergenceRow(eps, dfm.h, res.value, target, rel, res.error_estimate))
    return ConvergenceTable(regime, tuple(rows))
