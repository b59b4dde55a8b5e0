"""Developable isometric surfaces generated by leading curves.

An arm is parametrised by arclength ``t`` along a planar leading curve
``Gamma`` (unit tangent ``T``, in-plane normal ``N = (-T2, T1)``) and by the
distance ``s`` along the ruling segment: ``x' = Gamma(t) + s N(t)``.  Its image
is ``u = gamma(t) + s nu(t)`` where ``gamma' = tau`` and the frame
``(tau, nu, n)`` solves

    tau' = kg nu + k n,   nu' = -kg tau,   n' = -k tau,

with ``kg`` the curvature of ``Gamma`` and ``k`` the normal curvature of the
image.  Then ``grad u = (T1 tau - T2 nu, T2 tau + T1 nu)`` and the second
fundamental form is ``-k / (1 - s kg) T (x) T``.
"""

from __future__ import annotations

import math
from bisect import bisect_right
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable

import numpy as np

from ._core import darboux_rk4
from .errors import JacobianSignError, LevelTooDeep, StepTooLarge, ValidationError
from .material import QuadraticForm2

DRIFT_LIMIT = 1e-6
CANTOR_CONSTANT = 4.0 * math.pi * math.sqrt(2.0 / 3.0)
MAX_CANTOR_LEVEL = 12


# ---------------------------------------------------------------- leading curves

@dataclass(frozen=True)
class LeadingCurve:
    """Samples of a planar arclength-parametrised curve at half steps of ``dt``.

    Arrays with suffix ``_half`` have length ``2 * steps + 1``; even entries
    are the nodes ``t_i = i dt``.
    """

    dt: float
    tangent_half: np.ndarray
    kappa_gamma_half: np.ndarray
    kappa_half: np.ndarray
    start: np.ndarray = field(default_factory=lambda: np.zeros(2))
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self) -> None:
        T = np.asarray(self.tangent_half, dtype=float)
        kg = np.asarray(self.kappa_gamma_half, dtype=float)
        k = np.asarray(self.kappa_half, dtype=float)
        if T.ndim != 2 or T.shape[1] != 2 or len(T) < 3 or len(T) % 2 == 0:
            raise ValidationError("tangent samples must have shape (2 steps + 1, 2)")
        if kg.shape != (len(T),) or k.shape != (len(T),):
            raise ValidationError("curvature samples must match the tangent samples")
        if not (self.dt > 0 and np.all(np.isfinite(T)) and np.all(np.isfinite(kg)) and np.all(np.isfinite(k))):
            raise ValidationError("curve samples must be finite with a positive step")
        if np.max(np.abs(np.hypot(T[:, 0], T[:, 1]) - 1.0)) > 1e-12:
            raise ValidationError("tangent samples must be unit vectors to 1e-12")
        object.__setattr__(self, "tangent_half", T)
        object.__setattr__(self, "kappa_gamma_half", kg)
        object.__setattr__(self, "kappa_half", k)
        object.__setattr__(self, "start", np.asarray(self.start, dtype=float))
        # Gamma at the nodes by Simpson's rule on the half-step tangents
        incr = self.dt / 6.0 * (T[0:-1:2] + 4.0 * T[1::2] + T[2::2])
        pts = self.start + np.concatenate([np.zeros((1, 2)), np.cumsum(incr, axis=0)])
        object.__setattr__(self, "_points", pts)

    @classmethod
    def from_functions(
        cls,
        tangent: Callable[[np.ndarray], np.ndarray],
        kappa_gamma: Callable[[np.ndarray], np.ndarray],
        kappa: Callable[[np.ndarray], np.ndarray],
        length: float,
        dt: float,
        start=(0.0, 0.0),
        meta: dict | None = None,
    ) -> "LeadingCurve":
        steps = max(1, int(round(length / dt)))
        if not math.isclose(steps * dt, length, rel_tol=1e-9):
            raise ValidationError("length must be an integer multiple of dt")
        th = np.linspace(0.0, steps * dt, 2 * steps + 1)
        T = np.asarray(tangent(th), dtype=float)
        T = T / np.hypot(T[:, 0], T[:, 1])[:, None]
        meta = dict(meta or {})
        meta.setdefault("functions", (tangent, kappa_gamma, kappa))
        return cls(dt, T, np.broadcast_to(kappa_gamma(th), th.shape).astype(float),
                   np.broadcast_to(kappa(th), th.shape).astype(float), np.asarray(start, float), meta)

    @classmethod
    def straight(cls, direction, kappa: float | Callable = 0.0, length: float = 1.0, dt: float = 1e-3,
                 start=(0.0, 0.0)) -> "LeadingCurve":
        d = np.asarray(direction, dtype=float)
        d = d / np.linalg.norm(d)
        kfun = kappa if callable(kappa) else (lambda t: np.full_like(t, float(kappa)))
        return cls.from_functions(lambda t: np.tile(d, (len(t), 1)), lambda t: np.zeros_like(t), kfun,
                                  length, dt, start)

    @classmethod
    def arc(cls, curvature: float, kappa: float = 0.0, length: float = 1.0, dt: float = 1e-3,
            start=(0.0, 0.0), angle0: float = 0.0) -> "LeadingCurve":
        """Circle arc of constant curvature starting with tangent angle ``angle0``."""
        def tangent(t):
            a = angle0 + curvature * t
            return np.stack([np.cos(a), np.sin(a)], axis=1)
        return cls.from_functions(tangent, lambda t: np.full_like(t, float(curvature)),
                                  lambda t: np.full_like(t, float(kappa)), length, dt, start)

    @property
    def steps(self) -> int:
        return (len(self.tangent_half) - 1) // 2

    @property
    def length(self) -> float:
        return self.steps * self.dt

    @property
    def t(self) -> np.ndarray:
        return np.arange(self.steps + 1) * self.dt

    @property
    def tangent(self) -> np.ndarray:
        return self.tangent_half[::2]

    @property
    def normal(self) -> np.ndarray:
        T = self.tangent
        return np.stack([-T[:, 1], T[:, 0]], axis=1)

    @property
    def kappa_gamma(self) -> np.ndarray:
        return self.kappa_gamma_half[::2]

    @property
    def kappa(self) -> np.ndarray:
        return self.kappa_half[::2]

    @property
    def points(self) -> np.ndarray:
        return self._points

    def is_straight(self, tol: float = 1e-12) -> bool:
        T = self.tangent_half
        return bool(np.max(np.abs(T - T[0])) <= tol and np.max(np.abs(self.kappa_gamma_half)) <= tol)


def _node_derivative(half: np.ndarray, dt: float) -> np.ndarray:
    """Derivative at the nodes from half-step samples (second order)."""
    h = dt / 2.0
    d = np.empty(len(half) // 2 + 1)
    d[1:-1] = (half[3::2] - half[1:-2:2]) / (2.0 * h)
    d[0] = (-3.0 * half[0] + 4.0 * half[1] - half[2]) / (2.0 * h)
    d[-1] = (3.0 * half[-1] - 4.0 * half[-2] + half[-3]) / (2.0 * h)
    return d


# ---------------------------------------------------------------- frames

@dataclass(frozen=True)
class DarbouxFrames:
    """Frames at the curve nodes, ``frames[i] = (tau, nu, n)`` as rows."""

    frames: np.ndarray
    drift: np.ndarray

    @property
    def tau(self) -> np.ndarray:
        return self.frames[:, 0]

    @property
    def nu(self) -> np.ndarray:
        return self.frames[:, 1]

    @property
    def n(self) -> np.ndarray:
        return self.frames[:, 2]

    @property
    def max_drift(self) -> float:
        return float(np.max(self.drift)) if len(self.drift) else 0.0

    def gram_defect(self) -> float:
        G = np.einsum("nic,njc->nij", self.frames, self.frames) - np.eye(3)
        return float(np.max(np.abs(G)))


def canonical_frame(T0) -> np.ndarray:
    """Frame of the flat embedding: tau = (T, 0), nu = (N, 0), n = e3."""
    T0 = np.asarray(T0, dtype=float)
    return np.array([[T0[0], T0[1], 0.0], [-T0[1], T0[0], 0.0], [0.0, 0.0, 1.0]])


def integrate_darboux(curve: LeadingCurve, initial_frame=None) -> DarbouxFrames:
    """Classical RK4 with nearest-rotation projection after every step."""
    X0 = canonical_frame(curve.tangent[0]) if initial_frame is None else np.asarray(initial_frame, float)
    if X0.shape != (3, 3) or np.max(np.abs(X0 @ X0.T - np.eye(3))) > 1e-10:
        raise ValidationError("initial frame must be orthonormal")
    if np.linalg.det(X0) <= 0:
        raise ValidationError("initial frame must be right-handed")
    frames, drift = darboux_rk4(curve.kappa_gamma_half, curve.kappa_half, curve.dt, X0)
    bad = ~(drift <= DRIFT_LIMIT)
    if np.any(bad):
        i = int(np.argmax(bad))
        raise StepTooLarge(f"frame drift {drift[i]:.3e} at step {i} exceeds {DRIFT_LIMIT:g}")
    return DarbouxFrames(frames, drift)


# ---------------------------------------------------------------- interpolation

def _quintic_hermite(dt: float, idx: np.ndarray, u: np.ndarray, v, d1, d2):
    """Quintic Hermite interpolant on node intervals.

    ``v, d1, d2`` hold node values and derivatives (leading axis = node).
    ``idx`` selects the interval, ``u in [0, 1]`` the position.  Returns value
    and first and second derivatives with respect to the physical variable.
    """
    u = np.asarray(u, dtype=float)
    shape = u.shape + (1,) * (np.ndim(v) - 1)
    u = u.reshape(shape)
    h = dt
    u2, u3, u4, u5 = u * u, u ** 3, u ** 4, u ** 5
    H0 = 1 - 10 * u3 + 15 * u4 - 6 * u5
    H1 = u - 6 * u3 + 8 * u4 - 3 * u5
    H2 = 0.5 * (u2 - 3 * u3 + 3 * u4 - u5)
    H3 = 10 * u3 - 15 * u4 + 6 * u5
    H4 = -4 * u3 + 7 * u4 - 3 * u5
    H5 = 0.5 * (u3 - 2 * u4 + u5)
    dH0 = -30 * u2 + 60 * u3 - 30 * u4
    dH1 = 1 - 18 * u2 + 32 * u3 - 15 * u4
    dH2 = 0.5 * (2 * u - 9 * u2 + 12 * u3 - 5 * u4)
    dH3 = -dH0
    dH4 = -12 * u2 + 28 * u3 - 15 * u4
    dH5 = 0.5 * (3 * u2 - 8 * u3 + 5 * u4)
    ddH0 = -60 * u + 180 * u2 - 120 * u3
    ddH1 = -36 * u + 96 * u2 - 60 * u3
    ddH2 = 0.5 * (2 - 18 * u + 36 * u2 - 20 * u3)
    ddH3 = -ddH0
    ddH4 = -24 * u + 84 * u2 - 60 * u3
    ddH5 = 0.5 * (6 * u - 24 * u2 + 20 * u3)
    a, b = idx, idx + 1
    va, vb = v[a], v[b]
    pa, pb = d1[a] * h, d1[b] * h
    qa, qb = d2[a] * h * h, d2[b] * h * h
    val = H0 * va + H1 * pa + H2 * qa + H3 * vb + H4 * pb + H5 * qb
    der = (dH0 * va + dH1 * pa + dH2 * qa + dH3 * vb + dH4 * pb + dH5 * qb) / h
    sec = (ddH0 * va + ddH1 * pa + ddH2 * qa + ddH3 * vb + ddH4 * pb + ddH5 * qb) / (h * h)
    return val, der, sec


# ---------------------------------------------------------------- surfaces

@dataclass(frozen=True)
class Arm:
    curve: LeadingCurve
    frames: DarbouxFrames
    s_range: tuple[float, float]
    origin: np.ndarray
    direction: object = None

    def __post_init__(self) -> None:
        c, F = self.curve, self.frames
        tau, nu, n = F.tau, F.nu, F.n
        kg, k = c.kappa_gamma[:, None], c.kappa[:, None]
        dkg = _node_derivative(c.kappa_gamma_half, c.dt)[:, None]
        dk = _node_derivative(c.kappa_half, c.dt)[:, None]
        tau1 = kg * nu + k * n
        nu1 = -kg * tau
        n1 = -k * tau
        tau2 = dkg * nu + kg * nu1 + dk * n + k * n1
        nu2 = -dkg * tau - kg * tau1
        n2 = -dk * tau - k * tau1
        # gamma at the nodes: Hermite-corrected trapezoid (fourth order)
        h = c.dt
        incr = 0.5 * h * (tau[:-1] + tau[1:]) + h * h / 12.0 * (tau1[:-1] - tau1[1:])
        gamma = self.origin + np.concatenate([np.zeros((1, 3)), np.cumsum(incr, axis=0)])
        object.__setattr__(self, "_data", {
            "gamma": (gamma, tau, tau1), "tau": (tau, tau1, tau2),
            "nu": (nu, nu1, nu2), "n": (n, n1, n2),
        })

    @property
    def gamma_nodes(self) -> np.ndarray:
        return self._data["gamma"][0]

    def _locate(self, t):
        t = np.asarray(t, dtype=float)
        c = self.curve
        x = np.clip(t / c.dt, 0.0, c.steps)
        idx = np.minimum(np.floor(x).astype(np.intp), c.steps - 1)
        return idx, x - idx

    def field(self, name: str, t):
        """Interpolated ``gamma``, ``tau``, ``nu`` or ``n`` with two derivatives."""
        idx, u = self._locate(t)
        v, d1, d2 = self._data[name]
        return _quintic_hermite(self.curve.dt, idx, u, v, d1, d2)

    def planar(self, t):
        """Gamma, T and kappa_gamma at arbitrary ``t``.

        T and kappa_gamma come from the generating functions when the curve
        carries them, otherwise from Hermite and linear interpolation.
        """
        c = self.curve
        t = np.asarray(t, dtype=float)
        idx, u = self._locate(t)
        T = c.tangent
        N = c.normal
        kg = c.kappa_gamma[:, None]
        dkg = _node_derivative(c.kappa_gamma_half, c.dt)[:, None]
        G, _, _ = _quintic_hermite(c.dt, idx, u, c.points, T, kg * N)
        fns = c.meta.get("functions")
        if fns is not None:
            flat = t.reshape(-1)
            Tt = np.asarray(fns[0](flat), dtype=float).reshape(t.shape + (2,))
            Tt = Tt / np.linalg.norm(Tt, axis=-1, keepdims=True)
            kgt = np.broadcast_to(fns[1](flat), flat.shape).reshape(t.shape).astype(float)
            return G, Tt, kgt
        Tt, _, _ = _quintic_hermite(c.dt, idx, u, T, kg * N, dkg * N - kg * kg * T)
        Tt = Tt / np.linalg.norm(Tt, axis=-1, keepdims=True)
        kgt = np.interp(t, np.linspace(0, c.length, len(c.kappa_gamma_half)), c.kappa_gamma_half)
        return G, Tt, kgt

    def kappa_at(self, t):
        c = self.curve
        t = np.asarray(t, dtype=float)
        fns = c.meta.get("functions")
        if fns is not None:
            flat = t.reshape(-1)
            return np.broadcast_to(fns[2](flat), flat.shape).reshape(t.shape).astype(float)
        return np.interp(t, np.linspace(0, c.length, len(c.kappa_half)), c.kappa_half)

    def xprime(self, t, s):
        G, T, _ = self.planar(t)
        N = np.stack([-T[..., 1], T[..., 0]], axis=-1)
        return G + np.asarray(s, float)[..., None] * N

    def u(self, t, s):
        g, _, _ = self.field("gamma", t)
        nu, _, _ = self.field("nu", t)
        return g + np.asarray(s, float)[..., None] * nu

    def grad_u_formula(self, t):
        """Columns ``T1 tau - T2 nu`` and ``T2 tau + T1 nu`` (3 x 2 per point)."""
        _, T, _ = self.planar(t)
        tau, _, _ = self.field("tau", t)
        nu, _, _ = self.field("nu", t)
        c1 = T[..., :1] * tau - T[..., 1:] * nu
        c2 = T[..., 1:] * tau + T[..., :1] * nu
        return np.stack([c1, c2], axis=-1)

    def grad_u_chain(self, t, s):
        """``grad u`` from the parametrisation derivatives and the Jacobian of (t, s) -> x'."""
        s = np.asarray(s, dtype=float)
        _, dg, _ = self.field("gamma", t)
        nu, dnu, _ = self.field("nu", t)
        du_dt = dg + s[..., None] * dnu
        du_ds = nu
        _, T, kg = self.planar(t)
        N = np.stack([-T[..., 1], T[..., 0]], axis=-1)
        J = np.stack([(1.0 - s * kg)[..., None] * T, N], axis=-1)  # columns dx'/dt, dx'/ds
        P = np.stack([du_dt, du_ds], axis=-1)
        return P @ np.linalg.inv(J)

    def ii_coefficient(self, t, s):
        """``c`` in ``II = -c T (x) T``, i.e. ``k / (1 - s kg)``."""
        _, _, kg = self.planar(t)
        return self.kappa_at(t) / (1.0 - np.asarray(s, float) * kg)

    def second_fundamental_form(self, t, s):
        _, T, _ = self.planar(t)
        c = self.ii_coefficient(t, s)
        return -c[..., None, None] * np.einsum("...i,...j->...ij", T, T)


@dataclass(frozen=True)
class Body:
    """Affine piece ``u(x') = R (x', 0) + b``; contributes no bending energy."""

    area: float
    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def u(self, x):
        x = np.asarray(x, dtype=float)
        x3 = np.concatenate([x, np.zeros(x.shape[:-1] + (1,))], axis=-1)
        return x3 @ np.asarray(self.rotation).T + self.translation


@dataclass
class DevelopableSurface:
    pieces: list = field(default_factory=list)

    @property
    def arms(self) -> list[Arm]:
        return [p for p in self.pieces if isinstance(p, Arm)]

    def append_arm(self, curve: LeadingCurve, s_range, direction=None) -> Arm:
        """Glue a new arm to the end of the last one (frame and position continue)."""
        prev = self.arms[-1] if self.arms else None
        if prev is None:
            arm = _make_arm(curve, None, s_range, np.zeros(3), direction)
        else:
            end = prev.curve.points[-1]
            if np.max(np.abs(curve.start - end)) > 1e-9:
                raise ValidationError("leading curve must start where the previous arm ends")
            if np.max(np.abs(curve.tangent[0] - prev.curve.tangent[-1])) > 1e-9:
                raise ValidationError("leading curve tangent must be continuous across arms")
            arm = _make_arm(curve, prev.frames.frames[-1], s_range, prev.gamma_nodes[-1], direction)
        self.pieces.append(arm)
        return arm

    def interface_gap(self, samples: int = 33) -> float:
        arms = self.arms
        worst = 0.0
        for a, b in zip(arms, arms[1:]):
            lo = max(a.s_range[0], b.s_range[0])
            hi = min(a.s_range[1], b.s_range[1])
            s = np.linspace(lo, hi, samples)
            ua = a.u(np.full_like(s, a.curve.length), s)
            ub = b.u(np.zeros_like(s), s)
            worst = max(worst, float(np.max(np.abs(ua - ub))))
        return worst


def _make_arm(curve, frame0, s_range, origin, direction) -> Arm:
    frames = integrate_darboux(curve, frame0)
    return build_surface(curve, frames, s_range, origin=origin, direction=direction).pieces[0]


def build_surface(curve: LeadingCurve, frames: DarbouxFrames, s_range, origin=None, direction=None) -> DevelopableSurface:
    """Single-arm surface ``u(t, s) = gamma(t) + s nu(t)`` over ``s in s_range``."""
    s0, s1 = (float(v) for v in s_range)
    if not s0 < s1:
        raise ValidationError("s_range must be an increasing pair")
    if len(frames.frames) != curve.steps + 1:
        raise ValidationError("frames do not match the curve nodes")
    kg = curve.kappa_gamma_half
    jac = np.minimum(1.0 - s0 * kg, 1.0 - s1 * kg)
    if np.min(jac) <= 0:
        i = int(np.argmin(jac))
        raise JacobianSignError(f"1 - s kappa_gamma = {jac[i]:.3e} <= 0 at t = {i * curve.dt / 2:.6g}")
    org = np.zeros(3) if origin is None else np.asarray(origin, float)
    if origin is None:
        org[:2] = curve.start
    arm = Arm(curve, frames, (s0, s1), org, direction)
    return DevelopableSurface([arm])


def _sample_ts(arm: Arm, samples: int, seed: int = 0, on_nodes: bool = True):
    n = max(2, int(math.isqrt(max(samples, 4))))
    rng = np.random.default_rng(seed)
    g = (np.arange(n)[:, None] + rng.random((n, n))) / n
    t = (np.arange(n)[None, :] + rng.random((n, n))) / n * arm.curve.length
    if on_nodes:
        t = np.round(t / arm.curve.dt) * arm.curve.dt
    s = arm.s_range[0] + g * (arm.s_range[1] - arm.s_range[0])
    return t.ravel(), s.ravel()


def isometry_defect(surface: DevelopableSurface, samples: int = 10_000, seed: int = 0,
                    between_nodes: bool = False) -> float:
    """Max of ``|grad u^T grad u - I|`` over jittered ``(t, s)`` samples.

    ``grad u`` is assembled from the derivatives of the parametrisation and the
    inverse Jacobian of ``(t, s) -> x'``.  By default ``t`` is snapped to the
    integration nodes, which measures the frame integrator; ``between_nodes``
    also exercises the interpolation.
    """
    worst = 0.0
    for arm in surface.arms:
        t, s = _sample_ts(arm, samples, seed, on_nodes=not between_nodes)
        G = arm.grad_u_chain(t, s)
        D = np.einsum("pki,pkj->pij", G, G) - np.eye(2)
        worst = max(worst, float(np.max(np.abs(D))))
    return worst


def orientation_defect(surface: DevelopableSurface, samples: int = 2_000) -> float:
    """Max of ``|tau x nu - d1u x d2u|``: the sign convention check for ``n``."""
    worst = 0.0
    for arm in surface.arms:
        t, _ = _sample_ts(arm, samples)
        G = arm.grad_u_formula(t)
        n, _, _ = arm.field("n", t)
        cross = np.cross(G[..., 0], G[..., 1])
        worst = max(worst, float(np.max(np.abs(cross - n))))
    return worst


# ---------------------------------------------------------------- Lipschitz check

@dataclass(frozen=True)
class LipschitzReport:
    worst_ratio: float
    worst_excess: float
    pairs: int
    max_kappa_gamma: float

    @property
    def passed(self) -> bool:
        return self.worst_excess <= 0.0


def lipschitz_check(curve: LeadingCurve, domain, samples: int = 400, tol: float = 1e-9) -> LipschitzReport:
    """Ratios ``|N(t) - N(t')| / |Gamma(t) - Gamma(t')|`` against ``1 / dist(., boundary)``.

    ``domain = (x_min, x_max, y_min, y_max)``.  ``worst_excess`` is the largest
    amount by which a ratio exceeds the bound of the nearer-to-boundary point.
    """
    x0, x1, y0, y1 = (float(v) for v in domain)
    idx = np.unique(np.linspace(0, curve.steps, min(samples, curve.steps + 1)).round().astype(int))
    P = curve.points[idx]
    N = curve.normal[idx]
    dist = np.minimum.reduce([P[:, 0] - x0, x1 - P[:, 0], P[:, 1] - y0, y1 - P[:, 1]])
    if np.any(dist < -1e-12):
        raise ValidationError("curve leaves the domain")
    i, j = np.triu_indices(len(P), k=1)
    dG = np.linalg.norm(P[i] - P[j], axis=1)
    dN = np.linalg.norm(N[i] - N[j], axis=1)
    ok = dG > 1e-14
    ratio = np.zeros_like(dG)
    ratio[ok] = dN[ok] / dG[ok]
    with np.errstate(divide="ignore"):
        bound = 1.0 / np.maximum(np.minimum(dist[i], dist[j]), 0.0)
    excess = np.where(ok, ratio - bound - tol, -np.inf)
    return LipschitzReport(float(np.max(ratio)), float(np.max(excess)) if len(excess) else -np.inf,
                           int(np.sum(ok)), float(np.max(np.abs(curve.kappa_gamma_half))))


# ---------------------------------------------------------------- fat Cantor curve

@dataclass(frozen=True)
class CantorSet:
    """Removed open intervals per level with exact dyadic endpoints."""

    levels: int
    removed: tuple

    def removed_measure(self) -> Fraction:
        return sum((b - a for lev in self.removed for a, b in lev), Fraction(0))

    def level_measure(self, k: int) -> Fraction:
        return sum((b - a for a, b in self.removed[k - 1]), Fraction(0))

    def remaining(self) -> list[tuple[Fraction, Fraction]]:
        comps = [(Fraction(0), Fraction(1))]
        for lev in self.removed:
            out = []
            holes = {a: b for a, b in lev}
            for a, b in comps:
                mid = (a + b) / 2
                hole = [(l, r) for l, r in holes.items() if a < l and r < b and l < mid < r]
                if hole:
                    l, r = hole[0]
                    out += [(a, l), (r, b)]
                else:
                    out.append((a, b))
            comps = out
        return comps


def cantor_set(levels: int) -> CantorSet:
    n = int(levels)
    if n < 0:
        raise ValidationError("levels must be nonnegative")
    if n > MAX_CANTOR_LEVEL:
        raise LevelTooDeep(f"levels > {MAX_CANTOR_LEVEL} are below the resolution limit")
    comps = [(Fraction(0), Fraction(1))]
    removed = []
    for k in range(1, n + 1):
        width = Fraction(1, 4 ** k)
        lev, nxt = [], []
        for a, b in comps:
            mid = (a + b) / 2
            l, r = mid - width / 2, mid + width / 2
            lev.append((l, r))
            nxt += [(a, l), (r, b)]
        removed.append(tuple(lev))
        comps = nxt
    return CantorSet(n, tuple(removed))


class CantorTangent:
    """Tangent field of the level-n curve: ``T = (sqrt(1 - phi^2), phi)`` on removed intervals."""

    def __init__(self, cset: CantorSet, beta: float):
        self.beta = float(beta)
        ivs = sorted((float(a), float(b), k + 1) for k, lev in enumerate(cset.removed) for a, b in lev)
        self.left = np.array([a for a, _, _ in ivs])
        self.right = np.array([b for _, b, _ in ivs])
        self.level = np.array([k for _, _, k in ivs], dtype=float)

    def _phase(self, t):
        t = np.asarray(t, dtype=float)
        if len(self.left) == 0:
            return t, np.zeros(t.shape, bool), np.zeros_like(t), np.zeros_like(t)
        j = np.clip(np.searchsorted(self.left, t, side="right") - 1, 0, len(self.left) - 1)
        inside = (t > self.left[j]) & (t < self.right[j])
        scale = 4.0 ** self.level[j]
        x = scale * (t - self.left[j])
        return t, inside, x, self.beta / scale

    def phi(self, t):
        t, inside, x, bk = self._phase(t)
        return np.where(inside, bk * np.sin(2 * np.pi * x) ** 3, 0.0)

    def dphi(self, t):
        # beta_k 4^k = beta
        t, inside, x, bk = self._phase(t)
        s, c = np.sin(2 * np.pi * x), np.cos(2 * np.pi * x)
        return np.where(inside, self.beta * 6 * np.pi * s * s * c, 0.0)

    def tangent(self, t):
        p = self.phi(t)
        return np.stack([np.sqrt(1.0 - p * p), p], axis=-1)

    def kappa_gamma(self, t):
        p = self.phi(t)
        return self.dphi(t) / np.sqrt(1.0 - p * p)


def cantor_curve(beta: float, levels: int, dt: float | None = None, kappa: float = 1.0,
                 start=(0.0, 0.0)) -> LeadingCurve:
    """Leading curve on ``[0, 1]`` perturbed on the removed intervals of a fat Cantor set.

    On the level-k interval ``(l, r)`` of length ``4^-k`` the tangent is
    ``(sqrt(1 - phi^2), phi)`` with ``phi = beta 4^-k sin^3(2 pi 4^k (t - l))``;
    elsewhere ``T = (1, 0)``.  ``meta["cantor"]`` holds the exact bookkeeping.
    """
    b = float(beta)
    if not 0 < b <= 2 * math.sqrt(2):
        raise ValidationError("beta must lie in (0, 2 sqrt 2]")
    cset = cantor_set(levels)
    if dt is None:
        dt = min(1e-3, 4.0 ** (-cset.levels) / 16) if cset.levels else 1e-3
        dt = 1.0 / math.ceil(1.0 / dt)
    field_ = CantorTangent(cset, b)
    return LeadingCurve.from_functions(field_.tangent, field_.kappa_gamma, lambda t: np.full_like(t, kappa),
                                       1.0, dt, start, meta={"cantor": cset, "tangent": field_})


def max_curvature_cantor(beta: float, levels: int, samples_per_interval: int = 2001) -> float:
    """Max of ``|Gamma''|`` sampled densely inside every perturbed interval."""
    cset = cantor_set(levels)
    f = CantorTangent(cset, beta)
    u = np.linspace(0.0, 1.0, samples_per_interval)[1:-1]
    t = (f.left[:, None] + (f.right - f.left)[:, None] * u[None, :]).ravel()
    return float(np.max(np.abs(f.kappa_gamma(t)))) if t.size else 0.0


# ---------------------------------------------------------------- energies

def _integrate_arm(arm: Arm, q_of_t) -> float:
    """``(1/12) int_0^l int_s k^2 / (1 - s kg) q(t) ds dt`` by Simpson in t, exactly in s."""
    from .profiles import _log1p_ratio

    c = arm.curve
    s0, s1 = arm.s_range
    kg, k = c.kappa_gamma_half, c.kappa_half
    a = 1.0 - s0 * kg
    x = -(s1 - s0) * kg / a
    inner = (s1 - s0) / a * _log1p_ratio(x)
    f = k * k * inner * q_of_t
    w = np.ones(len(f))
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    return float(c.dt / 6.0 * (w @ f)) / 12.0


def surface_energy(surface: DevelopableSurface, q2: QuadraticForm2, regime: str = "moderate",
                   modes: int = 16, threads: int = 1) -> float:
    """Limit bending energy ``(1/12) int Q(II) dx'`` for the moderate or supercritical form."""
    from .cell_moderate import assemble_qhom_m
    from .cell_supercritical import BendingTensor, solve_cell_sc

    reg = {"m": "moderate", "moderate": "moderate", "sc": "supercritical", "supercritical": "supercritical"}.get(regime)
    if reg is None:
        raise ValidationError(f"unknown regime {regime!r}")
    arms = surface.arms
    if reg == "moderate":
        H = assemble_qhom_m(q2, modes)

        def one(arm: Arm) -> float:
            T = arm.curve.tangent_half
            tilde = np.einsum("pi,pj->pij", T, T)
            w = np.stack([tilde[:, 0, 0], tilde[:, 1, 1], tilde[:, 0, 1]], axis=1)
            q = np.einsum("pa,ab,pb->p", w, H.matrix, w)
            return _integrate_arm(arm, q)
    else:
        def one(arm: Arm) -> float:
            d = arm.direction
            if d is None:
                raise ValidationError("supercritical energy needs a direction tag on every arm")
            if np.max(np.abs(arm.curve.tangent_half - d.T)) > 1e-9:
                raise ValidationError("supercritical energy supports arms with constant tangent only")
            q = solve_cell_sc(q2, BendingTensor(d, 1.0), modes).energy
            return _integrate_arm(arm, np.full(len(arm.curve.tangent_half), q))

    if threads > 1 and len(arms) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(one, arms))
    else:
        parts = [one(a) for a in arms]
    return float(sum(parts))
