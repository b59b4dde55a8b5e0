"""Constrained cell problem for bending tensors of rank one.

For ``II = -c T(x)T`` the admissible correctors satisfy
``det(II + D^2 psi) = 0``; such correctors are functions of ``T.y`` alone, and
they exist beyond constants only for rational directions ``T ~ (p, q)``.
With ``s = p y1 + q y2 (mod 1)`` the problem becomes one-dimensional:

    q_sc = c^2 min_{mean g = 0} int_0^1 a(s) (1 + g(s))^2 ds,

where ``a`` is the fibre average of ``Q2(y, T(x)T)`` over the closed line
``{p y1 + q y2 = s}`` on the torus.  For materials piecewise constant on an
M x M grid, ``a`` is piecewise linear on the grid ``s in Z/M`` (piecewise
constant when p or q vanishes) and is computed exactly here.  The minimum is
the harmonic mean of ``a`` (Euler-Lagrange: ``a (1 + g) = const``), which is
the default ``method="exact"``; ``method="galerkin"`` solves the same problem
in a trigonometric space.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.optimize

from .cell_moderate import (
    DEFAULT_MODES,
    RESIDUAL_TOL,
    CellSolution,
    _GalerkinSystem,
    assemble_qhom_m,
)
from .errors import NonConvergence, NotRankOne, SolverError, SolverFailure, ValidationError, ZeroDirection
from .material import QuadraticForm2, voigt2
from .profiles import HarmonicProfile, TrigProfile

GOLDEN_ANGLE = math.atan((1.0 + math.sqrt(5.0)) / 2.0)


# ---------------------------------------------------------------- directions

@dataclass(frozen=True)
class Direction:
    """Rational direction ``(p, q)`` (coprime, sign gauged) or irrational angle."""

    kind: str
    p: int | None = None
    q: int | None = None
    angle: float | None = None

    @property
    def is_rational(self) -> bool:
        return self.kind == "rational"

    @property
    def T(self) -> np.ndarray:
        if self.is_rational:
            return np.array([self.p, self.q], dtype=float) / math.hypot(self.p, self.q)
        return np.array([math.cos(self.angle), math.sin(self.angle)])

    @property
    def period(self) -> float | None:
        if not self.is_rational:
            return None
        T = self.T
        return abs(T[0] / self.p) if self.p != 0 else abs(T[1] / self.q)

    def __str__(self) -> str:
        if self.is_rational:
            return f"Rational({self.p},{self.q})"
        return f"Irrational({self.angle!r})"


def _gauge(p: int, q: int) -> tuple[int, int]:
    if p < 0 or (p == 0 and q < 0):
        return -p, -q
    return p, q


def classify_direction(p: int | None = None, q: int | None = None, *, angle: float | None = None) -> Direction:
    """Direction from integers (reduced by gcd) or from an angle (tagged irrational).

    No attempt is made to detect rational slopes in floating point.
    """
    if angle is not None:
        if p is not None or q is not None:
            raise ValidationError("give either integers or an angle, not both")
        a = float(angle)
        if not math.isfinite(a):
            raise ValidationError("angle must be finite")
        # gauge: first component positive, or T = (0, 1)
        a = math.remainder(a, math.pi)
        if a <= -math.pi / 2:
            a += math.pi
        return Direction("irrational", angle=a)
    if p is None or q is None:
        raise ValidationError("both p and q are required")
    if int(p) != p or int(q) != q:
        raise ValidationError("p and q must be integers")
    p, q = int(p), int(q)
    if p == 0 and q == 0:
        raise ZeroDirection("direction (0, 0) is undefined")
    g = math.gcd(p, q)
    p, q = _gauge(p // g, q // g)
    return Direction("rational", p=p, q=q)


@dataclass(frozen=True)
class BendingTensor:
    """``II = -c T(x)T`` with a tagged direction; ``c`` carries the sign of II."""

    direction: Direction
    c: float

    @property
    def tilde_ii(self) -> np.ndarray:
        T = self.direction.T
        return np.outer(T, T)

    @property
    def ii(self) -> np.ndarray:
        return -self.c * self.tilde_ii


def factor_bending(ii, tol: float = 1e-10, direction: Direction | None = None) -> BendingTensor:
    """Write a rank-one symmetric 2x2 matrix as ``-c T(x)T``.

    ``T`` is gauged to ``T1 > 0`` (or ``T = (0, 1)``).  The zero matrix gives
    ``c = 0`` and ``T = (1, 0)``.  Without ``direction`` the result is tagged
    irrational by angle; pass a :class:`Direction` to declare a rational one
    (it must agree with the eigenvector).
    """
    A = np.asarray(ii, dtype=float)
    if A.shape != (2, 2) or not np.all(np.isfinite(A)):
        raise ValidationError("bending tensor must be a finite 2x2 matrix")
    A = 0.5 * (A + A.T)
    norm2 = float(np.sum(A * A))
    det = float(np.linalg.det(A))
    if abs(det) > tol * norm2:
        raise NotRankOne(f"|det II| = {abs(det):.3e} exceeds {tol:g} |II|^2")
    if norm2 == 0.0:
        d = direction if direction is not None else classify_direction(1, 0)
        return BendingTensor(d, 0.0)
    vals, vecs = np.linalg.eigh(A)
    k = int(np.argmax(np.abs(vals)))
    T = vecs[:, k]
    if T[0] < 0 or (T[0] == 0 and T[1] < 0):
        T = -T
    c = -float(vals[k])
    if direction is None:
        direction = classify_direction(angle=math.atan2(T[1], T[0]))
    elif abs(abs(float(direction.T @ T)) - 1.0) > 1e-8:
        raise ValidationError(f"declared direction {direction} does not match the eigenvector {T}")
    return BendingTensor(direction, c)


# ---------------------------------------------------------------- fibre average

@dataclass(frozen=True)
class FiberProfile:
    """Piecewise-linear fibre average on the M equal pieces of [0, 1)."""

    left: np.ndarray
    right: np.ndarray

    @property
    def pieces(self) -> int:
        return self.left.size

    def mean(self) -> float:
        return float(np.mean(0.5 * (self.left + self.right)))

    def harmonic_mean(self) -> float:
        aL, aR = self.left, self.right
        d = aR - aL
        x = d / aL
        small = np.abs(x) < 1e-8
        safe = np.where(small, 1.0, x)
        inv = np.where(small, (1.0 - x / 2) / aL, np.log1p(safe) / np.where(small, 1.0, d))
        return float(1.0 / np.mean(inv))

    def __call__(self, s) -> np.ndarray:
        s = np.mod(np.asarray(s, dtype=float), 1.0)
        m = self.pieces
        j = np.minimum((s * m).astype(np.intp), m - 1)
        u = s * m - j
        return self.left[j] + (self.right[j] - self.left[j]) * u

    def transform(self, freqs) -> np.ndarray:
        """``int_0^1 a(s) exp(2 pi 1j w s) ds`` for real frequencies ``w``."""
        w = np.asarray(freqs, dtype=float)[..., None]
        m = self.pieces
        width = 1.0 / m
        s0 = np.arange(m) / m
        om = 2.0 * np.pi * w
        z = 1j * om * width
        small = np.abs(z) < 1e-2
        zs = np.where(small, 1.0, z)
        # I0 = int_0^w e^{i om u} du, I1 = int_0^w u e^{i om u} du
        ez = np.exp(zs)
        i0_big = width * (ez - 1.0) / zs
        i1_big = width * width * (ez / zs - (ez - 1.0) / (zs * zs))
        n = np.arange(12)
        fact = np.array([math.factorial(int(k)) for k in n], dtype=float)
        zp = np.where(small, z, 0.0)[..., None] ** n
        i0_small = width * np.sum(zp / (fact * (n + 1)), axis=-1)
        i1_small = width * width * np.sum(zp / (fact * (n + 2)), axis=-1)
        i0 = np.where(small, i0_small, i0_big)
        i1 = np.where(small, i1_small, i1_big)
        slope = (self.right - self.left) / width
        return np.sum(np.exp(1j * om * s0) * (self.left * i0 + slope * i1), axis=-1)


def fiber_average(values: np.ndarray, p: int, q: int) -> FiberProfile:
    """Fibre average of a subcell field over the lines ``p y1 + q y2 = s (mod 1)``.

    ``(p, q)`` must be coprime integers (any signs).
    """
    values = np.asarray(values, dtype=float)
    m = values.shape[0]
    if math.gcd(p, q) != 1:
        raise ValidationError("fibre average needs a coprime integer pair")
    h = 1.0 / m
    # two interior samples per piece; a is linear between them
    s = (np.arange(m)[:, None] + np.array([0.25, 0.75])[None, :]).ravel() / m
    i, j = np.meshgrid(np.arange(m), np.arange(m), indexing="ij")
    x0, y0 = i.ravel() * h, j.ravel() * h
    Q = values.ravel()
    if p == 0 or q == 0:
        # z = +-y1 or +-y2: uniform density 1/M on the projected interval
        if q == 0:
            lo = np.minimum(p * x0, p * (x0 + h))
        else:
            lo = np.minimum(q * y0, q * (y0 + h))
        hi = lo + h
        shifts = np.arange(-2, 3)
        z = s[None, :, None] + shifts[None, None, :]
        inside = (z >= lo[:, None, None]) & (z < hi[:, None, None])
        dens = inside.sum(axis=2) * h
    else:
        a_lo = np.minimum(p * x0, p * (x0 + h))
        a_hi = np.maximum(p * x0, p * (x0 + h))
        b_lo = np.minimum(q * y0, q * (y0 + h))
        b_hi = np.maximum(q * y0, q * (y0 + h))
        zmin = min(0, p) + min(0, q) - 1
        zmax = max(0, p) + max(0, q) + 1
        shifts = np.arange(math.floor(zmin), math.ceil(zmax) + 1)
        z = s[None, :, None] + shifts[None, None, :]
        lo = np.maximum(a_lo[:, None, None], z - b_hi[:, None, None])
        hi = np.minimum(a_hi[:, None, None], z - b_lo[:, None, None])
        dens = np.clip(hi - lo, 0.0, None).sum(axis=2) / abs(p * q)
    a = (Q @ dens).reshape(m, 2)
    left = 1.5 * a[:, 0] - 0.5 * a[:, 1]
    right = 1.5 * a[:, 1] - 0.5 * a[:, 0]
    return FiberProfile(left, right)


# ---------------------------------------------------------------- 1D problem

@dataclass(frozen=True)
class ProfileProblemResult:
    energy: float
    profile: object
    residual: float


def _solve_profile_exact(fiber: FiberProfile, period: float) -> ProfileProblemResult:
    H = fiber.harmonic_mean()
    prof = HarmonicProfile(period, fiber.left, fiber.right, H)
    # stationarity a (1 + g) = H checked on samples
    s = (np.arange(fiber.pieces)[:, None] + np.linspace(0.05, 0.95, 7)[None, :]).ravel() / fiber.pieces
    res = float(np.max(np.abs(fiber(s) * (1.0 + prof.d2(s * period)) - H)) / H)
    return ProfileProblemResult(H, prof, res)


def _solve_profile_galerkin(fiber: FiberProfile, period: float, modes: int, multiple: int = 1) -> ProfileProblemResult:
    """Trigonometric Galerkin on period ``multiple * period``; the energy is per unit cell."""
    k = int(multiple)
    n = int(modes) * k
    freqs = np.arange(1, n + 1) / k
    # transform of a at fractional frequencies over [0, k): nonzero only at integers
    def ahat(w):
        w = np.asarray(w, dtype=float)
        integer = np.isclose(w, np.round(w), rtol=0, atol=1e-12)
        return np.where(integer, fiber.transform(np.round(w)), 0.0)

    dm = freqs[:, None] - freqs[None, :]
    dp = freqs[:, None] + freqs[None, :]
    Fm, Fp = ahat(dm), ahat(dp)
    Kcc = 0.5 * (Fm.real + Fp.real)
    Kss = 0.5 * (Fm.real - Fp.real)
    Kcs = 0.5 * (Fp.imag - Fm.imag)
    K = np.block([[Kcc, Kcs], [Kcs.T, Kss]])
    K = 0.5 * (K + K.T)
    fk = ahat(freqs)
    f = np.concatenate([fk.real, fk.imag])
    a0 = fiber.mean()
    try:
        chol = scipy.linalg.cho_factor(K)
    except np.linalg.LinAlgError as exc:
        raise SolverFailure(f"profile system not positive definite: {exc}") from exc
    x = -scipy.linalg.cho_solve(chol, f)
    x -= scipy.linalg.cho_solve(chol, K @ x + f)
    r = K @ x + f
    nf = float(np.linalg.norm(f))
    res = float(np.linalg.norm(r)) / nf if nf > 0 else float(np.linalg.norm(r))
    if res > RESIDUAL_TOL:
        raise SolverFailure("profile Galerkin solve did not converge", res)
    energy = float(a0 + f @ x)
    # psi'' = g with g = sum alpha cos(2 pi w s) + beta sin; s = t / period
    L = period * k
    m_idx = np.arange(1, n + 1)
    conv = (L / (2.0 * np.pi * m_idx)) ** 2
    prof = TrigProfile(L, -x[:n] * conv, -x[n:] * conv)
    return ProfileProblemResult(energy, prof, res)


def solve_cell_sc(
    q2: QuadraticForm2,
    bending: BendingTensor,
    modes: int = DEFAULT_MODES,
    method: str = "exact",
    period_multiple: int = 1,
) -> CellSolution:
    """Supercritical cell value ``Q_hom^sc(II)`` for ``II = -c T(x)T``.

    The returned corrector is the profile ``Psi`` with ``psi(y) = Psi(T.y)``,
    i.e. it already contains the factor ``-c``.
    """
    if int(modes) < 1:
        raise ValidationError("modes must be >= 1")
    if method not in ("exact", "galerkin"):
        raise ValidationError(f"unknown method {method!r}")
    c = float(bending.c)
    d = bending.direction
    field2 = q2.scalar_field(bending.tilde_ii)
    if not d.is_rational:
        energy = c * c * float(np.mean(field2))
        return CellSolution(TrigProfile.zero(), energy, int(modes), 0.0)
    fiber = fiber_average(field2, d.p, d.q)
    if method == "exact":
        sol = _solve_profile_exact(fiber, d.period * int(period_multiple))
    else:
        sol = _solve_profile_galerkin(fiber, d.period, modes, period_multiple)
    return CellSolution(sol.profile.scaled(-c), c * c * sol.energy, int(modes), sol.residual)


# ---------------------------------------------------------------- penalised oracle

@dataclass
class PenaltyReport:
    energy: float
    objective: float
    violation: float
    weights_used: list = field(default_factory=list)


def _quadrature_points(m: int, freq: int) -> tuple[np.ndarray, np.ndarray]:
    # Gauss on each subcell with enough nodes for the oscillation of the integrand
    phase = 2.0 * np.pi * freq / m
    npts = int(math.ceil(phase / 2.0 + 12))
    x, w = np.polynomial.legendre.leggauss(npts)
    nodes = (np.arange(m)[:, None] + 0.5 * (x[None, :] + 1.0)).ravel() / m
    weights = np.tile(0.5 * w / m, m)
    return nodes, weights


def oracle_penalized_2d(
    q2: QuadraticForm2,
    bending: BendingTensor,
    modes: int = 4,
    penalty_weights=None,
    enrich: bool = True,
    tol: float = 1e-8,
    return_report: bool = False,
):
    """Penalty relaxation of the constrained problem over the full 2D space.

    Minimises ``int Q2(II + D^2 psi) + (1/rho) int det(II + D^2 psi)^2`` for
    ``rho = 1, 1e-1, ..., 1e-6`` with warm starts (trust-region Newton) and
    returns ``int Q2(II + D^2 psi)`` at the last iterate.  As ``rho -> 0`` the
    value approaches :func:`solve_cell_sc` up to the resolution of the 2D space.
    """
    if not bending.direction.is_rational:
        raise ValidationError("the penalised oracle needs a rational direction")
    if not 1 <= int(modes) <= 6:
        raise ValidationError("the penalised oracle supports 1 <= modes <= 6")
    if penalty_weights is None:
        penalty_weights = [10.0 ** (-k) for k in range(7)]
    rhos = [float(r) for r in penalty_weights]
    if any(r <= 0 for r in rhos) or any(b >= a for a, b in zip(rhos, rhos[1:])):
        raise ValidationError("penalty weights must be positive and decreasing")

    sys = _GalerkinSystem(q2, modes, enrich)
    m = q2.resolution
    nodes, wts = _quadrature_points(m, 4 * int(modes))
    Y1, Y2 = np.meshgrid(nodes, nodes, indexing="ij")
    y = np.stack([Y1.ravel(), Y2.ravel()], axis=1)
    wq = np.outer(wts, wts).ravel()
    # Hessian fields of the basis at the quadrature nodes: B (npts, ndof, 3)
    th = 2.0 * np.pi * y @ sys.waves.T.astype(float)
    B = np.concatenate([np.cos(th)[..., None] * sys.V, np.sin(th)[..., None] * sys.V], axis=1)
    if sys.enriched:
        bvals = m * np.eye(m)[: m - 1] - 1.0
        i1 = np.minimum((y[:, 0] * m).astype(int), m - 1)
        i2 = np.minimum((y[:, 1] * m).astype(int), m - 1)
        e1 = np.zeros((len(y), m - 1, 3))
        e1[..., 0] = bvals[:, i1].T
        e2 = np.zeros((len(y), m - 1, 3))
        e2[..., 1] = bvals[:, i2].T
        B = np.concatenate([B, e1, e2], axis=1)
    Dq = q2.coeffs[np.minimum((y[:, 0] * m).astype(int), m - 1), np.minimum((y[:, 1] * m).astype(int), m - 1)]
    w0 = voigt2(bending.ii)
    K = np.einsum("q,qia,qab,qjb->ij", wq, B, Dq, B)
    f = np.einsum("q,qia,qab,b->i", wq, B, Dq, w0)
    e0 = float(np.einsum("q,a,qab,b->", wq, w0, Dq, w0))
    hdet = np.array([[0.0, 1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, -2.0]])
    BhB = np.einsum("qia,ab,qjb->qij", B, hdet, B)

    def fields(x):
        W = w0 + np.einsum("qia,i->qa", B, x)
        det = W[:, 0] * W[:, 1] - W[:, 2] ** 2
        gdet = np.stack([W[:, 1], W[:, 0], -2.0 * W[:, 2]], axis=1)
        return det, np.einsum("qia,qa->qi", B, gdet)

    def quad_part(x):
        return e0 + 2.0 * f @ x + x @ K @ x

    def make(rho):
        def fun(x):
            det, _ = fields(x)
            return quad_part(x) + (wq @ (det * det)) / rho

        def jac(x):
            det, J = fields(x)
            return 2.0 * (K @ x + f) + (2.0 / rho) * (wq * det) @ J

        def hess(x):
            det, J = fields(x)
            return 2.0 * K + (2.0 / rho) * (np.einsum("q,qi,qj->ij", wq, J, J) + np.einsum("q,qij->ij", wq * det, BhB))

        return fun, jac, hess

    x = np.zeros(sys.size)
    used = []
    violation = math.inf
    for rho in rhos:
        fun, jac, hess = make(rho)
        res = scipy.optimize.minimize(fun, x, jac=jac, hess=hess, method="trust-exact",
                                      options={"gtol": 1e-10, "maxiter": 500})
        if not np.all(np.isfinite(res.x)):
            raise NonConvergence("penalised iteration produced non-finite values", violation)
        x = res.x
        used.append(rho)
        det, _ = fields(x)
        violation = float(math.sqrt(max(wq @ (det * det), 0.0)))
        if not res.success and np.linalg.norm(jac(x)) > 1e-6 * max(1.0, abs(fun(x))):
            raise NonConvergence(f"trust-region Newton failed at rho={rho:g}: {res.message}", violation)
        if violation < tol:
            break
    energy = float(quad_part(x))
    if return_report:
        fun, _, _ = make(used[-1])
        return PenaltyReport(energy, float(fun(x)), violation, used)
    return energy


# ---------------------------------------------------------------- sweep

SWEEP_COLUMNS = ("p", "q", "T1", "T2", "P", "q_sc", "q_m", "mean_q2", "gap")


def farey_pairs(max_denominator: int) -> list[tuple[int, int]]:
    """Coprime ``(p, q)`` with ``0 <= p, q <= D``, ordered by ``(q, p)``."""
    D = int(max_denominator)
    if D < 1:
        raise ValidationError("max denominator must be >= 1")
    pairs = [(p, q) for q in range(D + 1) for p in range(D + 1) if math.gcd(p, q) == 1]
    return pairs


def thread_cap() -> int:
    raw = os.environ.get("PLATE_HOMOG_THREADS", "")
    try:
        n = int(raw)
    except ValueError:
        n = os.cpu_count() or 1
    return max(1, n)


def direction_sweep(
    q2: QuadraticForm2,
    max_denominator: int,
    modes: int = DEFAULT_MODES,
    method: str = "exact",
    threads: int | None = None,
) -> list[dict]:
    """Rows ``p, q, T1, T2, P, q_sc, q_m, mean_q2, gap`` plus an irrational baseline row.

    ``q_m`` is ``Q_hom^m(-T(x)T)``, ``mean_q2`` the cell average of
    ``Q2(., T(x)T)`` and ``gap = mean_q2 - q_sc``.
    """
    pairs = farey_pairs(max_denominator)
    H = assemble_qhom_m(q2, modes)

    def row(direction: Direction) -> dict:
        T = direction.T
        tilde = np.outer(T, T)
        out = {
            "p": direction.p if direction.is_rational else "",
            "q": direction.q if direction.is_rational else "",
            "T1": float(T[0]),
            "T2": float(T[1]),
            "P": direction.period if direction.is_rational else "",
            "mean_q2": q2.mean(tilde),
            "q_m": H(-tilde),
        }
        try:
            out["q_sc"] = solve_cell_sc(q2, BendingTensor(direction, 1.0), modes, method).energy
            out["gap"] = out["mean_q2"] - out["q_sc"]
            out["status"] = "ok"
        except SolverError as exc:
            out["q_sc"] = float("nan")
            out["gap"] = float("nan")
            out["status"] = f"failed: {exc}"
        return out

    dirs = [classify_direction(p, q) for p, q in pairs] + [classify_direction(angle=GOLDEN_ANGLE)]
    n = threads if threads is not None else thread_cap()
    if n > 1:
        with ThreadPoolExecutor(max_workers=n) as pool:
            rows = list(pool.map(row, dirs))
    else:
        rows = [row(d) for d in dirs]
    return rows
