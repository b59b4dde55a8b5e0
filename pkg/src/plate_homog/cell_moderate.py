"""Unconstrained periodic cell problem and the homogenised form Q_hom^m.

For a constant symmetric 2x2 matrix II the cell problem minimises

    int_Y Q2(y, II + D^2 psi(y)) dy

over Y-periodic correctors psi.  The Galerkin space is the real
trigonometric space ``|k|_inf <= N`` (mean mode removed) enlarged by the
*laminate modes* ``f(y1) + g(y2)`` whose second derivatives are piecewise
constant on the material grid.  The laminate modes are exactly the
piecewise-constant Hessian fields compatible with the subcell grid; they
carry the jump of the optimal Hessian across material interfaces, which a
pure trigonometric space only resolves at rate O(1/N).

All integrals are evaluated in closed form from the exact Fourier transforms
of the piecewise-constant coefficient fields, so the discrete energy is exact
up to rounding.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any

import numpy as np
import scipy.linalg

from ._fourier import cell_transform, cell_transform_at
from .errors import SolverFailure, ValidationError
from .material import QuadraticForm2, unvoigt2, voigt2
from .profiles import StepProfile

RESIDUAL_TOL = 1e-10
DEFAULT_MODES = 16


def half_plane_waves(n: int) -> np.ndarray:
    """Wave vectors with ``|k|_inf <= n`` representing each pair ``{k, -k}`` once."""
    k1, k2 = np.meshgrid(np.arange(-n, n + 1), np.arange(0, n + 1), indexing="xy")
    k1 = k1.ravel()
    k2 = k2.ravel()
    keep = (k2 > 0) | ((k2 == 0) & (k1 > 0))
    return np.stack([k1[keep], k2[keep]], axis=1)


@dataclass(frozen=True)
class PeriodicScalarField2:
    """Mean-free Y-periodic field: trigonometric part plus laminate part.

    ``psi(y) = sum_k A_k cos(2 pi k.y) + B_k sin(2 pi k.y) + f(y1) + g(y2)``
    """

    waves: np.ndarray
    cos: np.ndarray
    sin: np.ndarray
    lam1: StepProfile | None = None
    lam2: StepProfile | None = None

    @property
    def modes(self) -> int:
        return int(np.max(np.abs(self.waves))) if len(self.waves) else 0

    @classmethod
    def zero(cls, modes: int = 0) -> "PeriodicScalarField2":
        w = half_plane_waves(modes)
        return cls(w, np.zeros(len(w)), np.zeros(len(w)))

    def _theta(self, y):
        y = np.asarray(y, dtype=float)
        return 2.0 * np.pi * (y @ self.waves.T.astype(float))

    def value(self, y):
        th = self._theta(y)
        out = np.cos(th) @ self.cos + np.sin(th) @ self.sin
        y = np.asarray(y, dtype=float)
        if self.lam1 is not None:
            out = out + self.lam1.value(y[..., 0])
        if self.lam2 is not None:
            out = out + self.lam2.value(y[..., 1])
        return out

    def gradient(self, y):
        th = self._theta(y)
        k = 2.0 * np.pi * self.waves.astype(float)
        amp = -np.sin(th) * self.cos + np.cos(th) * self.sin
        out = amp @ k
        y = np.asarray(y, dtype=float)
        if self.lam1 is not None:
            out[..., 0] += self.lam1.d1(y[..., 0])
        if self.lam2 is not None:
            out[..., 1] += self.lam2.d1(y[..., 1])
        return out

    def hessian(self, y):
        th = self._theta(y)
        k = 2.0 * np.pi * self.waves.astype(float)
        amp = -(np.cos(th) * self.cos + np.sin(th) * self.sin)
        out = np.einsum("...n,ni,nj->...ij", amp, k, k)
        y = np.asarray(y, dtype=float)
        if self.lam1 is not None:
            out[..., 0, 0] += self.lam1.d2(y[..., 0])
        if self.lam2 is not None:
            out[..., 1, 1] += self.lam2.d2(y[..., 1])
        return out

    def third(self, y):
        """``D^3 psi`` with shape ``(..., 2, 2, 2)``; laminate parts contribute nothing."""
        th = self._theta(y)
        k = 2.0 * np.pi * self.waves.astype(float)
        amp = np.sin(th) * self.cos - np.cos(th) * self.sin
        return np.einsum("...n,ni,nj,nl->...ijl", amp, k, k, k)

    def pruned(self, atol: float = 1e-14) -> "PeriodicScalarField2":
        """Drop trigonometric modes with amplitude at most ``atol``."""
        amp = np.hypot(self.cos, self.sin)
        keep = amp > atol
        return PeriodicScalarField2(self.waves[keep], self.cos[keep], self.sin[keep], self.lam1, self.lam2)

    def coefficient_vector(self) -> np.ndarray:
        parts = [self.cos, self.sin]
        for lam in (self.lam1, self.lam2):
            if lam is not None:
                parts.append(lam.g)
        return np.concatenate(parts)

    def norm(self) -> float:
        return float(np.linalg.norm(self.coefficient_vector()))


@dataclass(frozen=True)
class CellSolution:
    corrector: Any
    energy: float
    modes: int
    residual_norm: float


@dataclass(frozen=True)
class HomogenizedForm:
    """Q_hom^m(II) = w^T matrix w with w = (II11, II22, II12)."""

    matrix: np.ndarray
    modes: int

    def __call__(self, ii) -> float:
        w = voigt2(ii)
        return float(w @ self.matrix @ w)


class _GalerkinSystem:
    """Stiffness matrix, load map and constant term of the moderate cell problem.

    Unknowns are the Hessian amplitudes of the basis fields

    * ``v_k cos(2 pi k.y)`` and ``v_k sin(2 pi k.y)`` with ``v_k = -(k1^2, k2^2, k1 k2)/|k|^2``,
    * ``e_11 b_i(y1)`` and ``e_22 b_i(y2)``, ``b_i = M 1_{[i/M,(i+1)/M)} - 1``, i < M-1.
    """

    def __init__(self, q2: QuadraticForm2, modes: int, enrich: bool = True):
        if int(modes) < 1:
            raise ValidationError("modes must be >= 1")
        self.q2 = q2
        self.n = n = int(modes)
        m = q2.resolution
        self.m = m
        D = np.moveaxis(q2.coeffs, (0, 1), (2, 3))  # (3, 3, M, M)
        self.waves = k = half_plane_waves(n)
        nk = len(k)
        kk = k.astype(float)
        V = -np.stack([kk[:, 0] ** 2, kk[:, 1] ** 2, kk[:, 0] * kk[:, 1]], axis=1)
        V /= np.sum(kk * kk, axis=1)[:, None]
        self.V = V

        F = cell_transform(D, 2 * n)  # (3, 3, 4n+1, 4n+1)
        dm = (k[:, None, :] - k[None, :, :]) + 2 * n
        dp = (k[:, None, :] + k[None, :, :]) + 2 * n
        Kcc = np.zeros((nk, nk))
        Kss = np.zeros((nk, nk))
        Kcs = np.zeros((nk, nk))
        for a in range(3):
            for b in range(3):
                Fm = F[a, b][dm[..., 0], dm[..., 1]]
                Fp = F[a, b][dp[..., 0], dp[..., 1]]
                outer = np.outer(V[:, a], V[:, b])
                Kcc += outer * 0.5 * (Fm.real + Fp.real)
                Kss += outer * 0.5 * (Fm.real - Fp.real)
                Kcs += outer * 0.5 * (Fp.imag - Fm.imag)
        blocks = [[Kcc, Kcs], [Kcs.T, Kss]]
        # load: int v_k^T D(y) w0 cos/sin
        Fk = F[:, :, k[:, 0] + 2 * n, k[:, 1] + 2 * n]  # (3, 3, nk)
        load_c = np.einsum("na,abn->nb", V, Fk.real)
        load_s = np.einsum("na,abn->nb", V, Fk.imag)
        loads = [load_c, load_s]

        self.enriched = bool(enrich) and m > 1
        if self.enriched:
            b = m * np.eye(m)[: m - 1] - 1.0  # (m-1, m) profiles
            b1 = np.repeat(b[:, :, None], m, axis=2)  # varies with y1 (index i)
            b2 = np.repeat(b[:, None, :], m, axis=1)  # varies with y2 (index j)
            lam_fields = [(0, b1), (1, b2)]
            cross_c, cross_s, diag_blocks, lam_loads = [], [], {}, []
            for comp, bf in lam_fields:
                # int D_{a,comp} b(y) exp(2 pi i k.y) for each a, each profile
                prod = D[:, comp][:, None, :, :] * bf[None]  # (3, m-1, M, M)
                T = cell_transform_at(prod, kk[:, 0], kk[:, 1])  # (3, m-1, nk)
                cross_c.append(np.einsum("na,apn->np", V, T.real))
                cross_s.append(np.einsum("na,apn->np", V, T.imag))
                lam_loads.append(np.einsum("apij->pa", prod) / m ** 2)
            for i1, (c1, bf1) in enumerate(lam_fields):
                for i2, (c2, bf2) in enumerate(lam_fields):
                    diag_blocks[i1, i2] = np.einsum("ij,pij,qij->pq", D[c1, c2], bf1, bf2) / m ** 2
            blocks[0] += [cross_c[0], cross_c[1]]
            blocks[1] += [cross_s[0], cross_s[1]]
            blocks.append([cross_c[0].T, cross_s[0].T, diag_blocks[0, 0], diag_blocks[0, 1]])
            blocks.append([cross_c[1].T, cross_s[1].T, diag_blocks[1, 0], diag_blocks[1, 1]])
            loads += lam_loads
        K = np.block(blocks)
        self.K = 0.5 * (K + K.T)
        self.load = np.concatenate(loads, axis=0)  # (ndof, 3): f = load @ w0
        self.mean_form = np.mean(q2.coeffs, axis=(0, 1))
        self.nk = nk
        self._chol = None

    @property
    def size(self) -> int:
        return self.K.shape[0]

    def solve(self, rhs: np.ndarray) -> tuple[np.ndarray, float]:
        """Solve ``K x = -rhs`` (columns) and return x with the relative residual."""
        if self._chol is None:
            try:
                self._chol = scipy.linalg.cho_factor(self.K, lower=False, check_finite=True)
            except np.linalg.LinAlgError as exc:
                raise SolverFailure(f"stiffness matrix is not positive definite: {exc}") from exc
        x = -scipy.linalg.cho_solve(self._chol, rhs)
        # one step of iterative refinement keeps the stationarity residual tiny
        r = self.K @ x + rhs
        x -= scipy.linalg.cho_solve(self._chol, r)
        r = self.K @ x + rhs
        scale = max(float(np.linalg.norm(rhs)), 1e-300)
        res = float(np.linalg.norm(r)) / scale if np.linalg.norm(rhs) > 0 else float(np.linalg.norm(r))
        if not np.isfinite(res) or res > RESIDUAL_TOL:
            raise SolverFailure("Galerkin solve did not reach the stationarity tolerance", res)
        return x, res

    def field(self, x: np.ndarray) -> PeriodicScalarField2:
        nk = self.nk
        kk = self.waves.astype(float)
        scale = 1.0 / (4.0 * np.pi ** 2 * np.sum(kk * kk, axis=1))
        cos = x[:nk] * scale
        sin = x[nk: 2 * nk] * scale
        lam1 = lam2 = None
        if self.enriched:
            m = self.m
            b = m * np.eye(m)[: m - 1] - 1.0
            lam1 = StepProfile(1.0, x[2 * nk: 2 * nk + m - 1] @ b)
            lam2 = StepProfile(1.0, x[2 * nk + m - 1:] @ b)
        return PeriodicScalarField2(self.waves, cos, sin, lam1, lam2)


def solve_cell_m(q2: QuadraticForm2, ii, modes: int = DEFAULT_MODES, enrich: bool = True) -> CellSolution:
    """Minimise ``int_Y Q2(y, II + D^2 psi)`` over the Galerkin space of order ``modes``."""
    w0 = voigt2(np.asarray(ii, dtype=float))
    sys = _GalerkinSystem(q2, modes, enrich)
    f = sys.load @ w0
    x, res = sys.solve(f)
    energy = float(w0 @ sys.mean_form @ w0 + f @ x)
    return CellSolution(sys.field(x), max(energy, 0.0), sys.n, res)


def assemble_qhom_m(q2: QuadraticForm2, modes: int = DEFAULT_MODES, enrich: bool = True) -> HomogenizedForm:
    """Matrix of Q_hom^m on Voigt vectors (II11, II22, II12) by polarisation."""
    sys = _GalerkinSystem(q2, modes, enrich)
    X, _ = sys.solve(sys.load)
    H = sys.mean_form + sys.load.T @ X
    return HomogenizedForm(0.5 * (H + H.T), sys.n)


def cell_energy_direct(q2: QuadraticForm2, ii, corrector: PeriodicScalarField2, points: int = 48) -> float:
    """Tensor Gauss quadrature (per subcell) of ``int_Y Q2(y, II + D^2 psi)``.

    Independent of the closed-form assembly; used to cross-check it.
    """
    m = q2.resolution
    x, w = np.polynomial.legendre.leggauss(points)
    nodes = (np.arange(m)[:, None] + 0.5 * (x[None, :] + 1.0)).ravel() / m
    weights = np.tile(0.5 * w / m, m)
    Y1, Y2 = np.meshgrid(nodes, nodes, indexing="ij")
    y = np.stack([Y1, Y2], axis=-1)
    A = np.asarray(ii, dtype=float) + corrector.hessian(y)
    vals = q2.evaluate(y, A)
    return float(weights @ vals @ weights)


__all__ = [
    "PeriodicScalarField2",
    "CellSolution",
    "HomogenizedForm",
    "solve_cell_m",
    "assemble_qhom_m",
    "cell_energy_direct",
    "half_plane_waves",
    "unvoigt2",
]
