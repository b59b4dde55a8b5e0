"""Periodic one-dimensional profiles and their derivatives.

Three representations are used by the cell solvers:

* :class:`TrigProfile` - finite cosine/sine sum (Galerkin correctors);
* :class:`StepProfile` - second derivative piecewise constant on a uniform grid;
* :class:`HarmonicProfile` - second derivative of the form ``H / a(s) - 1`` with
  ``a`` piecewise linear, which is the exact optimiser of the one-dimensional
  cell problem.

Every profile is mean-free and periodic with period ``period`` in its argument
and exposes ``value``, ``d1`` and ``d2``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_GL_X, _GL_W = np.polynomial.legendre.leggauss(24)


@dataclass(frozen=True)
class TrigProfile:
    """``psi(t) = sum_k a_k cos(2 pi k t / L) + b_k sin(2 pi k t / L)``, k = 1..N."""

    period: float
    cos: np.ndarray
    sin: np.ndarray

    @classmethod
    def zero(cls, period: float = 1.0) -> "TrigProfile":
        return cls(period, np.zeros(0), np.zeros(0))

    @property
    def modes(self) -> int:
        return len(self.cos)

    def _phase(self, t):
        t = np.asarray(t, dtype=float)
        k = np.arange(1, self.modes + 1)
        omega = 2.0 * np.pi * k / self.period
        return omega, np.multiply.outer(t, omega)

    def value(self, t):
        omega, th = self._phase(t)
        return np.cos(th) @ self.cos + np.sin(th) @ self.sin

    def d1(self, t):
        omega, th = self._phase(t)
        return -np.sin(th) @ (omega * self.cos) + np.cos(th) @ (omega * self.sin)

    def d2(self, t):
        omega, th = self._phase(t)
        w2 = omega * omega
        return -(np.cos(th) @ (w2 * self.cos) + np.sin(th) @ (w2 * self.sin))

    def d3(self, t):
        omega, th = self._phase(t)
        w3 = omega ** 3
        return np.sin(th) @ (w3 * self.cos) - np.cos(th) @ (w3 * self.sin)

    def max_frequency(self) -> float:
        nz = np.nonzero((np.abs(self.cos) + np.abs(self.sin)) > 0)[0]
        return float(nz[-1] + 1) / self.period if len(nz) else 0.0

    def scaled(self, factor: float) -> "TrigProfile":
        return TrigProfile(self.period, factor * self.cos, factor * self.sin)

    def coefficient_vector(self) -> np.ndarray:
        return np.concatenate([self.cos, self.sin])


@dataclass(frozen=True)
class StepProfile:
    """Periodic function whose second derivative equals ``g[j]`` on the j-th of
    ``len(g)`` equal pieces of ``[0, period)``.  ``g`` must have zero mean."""

    period: float
    g: np.ndarray

    def __post_init__(self) -> None:
        g = np.asarray(self.g, dtype=float)
        object.__setattr__(self, "g", g)
        m = g.size
        w = 1.0 / m
        # antiderivatives in the unit variable s = t / period
        g1 = np.concatenate([[0.0], np.cumsum(g * w)])[:-1]
        c1 = np.sum(g1 * w + g * w * w / 2)
        f1 = g1 - c1
        g2 = np.concatenate([[0.0], np.cumsum(f1 * w + g * w * w / 2)])[:-1]
        c2 = np.sum(g2 * w + f1 * w * w / 2 + g * w ** 3 / 6)
        object.__setattr__(self, "_nodes", (f1, g2 - c2))

    def _local(self, t):
        s = np.mod(np.asarray(t, dtype=float) / self.period, 1.0)
        m = self.g.size
        j = np.minimum((s * m).astype(np.intp), m - 1)
        return j, s - j / m

    def value(self, t):
        j, u = self._local(t)
        f1, f0 = self._nodes
        return self.period ** 2 * (f0[j] + f1[j] * u + self.g[j] * u * u / 2)

    def d1(self, t):
        j, u = self._local(t)
        f1, _ = self._nodes
        return self.period * (f1[j] + self.g[j] * u)

    def d2(self, t):
        j, _ = self._local(t)
        return self.g[j]

    def d3(self, t):
        return np.zeros(np.shape(t))

    def scaled(self, factor: float) -> "StepProfile":
        return StepProfile(self.period, factor * self.g)


def _log1p_ratio(x):
    """``log1p(x) / x`` with the removable singularity at 0 filled in."""
    x = np.asarray(x, dtype=float)
    small = np.abs(x) < 1e-8
    safe = np.where(small, 1.0, x)
    return np.where(small, 1.0 - x / 2, np.log1p(safe) / safe)


@dataclass(frozen=True)
class HarmonicProfile:
    """Periodic profile with second derivative ``scale * (H / a(t/period) - 1)``.

    ``a`` is positive and linear on each of the ``m`` equal pieces of the unit
    interval, running from ``a_left[j]`` to ``a_right[j]``; ``H`` is the
    harmonic mean of ``a`` so that the second derivative has zero mean.
    """

    period: float
    a_left: np.ndarray
    a_right: np.ndarray
    harmonic: float
    scale: float = 1.0

    def __post_init__(self) -> None:
        aL = np.asarray(self.a_left, dtype=float)
        aR = np.asarray(self.a_right, dtype=float)
        object.__setattr__(self, "a_left", aL)
        object.__setattr__(self, "a_right", aR)
        m = aL.size
        w = 1.0 / m
        full = self._g1_local(np.arange(m), np.full(m, w))
        g1 = np.concatenate([[0.0], np.cumsum(full)])[:-1]
        object.__setattr__(self, "_g1_nodes", g1)
        # mean of the first antiderivative and node values of the second, by Gauss
        u = 0.5 * w * (_GL_X + 1.0)
        wt = 0.5 * w * _GL_W
        jj = np.repeat(np.arange(m), u.size)
        uu = np.tile(u, m)
        vals = (g1[jj] + self._g1_local(jj, uu)).reshape(m, -1)
        c1 = float(np.sum(vals @ wt))
        f1_nodes = g1 - c1
        incr = (vals - c1) @ wt
        g2 = np.concatenate([[0.0], np.cumsum(incr)])[:-1]
        # mean of the second antiderivative: integrate g2_j + int_0^u f1 over each piece
        inner = self._g2_local(jj, uu, g1, c1).reshape(m, -1)
        c2 = float(np.sum((g2[:, None] + inner) @ wt))
        object.__setattr__(self, "_c1", c1)
        object.__setattr__(self, "_g2_nodes", g2 - c2)
        object.__setattr__(self, "_f1_nodes", f1_nodes)

    @property
    def pieces(self) -> int:
        return self.a_left.size

    def _a(self, j, u):
        m = self.pieces
        return self.a_left[j] + (self.a_right[j] - self.a_left[j]) * u * m

    def _g1_local(self, j, u):
        """int_0^u (H / a(s_j + v) - 1) dv."""
        m = self.pieces
        aL = self.a_left[j]
        slope = (self.a_right[j] - aL) * m
        x = slope * u / aL
        return self.harmonic * u * _log1p_ratio(x) / aL - u

    def _g2_local(self, j, u, g1_nodes, c1):
        """int_0^u (G1(s_j + v) - c1) dv by Gauss on [0, u]."""
        j = np.asarray(j)
        u = np.asarray(u, dtype=float)
        v = 0.5 * u[..., None] * (_GL_X + 1.0)
        f = g1_nodes[j][..., None] + self._g1_local(j[..., None], v) - c1
        return 0.5 * u * (f @ _GL_W)

    def _local(self, t):
        s = np.mod(np.asarray(t, dtype=float) / self.period, 1.0)
        m = self.pieces
        j = np.minimum((s * m).astype(np.intp), m - 1)
        return j, s - j / m

    def d2(self, t):
        j, u = self._local(t)
        return self.scale * (self.harmonic / self._a(j, u) - 1.0)

    def d3(self, t):
        j, u = self._local(t)
        slope = (self.a_right[j] - self.a_left[j]) * self.pieces
        a = self._a(j, u)
        return -self.scale * self.harmonic * slope / (a * a * self.period)

    def d1(self, t):
        j, u = self._local(t)
        return self.scale * self.period * (self._g1_nodes[j] + self._g1_local(j, u) - self._c1)

    def value(self, t):
        j, u = self._local(t)
        inner = self._g2_local(j, u, self._g1_nodes, self._c1)
        return self.scale * self.period ** 2 * (self._g2_nodes[j] + inner)

    def scaled(self, factor: float) -> "HarmonicProfile":
        return HarmonicProfile(self.period, self.a_left, self.a_right, self.harmonic, self.scale * factor)
