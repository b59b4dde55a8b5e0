"""Pure Python/NumPy versions of the compiled kernels (same algorithms)."""

from __future__ import annotations

import numpy as np

PROJECT_LIMIT = 0.5  # Newton-Schulz only converges close to orthonormal


def svk_energy(F: np.ndarray, mu: np.ndarray, lam: np.ndarray) -> np.ndarray:
    E = np.einsum("pki,pkj->pij", F, F)
    E[:, 0, 0] -= 1.0
    E[:, 1, 1] -= 1.0
    E[:, 2, 2] -= 1.0
    tr = E[:, 0, 0] + E[:, 1, 1] + E[:, 2, 2]
    return 0.25 * mu * np.einsum("pij,pij->p", E, E) + 0.125 * lam * tr * tr


def _rhs(kg: float, kn: float, X: np.ndarray) -> np.ndarray:
    return np.array([kg * X[1] + kn * X[2], -kg * X[0], -kn * X[0]])


def _gram_defect(X: np.ndarray) -> float:
    return float(np.max(np.abs(X @ X.T - np.eye(3))))


def _polar(X: np.ndarray) -> np.ndarray:
    for _ in range(6):
        if _gram_defect(X) < 1e-16:
            break
        X = 1.5 * X - 0.5 * (X @ X.T) @ X
    return X


def darboux_rk4(kg: np.ndarray, kn: np.ndarray, dt: float, frame0: np.ndarray):
    steps = (len(kg) - 1) // 2
    frames = np.empty((steps + 1, 3, 3))
    drift = np.empty(steps)
    X = np.array(frame0, dtype=float)
    frames[0] = X
    for s in range(steps):
        a, b, c = 2 * s, 2 * s + 1, 2 * s + 2
        k1 = _rhs(kg[a], kn[a], X)
        k2 = _rhs(kg[b], kn[b], X + 0.5 * dt * k1)
        k3 = _rhs(kg[b], kn[b], X + 0.5 * dt * k2)
        k4 = _rhs(kg[c], kn[c], X + dt * k3)
        X = X + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        drift[s] = _gram_defect(X)
        if drift[s] < PROJECT_LIMIT:
            X = _polar(X)
        frames[s + 1] = X
    return frames, drift
