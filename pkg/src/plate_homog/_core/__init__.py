"""Hot kernels with a compiled implementation and a pure-Python fallback.

The compiled module is used when it was built and ``PLATE_HOMOG_PURE`` is not
set; ``BACKEND`` names the implementation in use.
"""

from __future__ import annotations

import os

import numpy as np

from . import _fallback

try:
    if os.environ.get("PLATE_HOMOG_PURE"):
        raise ImportError("pure backend requested")
    from . import _kernels as _impl

    BACKEND = "cython"
except ImportError:
    _impl = _fallback
    BACKEND = "python"


def svk_energy(F, mu, lam) -> np.ndarray:
    """SVK density for stacked 3x3 gradients ``F`` (n, 3, 3) with per-point Lame values."""
    F = np.require(np.asarray(F, dtype=float).reshape(-1, 3, 3), requirements=["C", "W"])
    n = F.shape[0]
    mu = np.array(np.broadcast_to(np.asarray(mu, dtype=float), (n,)), order="C")
    lam = np.array(np.broadcast_to(np.asarray(lam, dtype=float), (n,)), order="C")
    return np.asarray(_impl.svk_energy(F, mu, lam))


def darboux_rk4(kg, kn, dt: float, frame0):
    """RK4 for the frame rows with half-step samples ``kg``, ``kn`` (length 2 steps + 1)."""
    kg = np.array(kg, dtype=float, order="C")
    kn = np.array(kn, dtype=float, order="C")
    frame0 = np.array(frame0, dtype=float, order="C")
    frames, drift = _impl.darboux_rk4(kg, kn, float(dt), frame0)
    return np.asarray(frames), np.asarray(drift)


__all__ = ["BACKEND", "svk_energy", "darboux_rk4"]
