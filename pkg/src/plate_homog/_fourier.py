"""Exact Fourier integrals of fields that are piecewise constant on the subcell grid."""

from __future__ import annotations

import numpy as np


def interval_transform(freqs: np.ndarray, m: int) -> np.ndarray:
    """``E[k, i] = int_{i/m}^{(i+1)/m} exp(2 pi 1j k x) dx`` for real frequencies ``k``."""
    k = np.asarray(freqs, dtype=float)[:, None]
    left = np.arange(m)[None, :] / m
    right = (np.arange(m)[None, :] + 1) / m
    with np.errstate(divide="ignore", invalid="ignore"):
        val = (np.exp(2j * np.pi * k * right) - np.exp(2j * np.pi * k * left)) / (2j * np.pi * k)
    zero = np.broadcast_to(k == 0, val.shape)
    return np.where(zero, 1.0 / m, val)


def cell_transform(values: np.ndarray, kmax: int) -> np.ndarray:
    """``F[..., a, b] = int_Y f(y) exp(2 pi 1j (k1 y1 + k2 y2)) dy``, ``k = (a, b) - kmax``.

    ``values`` has shape ``(..., M, M)`` holding subcell values of ``f``.
    """
    values = np.asarray(values)
    m = values.shape[-1]
    E = interval_transform(np.arange(-kmax, kmax + 1), m)
    return np.einsum("ai,...ij,bj->...ab", E, values, E)


def cell_transform_at(values: np.ndarray, k1: np.ndarray, k2: np.ndarray) -> np.ndarray:
    """Transform of a subcell field at an explicit list of (possibly fractional) frequencies."""
    values = np.asarray(values)
    m = values.shape[-1]
    E1 = interval_transform(k1, m)
    E2 = interval_transform(k2, m)
    return np.einsum("ni,...ij,nj->...n", E1, values, E2)
