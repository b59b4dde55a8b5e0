"""Periodic St. Venant-Kirchhoff type materials and their quadratic forms.

The density is

    W(y, F) = mu(y)/4 |F^T F - I|^2 + lam(y)/8 (tr(F^T F - I))^2,

with Lame fields piecewise constant on an M x M grid of subcells of the unit
cell Y = [0, 1)^2.  Array index ``[i, j]`` addresses the subcell
``[i/M, (i+1)/M) x [j/M, (j+1)/M)``: the first index runs along y1.

Voigt conventions (off-diagonal entries are *not* scaled):

* 3x3 symmetric matrices: ``(S11, S22, S33, S23, S13, S12)``
* 2x2 symmetric matrices: ``(A11, A22, A12)``

so that, e.g., ``Q3(G) = v^T C v`` with ``v`` the Voigt vector of ``sym G``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import SingularReduction, ValidationError

_V3 = ((0, 0), (1, 1), (2, 2), (1, 2), (0, 2), (0, 1))
_V2 = ((0, 0), (1, 1), (0, 1))

# Positions of the in-plane (11, 22, 12) and out-of-plane (33, 23, 13)
# components inside the 3x3 Voigt vector.
_IN_PLANE = [0, 1, 5]
_OUT_OF_PLANE = [2, 3, 4]


def voigt3(G: np.ndarray) -> np.ndarray:
    """Voigt vector of sym(G) for a stack of 3x3 matrices."""
    G = np.asarray(G, dtype=float)
    S = 0.5 * (G + np.swapaxes(G, -1, -2))
    return np.stack([S[..., i, j] for i, j in _V3], axis=-1)


def voigt2(A: np.ndarray) -> np.ndarray:
    """Voigt vector of sym(A) for a stack of 2x2 matrices."""
    A = np.asarray(A, dtype=float)
    S = 0.5 * (A + np.swapaxes(A, -1, -2))
    return np.stack([S[..., i, j] for i, j in _V2], axis=-1)


def unvoigt2(w: np.ndarray) -> np.ndarray:
    """Symmetric 2x2 matrices from Voigt vectors (A11, A22, A12)."""
    w = np.asarray(w, dtype=float)
    out = np.empty(w.shape[:-1] + (2, 2))
    out[..., 0, 0] = w[..., 0]
    out[..., 1, 1] = w[..., 1]
    out[..., 0, 1] = out[..., 1, 0] = w[..., 2]
    return out


def _check_grid(a: np.ndarray, name: str) -> np.ndarray:
    a = np.array(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] < 1:
        raise ValidationError(f"{name} must be a square M x M array, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValidationError(f"{name} contains non-finite entries")
    a.setflags(write=False)
    return a


def subcell_index(y: np.ndarray, resolution: int) -> tuple[np.ndarray, np.ndarray]:
    """Subcell indices ``(i, j)`` of points ``y`` (any shape ending in 2), periodic."""
    y = np.asarray(y, dtype=float)
    m = resolution
    i = np.floor(np.mod(y[..., 0], 1.0) * m).astype(np.intp)
    j = np.floor(np.mod(y[..., 1], 1.0) * m).astype(np.intp)
    # mod(.) can round up to exactly 1.0 for tiny negative inputs
    np.clip(i, 0, m - 1, out=i)
    np.clip(j, 0, m - 1, out=j)
    return i, j


@dataclass(frozen=True)
class PeriodicMaterial:
    """Isotropic Lame fields, piecewise constant on an M x M subcell grid."""

    mu: np.ndarray
    lam: np.ndarray

    def __post_init__(self) -> None:
        mu = _check_grid(self.mu, "mu")
        lam = _check_grid(self.lam, "lambda")
        if mu.shape != lam.shape:
            raise ValidationError("mu and lambda must share the same resolution")
        if np.any(mu <= 0):
            raise ValidationError("mu must be positive everywhere")
        if np.any(lam < 0):
            raise ValidationError("lambda must be nonnegative everywhere")
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "lam", lam)

    @property
    def resolution(self) -> int:
        return self.mu.shape[0]

    @classmethod
    def homogeneous(cls, mu: float, lam: float) -> "PeriodicMaterial":
        return cls(np.array([[mu]]), np.array([[lam]]))

    @classmethod
    def laminate(cls, mus, lams, axis: int = 0) -> "PeriodicMaterial":
        """Layers stacked along ``y1`` (axis 0) or ``y2`` (axis 1), equal widths."""
        mus = np.asarray(mus, dtype=float)
        lams = np.broadcast_to(np.asarray(lams, dtype=float), mus.shape)
        m = mus.size
        if axis == 0:
            return cls(np.repeat(mus[:, None], m, axis=1), np.repeat(lams[:, None], m, axis=1))
        return cls(np.repeat(mus[None, :], m, axis=0), np.repeat(lams[None, :], m, axis=0))

    def refined(self, factor: int) -> "PeriodicMaterial":
        """The same material described on a grid ``factor`` times finer."""
        k = int(factor)
        return PeriodicMaterial(np.kron(self.mu, np.ones((k, k))), np.kron(self.lam, np.ones((k, k))))

    def is_homogeneous(self) -> bool:
        return bool(np.all(self.mu == self.mu.flat[0]) and np.all(self.lam == self.lam.flat[0]))

    def lame_at(self, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        i, j = subcell_index(y, self.resolution)
        return self.mu[i, j], self.lam[i, j]


def eval_W(material: PeriodicMaterial, y, F) -> np.ndarray:
    """Stored energy density W(y, F); vectorised over leading axes of ``y`` and ``F``."""
    F = np.asarray(F, dtype=float)
    mu, lam = material.lame_at(np.asarray(y, dtype=float))
    E = np.einsum("...ki,...kj->...ij", F, F) - np.eye(3)
    tr = np.trace(E, axis1=-2, axis2=-1)
    return 0.25 * mu * np.sum(E * E, axis=(-2, -1)) + 0.125 * lam * tr * tr


@dataclass(frozen=True)
class QuadraticForm3:
    """Per-subcell 6x6 Voigt matrices, shape ``(M, M, 6, 6)``."""

    coeffs: np.ndarray

    @property
    def resolution(self) -> int:
        return self.coeffs.shape[0]

    def evaluate(self, y, G) -> np.ndarray:
        i, j = subcell_index(y, self.resolution)
        v = voigt3(G)
        return np.einsum("...a,...ab,...b->...", v, self.coeffs[i, j], v)


@dataclass(frozen=True)
class QuadraticForm2:
    """Per-subcell reduced forms.

    ``coeffs[i, j]`` is the 3x3 Voigt matrix of Q2 on the subcell and
    ``minimizer[i, j]`` maps the Voigt vector of A to the minimising column
    ``a`` in ``Q2(A) = min_a Q3(A + a (x) e3)``.
    """

    coeffs: np.ndarray
    minimizer: np.ndarray
    material: PeriodicMaterial | None = field(default=None, compare=False)

    @property
    def resolution(self) -> int:
        return self.coeffs.shape[0]

    def evaluate(self, y, A) -> np.ndarray:
        i, j = subcell_index(y, self.resolution)
        w = voigt2(A)
        return np.einsum("...a,...ab,...b->...", w, self.coeffs[i, j], w)

    def minimizing_column(self, y, A) -> np.ndarray:
        i, j = subcell_index(y, self.resolution)
        return np.einsum("...ab,...b->...a", self.minimizer[i, j], voigt2(A))

    def mean(self, A) -> float:
        """Cell average of Q2(., A) for a constant 2x2 matrix A."""
        w = voigt2(A)
        return float(np.mean(np.einsum("a,ijab,b->ij", w, self.coeffs, w)))

    def scalar_field(self, A) -> np.ndarray:
        """Subcell values of Q2(., A), shape (M, M)."""
        w = voigt2(A)
        return np.einsum("a,ijab,b->ij", w, self.coeffs, w)


def linearize_q3(material: PeriodicMaterial) -> QuadraticForm3:
    """Quadratic form of W at the identity: mu |sym G|^2 + lam/2 (tr G)^2."""
    mu = material.mu[..., None, None]
    lam = material.lam[..., None, None]
    diag = np.diag([1.0, 1.0, 1.0, 2.0, 2.0, 2.0])
    trace = np.zeros((6, 6))
    trace[:3, :3] = 1.0
    return QuadraticForm3(mu * diag + 0.5 * lam * trace)


def reduce_q2(q3: QuadraticForm3, material: PeriodicMaterial | None = None) -> QuadraticForm2:
    """Minimise Q3(A + a (x) e3) over the column a, subcell by subcell."""
    C = q3.coeffs
    caa = C[..., _IN_PLANE, :][..., :, _IN_PLANE]
    cab = C[..., _IN_PLANE, :][..., :, _OUT_OF_PLANE]
    cbb = C[..., _OUT_OF_PLANE, :][..., :, _OUT_OF_PLANE]
    eig = np.linalg.eigvalsh(cbb)
    scale = np.max(np.abs(C), axis=(-2, -1))
    if np.any(eig[..., 0] <= 1e-13 * np.maximum(scale, 1e-300)):
        raise SingularReduction("normal equations of the out-of-plane minimisation are singular")
    # z = (S33, S23, S13) of the minimiser; z = -cbb^{-1} cba w
    z_map = -np.linalg.solve(cbb, np.swapaxes(cab, -1, -2))
    coeffs = caa + np.einsum("...ab,...bc->...ac", cab, z_map)
    coeffs = 0.5 * (coeffs + np.swapaxes(coeffs, -1, -2))
    # a = (2 S13, 2 S23, S33)
    a_map = np.stack([2.0 * z_map[..., 2, :], 2.0 * z_map[..., 1, :], z_map[..., 0, :]], axis=-2)
    return QuadraticForm2(coeffs, a_map, material)


def q2_of(material: PeriodicMaterial) -> QuadraticForm2:
    """Shortcut for ``reduce_q2(linearize_q3(material))`` keeping the material attached."""
    return reduce_q2(linearize_q3(material), material)


def load_material(path: str | Path) -> PeriodicMaterial:
    """Read a material file.

    JSON object with keys ``resolution`` (M), ``mu`` and ``lambda``.  The two
    arrays are row-major: either nested M x M lists or flat lists of M*M
    numbers, row ``i`` holding the subcells with y1 in ``[i/M, (i+1)/M)``.
    """
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ValidationError(f"cannot read material file {path}: {exc}") from exc
    return material_from_dict(data)


def material_from_dict(data: dict) -> PeriodicMaterial:
    try:
        m = int(data["resolution"])
        mu = np.asarray(data["mu"], dtype=float)
        lam = np.asarray(data["lambda"], dtype=float)
    except (KeyError, TypeError, ValueError) as exc:
        raise ValidationError(f"malformed material description: {exc}") from exc
    if m < 1:
        raise ValidationError("resolution must be a positive integer")
    try:
        mu = mu.reshape(m, m)
        lam = lam.reshape(m, m)
    except ValueError as exc:
        raise ValidationError(f"arrays do not match resolution {m}") from exc
    return PeriodicMaterial(mu, lam)


def material_to_dict(material: PeriodicMaterial) -> dict:
    return {
        "resolution": material.resolution,
        "mu": material.mu.tolist(),
        "lambda": material.lam.tolist(),
    }


def save_material(material: PeriodicMaterial, path: str | Path) -> None:
    Path(path).write_text(json.dumps(material_to_dict(material), indent=2) + "\n")
