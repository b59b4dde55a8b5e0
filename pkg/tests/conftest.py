from __future__ import annotations

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from plate_homog.material import PeriodicMaterial, q2_of

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def homogeneous():
    return PeriodicMaterial.homogeneous(1.0, 0.0)


@pytest.fixture
def laminate():
    """Two phases mu = 1, 10 stacked along y1, lambda = 0."""
    return PeriodicMaterial.laminate([1.0, 10.0], [0.0, 0.0])


@pytest.fixture
def laminate_q2(laminate):
    return q2_of(laminate)


def random_two_phase(rng: np.random.Generator, m: int = 2) -> PeriodicMaterial:
    """Random two-phase material on an m x m subcell grid."""
    mus = rng.uniform(0.5, 10.0, 2)
    lams = rng.uniform(0.0, 5.0, 2)
    pick = rng.integers(0, 2, (m, m))
    if np.all(pick == pick.flat[0]):
        pick[0, 0] = 1 - pick[0, 0]
    return PeriodicMaterial(mus[pick], lams[pick])


def rotation(rng: np.random.Generator) -> np.ndarray:
    Q, R = np.linalg.qr(rng.standard_normal((3, 3)))
    Q = Q * np.sign(np.diag(R))
    if np.linalg.det(Q) < 0:
        Q[:, 0] = -Q[:, 0]
    return Q
