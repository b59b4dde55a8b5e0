"""Homogenised bending energies of thin periodic plates.

Cell problems for the moderate and supercritical regimes, developable
surfaces built from a leading curve, explicit recovery sequences with a 3D
energy quadrature, and discrete unfolding and mollification.
"""

from __future__ import annotations

__version__ = "0.1.0"

from ._core import BACKEND
from .cell_moderate import assemble_qhom_m, solve_cell_m
from .cell_supercritical import (
    BendingTensor,
    classify_direction,
    direction_sweep,
    factor_bending,
    oracle_penalized_2d,
    solve_cell_sc,
)
from .errors import PlateHomogError, SolverError, ValidationError
from .geometry import (
    DevelopableSurface,
    LeadingCurve,
    build_surface,
    cantor_curve,
    integrate_darboux,
    isometry_defect,
    surface_energy,
)
from .material import PeriodicMaterial, linearize_q3, load_material, q2_of, reduce_q2
from .recovery import (
    CylinderSurface,
    RecoveryCase,
    ScalingRegime,
    build_recovery_moderate,
    build_recovery_sc,
    convergence_study,
    energy_3d,
)
from .two_scale import GridFunction, bending_bounds_report, mollify, two_scale_error, unfold

__all__ = [
    "BACKEND", "BendingTensor", "CylinderSurface", "DevelopableSurface", "GridFunction", "LeadingCurve",
    "PeriodicMaterial", "PlateHomogError", "RecoveryCase", "ScalingRegime", "SolverError", "ValidationError",
    "assemble_qhom_m", "bending_bounds_report", "build_recovery_moderate", "build_recovery_sc",
    "build_surface", "cantor_curve", "classify_direction", "convergence_study", "direction_sweep",
    "energy_3d", "factor_bending", "integrate_darboux", "isometry_defect", "linearize_q3", "load_material",
    "mollify", "oracle_penalized_2d", "q2_of", "reduce_q2", "solve_cell_m", "solve_cell_sc",
    "surface_energy", "two_scale_error", "unfold",
]
