"""Ground states of the 3D dipolar Gross-Pitaevskii energy with a subcritical
attractive p-power term, found as local minimizers on the mass sphere."""
from .params import ModelParams, WellGeometry, derive_geometry, validate_regime
from .spectral import Grid3

__all__ = ["ModelParams", "WellGeometry", "Grid3", "derive_geometry", "validate_regime"]
