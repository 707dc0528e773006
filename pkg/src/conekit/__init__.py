"""Plane and cone geometry, clustering, excess functionals and Whitney cubes near a cone's spine."""

__version__ = "0.1.0"

from .errors import (ConekitError, DegeneratePair, DimensionMismatch,  # noqa: E402
                     HypothesisViolated, InvalidInput, RankDeficient,
                     RankMismatch, SinglePlane)
from .planes import (AffinePlane, AngleSpectrum, Subspace,  # noqa: E402
                     canonical_rotation, half_difference_singular_values,
                     morgan_angles, project, quasiconformality_ratio,
                     unit_ball_hausdorff)

__all__ = [
    "AffinePlane", "AngleSpectrum", "ConekitError", "DegeneratePair", "DimensionMismatch",
    "HypothesisViolated", "InvalidInput", "RankDeficient", "RankMismatch", "SinglePlane",
    "Subspace", "canonical_rotation", "half_difference_singular_values", "morgan_angles",
    "project", "quasiconformality_ratio", "unit_ball_hausdorff",
]
