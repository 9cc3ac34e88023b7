"""Package for diffusion tensor algebra and finite-strain reorientation."""

from .finite_strain import (
    FoldingError,
    ReorientationError,
    SingularJacobianError,
    check_orientation,
    polar_rotation,
    polar_rotations,
    reorient_field,
    reorient_field_counted,
    reorient_tensor,
)
from .symtensor import (
    SymTensor,
    eigenvalues_sym3,
    fa,
    fa_map,
    from_matrix,
    principal_direction,
    to_matrix,
)

__all__ = [
    "FoldingError",
    "ReorientationError",
    "SingularJacobianError",
    "SymTensor",
    "check_orientation",
    "eigenvalues_sym3",
    "fa",
    "fa_map",
    "from_matrix",
    "polar_rotation",
    "polar_rotations",
    "principal_direction",
    "reorient_field",
    "reorient_field_counted",
    "reorient_tensor",
    "to_matrix",
]
