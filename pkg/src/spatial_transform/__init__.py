"""Package for resampling (spatial transform) and velocity-field exponentiation."""

from .svf import (
    DEFAULT_SIGMA_MM,
    DEFAULT_STEPS,
    JacobianField,
    compose,
    exp_svf,
    gaussian_smooth,
    gaussian_taps,
    jacobian,
    jacobian_determinant,
)
from .trilinear import (
    sample_channels,
    sample_trilinear,
    voxel_coordinates,
    warp_labels_nearest,
    warp_scalar,
    warp_tensor_components,
    warp_vector,
)

__all__ = [
    "DEFAULT_SIGMA_MM",
    "DEFAULT_STEPS",
    "JacobianField",
    "compose",
    "exp_svf",
    "gaussian_smooth",
    "gaussian_taps",
    "jacobian",
    "jacobian_determinant",
    "sample_channels",
    "sample_trilinear",
    "voxel_coordinates",
    "warp_labels_nearest",
    "warp_scalar",
    "warp_tensor_components",
    "warp_vector",
]
