"""NIfTI-1 reading and writing for every volume kind."""

from __future__ import annotations

import enum
import logging
from pathlib import Path

import numpy as np

try:
    import nibabel as nib
    from nibabel.filebasedimages import ImageFileError
    from nibabel.spatialimages import HeaderDataError
    from nibabel.wrapstruct import WrapStructError
except ImportError as exc:  # pragma: no cover - handled at runtime
    raise ImportError("nibabel is required for NIfTI I/O. Install with `pip install nibabel`.") from exc

from .volumes import (
    AnisotropicSpacingError,
    DimensionMismatchError,
    GridSpec,
    HeaderError,
    LabelVolume,
    ScalarVolume,
    TensorVolume,
    VectorField,
    VectorKind,
    Volume,
    VolumeError,
)

logger = logging.getLogger(__name__)

DESCRIP_PREFIX = "dtireg:"
LABEL_MAX = np.iinfo(np.int16).max


class VolumeKind(str, enum.Enum):
    SCALAR = "scalar"
    VECTOR = "vector"
    TENSOR = "tensor"
    LABEL = "label"


_FRAMES = {VolumeKind.SCALAR: 1, VolumeKind.LABEL: 1, VolumeKind.VECTOR: 3, VolumeKind.TENSOR: 6}


def _frames_of(shape: tuple) -> tuple[tuple[int, int, int], int]:
    if len(shape) == 3:
        return shape, 1
    if len(shape) == 4:
        return shape[:3], shape[3]
    if len(shape) == 5 and shape[3] == 1:
        # 5-D vector layout (t=1, u=components) written by some tools
        return shape[:3], shape[4]
    raise DimensionMismatchError(f"dimension mismatch: unsupported image shape {shape}")


def _stored_vector_kind(header) -> VectorKind:
    descrip = bytes(header["descrip"].item()).decode("ascii", "ignore")
    if descrip.startswith(DESCRIP_PREFIX):
        try:
            return VectorKind(descrip[len(DESCRIP_PREFIX):])
        except ValueError:
            pass
    return VectorKind.DISPLACEMENT


def load_volume(
    path: Path | str,
    kind: VolumeKind | str,
    *,
    vector_kind: VectorKind | str | None = None,
) -> Volume:
    """Load a NIfTI-1 file (``.nii`` or ``.nii.gz``) as the requested volume kind.

    Args:
        path: file to read.
        kind: one of scalar, vector, tensor, label; fixes the expected frame count (1/3/6/1).
        vector_kind: tag for vector fields. When omitted the tag stored in the
            header description is used, falling back to displacement.

    Returns:
        The volume, with its GridSpec taken from pixdim.
    """

    kind = VolumeKind(kind)
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Volume file not found: {path}")

    try:
        img = nib.load(str(path))
    except (ImageFileError, HeaderDataError, WrapStructError, EOFError) as exc:
        raise HeaderError(f"malformed header in {path}: {exc}") from exc
    if not isinstance(img, nib.Nifti1Image) or isinstance(img, nib.Nifti2Image):
        raise HeaderError(f"{path} is not a NIfTI-1 image")

    spatial, frames = _frames_of(img.shape)
    if frames != _FRAMES[kind]:
        raise DimensionMismatchError(
            f"dimension mismatch: {path} has {frames} frame(s), {kind.value} needs {_FRAMES[kind]}"
        )

    zooms = [float(z) for z in img.header.get_zooms()[:3]]
    if min(zooms) <= 0:
        raise HeaderError(f"non-positive pixdim {zooms} in {path}")
    if not np.allclose(zooms, zooms[0], rtol=1e-5, atol=0.0):
        raise AnisotropicSpacingError(f"anisotropic spacing {zooms} in {path}; resample to isotropic first")

    linear = img.affine[:3, :3]
    if np.any(np.abs(linear - np.diag(np.diag(linear))) > 1e-6):
        logger.warning("[io] %s: orientation is not axis-aligned; the affine is ignored", path.name)

    grid = GridSpec(*spatial, spacing_mm=zooms[0])

    if kind is VolumeKind.LABEL:
        raw = np.asanyarray(img.dataobj)
        return LabelVolume(grid, raw.reshape(spatial))

    data = img.get_fdata(dtype=np.float64)
    if kind is VolumeKind.SCALAR:
        return ScalarVolume(grid, data.reshape(spatial))
    data = data.reshape(spatial + (frames,))
    if kind is VolumeKind.TENSOR:
        return TensorVolume(grid, data)
    tag = VectorKind(vector_kind) if vector_kind is not None else _stored_vector_kind(img.header)
    return VectorField(grid, tag, data)


def save_volume(vol: Volume, path: Path | str) -> Path:
    """Write a volume as NIfTI-1: float32 for real data, int16 for labels, diagonal affine."""

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)

    grid = vol.grid
    affine = np.diag([grid.spacing_mm, grid.spacing_mm, grid.spacing_mm, 1.0])

    if isinstance(vol, LabelVolume):
        if vol.data.size and vol.data.max() > LABEL_MAX:
            raise VolumeError(f"label {int(vol.data.max())} does not fit in int16")
        data = vol.data.astype(np.int16)
        dtype = np.int16
        descrip = "label"
    else:
        data = np.asarray(vol.data, dtype=np.float32)
        dtype = np.float32
        if isinstance(vol, VectorField):
            descrip = vol.kind.value
        elif isinstance(vol, TensorVolume):
            descrip = "tensor"
        else:
            descrip = "scalar"

    img = nib.Nifti1Image(data, affine)
    img.set_data_dtype(dtype)
    header = img.header
    header.set_xyzt_units(xyz="mm")
    header["descrip"] = (DESCRIP_PREFIX + descrip).encode("ascii")
    if dtype == np.int16:
        header.set_slope_inter(1.0, 0.0)
    img.set_qform(affine, code=1)
    img.set_sform(affine, code=1)

    nib.save(img, str(path))
    return path
