"""Pipeline helpers: file-level registration, warping, phantoms, metrics and mode comparison."""

from __future__ import annotations

import dataclasses
import hashlib
import logging
import os
from pathlib import Path
from typing import Any, Dict, Iterable, List, Mapping, Optional, Sequence

from phantom_generation import PhantomSpec, make_ground_truth_svf, make_phantom, make_registration_pair
from registration_loss import LossWeights, eds, ncc
from registration_metrics import deformation_stats, dice, fa_ssd, render_panel
from spatial_transform import (
    exp_svf,
    jacobian,
    jacobian_determinant,
    warp_labels_nearest,
    warp_scalar,
    warp_tensor_components,
)
from tensor_reorientation import fa_map, reorient_field_counted
from velocity_optimization import RegistrationConfig, RegistrationInputs, register, warp_moving
from volume_io import (
    LabelVolume,
    ScalarVolume,
    VectorField,
    VectorKind,
    VolumeKind,
    load_volume,
    save_volume,
)

from . import __version__
from .reports import read_report, write_report, write_trace

logger = logging.getLogger(__name__)

ARTIFACTS_ROOT = Path(os.environ.get("DTIREG_ARTIFACTS", "artifacts"))
DEFAULT_REGISTRATION_DIR = ARTIFACTS_ROOT / "registration"
DEFAULT_PHANTOM_PREFIX = ARTIFACTS_ROOT / "phantoms" / "phantom"

OUTPUT_FILES = {
    "phi": "phi.nii.gz",
    "velocity": "velocity.nii.gz",
    "warped_t2w": "warped_t2w.nii.gz",
    "warped_dti": "warped_dti.nii.gz",
    "trace": "loss_trace.txt",
    "manifest": "manifest.txt",
}

WARP_TYPES = ("scalar", "tensor", "label")
FA_WINDOW = (0.0, 1.0)


def input_fingerprint(paths: Iterable[Optional[Path]], params: Mapping[str, object]) -> str:
    """Create a stable hash over parameters and input files to drive ``--reuse``."""

    hasher = hashlib.sha256()
    for key in sorted(params):
        hasher.update(f"{key}={params[key]}".encode("utf-8"))

    for ref in paths:
        if ref is None:
            hasher.update(b"-")
            continue
        path = Path(ref)
        hasher.update(path.name.encode("utf-8"))
        try:
            hasher.update(path.read_bytes())
        except FileNotFoundError:
            continue

    return hasher.hexdigest()


def load_inputs(
    fixed_t2w: Path,
    moving_t2w: Path,
    *,
    fixed_dti: Optional[Path] = None,
    moving_dti: Optional[Path] = None,
    mask: Optional[Path] = None,
) -> RegistrationInputs:
    mask_array = None
    if mask is not None:
        mask_array = load_volume(mask, VolumeKind.LABEL).data > 0
    return RegistrationInputs(
        fixed_t2w=load_volume(fixed_t2w, VolumeKind.SCALAR),
        moving_t2w=load_volume(moving_t2w, VolumeKind.SCALAR),
        fixed_dti=load_volume(fixed_dti, VolumeKind.TENSOR) if fixed_dti is not None else None,
        moving_dti=load_volume(moving_dti, VolumeKind.TENSOR) if moving_dti is not None else None,
        mask=mask_array,
    )


def _outputs_in(out_dir: Path, with_dti: bool) -> Dict[str, Path]:
    return {key: out_dir / name for key, name in OUTPUT_FILES.items() if with_dti or key != "warped_dti"}


def _reusable(outputs: Mapping[str, Path], fingerprint: str) -> bool:
    manifest = outputs["manifest"]
    if not manifest.exists():
        return False
    try:
        recorded = read_report(manifest).get("fingerprint")
    except (OSError, ValueError):
        return False
    return recorded == fingerprint and all(path.exists() for path in outputs.values())


def run_registration(
    fixed_t2w: Path,
    moving_t2w: Path,
    *,
    fixed_dti: Optional[Path] = None,
    moving_dti: Optional[Path] = None,
    mask: Optional[Path] = None,
    cfg: RegistrationConfig = RegistrationConfig(),
    out_dir: Path = DEFAULT_REGISTRATION_DIR,
    reuse: bool = False,
) -> dict[str, Any]:
    """Register moving onto fixed and write phi, v, warped volumes, the loss trace and a run manifest.

    Returns a summary dict with the output paths, the fingerprint and whether a
    previous run was reused.
    """

    with_dti = fixed_dti is not None
    outputs = _outputs_in(Path(out_dir), with_dti)
    params = {f"cfg.{k}": v for k, v in cfg.as_dict().items() if k not in ("threads", "deterministic")}
    params["version"] = __version__
    fingerprint = input_fingerprint([fixed_t2w, moving_t2w, fixed_dti, moving_dti, mask], params)
    summary: dict[str, Any] = {"outputs": outputs, "fingerprint": fingerprint, "reused": False}

    if reuse and _reusable(outputs, fingerprint):
        logger.info("[register] reusing %s (fingerprint %s)", outputs["manifest"], fingerprint[:12])
        summary["reused"] = True
        return summary

    inputs = load_inputs(fixed_t2w, moving_t2w, fixed_dti=fixed_dti, moving_dti=moving_dti, mask=mask)
    logger.info(
        "[register] grid %s, dti=%s, levels=%s", inputs.grid.describe(), inputs.has_dti, cfg.as_dict()["levels"]
    )
    result = register(inputs, cfg)
    moved = warp_moving(inputs, result.displacement, strict=cfg.strict_folds)

    save_volume(result.displacement, outputs["phi"])
    save_volume(result.velocity, outputs["velocity"])
    save_volume(moved.t2w, outputs["warped_t2w"])
    if moved.dti is not None:
        save_volume(moved.dti, outputs["warped_dti"])
    write_trace(result.trace, outputs["trace"])

    initial = result.trace[0].report
    stats = deformation_stats(result.displacement)
    manifest: Dict[str, object] = {
        "version": __version__,
        "command": "register",
        "fingerprint": fingerprint,
        "fixed_t2w": fixed_t2w,
        "moving_t2w": moving_t2w,
        "fixed_dti": fixed_dti if fixed_dti is not None else "",
        "moving_dti": moving_dti if moving_dti is not None else "",
        "mask": mask if mask is not None else "",
        "grid": inputs.grid.describe(),
    }
    manifest.update({f"cfg.{k}": v for k, v in cfg.as_dict().items()})
    manifest.update({f"provenance.{k}": v for k, v in cfg.provenance().items()})
    manifest.update({f"initial.{k}": v for k, v in initial.as_dict().items()})
    manifest.update({f"final.{k}": v for k, v in result.report.as_dict().items()})
    manifest.update({f"deformation.{k}": v for k, v in stats.as_dict().items()})
    manifest["accepted_iterations"] = sum(1 for entry in result.trace if entry.event == "accept")
    manifest["reorient.substituted"] = moved.substituted
    write_report(manifest, outputs["manifest"])

    logger.info(
        "[register] done total %.6f -> %.6f, min det %.4f, outputs in %s",
        initial.total, result.report.total, stats.min_det, out_dir,
    )
    summary.update({"initial": initial, "final": result.report, "deformation": stats})
    return summary


def warp_file(in_path: Path, field_path: Path, out_path: Path, kind: str, *, strict: bool = True) -> int:
    """Warp one volume file by a displacement file; tensors are also reoriented.

    Returns the number of identity substitutions made in lenient mode.
    """

    if kind not in WARP_TYPES:
        raise ValueError(f"unknown warp type {kind!r}; expected one of {WARP_TYPES}")
    phi = load_volume(field_path, VolumeKind.VECTOR)
    substituted = 0
    if kind == "scalar":
        out = warp_scalar(load_volume(in_path, VolumeKind.SCALAR), phi)
    elif kind == "label":
        out = warp_labels_nearest(load_volume(in_path, VolumeKind.LABEL), phi)
    else:
        moved = warp_tensor_components(load_volume(in_path, VolumeKind.TENSOR), phi)
        out, substituted = reorient_field_counted(moved, phi, strict=strict)
    save_volume(out, out_path)
    logger.info("[warp] %s %s -> %s", kind, in_path, out_path)
    return substituted


def exp_file(velocity_path: Path, out_path: Path, steps: int) -> VectorField:
    velocity = load_volume(velocity_path, VolumeKind.VECTOR, vector_kind=VectorKind.VELOCITY)
    phi = exp_svf(velocity, steps)
    save_volume(phi, out_path)
    return phi


def jacobian_file(field_path: Path, out_path: Path) -> ScalarVolume:
    det = jacobian_determinant(jacobian(load_volume(field_path, VolumeKind.VECTOR)))
    save_volume(det, out_path)
    return det


def fa_file(tensor_path: Path, out_path: Path) -> ScalarVolume:
    out = fa_map(load_volume(tensor_path, VolumeKind.TENSOR))
    save_volume(out, out_path)
    return out


def _with_suffix(prefix: Path, name: str) -> Path:
    return prefix.parent / f"{prefix.name}_{name}.nii.gz"


def phantom_files(
    spec: PhantomSpec,
    prefix: Path = DEFAULT_PHANTOM_PREFIX,
    *,
    max_displacement: Optional[float] = None,
    pair_noise: float = 0.0,
) -> Dict[str, Path]:
    """Write ``<prefix>_t2w/_dti/_labels``; with ``max_displacement`` also a moving set and its ground truth."""

    phantom = make_phantom(spec)
    written = {
        "t2w": save_volume(phantom.t2w, _with_suffix(prefix, "t2w")),
        "dti": save_volume(phantom.dti, _with_suffix(prefix, "dti")),
        "labels": save_volume(phantom.labels, _with_suffix(prefix, "labels")),
    }
    if max_displacement is not None:
        v_true = make_ground_truth_svf(spec.grid, max_displacement, spec.seed)
        pair = make_registration_pair(phantom, v_true, noise=pair_noise, seed=spec.seed)
        written.update(
            {
                "moving_t2w": save_volume(pair.moving.t2w, _with_suffix(prefix, "moving_t2w")),
                "moving_dti": save_volume(pair.moving.dti, _with_suffix(prefix, "moving_dti")),
                "moving_labels": save_volume(pair.moving.labels, _with_suffix(prefix, "moving_labels")),
                "v_true": save_volume(pair.v_true, _with_suffix(prefix, "v_true")),
                "phi_true": save_volume(pair.phi_true, _with_suffix(prefix, "phi_true")),
            }
        )
    logger.info("[phantom] %s seed=%d -> %s_*", spec.kind.value, spec.seed, prefix)
    return written


def metric_report(name: str, a: Path, b: Optional[Path] = None) -> Dict[str, object]:
    """Compute one metric over files: dice, fa-ssd, ncc, eds (two operands) or defstats (one field)."""

    if name == "defstats":
        return dict(deformation_stats(load_volume(a, VolumeKind.VECTOR)).as_dict())
    if b is None:
        raise ValueError(f"metric {name!r} needs two operands")
    if name == "dice":
        return dict(dice(load_volume(a, VolumeKind.LABEL), load_volume(b, VolumeKind.LABEL)).as_dict())
    if name == "fa-ssd":
        return {"fa_ssd": fa_ssd(load_volume(a, VolumeKind.TENSOR), load_volume(b, VolumeKind.TENSOR))}
    if name == "ncc":
        return {"ncc": ncc(load_volume(a, VolumeKind.SCALAR), load_volume(b, VolumeKind.SCALAR))}
    if name == "eds":
        return {"eds": eds(load_volume(a, VolumeKind.TENSOR), load_volume(b, VolumeKind.TENSOR))}
    raise ValueError(f"unknown metric {name!r}")


def snapshot_files(
    out_path: Path,
    fixed_t2w: Path,
    moving_t2w: Path,
    warped_t2w: Sequence[Path] = (),
    *,
    fixed_dti: Optional[Path] = None,
    moving_dti: Optional[Path] = None,
    warped_dti: Sequence[Path] = (),
    labels: Sequence[Optional[Path]] = (),
    outline_label: Optional[int] = None,
    slice_index: Optional[int] = None,
) -> Path:
    """T2w row (fixed, moving, then one column per warp) plus an FA row when tensors are given.

    Several warps side by side compare registrations of the same pair, e.g. T2w-only
    next to T2w+DTI.
    """

    t2w_paths = [fixed_t2w, moving_t2w, *warped_t2w]
    rows: List[List[ScalarVolume]] = [[load_volume(p, VolumeKind.SCALAR) for p in t2w_paths]]
    windows: List[Optional[tuple]] = [None]
    dti_paths = [p for p in (fixed_dti, moving_dti) if p is not None] + list(warped_dti)
    if dti_paths:
        rows.append([fa_map(load_volume(p, VolumeKind.TENSOR)) for p in dti_paths])
        windows.append(FA_WINDOW)
    outlines = [load_volume(p, VolumeKind.LABEL) if p is not None else None for p in labels] or None
    out = render_panel(
        rows, out_path, slice_index=slice_index, windows=windows, outlines=outlines, outline_label=outline_label
    )
    logger.info("[snapshot] wrote %s", out)
    return out


def compare_modes(
    inputs: RegistrationInputs,
    cfg: RegistrationConfig = RegistrationConfig(),
    *,
    fixed_labels: Optional[LabelVolume] = None,
    moving_labels: Optional[LabelVolume] = None,
) -> List[Dict[str, object]]:
    """Identity, T2w-only (alpha = 0) and T2w+DTI rows with FA-SSD, NCC and, given labels, mean Dice."""

    if not inputs.has_dti:
        raise ValueError("compare needs fixed and moving tensor volumes")
    if (fixed_labels is None) != (moving_labels is None):
        raise ValueError("fixed and moving label volumes must be given together")

    def row(mode: str, phi: VectorField) -> Dict[str, object]:
        moved = warp_moving(inputs, phi, strict=False)
        out: Dict[str, object] = {
            "mode": mode,
            "fa_ssd": fa_ssd(inputs.fixed_dti, moved.dti),
            "ncc": ncc(inputs.fixed_t2w, moved.t2w),
        }
        if fixed_labels is not None:
            out["dice_mean"] = dice(fixed_labels, warp_labels_nearest(moving_labels, phi)).mean
        out["min_det"] = deformation_stats(phi).min_det
        return out

    identity = VectorField.zeros(inputs.grid, VectorKind.DISPLACEMENT)
    rows = [row("identity", identity)]
    t2w_cfg = dataclasses.replace(cfg, weights=LossWeights(alpha=0.0, beta=cfg.weights.beta, lam=cfg.weights.lam))
    for mode, mode_cfg in (("t2w", t2w_cfg), ("t2w+dti", cfg)):
        logger.info("[compare] registering mode %s", mode)
        result = register(inputs, mode_cfg)
        rows.append({**row(mode, result.displacement), "total": result.report.total})
    for r in rows:
        logger.info("[compare] %s", " ".join(f"{k}={v}" for k, v in r.items()))
    return rows

