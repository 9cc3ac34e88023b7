"""Axial-slice PNG panels for visual QC of fixed / moving / warped volumes."""

from __future__ import annotations

from pathlib import Path
from typing import Optional, Sequence, Tuple

import numpy as np
from PIL import Image
from scipy.ndimage import binary_erosion

from volume_io import LabelVolume, ScalarVolume, assert_same_grid

DEFAULT_TILE_PX = 192
OUTLINE_RGB = (0, 200, 255)

Window = Optional[Tuple[float, float]]


def _to_uint8(slab: np.ndarray, window: Window) -> np.ndarray:
    lo, hi = window if window is not None else (float(slab.min()), float(slab.max()))
    scaled = np.clip((slab - lo) / max(hi - lo, 1e-12), 0.0, 1.0)
    return (scaled * 255.0 + 0.5).astype(np.uint8)


def _axial(data: np.ndarray, k: int) -> np.ndarray:
    # x to the right, y up
    return np.flipud(data[:, :, k].T)


def _tile(vol: ScalarVolume, k: int, window: Window, outline: Optional[np.ndarray], tile_px: int) -> Image.Image:
    rgb = np.repeat(_to_uint8(_axial(vol.data, k), window)[..., None], 3, axis=-1)
    if outline is not None:
        rgb[outline] = OUTLINE_RGB
    image = Image.fromarray(np.ascontiguousarray(rgb))
    scale = tile_px / max(image.size)
    size = (max(1, round(image.size[0] * scale)), max(1, round(image.size[1] * scale)))
    return image.resize(size, Image.Resampling.NEAREST)


def _boundary(labels: LabelVolume, label: int, k: int) -> np.ndarray:
    mask = _axial(labels.data, k) == label
    return mask & ~binary_erosion(mask)


def render_panel(
    rows: Sequence[Sequence[ScalarVolume]],
    out_path: Path | str,
    *,
    slice_index: Optional[int] = None,
    windows: Optional[Sequence[Window]] = None,
    outlines: Optional[Sequence[Optional[LabelVolume]]] = None,
    outline_label: Optional[int] = None,
    tile_px: int = DEFAULT_TILE_PX,
) -> Path:
    """Lay out axial slices as a grid of tiles and save a PNG.

    Args:
        rows: volumes per row, e.g. [[F_t2w, M_t2w, W_t2w], [F_fa, M_fa, W_fa]].
        out_path: PNG destination.
        slice_index: axial slice, middle slice by default.
        windows: per-row intensity window (lo, hi); None uses each tile's min/max.
        outlines: per-column label volume whose ``outline_label`` boundary is drawn on the first row.
        tile_px: longest tile edge in pixels.

    Returns:
        The written path.
    """

    rows = [list(r) for r in rows if r]
    if not rows:
        raise ValueError("render_panel needs at least one non-empty row")
    first = rows[0][0]
    for row in rows:
        for vol in row:
            assert_same_grid(first, vol)
    k = first.grid.nz // 2 if slice_index is None else int(slice_index)
    if not 0 <= k < first.grid.nz:
        raise ValueError(f"slice index {k} outside [0, {first.grid.nz})")

    tiles = []
    for r, row in enumerate(rows):
        window = windows[r] if windows is not None and r < len(windows) else None
        line = []
        for c, vol in enumerate(row):
            outline = None
            labels = outlines[c] if r == 0 and outlines is not None and c < len(outlines) else None
            if labels is not None and outline_label is not None:
                outline = _boundary(labels, outline_label, k)
            line.append(_tile(vol, k, window, outline, tile_px))
        tiles.append(line)

    tile_w, tile_h = tiles[0][0].size
    n_cols = max(len(line) for line in tiles)
    canvas = Image.new("RGB", (n_cols * tile_w, len(tiles) * tile_h))
    for r, line in enumerate(tiles):
        for c, tile in enumerate(line):
            canvas.paste(tile, (c * tile_w, r * tile_h))

    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    canvas.save(out_path, format="PNG")
    return out_path
