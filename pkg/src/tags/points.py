"""Point-prompt sampling: training draws and the three inference strategies."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np
from scipy import ndimage

from .volume import MaskVolume, VolumeError

Label = Literal["foreground", "background"]


class NoLesionError(ValueError):
    """Strategy-based point selection requested on an empty tumor mask."""


@dataclass(frozen=True)
class PointPrompt:
    coord: tuple[int, int, int]  # (z, y, x) voxel indices
    label: Label

    def as_record(self) -> tuple[int, int, int, str]:
        return (*self.coord, self.label)


@dataclass
class SelectionStrategy:
    kind: Literal["random", "edge", "central"]
    k: int = 1

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.kind == "central" and self.k != 1:
            raise ValueError("central selection uses exactly one point")

    @property
    def name(self) -> str:
        return f"{self.kind}({self.k})"


def _pick(indices: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    replace = indices.size < k
    return rng.choice(indices, size=k, replace=replace)


def sample_train_points(
    tumor: MaskVolume, n: int = 10, rng: np.random.Generator | None = None
) -> list[PointPrompt]:
    """Draw n training points; split between tumor and background when a tumor
    is present, otherwise all from the background."""
    if rng is None:
        raise ValueError("a seeded rng is required")
    shape = tumor.shape
    fg_idx = np.flatnonzero(tumor.data)
    bg_idx = np.flatnonzero(tumor.data == 0)
    if bg_idx.size == 0:
        raise VolumeError("volume has no background voxels")
    points: list[PointPrompt] = []
    if fg_idx.size:
        n_fg = n // 2
        for flat in _pick(fg_idx, n_fg, rng):
            points.append(PointPrompt(tuple(np.unravel_index(flat, shape)), "foreground"))
        n_bg = n - n_fg
    else:
        n_bg = n
    for flat in _pick(bg_idx, n_bg, rng):
        points.append(PointPrompt(tuple(np.unravel_index(flat, shape)), "background"))
    return [PointPrompt(tuple(int(c) for c in p.coord), p.label) for p in points]


def boundary_mask(mask: np.ndarray) -> np.ndarray:
    """Voxels of the mask with at least one non-mask 6-neighbor (array border
    counts as outside)."""
    padded = np.pad(mask.astype(bool), 1)
    core = padded[1:-1, 1:-1, 1:-1]
    interior = core.copy()
    for axis in range(3):
        for shift in (-1, 1):
            interior &= np.roll(padded, shift, axis=axis)[1:-1, 1:-1, 1:-1]
    return (core & ~interior).astype(np.uint8)


def largest_component(mask: MaskVolume) -> MaskVolume:
    """Keep the 26-connected component with the most voxels.

    Ties break toward the component containing the lexicographically smallest
    voxel. An empty mask stays empty.
    """
    if mask.is_empty():
        return MaskVolume(np.zeros_like(mask.data), spacing=mask.spacing, origin=mask.origin)
    labels, n = ndimage.label(mask.data, structure=np.ones((3, 3, 3), dtype=int))
    sizes = np.bincount(labels.ravel())[1:]
    best_size = sizes.max()
    candidates = np.flatnonzero(sizes == best_size) + 1
    if candidates.size > 1:
        flat = labels.ravel()
        first_idx = {c: np.flatnonzero(flat == c)[0] for c in candidates}
        best = min(candidates, key=lambda c: first_idx[c])
    else:
        best = candidates[0]
    return MaskVolume((labels == best).astype(np.uint8), spacing=mask.spacing, origin=mask.origin)


def central_point(mask: np.ndarray) -> tuple[int, int, int]:
    """Deepest interior voxel: argmax of the distance to the nearest non-mask
    voxel (outside the array counts as non-mask); lexicographic tie-break."""
    padded = np.pad(mask.astype(bool), 1)
    dist = ndimage.distance_transform_edt(padded)[1:-1, 1:-1, 1:-1]
    dist = np.where(mask > 0, dist, -1.0)
    flat = int(np.argmax(dist))  # first maximum in C order == lexicographic
    return tuple(int(c) for c in np.unravel_index(flat, mask.shape))


def select_inference_points(
    tumor: MaskVolume,
    strategy: SelectionStrategy,
    rng: np.random.Generator | None = None,
) -> list[PointPrompt]:
    """Pick foreground prompt points by strategy.

    random: uniform over tumor voxels; edge: uniform over 6-neighbor boundary
    voxels; central: the interior distance-transform argmax. Edge and central
    operate on the largest connected component.
    """
    if tumor.is_empty():
        raise NoLesionError("tumor mask is empty")
    shape = tumor.shape
    if strategy.kind == "random":
        if rng is None:
            raise ValueError("random selection requires a seeded rng")
        idx = np.flatnonzero(tumor.data)
        if idx.size >= strategy.k:
            chosen = rng.choice(idx, size=strategy.k, replace=False)
        else:
            chosen = _pick(idx, strategy.k, rng)
    elif strategy.kind == "edge":
        if rng is None:
            raise ValueError("edge selection requires a seeded rng")
        comp = largest_component(tumor)
        idx = np.flatnonzero(boundary_mask(comp.data))
        if idx.size >= strategy.k:
            chosen = rng.choice(idx, size=strategy.k, replace=False)
        else:
            chosen = _pick(idx, strategy.k, rng)
    elif strategy.kind == "central":
        comp = largest_component(tumor)
        coord = central_point(comp.data)
        return [PointPrompt(coord, "foreground")]
    else:
        raise ValueError(f"unknown strategy kind {strategy.kind!r}")
    return [
        PointPrompt(tuple(int(c) for c in np.unravel_index(int(f), shape)), "foreground")
        for f in chosen
    ]


__all__ = [
    "PointPrompt",
    "SelectionStrategy",
    "NoLesionError",
    "sample_train_points",
    "select_inference_points",
    "boundary_mask",
    "largest_component",
    "central_point",
]
