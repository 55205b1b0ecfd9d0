"""Volume containers and preprocessing (resampling, normalization, channel injection).

Array convention throughout the package: axis order (z, y, x), i.e. (depth,
height, width). Spacing and origin follow the same ordering, in millimeters.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage


class VolumeError(ValueError):
    """Invalid volume geometry or contents."""


# Intensity clipping windows (HU) used by the public tumor benchmarks.
DATASET_CLIP_RANGES = {
    "kits": (-52.0, 247.0),
    "lits": (-17.0, 201.0),
    "msd_pancreas": (-39.0, 204.0),
}


@dataclass
class Volume:
    """Dense 3D scalar grid with physical spacing metadata."""

    data: np.ndarray
    spacing: tuple[float, float, float] = (1.0, 1.0, 1.0)
    origin: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self):
        self.data = np.asarray(self.data)
        if self.data.ndim != 3:
            raise VolumeError(f"expected 3D data, got shape {self.data.shape}")
        if any(s <= 0 for s in self.data.shape):
            raise VolumeError(f"degenerate volume shape {self.data.shape}")
        self.spacing = tuple(float(s) for s in self.spacing)
        self.origin = tuple(float(o) for o in self.origin)
        if len(self.spacing) != 3 or any(s <= 0 for s in self.spacing):
            raise VolumeError(f"spacing must be 3 positive values, got {self.spacing}")

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.data.shape  # type: ignore[return-value]


def as_mask(data: np.ndarray) -> np.ndarray:
    """Validate and return a {0,1} uint8 mask array."""
    data = np.asarray(data)
    vals = np.unique(data)
    if not np.all(np.isin(vals, (0, 1))):
        raise VolumeError(f"mask values must be 0/1, found {vals[:8]}")
    return data.astype(np.uint8)


@dataclass
class MaskVolume:
    """Binary label volume paired with an image Volume."""

    data: np.ndarray
    spacing: tuple[float, float, float] = (1.0, 1.0, 1.0)
    origin: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self):
        self.data = as_mask(self.data)
        if self.data.ndim != 3:
            raise VolumeError(f"expected 3D mask, got shape {self.data.shape}")
        self.spacing = tuple(float(s) for s in self.spacing)
        self.origin = tuple(float(o) for o in self.origin)

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.data.shape  # type: ignore[return-value]

    def is_empty(self) -> bool:
        return not bool(self.data.any())


@dataclass
class ModelInput:
    """3-channel model input: channels 0,1 = image copies, channel 2 = organ mask."""

    channels: np.ndarray
    spacing: tuple[float, float, float] = (1.0, 1.0, 1.0)

    def __post_init__(self):
        self.channels = np.asarray(self.channels, dtype=np.float32)
        if self.channels.ndim != 4 or self.channels.shape[0] != 3:
            raise VolumeError(f"expected (3,d,h,w) channels, got {self.channels.shape}")
        self.spacing = tuple(float(s) for s in self.spacing)

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.channels.shape[1:]  # type: ignore[return-value]

    @property
    def organ_channel(self) -> np.ndarray:
        return self.channels[2]


def resample(v: Volume | MaskVolume, target_spacing) -> Volume | MaskVolume:
    """Resample to a new voxel spacing.

    Output extent per axis is round(extent * spacing / target_spacing).
    Images use trilinear interpolation, masks nearest-neighbor.
    """
    target_spacing = tuple(float(s) for s in target_spacing)
    if len(target_spacing) != 3 or any(s <= 0 for s in target_spacing):
        raise VolumeError(f"target spacing must be 3 positive values, got {target_spacing}")
    is_mask = isinstance(v, MaskVolume)
    in_shape = v.data.shape
    out_shape = tuple(
        max(1, int(round(in_shape[i] * v.spacing[i] / target_spacing[i]))) for i in range(3)
    )
    if out_shape == in_shape and target_spacing == v.spacing:
        out = v.data.copy()
    else:
        # Output voxel i samples input coordinate i * target / source.
        axes = [
            np.arange(out_shape[i]) * (target_spacing[i] / v.spacing[i]) for i in range(3)
        ]
        coords = np.meshgrid(*axes, indexing="ij")
        order = 0 if is_mask else 1
        out = ndimage.map_coordinates(
            v.data.astype(np.float64 if not is_mask else v.data.dtype),
            np.stack([c.ravel() for c in coords]),
            order=order,
            mode="nearest",
        ).reshape(out_shape)
    cls = MaskVolume if is_mask else Volume
    return cls(out, spacing=target_spacing, origin=v.origin)


def clip_normalize(v: Volume, lo: float, hi: float) -> Volume:
    """Clip intensities to [lo, hi] and map linearly onto [0, 1]."""
    if not lo < hi:
        raise VolumeError(f"need lo < hi, got [{lo}, {hi}]")
    data = np.clip(v.data.astype(np.float64), lo, hi)
    data = (data - lo) / (hi - lo)
    return Volume(data, spacing=v.spacing, origin=v.origin)


def inject_organ_channel(image: Volume, organ: MaskVolume) -> ModelInput:
    """Stack the image twice plus the organ mask as the third channel."""
    if image.shape != organ.shape:
        raise VolumeError(f"shape mismatch: image {image.shape} vs organ {organ.shape}")
    img = image.data.astype(np.float32)
    channels = np.stack([img, img, organ.data.astype(np.float32)])
    return ModelInput(channels, spacing=image.spacing)


__all__ = [
    "Volume",
    "MaskVolume",
    "ModelInput",
    "VolumeError",
    "as_mask",
    "resample",
    "clip_normalize",
    "inject_organ_channel",
]
