"""Data augmentation and foreground-biased patch sampling."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .volume import MaskVolume, ModelInput, VolumeError


@dataclass
class AugmentPolicy:
    """Probabilities and magnitudes for the training-time augmentations.

    With probability ``p_flip_rot_intensity`` one of {flip, 90-degree rotation,
    intensity shift} is applied; with probability ``p_zoom`` a random zoom.
    """

    p_flip_rot_intensity: float = 0.5
    p_zoom: float = 0.3
    intensity_shift: float = 0.1
    zoom_range: tuple[float, float] = (0.9, 1.1)

    def __post_init__(self):
        for p in (self.p_flip_rot_intensity, self.p_zoom):
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"probability out of [0,1]: {p}")


@dataclass
class PatchSpec:
    size: tuple[int, int, int] = (128, 128, 128)
    fg_bg_ratio: float = 2.0  # foreground:background sampling ratio

    def __post_init__(self):
        self.size = tuple(int(s) for s in self.size)
        if self.fg_bg_ratio <= 0:
            raise ValueError("fg_bg_ratio must be positive")

    @property
    def fg_probability(self) -> float:
        return self.fg_bg_ratio / (self.fg_bg_ratio + 1.0)


@dataclass
class TransformPlan:
    """A fully drawn augmentation, applicable identically to several arrays."""

    flip_axis: int | None = None
    rot_axes: tuple[int, int] | None = None
    rot_k: int = 0
    intensity_delta: float | None = None
    zoom_factor: float | None = None


def draw_plan(policy: AugmentPolicy, rng: np.random.Generator) -> TransformPlan:
    plan = TransformPlan()
    if rng.random() < policy.p_flip_rot_intensity:
        op = rng.integers(3)
        if op == 0:
            plan.flip_axis = int(rng.integers(3))
        elif op == 1:
            axes = [(0, 1), (0, 2), (1, 2)][int(rng.integers(3))]
            plan.rot_axes = axes
            plan.rot_k = int(rng.integers(1, 4))
        else:
            plan.intensity_delta = float(
                rng.uniform(-policy.intensity_shift, policy.intensity_shift)
            )
    if rng.random() < policy.p_zoom:
        plan.zoom_factor = float(rng.uniform(*policy.zoom_range))
    return plan


def _zoom_keep_shape(arr: np.ndarray, factor: float, is_mask: bool) -> np.ndarray:
    """Zoom about the array center, cropping/padding back to the input shape."""
    order = 0 if is_mask else 1
    zoomed = ndimage.zoom(arr.astype(np.float64), factor, order=order, mode="nearest")
    out = np.zeros_like(arr, dtype=np.float64)
    src_slices, dst_slices = [], []
    for n, m in zip(arr.shape, zoomed.shape):
        if m >= n:  # crop center
            start = (m - n) // 2
            src_slices.append(slice(start, start + n))
            dst_slices.append(slice(0, n))
        else:  # pad center
            start = (n - m) // 2
            src_slices.append(slice(0, m))
            dst_slices.append(slice(start, start + m))
    out[tuple(dst_slices)] = zoomed[tuple(src_slices)]
    if is_mask:
        return (out > 0.5).astype(arr.dtype)
    return out.astype(arr.dtype, copy=False)


def apply_plan(arr: np.ndarray, plan: TransformPlan, is_mask: bool) -> np.ndarray:
    """Apply a drawn transform to one 3D array. Intensity shift skips masks."""
    out = arr
    if plan.flip_axis is not None:
        out = np.flip(out, axis=plan.flip_axis)
    if plan.rot_axes is not None:
        out = np.rot90(out, k=plan.rot_k, axes=plan.rot_axes)
    if plan.zoom_factor is not None and plan.zoom_factor != 1.0:
        out = _zoom_keep_shape(np.ascontiguousarray(out), plan.zoom_factor, is_mask)
    if plan.intensity_delta is not None and not is_mask:
        out = out + plan.intensity_delta
    return np.ascontiguousarray(out)


def augment(
    sample: tuple[ModelInput, MaskVolume],
    policy: AugmentPolicy,
    rng: np.random.Generator,
) -> tuple[ModelInput, MaskVolume]:
    """Apply one drawn transform identically to all channels and the tumor mask."""
    inp, tumor = sample
    plan = draw_plan(policy, rng)
    img = apply_plan(inp.channels[0], plan, is_mask=False)
    organ = apply_plan(inp.channels[2], plan, is_mask=True)
    mask = apply_plan(tumor.data, plan, is_mask=True)
    channels = np.stack([img, img, organ]).astype(np.float32)
    return (
        ModelInput(channels, spacing=inp.spacing),
        MaskVolume(mask, spacing=tumor.spacing, origin=tumor.origin),
    )


@dataclass
class PatchSample:
    input: ModelInput
    tumor: MaskVolume
    center: tuple[int, int, int]
    foreground: bool


def _extract_patch(arr: np.ndarray, center, size, channel_axis: bool = False) -> np.ndarray:
    """Extract a zero-padded patch of `size` centered at `center`."""
    spatial = arr.shape[1:] if channel_axis else arr.shape
    starts = [c - s // 2 for c, s in zip(center, size)]
    out_shape = (arr.shape[0], *size) if channel_axis else tuple(size)
    out = np.zeros(out_shape, dtype=arr.dtype)
    src, dst = [], []
    for st, sz, n in zip(starts, size, spatial):
        lo, hi = max(st, 0), min(st + sz, n)
        if lo >= hi:
            return out
        src.append(slice(lo, hi))
        dst.append(slice(lo - st, hi - st))
    if channel_axis:
        out[(slice(None), *dst)] = arr[(slice(None), *src)]
    else:
        out[tuple(dst)] = arr[tuple(src)]
    return out


def sample_patch(
    inp: ModelInput,
    tumor: MaskVolume,
    spec: PatchSpec,
    rng: np.random.Generator,
) -> PatchSample:
    """Sample a patch whose center is a tumor voxel with probability fg/(fg+bg)."""
    if inp.shape != tumor.shape:
        raise VolumeError(f"shape mismatch: {inp.shape} vs {tumor.shape}")
    shape = inp.shape
    fg_idx = np.flatnonzero(tumor.data)
    want_fg = fg_idx.size > 0 and rng.random() < spec.fg_probability
    if want_fg:
        flat = int(fg_idx[rng.integers(fg_idx.size)])
    else:
        bg_idx = np.flatnonzero(tumor.data == 0)
        if bg_idx.size == 0:
            flat = int(fg_idx[rng.integers(fg_idx.size)])
            want_fg = True
        else:
            flat = int(bg_idx[rng.integers(bg_idx.size)])
    center = tuple(int(c) for c in np.unravel_index(flat, shape))
    patch_channels = _extract_patch(inp.channels, center, spec.size, channel_axis=True)
    patch_mask = _extract_patch(tumor.data, center, spec.size)
    return PatchSample(
        input=ModelInput(patch_channels, spacing=inp.spacing),
        tumor=MaskVolume(patch_mask, spacing=tumor.spacing),
        center=center,
        foreground=bool(want_fg),
    )


__all__ = [
    "AugmentPolicy",
    "PatchSpec",
    "TransformPlan",
    "PatchSample",
    "draw_plan",
    "apply_plan",
    "augment",
    "sample_patch",
]
