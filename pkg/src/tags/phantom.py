"""Synthetic ellipsoid phantoms standing in for CT volumes with organ/tumor masks."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .volume import MaskVolume, Volume, VolumeError


@dataclass
class PhantomSpec:
    shape: tuple[int, int, int] = (64, 64, 64)
    spacing: tuple[float, float, float] = (1.0, 1.0, 1.0)
    organ_radii: tuple[float, float, float] = (22.0, 20.0, 18.0)
    tumor_radii: tuple[float, float, float] = (7.0, 7.0, 7.0)
    # Tumor center offset from the organ center, as a fraction of the feasible range.
    tumor_offset_jitter: float = 0.5
    background_level: float = 0.15
    organ_level: float = 0.55
    tumor_level: float = 0.9
    noise_sigma: float = 0.03


def _ellipsoid_mask(shape, center, radii) -> np.ndarray:
    if min(radii) <= 0:
        return np.zeros(shape, dtype=np.uint8)
    grids = np.meshgrid(*[np.arange(n, dtype=np.float64) for n in shape], indexing="ij")
    q = sum(((g - c) / r) ** 2 for g, c, r in zip(grids, center, radii))
    return (q <= 1.0).astype(np.uint8)


def synth_phantom(
    spec: PhantomSpec, rng: np.random.Generator
) -> tuple[Volume, MaskVolume, MaskVolume]:
    """Generate (image, organ mask, tumor mask) for one synthetic case.

    The organ is an ellipsoid of elevated intensity over a noisy background;
    the tumor is a brighter ellipsoid strictly inside the organ.
    """
    shape = spec.shape
    if any(2 * r >= n for r, n in zip(spec.organ_radii, shape)):
        raise VolumeError(f"organ radii {spec.organ_radii} do not fit in grid {shape}")
    has_tumor = min(spec.tumor_radii) > 0
    if has_tumor and any(t >= o for t, o in zip(spec.tumor_radii, spec.organ_radii)):
        raise VolumeError(
            f"tumor radii {spec.tumor_radii} must be smaller than organ radii {spec.organ_radii}"
        )

    organ_center = tuple(n / 2.0 + rng.uniform(-1.0, 1.0) for n in shape)
    organ = _ellipsoid_mask(shape, organ_center, spec.organ_radii)

    if has_tumor:
        # Conservative containment: keep the tumor ellipsoid inside a shrunken
        # organ ellipsoid so tumor ⊂ organ holds for any jitter draw.
        slack = [o - t - 1.0 for o, t in zip(spec.organ_radii, spec.tumor_radii)]
        if any(s < 0 for s in slack):
            raise VolumeError("tumor does not fit strictly inside the organ")
        frac = spec.tumor_offset_jitter
        offset = [rng.uniform(-frac, frac) * s / np.sqrt(3.0) for s in slack]
        tumor_center = tuple(c + d for c, d in zip(organ_center, offset))
        tumor = _ellipsoid_mask(shape, tumor_center, spec.tumor_radii)
        tumor &= organ  # construction invariant: tumor ⊆ organ
    else:
        tumor = np.zeros(shape, dtype=np.uint8)

    data = np.full(shape, spec.background_level, dtype=np.float64)
    data[organ > 0] = spec.organ_level
    data[tumor > 0] = spec.tumor_level
    data += rng.normal(0.0, spec.noise_sigma, size=shape)
    data = np.clip(data, 0.0, 1.0)

    vol = Volume(data, spacing=spec.spacing)
    return vol, MaskVolume(organ, spacing=spec.spacing), MaskVolume(tumor, spacing=spec.spacing)


__all__ = ["PhantomSpec", "synth_phantom"]
