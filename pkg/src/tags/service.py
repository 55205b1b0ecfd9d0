"""Local HTTP service for interactive point-prompt segmentation.

Endpoints (all coordinates voxel-indexed, (z, y, x)):

* ``GET  /health``
* ``POST /volumes`` — multipart upload: image, organ mask, optional tumor mask
* ``GET  /volumes/{id}`` — metadata
* ``GET  /volumes/{id}/slice?axis=&index=&channel=`` — 8-bit grayscale PNG
* ``GET  /volumes/{id}/slice_mask?axis=&index=&kind=`` — RLE of a mask slice
* ``POST /volumes/{id}/segment`` — run inference from explicit points
"""

from __future__ import annotations

import io as _io
import threading
import uuid
from dataclasses import dataclass, field

import numpy as np
from fastapi import FastAPI, File, Request, UploadFile
from fastapi.responses import JSONResponse, Response
from PIL import Image

from .io import FormatError, load_volume_bytes
from .metrics import dice as dice_score
from .pipeline import TrainConfig, infer, load_checkpoint
from .points import PointPrompt
from .rle import rle_encode
from .volume import MaskVolume, Volume, VolumeError


class ServiceError(Exception):
    def __init__(self, status: int, code: str, message: str):
        super().__init__(message)
        self.status = status
        self.code = code
        self.message = message


@dataclass
class LoadedVolume:
    image: Volume
    organ: MaskVolume
    tumor: MaskVolume | None


@dataclass
class SessionState:
    net: object | None
    cfg: TrainConfig | None
    volumes: dict[str, LoadedVolume] = field(default_factory=dict)
    upload_lock: threading.Lock = field(default_factory=threading.Lock)
    model_lock: threading.Lock = field(default_factory=threading.Lock)


def _window_to_uint8(plane: np.ndarray) -> np.ndarray:
    lo, hi = float(plane.min()), float(plane.max())
    if hi <= lo:
        return np.zeros(plane.shape, dtype=np.uint8)
    return np.clip(255.0 * (plane - lo) / (hi - lo), 0, 255).astype(np.uint8)


def _take_slice(data: np.ndarray, axis: int, index: int) -> np.ndarray:
    return np.take(data, index, axis=axis)


def create_app(
    checkpoint_path=None, net=None, cfg: TrainConfig | None = None
) -> FastAPI:
    """Build the service app around one loaded model (or none, slices only)."""
    if checkpoint_path is not None:
        net, cfg, _ = load_checkpoint(checkpoint_path)
    state = SessionState(net=net, cfg=cfg)
    app = FastAPI(title="tags segmentation service")
    app.state.session = state

    @app.exception_handler(ServiceError)
    async def service_error_handler(request: Request, exc: ServiceError):
        return JSONResponse(
            status_code=exc.status, content={"code": exc.code, "message": exc.message}
        )

    def get_volume(volume_id: str) -> LoadedVolume:
        vol = state.volumes.get(volume_id)
        if vol is None:
            raise ServiceError(404, "volume_not_found", f"unknown volume id {volume_id}")
        return vol

    @app.get("/health")
    def health():
        return {"status": "ok", "model_loaded": state.net is not None}

    @app.post("/volumes")
    async def upload_volume(
        image: UploadFile = File(...),
        organ: UploadFile = File(...),
        tumor: UploadFile | None = File(None),
    ):
        try:
            img = load_volume_bytes(await image.read(), image.filename or "image.svol")
            org = load_volume_bytes(await organ.read(), organ.filename or "organ.svol", mask=True)
            tum = None
            if tumor is not None:
                tum = load_volume_bytes(await tumor.read(), tumor.filename or "tumor.svol", mask=True)
        except (FormatError, VolumeError, ValueError) as e:
            raise ServiceError(400, "parse_error", str(e))
        if img.shape != org.shape or (tum is not None and tum.shape != img.shape):
            raise ServiceError(
                400,
                "shape_mismatch",
                f"image {img.shape}, organ {org.shape}"
                + (f", tumor {tum.shape}" if tum is not None else ""),
            )
        volume_id = uuid.uuid4().hex
        with state.upload_lock:
            state.volumes[volume_id] = LoadedVolume(image=img, organ=org, tumor=tum)
        return {
            "id": volume_id,
            "dims": list(img.shape),
            "spacing": list(img.spacing),
            "has_ground_truth": tum is not None,
        }

    @app.get("/volumes/{volume_id}")
    def volume_info(volume_id: str):
        vol = get_volume(volume_id)
        return {
            "id": volume_id,
            "dims": list(vol.image.shape),
            "spacing": list(vol.image.spacing),
            "has_ground_truth": vol.tumor is not None,
        }

    def check_slice(vol: LoadedVolume, axis: int, index: int):
        if axis not in (0, 1, 2):
            raise ServiceError(400, "bad_axis", f"axis must be 0..2, got {axis}")
        n = vol.image.shape[axis]
        if not 0 <= index < n:
            raise ServiceError(404, "index_out_of_range", f"index {index} not in [0,{n})")

    @app.get("/volumes/{volume_id}/slice")
    def get_slice(volume_id: str, axis: int = 0, index: int = 0, channel: int = 0):
        vol = get_volume(volume_id)
        check_slice(vol, axis, index)
        if channel in (0, 1):
            plane = _window_to_uint8(_take_slice(vol.image.data, axis, index))
        elif channel == 2:
            plane = _take_slice(vol.organ.data, axis, index).astype(np.uint8) * 255
        else:
            raise ServiceError(400, "bad_channel", f"channel must be 0..2, got {channel}")
        buf = _io.BytesIO()
        Image.fromarray(plane, mode="L").save(buf, format="PNG")
        return Response(content=buf.getvalue(), media_type="image/png")

    @app.get("/volumes/{volume_id}/slice_mask")
    def get_slice_mask(volume_id: str, axis: int = 0, index: int = 0, kind: str = "gt"):
        vol = get_volume(volume_id)
        check_slice(vol, axis, index)
        if kind == "gt":
            if vol.tumor is None:
                raise ServiceError(404, "no_ground_truth", "volume has no tumor mask")
            mask = _take_slice(vol.tumor.data, axis, index)
        elif kind == "organ":
            mask = _take_slice(vol.organ.data, axis, index)
        else:
            raise ServiceError(400, "bad_kind", f"kind must be gt|organ, got {kind!r}")
        return {"rle": rle_encode(mask), "shape": list(mask.shape)}

    @app.post("/volumes/{volume_id}/segment")
    def segment(volume_id: str, body: dict):
        vol = get_volume(volume_id)
        if state.net is None or state.cfg is None:
            raise ServiceError(409, "no_model", "no checkpoint loaded in this service")
        raw_points = body.get("points", [])
        if not raw_points:
            raise ServiceError(400, "bad_points", "at least one point is required")
        shape = vol.image.shape
        points = []
        for p in raw_points:
            try:
                z, y, x = int(p["z"]), int(p["y"]), int(p["x"])
                label = p["label"]
            except (KeyError, TypeError, ValueError) as e:
                raise ServiceError(400, "bad_points", f"malformed point {p!r}: {e}")
            if label not in ("foreground", "background"):
                raise ServiceError(400, "bad_points", f"bad label {label!r}")
            if not (0 <= z < shape[0] and 0 <= y < shape[1] and 0 <= x < shape[2]):
                raise ServiceError(400, "bad_points", f"point ({z},{y},{x}) out of bounds")
            points.append(PointPrompt((z, y, x), label))
        # One segmentation at a time per model handle.
        with state.model_lock:
            result = infer(vol.image, vol.organ, state.net, state.cfg, points=points)
        mask = result.mask.data
        per_slice = [int(mask[z].sum()) for z in range(mask.shape[0])]
        response = {
            "mask_rle": rle_encode(mask),
            "shape": list(mask.shape),
            "crop_offset": list(result.crop_offset),
            "voxel_count": int(mask.sum()),
            "per_slice_counts": per_slice,
            "prob_stats": {
                "min": float(result.probabilities.min()),
                "max": float(result.probabilities.max()),
                "mean": float(result.probabilities.mean()),
            },
        }
        if vol.tumor is not None:
            response["dice"] = dice_score(result.mask, vol.tumor)
        return response

    return app


__all__ = ["create_app", "ServiceError", "SessionState"]
