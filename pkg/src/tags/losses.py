"""Similarity maps against text embeddings, focal/dice primitives, and the
combined alignment and total losses."""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn.functional as F

_LOG_CLAMP = 1e-12


@dataclass
class LossConfig:
    focal_gamma: float = 2.0
    focal_alpha: float = 0.25
    dice_smooth: float = 1e-5
    temperature: float = 1.0  # softmax temperature on raw cosines

    def __post_init__(self):
        if self.focal_gamma < 0:
            raise ValueError("focal_gamma must be >= 0")
        if not 0.0 <= self.focal_alpha <= 1.0:
            raise ValueError("focal_alpha must be in [0,1]")
        if self.dice_smooth <= 0 or self.temperature <= 0:
            raise ValueError("dice_smooth and temperature must be positive")


def _as_tensor(x, ref: torch.Tensor | None = None) -> torch.Tensor:
    if isinstance(x, torch.Tensor):
        return x
    t = torch.as_tensor(x)
    if ref is not None:
        t = t.to(ref)
    return t


def similarity_map(adapter_out: torch.Tensor, text_matrix) -> torch.Tensor:
    """Cosine similarity of each token against the (fg, bg) text embeddings.

    adapter_out: (..., c) token grid; text_matrix: (c, 2).
    Zero-norm tokens map to similarity 0 for both columns.
    """
    text = _as_tensor(text_matrix, adapter_out)
    if adapter_out.shape[-1] != text.shape[0]:
        raise ValueError(
            f"width mismatch: tokens {adapter_out.shape[-1]} vs text {text.shape[0]}"
        )
    tok_norm = adapter_out.norm(dim=-1, keepdim=True)
    txt_norm = text.norm(dim=0, keepdim=True)
    dots = adapter_out @ text
    denom = (tok_norm * txt_norm).clamp_min(_LOG_CLAMP)
    sim = dots / denom
    return torch.where(tok_norm > 0, sim, torch.zeros_like(sim))


def dense_prediction(sim: torch.Tensor, target_shape, cfg: LossConfig) -> torch.Tensor:
    """Trilinearly upsample a (Pd,Ph,Pw,2) similarity grid to target_shape and
    apply a per-voxel 2-way softmax. Returns (d,h,w,2) probabilities."""
    target_shape = tuple(int(s) for s in target_shape)
    if any(t < g for t, g in zip(target_shape, sim.shape[:3])):
        raise ValueError(f"target {target_shape} smaller than grid {tuple(sim.shape[:3])}")
    grid = sim.permute(3, 0, 1, 2).unsqueeze(0)  # (1, 2, Pd, Ph, Pw)
    if tuple(sim.shape[:3]) != target_shape:
        grid = F.interpolate(grid, size=target_shape, mode="trilinear", align_corners=False)
    logits = grid / cfg.temperature
    probs = torch.softmax(logits, dim=1)
    return probs.squeeze(0).permute(1, 2, 3, 0)


def focal_loss(probs: torch.Tensor, y, cfg: LossConfig) -> torch.Tensor:
    """Mean focal loss over voxels; probs is (d,h,w,2) with fg in column 0."""
    y_t = _as_tensor(y, probs)
    if probs.shape[:-1] != y_t.shape:
        raise ValueError(f"shape mismatch: probs {tuple(probs.shape)} vs y {tuple(y_t.shape)}")
    fg = y_t > 0.5
    p_t = torch.where(fg, probs[..., 0], probs[..., 1])
    alpha_t = torch.where(
        fg,
        torch.full_like(p_t, cfg.focal_alpha),
        torch.full_like(p_t, 1.0 - cfg.focal_alpha),
    )
    loss = -alpha_t * (1.0 - p_t) ** cfg.focal_gamma * torch.log(p_t.clamp_min(_LOG_CLAMP))
    return loss.mean()


def dice_loss(p: torch.Tensor, y, cfg: LossConfig) -> torch.Tensor:
    """Soft dice loss on foreground probabilities: 1 - (2Σpy+ε)/(Σp+Σy+ε)."""
    y_t = _as_tensor(y, p)
    if p.shape != y_t.shape:
        raise ValueError(f"shape mismatch: p {tuple(p.shape)} vs y {tuple(y_t.shape)}")
    eps = cfg.dice_smooth
    inter = (p * y_t).sum()
    return 1.0 - (2.0 * inter + eps) / (p.sum() + y_t.sum() + eps)


def alignment_loss(
    adapter_outputs: list[torch.Tensor],
    text_pair,
    y,
    cfg: LossConfig,
) -> tuple[torch.Tensor, list[dict]]:
    """Sum over stages of half focal plus half dice on the dense predictions.

    adapter_outputs: per-stage (Pd,Ph,Pw,c) or (1,Pd,Ph,Pw,c) grids.
    text_pair: TextEmbeddingPair or a (c,2) matrix.
    Returns the scalar loss and per-stage terms for logging.
    """
    text = text_pair.as_matrix() if hasattr(text_pair, "as_matrix") else text_pair
    y_shape = tuple(_as_tensor(y).shape)
    total = None
    per_stage = []
    for s, feats in enumerate(adapter_outputs, start=1):
        if feats.ndim == 5:
            feats = feats.squeeze(0)
        sim = similarity_map(feats, text)
        probs = dense_prediction(sim, y_shape, cfg)
        lf = focal_loss(probs, y, cfg)
        ld = dice_loss(probs[..., 0], y, cfg)
        term = 0.5 * lf + 0.5 * ld
        per_stage.append({"stage": s, "focal": lf.item(), "dice": ld.item()})
        total = term if total is None else total + term
    if total is None:
        raise ValueError("no adapter outputs given")
    return total, per_stage


def total_loss(y_hat: torch.Tensor, y, l_align, cfg: LossConfig) -> torch.Tensor:
    """Decoder dice loss plus the alignment loss."""
    return dice_loss(y_hat, y, cfg) + _as_tensor(l_align, y_hat)


__all__ = [
    "LossConfig",
    "similarity_map",
    "dense_prediction",
    "focal_loss",
    "dice_loss",
    "alignment_loss",
    "total_loss",
]
