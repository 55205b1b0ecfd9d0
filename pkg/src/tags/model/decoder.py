"""Point-prompt encoding and the multi-stage aggregation mask decoder."""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch
from torch import nn

from .encoder import EncoderConfig, ShapeError


@dataclass
class DecoderConfig:
    stage_width: int = 16  # per-stage fusion width after 1x1x1 projection
    head_width: int = 16
    attn_heads: int = 4
    point_freqs: int = 8  # sinusoidal frequency bands per axis

    @property
    def point_dim(self) -> int:
        return 6 * self.point_freqs  # sin+cos per axis


def sinusoidal_encoding(coords: torch.Tensor, n_freq: int) -> torch.Tensor:
    """Sinusoidal features of normalized coordinates.

    coords: (..., 3) in [0, 1]. Returns (..., 6*n_freq) as
    [sin(2^k * 2π u), cos(2^k * 2π u)] per axis, k = 0..n_freq-1.
    """
    freqs = 2.0 ** torch.arange(n_freq, dtype=coords.dtype, device=coords.device)
    ang = 2.0 * math.pi * coords.unsqueeze(-1) * freqs  # (..., 3, F)
    feats = torch.cat([torch.sin(ang), torch.cos(ang)], dim=-1)  # (..., 3, 2F)
    return feats.flatten(-2)


def encode_points(points, volume_shape, n_freq: int = 8) -> tuple[torch.Tensor, torch.Tensor]:
    """Turn (z,y,x,label) point prompts into positional features and labels.

    Returns (features (K, 6*n_freq) float64-compatible, labels (K,) long).
    Coordinates are normalized by the volume extents; out-of-bounds rejected.
    """
    coords, labels = [], []
    for p in points:
        z, y, x = p.coord
        for c, n in zip((z, y, x), volume_shape):
            if not 0 <= c < n:
                raise ShapeError(f"point {p.coord} outside volume {tuple(volume_shape)}")
        coords.append([z / volume_shape[0], y / volume_shape[1], x / volume_shape[2]])
        labels.append(1 if p.label == "foreground" else 0)
    coords_t = torch.tensor(coords, dtype=torch.get_default_dtype())
    return sinusoidal_encoding(coords_t, n_freq), torch.tensor(labels, dtype=torch.long)


class PointPromptEncoder(nn.Module):
    """Sinusoidal position features plus a learned foreground/background embedding."""

    def __init__(self, cfg: DecoderConfig):
        super().__init__()
        self.cfg = cfg
        self.label_embed = nn.Embedding(2, cfg.point_dim)
        nn.init.trunc_normal_(self.label_embed.weight, std=0.02)

    def forward(self, points, volume_shape) -> torch.Tensor:
        feats, labels = encode_points(points, volume_shape, self.cfg.point_freqs)
        feats = feats.to(self.label_embed.weight)
        return feats + self.label_embed(labels.to(self.label_embed.weight.device))


class CrossAttention(nn.Module):
    """Image tokens attend to the prompt set (permutation-invariant in prompts)."""

    def __init__(self, dim: int, num_heads: int):
        super().__init__()
        if dim % num_heads:
            raise ValueError(f"width {dim} not divisible by {num_heads} heads")
        self.num_heads = num_heads
        self.head_dim = dim // num_heads
        self.q = nn.Linear(dim, dim)
        self.kv = nn.Linear(dim, dim * 2)
        self.proj = nn.Linear(dim, dim)

    def forward(self, x: torch.Tensor, ctx: torch.Tensor) -> torch.Tensor:
        b, n, c = x.shape
        k_len = ctx.shape[1]
        q = self.q(x).reshape(b, n, self.num_heads, self.head_dim).transpose(1, 2)
        kv = self.kv(ctx).reshape(b, k_len, 2, self.num_heads, self.head_dim)
        k, v = kv.permute(2, 0, 3, 1, 4)
        attn = (q @ k.transpose(-2, -1)) / math.sqrt(self.head_dim)
        out = attn.softmax(dim=-1) @ v
        return self.proj(out.transpose(1, 2).reshape(b, n, c))


class MaskDecoder(nn.Module):
    """Fuses per-stage encoder grids with the raw input and point prompts.

    Each stage grid is projected to a small width, the stages are concatenated,
    prompts are injected once via cross-attention at the token grid (the
    coarsest level), and the fused grid is progressively upsampled back to the
    input resolution where it is concatenated with the input channels.
    """

    def __init__(self, cfg: DecoderConfig, enc_cfg: EncoderConfig):
        super().__init__()
        self.cfg = cfg
        self.enc_cfg = enc_cfg
        if enc_cfg.patch_size & (enc_cfg.patch_size - 1):
            raise ShapeError(f"patch size {enc_cfg.patch_size} must be a power of two")
        w = cfg.stage_width
        self.stage_proj = nn.ModuleList(
            nn.Conv3d(enc_cfg.embed_width, w, kernel_size=1)
            for _ in range(enc_cfg.num_stages)
        )
        fuse = w * enc_cfg.num_stages
        self.prompt_proj = nn.Linear(cfg.point_dim, fuse)
        self.cross_attn = CrossAttention(fuse, cfg.attn_heads)
        self.attn_norm = nn.LayerNorm(fuse)

        ups = []
        ch = fuse
        for _ in range(int(math.log2(enc_cfg.patch_size))):
            nxt = max(cfg.head_width, ch // 2)
            ups.append(
                nn.Sequential(
                    nn.Upsample(scale_factor=2, mode="trilinear", align_corners=False),
                    nn.Conv3d(ch, nxt, kernel_size=3, padding=1),
                    nn.GELU(),
                )
            )
            ch = nxt
        self.upsample = nn.ModuleList(ups)
        self.head = nn.Sequential(
            nn.Conv3d(ch + 3, cfg.head_width, kernel_size=3, padding=1),
            nn.GELU(),
            nn.Conv3d(cfg.head_width, 1, kernel_size=1),
        )

    def forward(
        self,
        stage_outputs: list[torch.Tensor],
        x_input: torch.Tensor,
        prompt_emb: torch.Tensor | None = None,
    ) -> torch.Tensor:
        """Return mask logits of shape (B, 1, d, h, w)."""
        if len(stage_outputs) != len(self.stage_proj):
            raise ShapeError(
                f"got {len(stage_outputs)} stage outputs, expected {len(self.stage_proj)}"
            )
        grids = []
        for proj, feats in zip(self.stage_proj, stage_outputs):
            g = feats.permute(0, 4, 1, 2, 3)  # (B, C, Pd, Ph, Pw)
            grids.append(proj(g))
        fused = torch.cat(grids, dim=1)
        b, c = fused.shape[:2]
        grid_shape = fused.shape[2:]

        if prompt_emb is not None and prompt_emb.numel() > 0:
            if prompt_emb.ndim == 2:
                prompt_emb = prompt_emb.unsqueeze(0).expand(b, -1, -1)
            ctx = self.prompt_proj(prompt_emb)
            tokens = fused.reshape(b, c, -1).transpose(1, 2)
            tokens = tokens + self.cross_attn(self.attn_norm(tokens), ctx)
            fused = tokens.transpose(1, 2).reshape(b, c, *grid_shape)

        y = fused
        for up in self.upsample:
            y = up(y)
        y = torch.cat([y, x_input], dim=1)
        return self.head(y)


__all__ = [
    "DecoderConfig",
    "MaskDecoder",
    "PointPromptEncoder",
    "CrossAttention",
    "sinusoidal_encoding",
    "encode_points",
]
