"""3D-inflated ViT image encoder with spatial and alignment adapters.

The encoder is a plain (non-hierarchical) ViT: cubic patches are projected to
tokens, and every stage keeps the token-grid resolution. Attention weights are
frozen; patch embedding, positional encodings, normalization, spatial adapters
and the per-stage alignment adapters are trainable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import torch
from torch import nn


class ShapeError(ValueError):
    """Input extents incompatible with the patch grid."""


@dataclass
class EncoderConfig:
    num_stages: int = 4
    blocks_per_stage: int = 3
    embed_width: int = 768
    patch_size: int = 16
    input_size: tuple[int, int, int] = (128, 128, 128)
    num_heads: int = 8
    mlp_ratio: float = 4.0
    adapter_ratio: float = 0.25  # spatial-adapter bottleneck fraction of width
    residual_scale: float = 0.2  # convex mixing weight for alignment-adapter output
    tiny_mode: bool = False

    def __post_init__(self):
        if not 0.0 <= self.residual_scale <= 1.0:
            raise ValueError(f"residual_scale must be in [0,1], got {self.residual_scale}")
        self.input_size = tuple(int(s) for s in self.input_size)
        if any(s % self.patch_size for s in self.input_size):
            raise ShapeError(
                f"input size {self.input_size} not divisible by patch {self.patch_size}"
            )

    @property
    def grid_size(self) -> tuple[int, int, int]:
        return tuple(s // self.patch_size for s in self.input_size)

    @property
    def num_tokens(self) -> int:
        gd, gh, gw = self.grid_size
        return gd * gh * gw

    @classmethod
    def tiny(cls, **overrides) -> "EncoderConfig":
        base = dict(
            num_stages=2,
            blocks_per_stage=2,
            embed_width=32,
            patch_size=8,
            input_size=(32, 32, 32),
            num_heads=4,
            tiny_mode=True,
        )
        base.update(overrides)
        return cls(**base)


def _init_trunc_normal(module: nn.Module) -> None:
    for p in module.parameters():
        if p.dim() > 1:
            nn.init.trunc_normal_(p, std=0.02)
        else:
            nn.init.zeros_(p)


class SelfAttention(nn.Module):
    """Multi-head self-attention over flattened tokens. Weights stay frozen."""

    def __init__(self, dim: int, num_heads: int):
        super().__init__()
        if dim % num_heads:
            raise ValueError(f"width {dim} not divisible by {num_heads} heads")
        self.num_heads = num_heads
        self.head_dim = dim // num_heads
        self.qkv = nn.Linear(dim, dim * 3)
        self.proj = nn.Linear(dim, dim)

    def forward(self, x: torch.Tensor) -> torch.Tensor:  # (B, N, C)
        b, n, c = x.shape
        qkv = self.qkv(x).reshape(b, n, 3, self.num_heads, self.head_dim)
        q, k, v = qkv.permute(2, 0, 3, 1, 4)
        attn = (q @ k.transpose(-2, -1)) / math.sqrt(self.head_dim)
        out = attn.softmax(dim=-1) @ v
        out = out.transpose(1, 2).reshape(b, n, c)
        return self.proj(out)


class Mlp(nn.Module):
    def __init__(self, dim: int, hidden: int):
        super().__init__()
        self.fc1 = nn.Linear(dim, hidden)
        self.act = nn.GELU()
        self.fc2 = nn.Linear(hidden, dim)

    def forward(self, x):
        return self.fc2(self.act(self.fc1(x)))


class TransformerBlock(nn.Module):
    def __init__(self, dim: int, num_heads: int, mlp_ratio: float):
        super().__init__()
        self.norm1 = nn.LayerNorm(dim)
        self.attn = SelfAttention(dim, num_heads)
        self.norm2 = nn.LayerNorm(dim)
        self.mlp = Mlp(dim, int(dim * mlp_ratio))

    def forward(self, x):
        x = x + self.attn(self.norm1(x))
        x = x + self.mlp(self.norm2(x))
        return x


class SpatialAdapter(nn.Module):
    """Down-projection, 3D convolution, up-projection; residual on tokens."""

    def __init__(self, dim: int, ratio: float):
        super().__init__()
        hidden = max(4, int(dim * ratio))
        self.down = nn.Linear(dim, hidden)
        self.conv = nn.Conv3d(hidden, hidden, kernel_size=3, padding=1)
        self.up = nn.Linear(hidden, dim)
        self.act = nn.GELU()

    def forward(self, x: torch.Tensor, grid: tuple[int, int, int]) -> torch.Tensor:
        b, n, _ = x.shape
        gd, gh, gw = grid
        y = self.act(self.down(x))
        y = y.transpose(1, 2).reshape(b, -1, gd, gh, gw)
        y = self.act(self.conv(y))
        y = y.reshape(b, -1, n).transpose(1, 2)
        return x + self.up(y)


class AlignmentAdapter(nn.Module):
    """Single fully connected layer per stage: activation(tokens @ W)."""

    def __init__(self, dim: int, activation: nn.Module | None = None):
        super().__init__()
        self.linear = nn.Linear(dim, dim, bias=False)
        self.activation = activation if activation is not None else nn.GELU()

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.activation(self.linear(x))


def stage_residual(
    features: torch.Tensor, adapter_out: torch.Tensor, scale: float
) -> torch.Tensor:
    """Convex combination scale*adapter_out + (1-scale)*features."""
    if not 0.0 <= scale <= 1.0:
        raise ValueError(f"scale must be in [0,1], got {scale}")
    if features.shape != adapter_out.shape:
        raise ShapeError(f"shape mismatch {features.shape} vs {adapter_out.shape}")
    if scale == 0.0:
        return features
    if scale == 1.0:
        return adapter_out
    return scale * adapter_out + (1.0 - scale) * features


class EncoderStage(nn.Module):
    def __init__(self, cfg: EncoderConfig):
        super().__init__()
        self.blocks = nn.ModuleList(
            TransformerBlock(cfg.embed_width, cfg.num_heads, cfg.mlp_ratio)
            for _ in range(cfg.blocks_per_stage)
        )
        self.spatial_adapters = nn.ModuleList(
            SpatialAdapter(cfg.embed_width, cfg.adapter_ratio)
            for _ in range(cfg.blocks_per_stage)
        )
        self.align = AlignmentAdapter(cfg.embed_width)

    def forward(self, x: torch.Tensor, grid, scale: float):
        for block, adapter in zip(self.blocks, self.spatial_adapters):
            x = block(x)
            x = adapter(x, grid)
        adapter_out = self.align(x)
        return stage_residual(x, adapter_out, scale), adapter_out


class TagsImageEncoder(nn.Module):
    """Stage-wise ViT encoder returning per-stage features and adapter outputs."""

    def __init__(self, cfg: EncoderConfig):
        super().__init__()
        self.cfg = cfg
        c, p = cfg.embed_width, cfg.patch_size
        self.patch_embed = nn.Conv3d(3, c, kernel_size=p, stride=p)
        self.pos_embed = nn.Parameter(torch.zeros(1, cfg.num_tokens, c))
        self.stages = nn.ModuleList(EncoderStage(cfg) for _ in range(cfg.num_stages))
        self._init_weights()
        self.freeze_attention()

    def _init_weights(self):
        nn.init.trunc_normal_(self.pos_embed, std=0.02)
        nn.init.trunc_normal_(self.patch_embed.weight, std=0.02)
        nn.init.zeros_(self.patch_embed.bias)
        for stage in self.stages:
            for block in stage.blocks:
                _init_trunc_normal(block.attn)
                _init_trunc_normal(block.mlp)
            for adapter in stage.spatial_adapters:
                _init_trunc_normal(adapter)
            nn.init.trunc_normal_(stage.align.linear.weight, std=0.02)

    def freeze_attention(self):
        """Attention (and its paired MLP) weights never train."""
        for name, p in self.named_parameters():
            if ".attn." in name or ".mlp." in name:
                p.requires_grad_(False)

    def _check_input(self, x: torch.Tensor):
        if x.ndim != 5 or x.shape[1] != 3:
            raise ShapeError(f"expected (B,3,d,h,w) input, got {tuple(x.shape)}")
        if tuple(x.shape[2:]) != self.cfg.input_size:
            raise ShapeError(
                f"input extents {tuple(x.shape[2:])} != configured {self.cfg.input_size}"
            )

    def patchify(self, x: torch.Tensor) -> torch.Tensor:
        """Project non-overlapping cubic patches to tokens and add positions.

        Returns the stage-0 token grid (B, Pd, Ph, Pw, C).
        """
        self._check_input(x)
        tokens = self.patch_embed(x)  # (B, C, Pd, Ph, Pw)
        b, c = tokens.shape[:2]
        tokens = tokens.reshape(b, c, -1).transpose(1, 2) + self.pos_embed
        return tokens.reshape(b, *self.cfg.grid_size, c)

    def forward(self, x: torch.Tensor):
        """Run all stages.

        Returns (stage_outputs, adapter_outputs), each a list of
        (B, Pd, Ph, Pw, C) tensors, one per stage.
        """
        grid = self.cfg.grid_size
        tokens = self.patchify(x).reshape(x.shape[0], -1, self.cfg.embed_width)
        stage_outputs, adapter_outputs = [], []
        for i, stage in enumerate(self.stages):
            tokens, adapter_out = stage(tokens, grid, self.cfg.residual_scale)
            if not torch.isfinite(tokens).all():
                from .net import NumericalError

                raise NumericalError(f"non-finite activations after encoder stage {i + 1}")
            b = tokens.shape[0]
            stage_outputs.append(tokens.reshape(b, *grid, -1))
            adapter_outputs.append(adapter_out.reshape(b, *grid, -1))
        return stage_outputs, adapter_outputs


def inflate_patch_embed_2d(weight_2d: torch.Tensor, depth: int) -> torch.Tensor:
    """Mean-preserving inflation of a 2D patch-embedding kernel to 3D.

    The (C_out, C_in, k, k) kernel is replicated along depth and divided by
    depth, so a depth-constant input produces the 2D response.
    """
    if weight_2d.ndim != 4:
        raise ShapeError(f"expected 4D kernel, got {tuple(weight_2d.shape)}")
    return weight_2d.unsqueeze(2).repeat(1, 1, depth, 1, 1) / depth


__all__ = [
    "EncoderConfig",
    "TagsImageEncoder",
    "EncoderStage",
    "TransformerBlock",
    "SelfAttention",
    "SpatialAdapter",
    "AlignmentAdapter",
    "stage_residual",
    "inflate_patch_embed_2d",
    "ShapeError",
]
