"""Full promptable segmentation network and its trainable/frozen partition."""

from __future__ import annotations

from dataclasses import dataclass, field

import torch
from torch import nn

from .decoder import DecoderConfig, MaskDecoder, PointPromptEncoder
from .encoder import EncoderConfig, TagsImageEncoder


class NumericalError(RuntimeError):
    """Non-finite activations or loss encountered."""


FROZEN_MARKERS = (".attn.", ".mlp.")

TRAINABLE_GROUPS = {
    "patch_embed": lambda n: n.startswith("encoder.patch_embed"),
    "pos_embed": lambda n: n.startswith("encoder.pos_embed"),
    "spatial_adapter": lambda n: ".spatial_adapters." in n,
    "alignment_adapter": lambda n: ".align." in n,
    "norm": lambda n: n.startswith("encoder.") and (".norm1." in n or ".norm2." in n),
    "point_encoder": lambda n: n.startswith("point_encoder."),
    "decoder": lambda n: n.startswith("decoder."),
}


@dataclass
class ParameterPartition:
    trainable: dict[str, list[str]]
    frozen: list[str]
    trainable_count: int
    frozen_count: int

    @property
    def trainable_names(self) -> list[str]:
        return [n for names in self.trainable.values() for n in names]

    @property
    def trainable_fraction(self) -> float:
        total = self.trainable_count + self.frozen_count
        return self.trainable_count / total if total else 0.0


class TagsNet(nn.Module):
    """Encoder + point-prompt encoder + mask decoder."""

    def __init__(self, enc_cfg: EncoderConfig, dec_cfg: DecoderConfig | None = None):
        super().__init__()
        self.enc_cfg = enc_cfg
        self.dec_cfg = dec_cfg or DecoderConfig()
        self.encoder = TagsImageEncoder(enc_cfg)
        self.point_encoder = PointPromptEncoder(self.dec_cfg)
        self.decoder = MaskDecoder(self.dec_cfg, enc_cfg)

    def forward(self, x: torch.Tensor, points=None) -> dict:
        """Run encoder and decoder.

        points: optional list of PointPrompt in the patch frame.
        Returns stage outputs, raw alignment-adapter outputs, mask logits and
        probabilities.
        """
        stage_outputs, adapter_outputs = self.encoder(x)
        prompt_emb = None
        if points:
            prompt_emb = self.point_encoder(points, x.shape[2:])
        logits = self.decoder(stage_outputs, x, prompt_emb)
        if not torch.isfinite(logits).all():
            raise NumericalError("non-finite decoder logits")
        return {
            "stage_outputs": stage_outputs,
            "adapter_outputs": adapter_outputs,
            "logits": logits,
            "probs": torch.sigmoid(logits),
        }


def parameter_partition(model: nn.Module) -> ParameterPartition:
    """Split parameters into the trainable groups and the frozen attention set.

    Every parameter lands in exactly one set; unknown names raise so new
    modules cannot silently bypass the freezing policy.
    """
    trainable: dict[str, list[str]] = {g: [] for g in TRAINABLE_GROUPS}
    frozen: list[str] = []
    n_train = n_frozen = 0
    for name, p in model.named_parameters():
        if any(m in name for m in FROZEN_MARKERS):
            frozen.append(name)
            n_frozen += p.numel()
            continue
        for group, match in TRAINABLE_GROUPS.items():
            if match(name):
                trainable[group].append(name)
                n_train += p.numel()
                break
        else:
            raise ValueError(f"parameter {name} not covered by the partition rules")
    return ParameterPartition(
        trainable={g: v for g, v in trainable.items() if v},
        frozen=frozen,
        trainable_count=n_train,
        frozen_count=n_frozen,
    )


def apply_partition(model: nn.Module) -> ParameterPartition:
    """Set requires_grad according to the partition and return it."""
    part = parameter_partition(model)
    frozen = set(part.frozen)
    for name, p in model.named_parameters():
        p.requires_grad_(name not in frozen)
    return part


__all__ = [
    "TagsNet",
    "ParameterPartition",
    "parameter_partition",
    "apply_partition",
    "NumericalError",
    "FROZEN_MARKERS",
]
