"""Training loop, crop-around-prompt inference, and checkpointing."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import torch

from . import io as tio
from .losses import LossConfig, alignment_loss, total_loss
from .model import DecoderConfig, EncoderConfig, TagsNet
from .model.net import apply_partition
from .points import PointPrompt, SelectionStrategy, sample_train_points, select_inference_points
from .sampling import AugmentPolicy, PatchSpec, augment, sample_patch
from .text import HashingTextEncoder, PromptBank, build_text_embeddings, load_prompt_bank
from .volume import MaskVolume, ModelInput, Volume, clip_normalize, inject_organ_channel, resample


class CheckpointError(RuntimeError):
    """Unreadable checkpoint or configuration mismatch."""


class TrainingDivergedError(RuntimeError):
    """Loss became non-finite during training."""


@dataclass
class TrainConfig:
    learning_rate: float = 1e-4
    weight_decay: float = 0.01
    betas: tuple[float, float] = (0.9, 0.999)
    batch_size: int = 1
    epochs: int = 200
    max_steps: int | None = None  # overrides epochs * len(cases) when set
    seed: int = 0
    n_points: int = 10
    organ_name: str = "organ"
    prompt_bank: str | None = None  # path to a YAML bank; default bank when None
    clip_range: tuple[float, float] | None = None
    target_spacing: tuple[float, float, float] | None = None
    threshold: float = 0.5
    loss: LossConfig = field(default_factory=LossConfig)
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    decoder: DecoderConfig = field(default_factory=DecoderConfig)
    patch: PatchSpec = field(default_factory=PatchSpec)
    augment: AugmentPolicy = field(default_factory=AugmentPolicy)

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be >= 0")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if tuple(self.patch.size) != tuple(self.encoder.input_size):
            raise ValueError(
                f"patch size {self.patch.size} must equal encoder input {self.encoder.input_size}"
            )

    @classmethod
    def tiny(cls, **overrides) -> "TrainConfig":
        base = dict(
            encoder=EncoderConfig.tiny(),
            decoder=DecoderConfig(stage_width=8, head_width=8),
            patch=PatchSpec(size=(32, 32, 32)),
            epochs=1,
            learning_rate=2e-3,  # desk-scale overfit runs need a larger step
            # Sharper similarity softmax: raw cosines keep 2-way probabilities
            # inside [0.27, 0.73] at temperature 1, which stalls the aligned
            # prediction path in short desk-scale runs.
            loss=LossConfig(temperature=0.25),
        )
        base.update(overrides)
        return cls(**base)


def config_to_dict(cfg: TrainConfig) -> dict:
    return json.loads(json.dumps(asdict(cfg)))


def config_from_dict(d: dict) -> TrainConfig:
    d = dict(d)
    d["loss"] = LossConfig(**d.get("loss", {}))
    enc = dict(d.get("encoder", {}))
    if "input_size" in enc:
        enc["input_size"] = tuple(enc["input_size"])
    d["encoder"] = EncoderConfig(**enc)
    d["decoder"] = DecoderConfig(**d.get("decoder", {}))
    patch = dict(d.get("patch", {}))
    if "size" in patch:
        patch["size"] = tuple(patch["size"])
    d["patch"] = PatchSpec(**patch)
    aug = dict(d.get("augment", {}))
    if "zoom_range" in aug:
        aug["zoom_range"] = tuple(aug["zoom_range"])
    d["augment"] = AugmentPolicy(**aug)
    for key in ("betas", "clip_range", "target_spacing"):
        if d.get(key) is not None:
            d[key] = tuple(d[key])
    return TrainConfig(**d)


def config_hash(cfg: TrainConfig) -> str:
    canonical = json.dumps(config_to_dict(cfg), sort_keys=True)
    return hashlib.sha256(canonical.encode()).hexdigest()


@dataclass
class Case:
    name: str
    image: Volume
    organ: MaskVolume
    tumor: MaskVolume
    organ_name: str = "organ"


def preprocess_case(case: Case, cfg: TrainConfig) -> Case:
    image, organ, tumor = case.image, case.organ, case.tumor
    if cfg.target_spacing is not None and tuple(image.spacing) != tuple(cfg.target_spacing):
        image = resample(image, cfg.target_spacing)
        organ = resample(organ, cfg.target_spacing)
        tumor = resample(tumor, cfg.target_spacing)
    if cfg.clip_range is not None:
        image = clip_normalize(image, *cfg.clip_range)
    return Case(case.name, image, organ, tumor, case.organ_name)


def load_cases(manifest_path, cfg: TrainConfig | None = None) -> list[Case]:
    cases = []
    for rec in tio.load_manifest(manifest_path):
        paths = tio.resolve_case_paths(manifest_path, rec)
        image = tio.load_volume(paths["image"])
        organ = tio.load_volume(paths["organ"], mask=True)
        if paths["tumor"] is None:
            tumor = MaskVolume(np.zeros(image.shape, dtype=np.uint8), spacing=image.spacing)
        else:
            tumor = tio.load_volume(paths["tumor"], mask=True)
        case = Case(Path(rec.image).stem, image, organ, tumor, rec.organ_name)
        if cfg is not None:
            case = preprocess_case(case, cfg)
        cases.append(case)
    return cases


def _prompt_bank(cfg: TrainConfig) -> PromptBank:
    if cfg.prompt_bank:
        return load_prompt_bank(cfg.prompt_bank)
    return PromptBank(organ_name=cfg.organ_name)


def text_embeddings_for(cfg: TrainConfig):
    """Static per-dataset text embedding pair, computed once at training start."""
    enc = HashingTextEncoder(width=cfg.encoder.embed_width, seed=cfg.seed)
    return build_text_embeddings(_prompt_bank(cfg), enc)


def train(
    cfg: TrainConfig,
    cases: list[Case],
    log_path=None,
    net: TagsNet | None = None,
) -> tuple[TagsNet, list[dict]]:
    """Train the trainable partition; returns the net and per-step log records."""
    if not cases:
        raise ValueError("dataset is empty")
    torch.manual_seed(cfg.seed)
    torch.set_num_threads(max(1, torch.get_num_threads()))
    rng = np.random.default_rng(cfg.seed)
    if net is None:
        net = TagsNet(cfg.encoder, cfg.decoder)
    part = apply_partition(net)
    trainable = [p for p in net.parameters() if p.requires_grad]
    opt = torch.optim.AdamW(
        trainable, lr=cfg.learning_rate, betas=cfg.betas, weight_decay=cfg.weight_decay
    )
    text_pair = text_embeddings_for(cfg)
    inputs = [inject_organ_channel(c.image, c.organ) for c in cases]

    total_steps = cfg.max_steps if cfg.max_steps is not None else cfg.epochs * len(cases)
    records: list[dict] = []
    log_file = open(log_path, "w") if log_path else None
    net.train()
    try:
        for step in range(total_steps):
            idx = int(rng.integers(len(cases)))
            patch = sample_patch(inputs[idx], cases[idx].tumor, cfg.patch, rng)
            patch_inp, patch_tumor = augment((patch.input, patch.tumor), cfg.augment, rng)
            points = sample_train_points(patch_tumor, cfg.n_points, rng)

            x = torch.from_numpy(patch_inp.channels).unsqueeze(0)
            y = torch.from_numpy(patch_tumor.data.astype(np.float32))
            out = net(x, points)
            l_a, per_stage = alignment_loss(out["adapter_outputs"], text_pair, y, cfg.loss)
            y_hat = out["probs"].squeeze(0).squeeze(0)
            loss = total_loss(y_hat, y, l_a, cfg.loss)
            if not torch.isfinite(loss):
                raise TrainingDivergedError(f"non-finite loss at step {step}")
            opt.zero_grad()
            loss.backward()
            opt.step()

            record = {
                "step": step,
                "case": cases[idx].name,
                "total": loss.item(),
                "alignment": l_a.item(),
                "decoder_dice": loss.item() - l_a.item(),
                "stages": per_stage,
                "foreground_patch": patch.foreground,
            }
            records.append(record)
            if log_file:
                log_file.write(json.dumps(record) + "\n")
    finally:
        if log_file:
            log_file.close()
    net.eval()
    return net, records


def save_checkpoint(path, net: TagsNet, cfg: TrainConfig, step: int = 0) -> None:
    part = apply_partition(net)
    trainable = set(part.trainable_names)
    manifest = [
        {"name": n, "shape": list(p.shape), "trainable": n in trainable}
        for n, p in net.named_parameters()
    ]
    torch.save(
        {
            "state_dict": net.state_dict(),
            "config": config_to_dict(cfg),
            "config_hash": config_hash(cfg),
            "step": step,
            "torch_rng_state": torch.get_rng_state(),
            "manifest": manifest,
        },
        path,
    )


def load_checkpoint(path) -> tuple[TagsNet, TrainConfig, dict]:
    try:
        data = torch.load(path, map_location="cpu", weights_only=False)
    except Exception as e:  # torch raises several unpickling error types
        raise CheckpointError(f"unreadable checkpoint {path}: {e}") from e
    for key in ("state_dict", "config", "config_hash"):
        if key not in data:
            raise CheckpointError(f"checkpoint {path} missing field {key!r}")
    cfg = config_from_dict(data["config"])
    if config_hash(cfg) != data["config_hash"]:
        raise CheckpointError(
            f"config hash mismatch in {path}: stored {data['config_hash'][:12]}…, "
            f"recomputed {config_hash(cfg)[:12]}…"
        )
    net = TagsNet(cfg.encoder, cfg.decoder)
    try:
        net.load_state_dict(data["state_dict"], strict=True)
    except RuntimeError as e:
        raise CheckpointError(f"parameter shapes do not match config: {e}") from e
    apply_partition(net)
    net.eval()
    return net, cfg, {"step": data.get("step", 0), "manifest": data.get("manifest", [])}


@dataclass
class CropResult:
    input: ModelInput
    points: list[PointPrompt]
    offset: tuple[int, int, int]  # full-volume index of patch voxel (0,0,0)


def crop_around_points(
    inp: ModelInput, points: list[PointPrompt], patch: PatchSpec
) -> CropResult:
    """Crop a training-size patch centered on the points' centroid.

    The window is clamped inside the volume where possible and zero-padded
    where the volume is smaller than the patch. Point coordinates are remapped
    into the patch frame (and clamped inside it for far-apart points).
    """
    if not points:
        raise ValueError("at least one point is required")
    shape = inp.shape
    size = patch.size
    centroid = np.mean([p.coord for p in points], axis=0)
    starts = []
    for i in range(3):
        start = int(round(centroid[i])) - size[i] // 2
        if shape[i] >= size[i]:
            start = min(max(start, 0), shape[i] - size[i])
        else:
            start = -((size[i] - shape[i]) // 2)
        starts.append(start)

    out = np.zeros((3, *size), dtype=inp.channels.dtype)
    src, dst = [], []
    for st, sz, n in zip(starts, size, shape):
        lo, hi = max(st, 0), min(st + sz, n)
        src.append(slice(lo, hi))
        dst.append(slice(lo - st, hi - st))
    out[(slice(None), *dst)] = inp.channels[(slice(None), *src)]

    remapped = [
        PointPrompt(
            tuple(
                int(min(max(p.coord[i] - starts[i], 0), size[i] - 1)) for i in range(3)
            ),
            p.label,
        )
        for p in points
    ]
    return CropResult(
        input=ModelInput(out, spacing=inp.spacing),
        points=remapped,
        offset=tuple(starts),
    )


def paste_back(patch_values: np.ndarray, offset, full_shape) -> np.ndarray:
    """Place patch values at `offset` in a zero full-size array."""
    full = np.zeros(full_shape, dtype=patch_values.dtype)
    src, dst = [], []
    for st, sz, n in zip(offset, patch_values.shape, full_shape):
        lo, hi = max(st, 0), min(st + sz, n)
        if lo >= hi:
            return full
        dst.append(slice(lo, hi))
        src.append(slice(lo - st, hi - st))
    full[tuple(dst)] = patch_values[tuple(src)]
    return full


@dataclass
class InferenceResult:
    mask: MaskVolume
    probabilities: np.ndarray
    points: list[PointPrompt]
    crop_offset: tuple[int, int, int]


def infer(
    image: Volume,
    organ: MaskVolume,
    net: TagsNet,
    cfg: TrainConfig,
    points: list[PointPrompt] | None = None,
    strategy: SelectionStrategy | None = None,
    tumor: MaskVolume | None = None,
    rng: np.random.Generator | None = None,
) -> InferenceResult:
    """Segment one volume from explicit points or a selection strategy.

    Strategy-based selection reads the ground-truth tumor mask and is an
    evaluation-only pathway; explicit points never touch the ground truth.
    """
    if points is None:
        if strategy is None or tumor is None:
            raise ValueError("either explicit points or (strategy, tumor) required")
        points = select_inference_points(tumor, strategy, rng)
    inp = inject_organ_channel(image, organ)
    crop = crop_around_points(inp, points, cfg.patch)
    x = torch.from_numpy(crop.input.channels).unsqueeze(0)
    net.eval()
    with torch.no_grad():
        out = net(x, crop.points)
    patch_probs = out["probs"].squeeze(0).squeeze(0).numpy().astype(np.float64)
    probs = paste_back(patch_probs, crop.offset, image.shape)
    mask = (probs >= cfg.threshold).astype(np.uint8)
    return InferenceResult(
        mask=MaskVolume(mask, spacing=image.spacing, origin=image.origin),
        probabilities=probs,
        points=points,
        crop_offset=crop.offset,
    )


__all__ = [
    "TrainConfig",
    "Case",
    "CropResult",
    "InferenceResult",
    "CheckpointError",
    "TrainingDivergedError",
    "config_hash",
    "config_to_dict",
    "config_from_dict",
    "load_cases",
    "preprocess_case",
    "text_embeddings_for",
    "train",
    "save_checkpoint",
    "load_checkpoint",
    "crop_around_points",
    "paste_back",
    "infer",
]
