"""Dual-category text prompts and their aggregated embeddings.

Prompts are built from state-level descriptions (containing ``{obj}``, the
organ name) crossed with template-level sentences (containing ``{c}``, a
filled-in state). Foreground describes tumorous tissue, background healthy
tissue. The embeddings of all prompts in a category are averaged into one
unit vector per category.
"""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol

import numpy as np
import yaml


class PromptError(ValueError):
    """Invalid prompt bank contents."""


DEFAULT_FG_STATES = [
    "{obj} with tumor",
    "{obj} containing a tumor",
    "lesion present in the {obj}",
    "abnormal {obj} tissue",
]
DEFAULT_BG_STATES = [
    "healthy {obj}",
    "normal {obj} tissue",
    "lesion absent in the {obj}",
    "{obj} without tumor",
]
DEFAULT_TEMPLATES = [
    "{c}.",
    "a CT scan of {c}.",
    "a cropped CT scan of {c}.",
    "a rotated CT scan of {c}.",
    "a flipped CT scan of {c}.",
    "a zoomed CT scan of {c}.",
]


@dataclass
class PromptBank:
    organ_name: str
    fg_states: list[str] = field(default_factory=lambda: list(DEFAULT_FG_STATES))
    bg_states: list[str] = field(default_factory=lambda: list(DEFAULT_BG_STATES))
    templates: list[str] = field(default_factory=lambda: list(DEFAULT_TEMPLATES))

    def __post_init__(self):
        if not self.organ_name:
            raise PromptError("organ_name must be non-empty")
        for name, lst in (
            ("fg_states", self.fg_states),
            ("bg_states", self.bg_states),
            ("templates", self.templates),
        ):
            if not lst:
                raise PromptError(f"{name} must contain at least one entry")
        for s in self.fg_states + self.bg_states:
            if "{obj}" not in s:
                raise PromptError(f"state lacks {{obj}} placeholder: {s!r}")
        for t in self.templates:
            if "{c}" not in t:
                raise PromptError(f"template lacks {{c}} placeholder: {t!r}")


def load_prompt_bank(path) -> PromptBank:
    data = yaml.safe_load(Path(path).read_text())
    return PromptBank(
        organ_name=data["organ_name"],
        fg_states=data.get("fg_states", list(DEFAULT_FG_STATES)),
        bg_states=data.get("bg_states", list(DEFAULT_BG_STATES)),
        templates=data.get("templates", list(DEFAULT_TEMPLATES)),
    )


def save_prompt_bank(path, bank: PromptBank) -> None:
    Path(path).write_text(
        yaml.safe_dump(
            {
                "organ_name": bank.organ_name,
                "fg_states": bank.fg_states,
                "bg_states": bank.bg_states,
                "templates": bank.templates,
            },
            sort_keys=False,
        )
    )


def expand_prompts(bank: PromptBank) -> tuple[list[str], list[str]]:
    """Cartesian expansion: every template applied to every state per category."""

    def expand(states):
        texts = []
        for state in states:
            filled = state.replace("{obj}", bank.organ_name)
            for tpl in bank.templates:
                text = tpl.replace("{c}", filled)
                if re.search(r"\{(obj|c)\}", text):
                    raise PromptError(f"unresolved placeholder in {text!r}")
                texts.append(text)
        return texts

    return expand(bank.fg_states), expand(bank.bg_states)


class TextEncoder(Protocol):
    width: int

    def encode(self, text: str) -> np.ndarray: ...


class HashingTextEncoder:
    """Deterministic stand-in encoder: each distinct string maps to a seeded
    pseudo-random unit vector. Bit-reproducible across runs and platforms."""

    def __init__(self, width: int = 32, seed: int = 0):
        self.width = int(width)
        self.seed = int(seed)

    def encode(self, text: str) -> np.ndarray:
        digest = hashlib.sha256(f"{self.seed}:{text}".encode()).digest()
        rng = np.random.Generator(np.random.PCG64(int.from_bytes(digest[:8], "little")))
        v = rng.standard_normal(self.width)
        return v / np.linalg.norm(v)


@dataclass
class TextEmbeddingPair:
    """Aggregated foreground/background prompt embeddings, unit-normalized."""

    fg: np.ndarray
    bg: np.ndarray

    def __post_init__(self):
        self.fg = np.asarray(self.fg, dtype=np.float64)
        self.bg = np.asarray(self.bg, dtype=np.float64)
        if self.fg.shape != self.bg.shape or self.fg.ndim != 1:
            raise PromptError(f"fg/bg widths differ: {self.fg.shape} vs {self.bg.shape}")
        for name, v in (("fg", self.fg), ("bg", self.bg)):
            if abs(np.linalg.norm(v) - 1.0) > 1e-6:
                raise PromptError(f"{name} embedding is not unit-norm")

    @property
    def width(self) -> int:
        return self.fg.shape[0]

    def as_matrix(self) -> np.ndarray:
        """Columns ordered (fg, bg): shape (c, 2)."""
        return np.stack([self.fg, self.bg], axis=1)


def _aggregate(texts: list[str], enc: TextEncoder) -> np.ndarray:
    embs = []
    for t in texts:
        e = np.asarray(enc.encode(t), dtype=np.float64)
        if e.shape != (enc.width,):
            raise PromptError(f"encoder width mismatch: got {e.shape}, want ({enc.width},)")
        n = np.linalg.norm(e)
        if n == 0:
            raise PromptError(f"zero embedding for text {t!r}")
        embs.append(e / n)
    mean = np.mean(embs, axis=0)
    n = np.linalg.norm(mean)
    if n == 0:
        raise PromptError("category embeddings cancel to zero")
    return mean / n


def encode_dual_category(
    texts: tuple[list[str], list[str]], enc: TextEncoder
) -> TextEmbeddingPair:
    """Normalize each embedding, average per category, and re-normalize."""
    fg_texts, bg_texts = texts
    if not fg_texts or not bg_texts:
        raise PromptError("both categories need at least one text")
    return TextEmbeddingPair(fg=_aggregate(fg_texts, enc), bg=_aggregate(bg_texts, enc))


def build_text_embeddings(bank: PromptBank, enc: TextEncoder) -> TextEmbeddingPair:
    return encode_dual_category(expand_prompts(bank), enc)


__all__ = [
    "PromptBank",
    "PromptError",
    "TextEncoder",
    "TextEmbeddingPair",
    "HashingTextEncoder",
    "expand_prompts",
    "encode_dual_category",
    "build_text_embeddings",
    "load_prompt_bank",
    "save_prompt_bank",
]
