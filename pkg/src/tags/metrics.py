"""Evaluation metrics (Dice, normalized surface dice, ICC), the decoder-free
aligned-feature prediction path, and the strategy-comparison evaluation."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch
from scipy import ndimage

from .losses import LossConfig, dense_prediction, similarity_map
from .points import NoLesionError, SelectionStrategy, boundary_mask
from .volume import MaskVolume


def dice(pred: MaskVolume | np.ndarray, gt: MaskVolume | np.ndarray) -> float:
    """Overlap score 2|P∩G|/(|P|+|G|); both-empty convention: 1.0."""
    p = pred.data if isinstance(pred, MaskVolume) else np.asarray(pred)
    g = gt.data if isinstance(gt, MaskVolume) else np.asarray(gt)
    if p.shape != g.shape:
        raise ValueError(f"shape mismatch {p.shape} vs {g.shape}")
    p = p.astype(bool)
    g = g.astype(bool)
    denom = int(p.sum()) + int(g.sum())
    if denom == 0:
        return 1.0
    return 2.0 * int((p & g).sum()) / denom


def _surface_distances(src: np.ndarray, dst: np.ndarray, spacing) -> np.ndarray:
    """Distances (mm) from src boundary voxels to the nearest dst boundary voxel."""
    src_pts = np.argwhere(src > 0).astype(np.float64) * np.asarray(spacing)
    if src_pts.size == 0:
        return np.zeros(0)
    if not dst.any():
        return np.full(src_pts.shape[0], np.inf)
    # Exact euclidean distance to the dst surface, evaluated at src voxels.
    dist = ndimage.distance_transform_edt(dst == 0, sampling=spacing)
    return dist[src > 0]


def nsd(
    pred: MaskVolume | np.ndarray,
    gt: MaskVolume | np.ndarray,
    tolerance_mm: float = 2.0,
    spacing=(1.0, 1.0, 1.0),
) -> float:
    """Normalized surface dice at a physical tolerance.

    Boundary surfaces are 6-connectivity boundary voxels; both-empty: 1.0.
    """
    if tolerance_mm < 0:
        raise ValueError("tolerance must be >= 0")
    if isinstance(pred, MaskVolume):
        spacing = pred.spacing
        pred = pred.data
    if isinstance(gt, MaskVolume):
        gt = gt.data
    pred = np.asarray(pred)
    gt = np.asarray(gt)
    if pred.shape != gt.shape:
        raise ValueError(f"shape mismatch {pred.shape} vs {gt.shape}")
    sp = boundary_mask(pred)
    sg = boundary_mask(gt)
    n_p, n_g = int(sp.sum()), int(sg.sum())
    if n_p + n_g == 0:
        return 1.0
    d_pg = _surface_distances(sp, sg, spacing)
    d_gp = _surface_distances(sg, sp, spacing)
    hits = int((d_pg <= tolerance_mm).sum()) + int((d_gp <= tolerance_mm).sum())
    return hits / (n_p + n_g)


def icc(measurements: np.ndarray) -> float:
    """ICC(2,1): two-way random effects, absolute agreement, single measurement.

    measurements: (n cases, k strategies). Zero total variance returns 1.0.
    """
    m = np.asarray(measurements, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] < 2 or m.shape[1] < 2:
        raise ValueError(f"need at least a 2x2 matrix, got {m.shape}")
    n, k = m.shape
    grand = m.mean()
    ss_total = ((m - grand) ** 2).sum()
    if ss_total < 1e-30:
        return 1.0
    row_means = m.mean(axis=1)
    col_means = m.mean(axis=0)
    ss_rows = k * ((row_means - grand) ** 2).sum()
    ss_cols = n * ((col_means - grand) ** 2).sum()
    ss_err = ss_total - ss_rows - ss_cols
    msr = ss_rows / (n - 1)
    msc = ss_cols / (k - 1)
    mse = ss_err / ((n - 1) * (k - 1))
    return float((msr - mse) / (msr + (k - 1) * mse + k * (msc - mse) / n))


def aligned_feature_predict(
    adapter_output,
    text_pair,
    target_shape,
    cfg: LossConfig | None = None,
) -> MaskVolume:
    """Decoder-free prediction: softmaxed cosine-similarity map thresholded at
    foreground probability 0.5. Evaluable per stage."""
    cfg = cfg or LossConfig()
    if isinstance(adapter_output, torch.Tensor):
        feats = adapter_output.detach()
    else:
        feats = torch.as_tensor(np.asarray(adapter_output))
    if feats.ndim == 5:
        feats = feats.squeeze(0)
    text = text_pair.as_matrix() if hasattr(text_pair, "as_matrix") else text_pair
    with torch.no_grad():
        sim = similarity_map(feats.double(), torch.as_tensor(text, dtype=torch.float64))
        probs = dense_prediction(sim, target_shape, cfg)
    mask = (probs[..., 0] > 0.5).numpy().astype(np.uint8)
    return MaskVolume(mask)


@dataclass
class CaseResult:
    case: str
    strategy: str
    dice: float
    nsd: float
    points: list
    error: str | None = None


@dataclass
class MetricReport:
    records: list[CaseResult]
    strategies: list[str]
    nsd_tolerance_mm: float
    icc_dice: float | None = None
    icc_nsd: float | None = None

    def matrix(self, metric: str) -> tuple[list[str], np.ndarray]:
        """(case names, cases x strategies matrix) for 'dice' or 'nsd'."""
        by_case: dict[str, dict[str, float]] = {}
        for r in self.records:
            if r.error is None:
                by_case.setdefault(r.case, {})[r.strategy] = getattr(r, metric)
        names = [c for c, row in by_case.items() if len(row) == len(self.strategies)]
        mat = np.array([[by_case[c][s] for s in self.strategies] for c in names])
        return names, mat

    def summary(self) -> list[dict]:
        rows = []
        for s in self.strategies:
            vals = [r for r in self.records if r.strategy == s and r.error is None]
            rows.append(
                {
                    "strategy": s,
                    "dice_mean": float(np.mean([r.dice for r in vals])) if vals else float("nan"),
                    "nsd_mean": float(np.mean([r.nsd for r in vals])) if vals else float("nan"),
                    "cases": len(vals),
                }
            )
        return rows


TABLE7_STRATEGIES = [
    SelectionStrategy("random", 1),
    SelectionStrategy("edge", 1),
    SelectionStrategy("edge", 3),
    SelectionStrategy("central", 1),
]


def evaluate(
    cases,
    net,
    cfg,
    strategies: list[SelectionStrategy] | None = None,
    seed: int = 0,
    nsd_tolerance_mm: float = 2.0,
) -> MetricReport:
    """Per-strategy Dice/NSD over all cases plus agreement (ICC) across
    strategies. Deterministic under a fixed seed."""
    from .pipeline import infer  # local import to avoid a cycle

    strategies = strategies if strategies is not None else TABLE7_STRATEGIES
    records: list[CaseResult] = []
    for ci, case in enumerate(cases):
        for si, strat in enumerate(strategies):
            rng = np.random.default_rng((seed, ci, si))
            try:
                result = infer(
                    case.image, case.organ, net, cfg, strategy=strat, tumor=case.tumor, rng=rng
                )
                records.append(
                    CaseResult(
                        case=case.name,
                        strategy=strat.name,
                        dice=dice(result.mask, case.tumor),
                        nsd=nsd(
                            result.mask,
                            case.tumor,
                            tolerance_mm=nsd_tolerance_mm,
                        ),
                        points=[p.as_record() for p in result.points],
                    )
                )
            except (NoLesionError, FileNotFoundError) as e:
                records.append(
                    CaseResult(case=case.name, strategy=strat.name, dice=float("nan"),
                               nsd=float("nan"), points=[], error=str(e))
                )
    report = MetricReport(
        records=records,
        strategies=[s.name for s in strategies],
        nsd_tolerance_mm=nsd_tolerance_mm,
    )
    for metric, attr in (("dice", "icc_dice"), ("nsd", "icc_nsd")):
        _, mat = report.matrix(metric)
        if mat.size and mat.shape[0] >= 2 and mat.shape[1] >= 2:
            setattr(report, attr, icc(mat))
    return report


__all__ = [
    "dice",
    "nsd",
    "icc",
    "aligned_feature_predict",
    "evaluate",
    "CaseResult",
    "MetricReport",
    "TABLE7_STRATEGIES",
]
