import math

import numpy as np
import pytest
import torch

from tags.losses import (
    LossConfig,
    alignment_loss,
    dense_prediction,
    dice_loss,
    focal_loss,
    similarity_map,
    total_loss,
)


def _trilinear_resize_oracle(grid: np.ndarray, out_shape) -> np.ndarray:
    """Independent numpy trilinear upsampling with half-pixel centers
    (output voxel i samples input coordinate (i + 0.5) * in/out - 0.5)."""
    in_shape = grid.shape[:3]
    out = np.empty((*out_shape, grid.shape[3]))
    coords = []
    for n_in, n_out in zip(in_shape, out_shape):
        c = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
        coords.append(np.clip(c, 0, n_in - 1))
    for i, ci in enumerate(coords[0]):
        for j, cj in enumerate(coords[1]):
            for k, ck in enumerate(coords[2]):
                i0, j0, k0 = int(math.floor(ci)), int(math.floor(cj)), int(math.floor(ck))
                i1, j1, k1 = min(i0 + 1, in_shape[0] - 1), min(j0 + 1, in_shape[1] - 1), min(
                    k0 + 1, in_shape[2] - 1
                )
                di, dj, dk = ci - i0, cj - j0, ck - k0
                acc = 0.0
                for (ii, wi) in ((i0, 1 - di), (i1, di)):
                    for (jj, wj) in ((j0, 1 - dj), (j1, dj)):
                        for (kk, wk) in ((k0, 1 - dk), (k1, dk)):
                            acc = acc + wi * wj * wk * grid[ii, jj, kk]
                out[i, j, k] = acc
    return out


class TestSimilarityMap:
    def test_token_equals_fg_embedding(self):
        fg = np.array([1.0, 0.0, 0.0])
        bg = np.array([0.0, 1.0, 0.0]) * 0.5 + np.array([1.0, 0.0, 0.0]) * 0.5
        bg = bg / np.linalg.norm(bg)
        text = np.stack([fg, bg], axis=1)
        tok = torch.tensor([[1.0, 0.0, 0.0]], dtype=torch.float64)
        sim = similarity_map(tok, text)
        assert np.isclose(sim[0, 0].item(), 1.0)
        assert np.isclose(sim[0, 1].item(), float(fg @ bg))

    def test_orthogonal_token(self):
        text = np.eye(3)[:, :2]  # fg = e1, bg = e2
        tok = torch.tensor([[0.0, 0.0, 1.0]])
        sim = similarity_map(tok, text)
        assert torch.allclose(sim, torch.zeros_like(sim))

    def test_zero_norm_token_maps_to_zero(self):
        text = np.eye(3)[:, :2]
        tok = torch.zeros(1, 3)
        sim = similarity_map(tok, text)
        assert torch.equal(sim, torch.zeros_like(sim))

    def test_random_tokens_match_cosine_oracle(self):
        rng = np.random.default_rng(0)
        toks = rng.normal(size=(3, 5))
        text = rng.normal(size=(5, 2))
        sim = similarity_map(torch.from_numpy(toks), text).numpy()
        for i in range(3):
            for j in range(2):
                expected = toks[i] @ text[:, j] / (
                    np.linalg.norm(toks[i]) * np.linalg.norm(text[:, j])
                )
                assert abs(sim[i, j] - expected) < 1e-6

    def test_values_in_unit_interval(self):
        rng = np.random.default_rng(1)
        toks = torch.from_numpy(rng.normal(size=(4, 4, 4, 8)))
        text = rng.normal(size=(8, 2))
        sim = similarity_map(toks, text)
        assert sim.min() >= -1.0 - 1e-9 and sim.max() <= 1.0 + 1e-9

    def test_width_mismatch_rejected(self):
        with pytest.raises(ValueError):
            similarity_map(torch.zeros(2, 4), np.zeros((5, 2)))


class TestDensePrediction:
    def test_equal_similarity_gives_half(self):
        sim = torch.full((2, 2, 2, 2), 0.3)
        probs = dense_prediction(sim, (4, 4, 4), LossConfig())
        assert torch.allclose(probs, torch.full_like(probs, 0.5))

    def test_identity_resize(self):
        rng = np.random.default_rng(0)
        sim = torch.from_numpy(rng.normal(size=(3, 3, 3, 2)))
        probs = dense_prediction(sim, (3, 3, 3), LossConfig())
        expected = torch.softmax(sim, dim=-1)
        assert torch.allclose(probs, expected, atol=1e-9)

    def test_unit_margin_closed_form(self):
        sim = torch.zeros(2, 2, 2, 2)
        sim[..., 0] = 1.0  # fg - bg = +1 everywhere
        probs = dense_prediction(sim, (2, 2, 2), LossConfig())
        assert torch.allclose(probs[..., 0], torch.full((2, 2, 2), 1 / (1 + math.exp(-1))))

    def test_rows_sum_to_one(self):
        rng = np.random.default_rng(2)
        sim = torch.from_numpy(rng.normal(size=(2, 3, 4, 2)))
        probs = dense_prediction(sim, (5, 7, 9), LossConfig())
        assert torch.allclose(
            probs.sum(dim=-1), torch.ones(5, 7, 9, dtype=probs.dtype), atol=1e-6
        )

    def test_matches_numpy_trilinear_oracle(self):
        rng = np.random.default_rng(3)
        sim_np = rng.normal(size=(2, 2, 2, 2))
        probs = dense_prediction(torch.from_numpy(sim_np), (4, 5, 6), LossConfig()).numpy()
        up = _trilinear_resize_oracle(sim_np, (4, 5, 6))
        e = np.exp(up - up.max(axis=-1, keepdims=True))
        expected = e / e.sum(axis=-1, keepdims=True)
        assert np.allclose(probs, expected, atol=1e-9)

    def test_temperature_scaling(self):
        sim = torch.zeros(2, 2, 2, 2)
        sim[..., 0] = 1.0
        cfg = LossConfig(temperature=0.5)
        probs = dense_prediction(sim, (2, 2, 2), cfg)
        assert torch.allclose(probs[..., 0], torch.full((2, 2, 2), 1 / (1 + math.exp(-2))))

    def test_target_smaller_than_grid_rejected(self):
        with pytest.raises(ValueError):
            dense_prediction(torch.zeros(4, 4, 4, 2), (2, 4, 4), LossConfig())


class TestFocalLoss:
    def test_single_voxel_hand_value(self):
        probs = torch.full((1, 1, 1, 2), 0.5)
        y = np.ones((1, 1, 1))
        cfg = LossConfig(focal_gamma=2.0, focal_alpha=0.25)
        val = focal_loss(probs, y, cfg).item()
        assert abs(val - 0.25 * 0.25 * math.log(2.0)) < 1e-9

    def test_gamma_zero_is_scaled_cross_entropy(self):
        rng = np.random.default_rng(0)
        p_fg = torch.from_numpy(rng.uniform(0.1, 0.9, size=(3, 3, 3)))
        probs = torch.stack([p_fg, 1 - p_fg], dim=-1)
        y = (rng.random((3, 3, 3)) > 0.5).astype(np.float64)
        cfg = LossConfig(focal_gamma=0.0, focal_alpha=0.5)
        val = focal_loss(probs, y, cfg).item()
        p_t = np.where(y > 0.5, p_fg.numpy(), 1 - p_fg.numpy())
        bce = -np.log(p_t).mean()
        assert abs(val - 0.5 * bce) < 1e-9

    def test_perfect_prediction_zero_loss(self):
        y = np.array([[[1.0, 0.0]]])
        probs = torch.zeros(1, 1, 2, 2)
        probs[0, 0, 0] = torch.tensor([1.0, 0.0])
        probs[0, 0, 1] = torch.tensor([0.0, 1.0])
        val = focal_loss(probs, y, LossConfig()).item()
        assert abs(val) < 1e-9

    def test_alpha_weighting(self):
        # All-background target: alpha_t = 1 - alpha.
        probs = torch.full((2, 2, 2, 2), 0.5, dtype=torch.float64)
        y = np.zeros((2, 2, 2))
        cfg = LossConfig(focal_gamma=0.0, focal_alpha=0.25)
        val = focal_loss(probs, y, cfg).item()
        assert abs(val - 0.75 * math.log(2.0)) < 1e-9


class TestDiceLoss:
    def test_perfect_overlap_near_zero(self):
        y = np.zeros((3, 3, 3))
        y[1] = 1.0
        val = dice_loss(torch.from_numpy(y), y, LossConfig()).item()
        assert 0.0 <= val < 1e-5

    def test_total_miss_near_one(self):
        y = np.zeros((3, 3, 3))
        y[1] = 1.0
        val = dice_loss(torch.from_numpy(1.0 - y), y, LossConfig()).item()
        assert val > 1.0 - 1e-4

    def test_uniform_half_on_balanced_mask(self):
        y = np.zeros((2, 2, 2))
        y[0] = 1.0  # 50% foreground
        p = torch.full((2, 2, 2), 0.5, dtype=torch.float64)
        val = dice_loss(p, y, LossConfig(dice_smooth=1e-12)).item()
        assert abs(val - 0.5) < 1e-6

    def test_range(self):
        rng = np.random.default_rng(4)
        p = torch.from_numpy(rng.uniform(size=(4, 4, 4)))
        y = (rng.random((4, 4, 4)) > 0.5).astype(np.float64)
        val = dice_loss(p, y, LossConfig()).item()
        assert 0.0 <= val <= 1.0


class TestAlignmentAndTotal:
    def test_identical_stages_sum(self):
        rng = np.random.default_rng(0)
        feats = torch.from_numpy(rng.normal(size=(2, 2, 2, 6)))
        text = rng.normal(size=(6, 2))
        y = (rng.random((4, 4, 4)) > 0.7).astype(np.float64)
        cfg = LossConfig()
        one, _ = alignment_loss([feats], text, y, cfg)
        four, per_stage = alignment_loss([feats] * 4, text, y, cfg)
        assert abs(four.item() - 4 * one.item()) < 1e-9
        assert len(per_stage) == 4

    def test_compositional_oracle(self):
        # Step-by-step recomputation: cosine -> resize -> softmax -> losses.
        rng = np.random.default_rng(1)
        stages = [torch.from_numpy(rng.normal(size=(2, 2, 2, 5))) for _ in range(2)]
        text = rng.normal(size=(5, 2))
        y = (rng.random((4, 4, 4)) > 0.6).astype(np.float64)
        cfg = LossConfig()
        total, _ = alignment_loss(stages, text, y, cfg)
        expected = 0.0
        for feats in stages:
            sim = similarity_map(feats, text)
            probs = dense_prediction(sim, y.shape, cfg)
            expected += 0.5 * focal_loss(probs, y, cfg).item()
            expected += 0.5 * dice_loss(probs[..., 0], y, cfg).item()
        assert abs(total.item() - expected) < 1e-9

    def test_batched_adapter_outputs_accepted(self):
        rng = np.random.default_rng(2)
        feats = torch.from_numpy(rng.normal(size=(1, 2, 2, 2, 5)))
        text = rng.normal(size=(5, 2))
        y = np.zeros((2, 2, 2))
        total, _ = alignment_loss([feats], text, y, LossConfig())
        assert torch.isfinite(total)

    def test_total_loss_additivity(self):
        rng = np.random.default_rng(3)
        y = (rng.random((3, 3, 3)) > 0.5).astype(np.float64)
        y_hat = torch.from_numpy(rng.uniform(size=(3, 3, 3)))
        cfg = LossConfig()
        l_a = torch.tensor(0.37, dtype=torch.float64)
        total = total_loss(y_hat, y, l_a, cfg)
        assert abs(total.item() - (dice_loss(y_hat, y, cfg).item() + 0.37)) < 1e-9

    def test_total_loss_zero_alignment(self):
        y = np.ones((2, 2, 2))
        y_hat = torch.from_numpy(np.ones((2, 2, 2)))
        cfg = LossConfig()
        total = total_loss(y_hat, y, 0.0, cfg)
        assert abs(total.item() - dice_loss(y_hat, y, cfg).item()) < 1e-12

    def test_monotonicity_in_fg_similarity(self):
        # Raising one token's fg similarity must not decrease nearby fg probability.
        cfg = LossConfig()
        sim = torch.zeros(2, 2, 2, 2)
        base = dense_prediction(sim, (4, 4, 4), cfg)
        sim2 = sim.clone()
        sim2[0, 0, 0, 0] = 1.0
        bumped = dense_prediction(sim2, (4, 4, 4), cfg)
        assert (bumped[..., 0] >= base[..., 0] - 1e-12).all()
