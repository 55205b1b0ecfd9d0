import numpy as np
import pytest
from scipy import ndimage

from tags.points import (
    NoLesionError,
    PointPrompt,
    SelectionStrategy,
    boundary_mask,
    central_point,
    largest_component,
    sample_train_points,
    select_inference_points,
)
from tags.volume import MaskVolume, VolumeError


def _random_blob(seed, shape=(12, 12, 12), p=0.2):
    rng = np.random.default_rng(seed)
    raw = rng.random(shape) < p
    # Dilate once so blobs have interiors.
    blob = ndimage.binary_dilation(raw).astype(np.uint8)
    return MaskVolume(blob)


class TestSelectionStrategy:
    def test_name_format(self):
        assert SelectionStrategy("edge", 3).name == "edge(3)"

    def test_central_requires_single_point(self):
        with pytest.raises(ValueError):
            SelectionStrategy("central", 3)

    def test_k_positive(self):
        with pytest.raises(ValueError):
            SelectionStrategy("random", 0)


class TestTrainPointSampling:
    def test_empty_tumor_gives_all_background(self):
        tumor = MaskVolume(np.zeros((8, 8, 8), dtype=np.uint8))
        pts = sample_train_points(tumor, 10, np.random.default_rng(0))
        assert len(pts) == 10
        assert all(p.label == "background" for p in pts)

    def test_split_five_five_when_tumor_present(self):
        tumor = MaskVolume(np.zeros((8, 8, 8), dtype=np.uint8))
        tumor.data[2:5, 2:5, 2:5] = 1
        pts = sample_train_points(tumor, 10, np.random.default_rng(0))
        assert sum(p.label == "foreground" for p in pts) == 5
        assert sum(p.label == "background" for p in pts) == 5

    def test_labels_consistent_with_mask(self):
        tumor = _random_blob(1)
        for seed in range(5):
            pts = sample_train_points(tumor, 10, np.random.default_rng(seed))
            for p in pts:
                inside = bool(tumor.data[p.coord])
                assert inside == (p.label == "foreground")

    def test_deterministic_under_seed(self):
        tumor = _random_blob(2)
        a = sample_train_points(tumor, 10, np.random.default_rng(9))
        b = sample_train_points(tumor, 10, np.random.default_rng(9))
        assert a == b

    def test_requires_rng(self):
        with pytest.raises(ValueError):
            sample_train_points(MaskVolume(np.zeros((2, 2, 2), dtype=np.uint8)), 10, None)

    def test_no_background_rejected(self):
        tumor = MaskVolume(np.ones((2, 2, 2), dtype=np.uint8))
        with pytest.raises(VolumeError):
            sample_train_points(tumor, 10, np.random.default_rng(0))


def _boundary_oracle(mask: np.ndarray) -> np.ndarray:
    """Brute-force 6-neighbor boundary: mask voxels with any out-of-mask
    face neighbor (array border counts as outside)."""
    out = np.zeros_like(mask, dtype=np.uint8)
    d, h, w = mask.shape
    for z in range(d):
        for y in range(h):
            for x in range(w):
                if not mask[z, y, x]:
                    continue
                for dz, dy, dx in (
                    (1, 0, 0), (-1, 0, 0), (0, 1, 0), (0, -1, 0), (0, 0, 1), (0, 0, -1)
                ):
                    nz, ny, nx = z + dz, y + dy, x + dx
                    if not (0 <= nz < d and 0 <= ny < h and 0 <= nx < w) or not mask[nz, ny, nx]:
                        out[z, y, x] = 1
                        break
    return out


def _central_oracle(mask: np.ndarray):
    """Brute-force deepest-interior voxel: per mask voxel, the minimum
    euclidean distance to any non-mask voxel (including virtual outside
    voxels just past the border); first C-order argmax."""
    padded = np.pad(mask.astype(bool), 1)
    outside = np.argwhere(~padded).astype(np.float64)
    best_coord, best_dist = None, -1.0
    for v in np.argwhere(mask > 0):
        dv = np.sqrt(((outside - (v + 1)) ** 2).sum(axis=1)).min()
        if dv > best_dist + 1e-12:
            best_dist = dv
            best_coord = tuple(int(c) for c in v)
    return best_coord


class TestGeometryHelpers:
    def test_boundary_matches_oracle_on_blobs(self):
        for seed in range(10):
            blob = _random_blob(seed, shape=(9, 9, 9))
            assert np.array_equal(boundary_mask(blob.data), _boundary_oracle(blob.data))

    def test_cube_boundary_is_faces(self):
        mask = np.zeros((9, 9, 9), dtype=np.uint8)
        mask[2:7, 2:7, 2:7] = 1
        b = boundary_mask(mask)
        interior = np.zeros_like(mask)
        interior[3:6, 3:6, 3:6] = 1
        assert np.array_equal(b, mask & ~interior)

    def test_central_point_of_cube(self):
        mask = np.zeros((9, 9, 9), dtype=np.uint8)
        mask[2:7, 2:7, 2:7] = 1
        assert central_point(mask) == (4, 4, 4)

    def test_central_matches_oracle_on_blobs(self):
        for seed in range(8):
            blob = _random_blob(seed, shape=(8, 8, 8))
            if blob.is_empty():
                continue
            assert central_point(blob.data) == _central_oracle(blob.data)

    def test_largest_component_identity(self):
        blob = _random_blob(3)
        single = largest_component(largest_component(blob))
        assert np.array_equal(single.data, largest_component(blob).data)

    def test_largest_component_picks_bigger(self):
        mask = np.zeros((10, 10, 10), dtype=np.uint8)
        mask[0:2, 0:2, 0:2] = 1  # 8 voxels
        mask[6:9, 6:9, 6:9] = 1  # 27 voxels
        out = largest_component(MaskVolume(mask))
        assert out.data.sum() == 27
        assert out.data[7, 7, 7] == 1

    def test_largest_component_matches_flood_fill_oracle(self):
        for seed in range(6):
            blob = _random_blob(seed, shape=(10, 10, 10), p=0.1)
            if blob.is_empty():
                continue
            labels, n = ndimage.label(blob.data, structure=np.ones((3, 3, 3)))
            sizes = [(labels == i).sum() for i in range(1, n + 1)]
            out = largest_component(blob)
            assert out.data.sum() == max(sizes)

    def test_largest_component_tie_break(self):
        mask = np.zeros((8, 8, 8), dtype=np.uint8)
        mask[6, 6, 6] = 1
        mask[0, 0, 0] = 1
        out = largest_component(MaskVolume(mask))
        assert out.data[0, 0, 0] == 1 and out.data[6, 6, 6] == 0

    def test_empty_mask_stays_empty(self):
        out = largest_component(MaskVolume(np.zeros((4, 4, 4), dtype=np.uint8)))
        assert out.is_empty()


class TestInferenceSelection:
    def test_empty_tumor_raises_no_lesion(self):
        tumor = MaskVolume(np.zeros((4, 4, 4), dtype=np.uint8))
        for strat in ("random", "edge", "central"):
            with pytest.raises(NoLesionError):
                select_inference_points(
                    tumor, SelectionStrategy(strat), np.random.default_rng(0)
                )

    def test_single_voxel_tumor_all_strategies_agree(self):
        tumor = MaskVolume(np.zeros((6, 6, 6), dtype=np.uint8))
        tumor.data[2, 3, 4] = 1
        for strat in ("random", "edge", "central"):
            pts = select_inference_points(
                tumor, SelectionStrategy(strat), np.random.default_rng(0)
            )
            assert pts == [PointPrompt((2, 3, 4), "foreground")]

    def test_random_points_inside_tumor(self):
        tumor = _random_blob(4)
        pts = select_inference_points(
            tumor, SelectionStrategy("random", 3), np.random.default_rng(0)
        )
        assert len(pts) == 3
        for p in pts:
            assert tumor.data[p.coord] == 1

    def test_edge_points_on_boundary(self):
        tumor = MaskVolume(np.zeros((9, 9, 9), dtype=np.uint8))
        tumor.data[2:7, 2:7, 2:7] = 1
        boundary = boundary_mask(tumor.data)
        pts = select_inference_points(
            tumor, SelectionStrategy("edge", 3), np.random.default_rng(0)
        )
        assert len(pts) == len({p.coord for p in pts}) == 3
        for p in pts:
            assert boundary[p.coord] == 1

    def test_edge_central_use_largest_component(self):
        mask = np.zeros((12, 12, 12), dtype=np.uint8)
        mask[1:3, 1:3, 1:3] = 1  # small component
        mask[5:11, 5:11, 5:11] = 1  # large component
        tumor = MaskVolume(mask)
        for strat in (SelectionStrategy("edge", 2), SelectionStrategy("central")):
            pts = select_inference_points(tumor, strat, np.random.default_rng(0))
            for p in pts:
                assert all(5 <= c < 11 for c in p.coord)

    def test_k_distinct_when_possible(self):
        tumor = _random_blob(5)
        pts = select_inference_points(
            tumor, SelectionStrategy("random", 3), np.random.default_rng(1)
        )
        assert len({p.coord for p in pts}) == 3

    def test_all_foreground_labels(self):
        tumor = _random_blob(6)
        for strat in (
            SelectionStrategy("random", 2),
            SelectionStrategy("edge", 2),
            SelectionStrategy("central"),
        ):
            pts = select_inference_points(tumor, strat, np.random.default_rng(2))
            assert all(p.label == "foreground" for p in pts)

    def test_central_deterministic_without_rng(self):
        tumor = _random_blob(7)
        a = select_inference_points(tumor, SelectionStrategy("central"))
        b = select_inference_points(tumor, SelectionStrategy("central"))
        assert a == b
