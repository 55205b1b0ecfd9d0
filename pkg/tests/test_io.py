import numpy as np
import pytest

from tags.io import (
    CaseRecord,
    FormatError,
    load_manifest,
    load_volume,
    load_volume_bytes,
    resolve_case_paths,
    save_manifest,
    save_volume,
)
from tags.volume import MaskVolume, Volume


@pytest.fixture
def volume():
    rng = np.random.default_rng(0)
    return Volume(
        rng.normal(size=(5, 6, 7)).astype(np.float32),
        spacing=(2.0, 1.5, 1.0),
        origin=(-10.0, 5.0, 0.0),
    )


@pytest.mark.parametrize("ext", [".nii", ".nii.gz", ".svol"])
class TestVolumeRoundTrip:
    def test_image_round_trip(self, tmp_path, volume, ext):
        path = tmp_path / f"vol{ext}"
        save_volume(path, volume)
        loaded = load_volume(path)
        assert np.array_equal(loaded.data, volume.data)
        assert np.allclose(loaded.spacing, volume.spacing, atol=1e-6)
        assert np.allclose(loaded.origin, volume.origin, atol=1e-6)

    def test_mask_round_trip(self, tmp_path, volume, ext):
        rng = np.random.default_rng(1)
        mask = MaskVolume((rng.random((4, 4, 4)) > 0.5).astype(np.uint8), spacing=(1, 1, 1))
        path = tmp_path / f"mask{ext}"
        save_volume(path, mask)
        loaded = load_volume(path, mask=True)
        assert isinstance(loaded, MaskVolume)
        assert np.array_equal(loaded.data, mask.data)

    def test_bytes_round_trip(self, tmp_path, volume, ext):
        path = tmp_path / f"vol{ext}"
        save_volume(path, volume)
        loaded = load_volume_bytes(path.read_bytes(), path.name)
        assert np.array_equal(loaded.data, volume.data)


class TestErrors:
    def test_unknown_extension(self, tmp_path, volume):
        with pytest.raises(FormatError):
            save_volume(tmp_path / "vol.xyz", volume)
        with pytest.raises(FormatError):
            load_volume(tmp_path / "vol.xyz")

    def test_truncated_nifti(self, tmp_path, volume):
        path = tmp_path / "vol.nii"
        save_volume(path, volume)
        path.write_bytes(path.read_bytes()[:100])
        with pytest.raises(FormatError):
            load_volume(path)

    def test_truncated_svol(self, tmp_path, volume):
        path = tmp_path / "vol.svol"
        save_volume(path, volume)
        raw = path.read_bytes()
        path.write_bytes(raw[: len(raw) - 16])
        with pytest.raises(FormatError):
            load_volume(path)

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "vol.svol"
        path.write_bytes(b"NOPE" + b"\x00" * 64)
        with pytest.raises(FormatError):
            load_volume(path)

    def test_not_nifti(self, tmp_path):
        path = tmp_path / "vol.nii"
        path.write_bytes(b"\x00" * 400)
        with pytest.raises(FormatError):
            load_volume(path)


class TestManifest:
    def test_round_trip_and_resolution(self, tmp_path):
        cases = [
            CaseRecord("a_image.nii.gz", "a_organ.nii.gz", "a_tumor.nii.gz", "kidney"),
            CaseRecord("b_image.svol", "b_organ.svol", None, "liver"),
        ]
        path = tmp_path / "manifest.json"
        save_manifest(path, cases)
        loaded = load_manifest(path)
        assert loaded == cases
        paths = resolve_case_paths(path, loaded[0])
        assert paths["image"] == tmp_path / "a_image.nii.gz"
        assert paths["tumor"] == tmp_path / "a_tumor.nii.gz"
        paths_b = resolve_case_paths(path, loaded[1])
        assert paths_b["tumor"] is None

    def test_non_list_rejected(self, tmp_path):
        path = tmp_path / "manifest.json"
        path.write_text('{"image": "x"}')
        with pytest.raises(FormatError):
            load_manifest(path)
