import io

import numpy as np
import pytest
from fastapi.testclient import TestClient
from PIL import Image

from tags.io import save_volume
from tags.points import PointPrompt, central_point
from tags.pipeline import infer
from tags.rle import rle_decode, rle_encode
from tags.service import create_app


def _files(tmp_path, case, include_tumor=True, ext=".nii.gz"):
    save_volume(tmp_path / f"image{ext}", case.image)
    save_volume(tmp_path / f"organ{ext}", case.organ)
    files = {
        "image": (f"image{ext}", (tmp_path / f"image{ext}").read_bytes()),
        "organ": (f"organ{ext}", (tmp_path / f"organ{ext}").read_bytes()),
    }
    if include_tumor:
        save_volume(tmp_path / f"tumor{ext}", case.tumor)
        files["tumor"] = (f"tumor{ext}", (tmp_path / f"tumor{ext}").read_bytes())
    return files


@pytest.fixture(scope="module")
def client(overfit):
    app = create_app(net=overfit["net"], cfg=overfit["cfg"])
    return TestClient(app)


@pytest.fixture(scope="module")
def volume_id(client, overfit, tmp_path_factory):
    tmp = tmp_path_factory.mktemp("svc")
    resp = client.post("/volumes", files=_files(tmp, overfit["case"]))
    assert resp.status_code == 200, resp.text
    return resp.json()["id"]


class TestHealthAndUpload:
    def test_health(self, client):
        body = client.get("/health").json()
        assert body == {"status": "ok", "model_loaded": True}

    def test_upload_returns_metadata(self, client, overfit, tmp_path):
        resp = client.post("/volumes", files=_files(tmp_path, overfit["case"]))
        assert resp.status_code == 200
        body = resp.json()
        assert body["dims"] == list(overfit["case"].image.shape)
        assert body["has_ground_truth"] is True

    def test_reupload_gets_new_id(self, client, overfit, tmp_path):
        files = _files(tmp_path, overfit["case"])
        a = client.post("/volumes", files=files).json()["id"]
        b = client.post("/volumes", files=files).json()["id"]
        assert a != b

    def test_shape_mismatch_rejected(self, client, overfit, phantom_cases, tmp_path):
        files = _files(tmp_path, overfit["case"], include_tumor=False)
        small = phantom_cases[0]
        bad_organ = np.zeros((8, 8, 8), dtype=np.uint8)
        from tags.volume import MaskVolume

        save_volume(tmp_path / "bad.nii.gz", MaskVolume(bad_organ))
        files["organ"] = ("bad.nii.gz", (tmp_path / "bad.nii.gz").read_bytes())
        resp = client.post("/volumes", files=files)
        assert resp.status_code == 400
        assert resp.json()["code"] == "shape_mismatch"

    def test_unparsable_upload_rejected(self, client):
        files = {
            "image": ("image.nii", b"not a volume"),
            "organ": ("organ.nii", b"not a volume"),
        }
        resp = client.post("/volumes", files=files)
        assert resp.status_code == 400
        assert resp.json()["code"] == "parse_error"

    def test_unknown_volume_404(self, client):
        resp = client.get("/volumes/deadbeef")
        assert resp.status_code == 404
        assert resp.json()["code"] == "volume_not_found"

    def test_volume_info(self, client, volume_id, overfit):
        body = client.get(f"/volumes/{volume_id}").json()
        assert body["id"] == volume_id
        assert body["dims"] == list(overfit["case"].image.shape)


class TestSlices:
    def test_slice_png_shape(self, client, volume_id, overfit):
        d, h, w = overfit["case"].image.shape
        resp = client.get(f"/volumes/{volume_id}/slice", params={"axis": 0, "index": d // 2})
        assert resp.status_code == 200
        assert resp.headers["content-type"] == "image/png"
        img = Image.open(io.BytesIO(resp.content))
        assert img.size == (w, h)  # PIL size is (width, height)

    def test_organ_channel_slice_is_binary(self, client, volume_id, overfit):
        d = overfit["case"].image.shape[0]
        resp = client.get(
            f"/volumes/{volume_id}/slice", params={"axis": 0, "index": d // 2, "channel": 2}
        )
        arr = np.asarray(Image.open(io.BytesIO(resp.content)))
        assert set(np.unique(arr)) <= {0, 255}
        expected = overfit["case"].organ.data[d // 2] * 255
        assert np.array_equal(arr, expected)

    def test_index_out_of_range(self, client, volume_id):
        resp = client.get(f"/volumes/{volume_id}/slice", params={"axis": 0, "index": 10_000})
        assert resp.status_code == 404
        assert resp.json()["code"] == "index_out_of_range"

    def test_bad_axis_and_channel(self, client, volume_id):
        assert (
            client.get(f"/volumes/{volume_id}/slice", params={"axis": 5, "index": 0}).status_code
            == 400
        )
        resp = client.get(
            f"/volumes/{volume_id}/slice", params={"axis": 0, "index": 0, "channel": 7}
        )
        assert resp.status_code == 400
        assert resp.json()["code"] == "bad_channel"

    def test_slice_mask_rle_round_trip(self, client, volume_id, overfit):
        d = overfit["case"].image.shape[0]
        idx = d // 2
        body = client.get(
            f"/volumes/{volume_id}/slice_mask", params={"axis": 0, "index": idx, "kind": "gt"}
        ).json()
        decoded = rle_decode(body["rle"], shape=tuple(body["shape"]))
        assert np.array_equal(decoded, overfit["case"].tumor.data[idx])

    def test_slice_mask_bad_kind(self, client, volume_id):
        resp = client.get(
            f"/volumes/{volume_id}/slice_mask", params={"axis": 0, "index": 0, "kind": "x"}
        )
        assert resp.status_code == 400


class TestSegment:
    def _central_points(self, case):
        z, y, x = central_point(case.tumor.data)
        return [{"z": int(z), "y": int(y), "x": int(x), "label": "foreground"}]

    def test_segment_round_trip_matches_direct_inference(self, client, volume_id, overfit):
        case = overfit["case"]
        points = self._central_points(case)
        resp = client.post(f"/volumes/{volume_id}/segment", json={"points": points})
        assert resp.status_code == 200, resp.text
        body = resp.json()
        direct = infer(
            case.image,
            case.organ,
            overfit["net"],
            overfit["cfg"],
            points=[PointPrompt((points[0]["z"], points[0]["y"], points[0]["x"]), "foreground")],
        )
        assert body["mask_rle"] == rle_encode(direct.mask.data)
        decoded = rle_decode(body["mask_rle"], shape=tuple(body["shape"]))
        assert np.array_equal(decoded, direct.mask.data)
        assert body["voxel_count"] == int(direct.mask.data.sum())
        assert body["crop_offset"] == list(direct.crop_offset)

    def test_segment_reports_dice_and_slices(self, client, volume_id, overfit):
        case = overfit["case"]
        body = client.post(
            f"/volumes/{volume_id}/segment", json={"points": self._central_points(case)}
        ).json()
        assert 0.0 <= body["dice"] <= 1.0
        assert len(body["per_slice_counts"]) == case.image.shape[0]
        assert sum(body["per_slice_counts"]) == body["voxel_count"]
        assert body["prob_stats"]["min"] <= body["prob_stats"]["mean"] <= body["prob_stats"]["max"]

    def test_segment_deterministic(self, client, volume_id, overfit):
        points = self._central_points(overfit["case"])
        a = client.post(f"/volumes/{volume_id}/segment", json={"points": points}).json()
        b = client.post(f"/volumes/{volume_id}/segment", json={"points": points}).json()
        assert a == b

    def test_background_only_points_valid(self, client, volume_id):
        body = client.post(
            f"/volumes/{volume_id}/segment",
            json={"points": [{"z": 1, "y": 1, "x": 1, "label": "background"}]},
        )
        assert body.status_code == 200
        assert body.json()["voxel_count"] >= 0

    def test_empty_points_rejected(self, client, volume_id):
        resp = client.post(f"/volumes/{volume_id}/segment", json={"points": []})
        assert resp.status_code == 400
        assert resp.json()["code"] == "bad_points"

    def test_bad_label_rejected(self, client, volume_id):
        resp = client.post(
            f"/volumes/{volume_id}/segment",
            json={"points": [{"z": 1, "y": 1, "x": 1, "label": "fg"}]},
        )
        assert resp.status_code == 400

    def test_out_of_bounds_point_rejected(self, client, volume_id):
        resp = client.post(
            f"/volumes/{volume_id}/segment",
            json={"points": [{"z": 999, "y": 1, "x": 1, "label": "foreground"}]},
        )
        assert resp.status_code == 400

    def test_no_model_conflict(self, overfit, tmp_path):
        app = create_app()  # slices-only service, no checkpoint
        bare = TestClient(app)
        vid = bare.post("/volumes", files=_files(tmp_path, overfit["case"])).json()["id"]
        resp = bare.post(
            f"/volumes/{vid}/segment",
            json={"points": [{"z": 1, "y": 1, "x": 1, "label": "foreground"}]},
        )
        assert resp.status_code == 409
        assert resp.json()["code"] == "no_model"
