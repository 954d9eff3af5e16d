import numpy as np
import pytest

import lidarvoice as lv

TINY = {
    "num_points": 64,
    "image_size": 16,
    "tnet_point": [8, 16],
    "tnet_dense": [8],
    "lidar_point": [8, 16],
    "rgb_conv": [4, 4, 4],
    "rgb_feature": 8,
    "head_dense": [8],
}


def test_class_names():
    assert lv.CLASS_NAMES == ("Car", "Pedestrian", "Cyclist", "DontCare")
    assert lv.class_name(2) == "Cyclist"
    with pytest.raises(lv._lidarvoice.Error):
        lv.class_name(7)


def test_velodyne_round_trip():
    rng = np.random.default_rng(0)
    scan = rng.uniform(-50, 50, size=(100, 4)).astype(np.float32).astype(np.float64)
    data = lv.write_velodyne_bin(scan)
    assert len(data) == 100 * 16
    np.testing.assert_array_equal(lv.read_velodyne_bin(data), scan)
    with pytest.raises(lv._lidarvoice.Error):
        lv.read_velodyne_bin(data[:-3])


def test_label_parsing():
    line = "Van 0.00 0 -1.57 599.41 156.40 629.75 189.25 2.85 2.63 12.34 0.47 1.49 69.44 -1.56\n"
    (label,) = lv.parse_label_file(line)
    assert label["type"] == "Van"
    assert label["class_id"] == 3
    assert label["location"] == (0.47, 1.49, 69.44)


def test_normalize_and_resample():
    rng = np.random.default_rng(1)
    pts = rng.normal(size=(300, 3)) * 4 + 10
    out = lv.normalize_points(lv.downsample_points(pts, 128, seed=3))
    assert out.shape == (128, 3)
    np.testing.assert_allclose(out.mean(axis=0), 0, atol=1e-12)
    assert np.linalg.norm(out, axis=1).max() == pytest.approx(1.0)
    np.testing.assert_array_equal(lv.normalize_points(np.ones((5, 3)) * 7), np.zeros((5, 3)))


def test_dbscan_two_blobs():
    a = np.zeros((6, 3)) + np.arange(6)[:, None] * [0.1, 0, 0]
    b = a + [10, 0, 0]
    labels = lv.cluster_dbscan(np.vstack([a, b, [[50, 50, 50]]]))
    assert list(labels) == [0] * 6 + [1] * 6 + [-1]


def test_phrase():
    assert lv.format_phrase(0, 0.8765, 12.34) == "Car detected, 12.3 meters away, 88% confidence"
    assert lv.format_phrase(1, 0.5) == "Pedestrian detected, 50% confidence"
    assert lv.format_phrase(3, 0.99, 3.0) == ""
    assert lv.round_half_up(2.15, 1) == 2.2


def test_synthetic_and_preprocess():
    s = lv.synthetic_sample(2, seed=5)
    assert s["class_id"] == 2
    assert s["image"].dtype == np.uint8 and s["image"].shape[2] == 3
    pts, img = lv.preprocess(s["points"], s["image"], seed=0, num_points=64, image_size=16)
    assert pts.shape == (64, 3)
    assert img.shape == (16, 16, 3)
    assert img.min() == 0.0 and img.max() == 1.0
    assert sum(lv.kitti_ratio_counts(100)) == 100


def test_model_predict_and_checkpoint(tmp_path):
    model = lv.Model(mode="fused", seed=4, dims=TINY)
    assert model.mode == "fused"
    assert model.parameter_count > 0
    s = lv.synthetic_sample(0, seed=9)
    r = model.predict(s["points"], s["image"], distance_m=s["distance_m"])
    assert r["class_name"] == lv.CLASS_NAMES[r["class_id"]]
    assert sum(r["probabilities"]) == pytest.approx(1.0)
    assert r["confidence"] == max(r["probabilities"])
    path = tmp_path / "m.ckpt"
    model.save(path)
    again = lv.Model.load(path).predict(s["points"], s["image"], distance_m=s["distance_m"])
    assert again == r
    with pytest.raises(lv._lidarvoice.Error):
        lv.Model(dims={"bogus": 1})
