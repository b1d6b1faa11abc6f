import numpy as np
import pytest

from bayeslottery.data import (CifarFormatError, Dataset, RECORD_BYTES, augment, crop,
                               flip_horizontal, load_cifar10, parse_cifar10, serialize_cifar10,
                               synth_blobs, synth_images, synth_moons)


def fixture_record(label=9):
    return bytes([label]) + bytes(i % 256 for i in range(3072))


def test_fixture_record_layout():
    data = parse_cifar10(fixture_record())
    assert data.y.tolist() == [9]
    assert data.x.shape == (1, 3, 32, 32)
    assert data.x.dtype == np.float32
    assert data.x[0, 0, 0, 0] == 0.0
    assert data.x[0, 0, 0, 1] == np.float32(1) / np.float32(255)
    # byte 1 + 1024 is the first green pixel; byte 1 + 32 starts the second red row
    assert data.x[0, 1, 0, 0] == np.float32(1024 % 256) / np.float32(255)
    assert data.x[0, 0, 1, 0] == np.float32(32) / np.float32(255)
    assert data.x[0, 2, 31, 31] == np.float32(3071 % 256) / np.float32(255)


def test_fixture_round_trips_bit_exactly():
    buf = fixture_record(3) + fixture_record(0)
    assert serialize_cifar10(parse_cifar10(buf)) == buf


def test_random_stream_round_trips():
    rng = np.random.default_rng(0)
    recs = rng.integers(0, 256, (5, RECORD_BYTES), dtype=np.uint8)
    recs[:, 0] %= 10
    buf = recs.tobytes()
    assert serialize_cifar10(parse_cifar10(buf)) == buf


def test_empty_stream_has_no_records():
    data = parse_cifar10(b"")
    assert len(data) == 0 and data.x.shape == (0, 3, 32, 32)


def test_stream_lengths():
    assert len(parse_cifar10(bytes(6146))) == 2
    with pytest.raises(CifarFormatError, match="offset 6146"):
        parse_cifar10(bytes(6147))


def test_label_out_of_range_names_record():
    buf = fixture_record(1) + fixture_record(10)
    with pytest.raises(CifarFormatError, match="record 1: label 10"):
        parse_cifar10(buf)


def test_load_from_files_with_limit(tmp_path):
    (tmp_path / "a.bin").write_bytes(fixture_record(1) + fixture_record(2))
    (tmp_path / "b.bin").write_bytes(fixture_record(3))
    data = load_cifar10(tmp_path / "a.bin", tmp_path / "b.bin")
    assert data.y.tolist() == [1, 2, 3]
    assert load_cifar10(tmp_path / "a.bin", tmp_path / "b.bin", limit=2).y.tolist() == [1, 2]


def test_blobs_without_spread_sit_on_centers():
    data = synth_blobs(5, classes=4, spread=0.0, seed=0)
    for k in range(4):
        pts = data.x[data.y == k]
        assert len(pts) == 5
        assert np.all(pts == pts[0])
    np.testing.assert_allclose(np.linalg.norm(data.x, axis=1), 2.0, rtol=1e-6)


def test_grid_blobs_without_spread_sit_on_grid_points():
    data = synth_blobs(20, classes=4, spread=0.0, seed=1, grid=5)
    assert np.all(np.isin(data.x, np.arange(5) - 2.0))
    assert np.bincount(data.y).tolist() == [20, 20, 20, 20]


@pytest.mark.parametrize("make", [
    lambda s: synth_blobs(10, 3, 0.4, s),
    lambda s: synth_blobs(10, 4, 0.15, s, grid=5),
    lambda s: synth_moons(10, 0.1, s),
    lambda s: synth_images(3, 4, 8, 0.3, s),
])
def test_generators_are_seed_deterministic(make):
    a, b, c = make(4), make(4), make(5)
    assert np.array_equal(a.x, b.x) and np.array_equal(a.y, b.y)
    assert not np.array_equal(a.x, c.x)


def test_blobs_are_linearly_separable_by_least_squares():
    data = synth_blobs(500, classes=2, spread=0.1, seed=3)
    centers = [data.x[data.y == k].mean(axis=0) for k in (0, 1)]
    assert np.linalg.norm(centers[0] - centers[1]) == pytest.approx(4.0, abs=0.05)
    design = np.hstack([data.x, np.ones((len(data), 1))])
    target = np.where(data.y == 1, 1.0, -1.0)
    w, *_ = np.linalg.lstsq(design, target, rcond=None)
    assert np.mean((design @ w > 0) == (data.y == 1)) > 0.99


def test_generators_reject_empty():
    with pytest.raises(ValueError):
        synth_blobs(0)
    with pytest.raises(ValueError):
        synth_moons(0)


def test_flip_twice_is_identity():
    img = np.random.default_rng(0).random((3, 6, 6)).astype(np.float32)
    np.testing.assert_array_equal(flip_horizontal(flip_horizontal(img)), img)


def test_flip_preserves_pixel_multiset():
    img = np.random.default_rng(1).random((3, 5, 7))
    np.testing.assert_array_equal(np.sort(flip_horizontal(img), axis=None), np.sort(img, axis=None))


def test_centered_crop_is_identity():
    img = np.random.default_rng(2).random((3, 32, 32)).astype(np.float32)
    np.testing.assert_array_equal(crop(img, 4, 4), img)


def test_corner_crop_shifts_in_zeros():
    img = np.ones((1, 4, 4))
    out = crop(img, 0, 0)
    assert out.shape == img.shape and out.sum() == 0


def test_augment_keeps_shape_and_is_seeded():
    x = np.random.default_rng(3).random((6, 3, 8, 8)).astype(np.float32)
    a, b = augment(x, 11), augment(x, 11)
    assert a.shape == x.shape and a.dtype == x.dtype
    np.testing.assert_array_equal(a, b)
    assert augment(x[0], 5).shape == x[0].shape


def test_augment_leaves_points_untouched():
    pts = np.random.default_rng(4).random((5, 2))
    assert augment(pts, 0) is pts or np.array_equal(augment(pts, 0), pts)


def test_dataset_subset_keeps_pairs():
    d = Dataset(np.arange(10, dtype=np.float32).reshape(5, 2), np.arange(5))
    s = d.subset([4, 1])
    assert s.y.tolist() == [4, 1] and s.x[0].tolist() == [8, 9]
    assert not d.is_image
