import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from PIL import Image

from dpsconf.imagery import (
    ConfidenceMap,
    CorruptStreamError,
    DisparityMap,
    FormatMismatchError,
    MissingFileError,
    OutOfRangeError,
    RasterImage,
    UnsupportedFormatError,
    load_disparity,
    load_image,
    read_pfm,
    save_disparity,
    save_gray_visualization,
    write_pfm,
)


def test_load_rgb_png_constant(tmp_path):
    data = np.tile(np.array([10, 20, 30], np.uint8), (2, 4, 1))
    Image.fromarray(data).save(tmp_path / "c.png")
    img = load_image(tmp_path / "c.png")
    assert (img.width, img.height, img.channels) == (4, 2, 3)
    assert img.data.ravel().tolist() == [10, 20, 30] * 8


def test_load_minimal_pgm(tmp_path):
    (tmp_path / "one.pgm").write_bytes(b"P5\n1 1\n255\n\xff")
    img = load_image(tmp_path / "one.pgm")
    assert (img.width, img.height, img.channels) == (1, 1, 1)
    assert img.data.ravel().tolist() == [255]


def test_load_truncated_is_corrupt(tmp_path):
    Image.fromarray(np.zeros((20, 20), np.uint8) + 7).save(tmp_path / "t.png")
    raw = (tmp_path / "t.png").read_bytes()
    (tmp_path / "bad.png").write_bytes(raw[: len(raw) // 2])
    with pytest.raises(CorruptStreamError):
        load_image(tmp_path / "bad.png")
    (tmp_path / "bad.pgm").write_bytes(b"P5\n4 4\n255\n\x00\x01")
    with pytest.raises(CorruptStreamError):
        load_image(tmp_path / "bad.pgm")


def test_load_errors_are_distinct(tmp_path):
    with pytest.raises(MissingFileError):
        load_image(tmp_path / "nope.png")
    Image.fromarray(np.zeros((3, 3), np.uint16)).save(tmp_path / "deep.png")
    with pytest.raises(UnsupportedFormatError):
        load_image(tmp_path / "deep.png")
    assert not issubclass(CorruptStreamError, UnsupportedFormatError)


def test_gray_uses_integer_luma():
    img = RasterImage(np.array([[[100, 50, 200]]], np.uint8))
    assert img.gray()[0, 0] == (299 * 100 + 587 * 50 + 114 * 200) / 1000


def test_kitti_decoding(tmp_path):
    raw = np.array([[25600, 0], [384, 256]], np.uint16)
    Image.fromarray(raw).save(tmp_path / "d.png")
    d = load_disparity(tmp_path / "d.png", "kitti-png16")
    assert d.values[0, 0] == 100.0 and d.valid[0, 0]
    assert not d.valid[0, 1]
    assert d.values[1, 0] == 1.5 and d.values[1, 1] == 1.0


def test_kitti_d_max_exclusion(tmp_path):
    raw = np.array([[int(193 * 256), int(192 * 256)]], np.uint16)
    Image.fromarray(raw).save(tmp_path / "d.png")
    d = load_disparity(tmp_path / "d.png", "kitti-png16", d_max=192)
    assert d.valid.tolist() == [[False, True]]


def test_pfm_infinity_is_invalid(tmp_path):
    vals = np.array([[1.25, np.inf], [3.0, 4.5]], np.float32)
    write_pfm(tmp_path / "d.pfm", vals)
    d = load_disparity(tmp_path / "d.pfm", "pfm")
    assert d.valid.tolist() == [[True, False], [True, True]]
    assert d.values[0, 0] == 1.25 and d.values[1, 1] == 4.5


def test_pfm_row_order_and_big_endian(tmp_path):
    # rows are stored bottom-to-top; positive scale means big-endian
    payload = np.array([[5.0, 6.0], [1.0, 2.0]], ">f4").tobytes()
    (tmp_path / "be.pfm").write_bytes(b"Pf\n2 2\n1.0\n" + payload)
    assert read_pfm(tmp_path / "be.pfm").tolist() == [[1.0, 2.0], [5.0, 6.0]]


def test_pfm_format_mismatch(tmp_path):
    (tmp_path / "x.pfm").write_bytes(b"P5\n1 1\n255\n\x00")
    with pytest.raises(FormatMismatchError):
        load_disparity(tmp_path / "x.pfm", "pfm")
    Image.fromarray(np.zeros((2, 2), np.uint8)).save(tmp_path / "g.png")
    with pytest.raises(FormatMismatchError):
        load_disparity(tmp_path / "g.png", "kitti-png16")


def test_save_kitti_constant_round_trip(tmp_path):
    d = DisparityMap(np.full((3, 4), 1.5))
    save_disparity(d, tmp_path / "c.png", "kitti-png16")
    assert np.all(np.array(Image.open(tmp_path / "c.png")) == 384)
    back = load_disparity(tmp_path / "c.png", "kitti-png16")
    assert np.all(back.values == 1.5) and back.valid.all()


def test_save_kitti_out_of_range(tmp_path):
    d = DisparityMap(np.array([[300.0]]))
    with pytest.raises(OutOfRangeError):
        save_disparity(d, tmp_path / "o.png", "kitti-png16")


@pytest.mark.parametrize("fmt", ["kitti-png16", "pfm"])
def test_empty_mask_round_trip(tmp_path, fmt):
    d = DisparityMap(np.zeros((2, 3)), np.zeros((2, 3), bool))
    save_disparity(d, tmp_path / "e", fmt)
    back = load_disparity(tmp_path / "e", fmt)
    assert not back.valid.any()


def _disparity_maps(max_value):
    shape = st.tuples(st.integers(1, 12), st.integers(1, 12))
    return shape.flatmap(
        lambda s: st.tuples(
            arrays(np.float32, s, elements=st.floats(0.0, max_value, width=32, exclude_max=True)),
            arrays(np.bool_, s),
        )
    )


@settings(max_examples=60, deadline=None)
@given(_disparity_maps(1e6))
def test_pfm_round_trip_bit_exact(tmp_path_factory, vm):
    values, valid = vm
    d = DisparityMap(values, valid)
    path = tmp_path_factory.mktemp("pfm") / "d.pfm"
    save_disparity(d, path, "pfm")
    back = load_disparity(path, "pfm")
    assert np.array_equal(back.valid, d.valid)
    assert back.values[valid].tobytes() == d.values[valid].tobytes()


@settings(max_examples=60, deadline=None)
@given(_disparity_maps(255.5))
def test_kitti_round_trip_within_quantum(tmp_path_factory, vm):
    values, valid = vm
    valid = valid & (values > 0)
    d = DisparityMap(values, valid)
    path = tmp_path_factory.mktemp("kitti") / "d.png"
    save_disparity(d, path, "kitti-png16")
    back = load_disparity(path, "kitti-png16")
    assert np.array_equal(back.valid, d.valid)
    assert np.all(np.abs(back.values[valid].astype(float) - d.values[valid]) <= 1 / 256)


def test_decoder_never_yields_nan(tmp_path):
    write_pfm(tmp_path / "n.pfm", np.array([[np.nan, -np.inf, -1.0, 2.0]], np.float32))
    d = load_disparity(tmp_path / "n.pfm", "pfm")
    assert d.valid.tolist() == [[False, False, False, True]]
    assert np.all(np.isfinite(d.values))


@pytest.mark.parametrize("value,expected", [(1.0, 255), (0.5, 128), (0.0, 0), (0.3, 77)])
def test_visualization_values(tmp_path, value, expected):
    c = ConfidenceMap(np.array([[value, value]]), np.array([[True, False]]))
    save_gray_visualization(c, tmp_path / "v.png", 255)
    out = np.array(Image.open(tmp_path / "v.png"))
    assert out.tolist() == [[expected, 0]]


def test_visualization_clamps_and_rejects_bad_scale(tmp_path):
    d = DisparityMap(np.array([[10.0, 400.0]]))
    save_gray_visualization(d, tmp_path / "v.png", 1.0)
    assert np.array(Image.open(tmp_path / "v.png")).tolist() == [[10, 255]]
    with pytest.raises(ValueError):
        save_gray_visualization(d, tmp_path / "v.png", 0.0)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(0, 2, allow_nan=False), min_size=2, max_size=30), st.floats(1, 300))
def test_visualization_monotone(tmp_path_factory, vals, scale):
    vals = np.sort(np.array(vals))[None, :]
    path = tmp_path_factory.mktemp("vis") / "v.png"
    save_gray_visualization(DisparityMap(vals), path, scale)
    out = np.array(Image.open(path))[0].astype(int)
    assert np.all(np.diff(out) >= 0)


def test_confidence_map_range_enforced():
    with pytest.raises(ValueError):
        ConfidenceMap(np.array([[1.5]]))
    ConfidenceMap(np.array([[1.5]]), np.array([[False]]))  # invalid entries unchecked


def test_rasters_are_immutable():
    d = DisparityMap(np.zeros((2, 2)))
    with pytest.raises(ValueError):
        d.values[0, 0] = 1.0
    assert math.isclose(float(d.masked()[0, 0]), 0.0)
