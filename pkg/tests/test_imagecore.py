import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from PIL import Image

from dualview_diff.errors import (
    BitDepthError,
    ChannelCountError,
    DataError,
    DimensionMismatchError,
    UnreadableImageError,
)
from dualview_diff.imagecore import (
    abs_diff,
    hflip,
    load_gray16,
    load_triple16,
    save_gray16,
    save_preview_rgb,
    save_triple16,
    triple_paths,
)

unit_images = arrays(
    np.float64,
    st.tuples(st.integers(1, 12), st.integers(1, 12)),
    elements=st.floats(0.0, 1.0, allow_nan=False),
)


def _write_raw(path, values):
    Image.fromarray(np.asarray(values, dtype=np.uint16)).save(path)


@pytest.mark.parametrize("stored, expected", [(65535, 1.0), (0, 0.0), (32768, 32768 / 65535)])
def test_load_gray16_scales_by_uint16_max(tmp_path, stored, expected):
    p = tmp_path / "x.png"
    _write_raw(p, [[stored]])
    assert load_gray16(p)[0, 0] == expected


@pytest.mark.parametrize("value, stored", [(0.0, 0), (1.0, 65535), (0.25, 16384)])
def test_save_gray16_rounds(tmp_path, value, stored):
    p = tmp_path / "x.png"
    save_gray16(np.full((2, 3), value), p)
    raw = np.array(Image.open(p))
    assert raw.dtype == np.uint16
    assert np.all(raw == stored)


def test_save_rejects_out_of_range(tmp_path):
    with pytest.raises(DataError):
        save_gray16(np.array([[1.2]]), tmp_path / "x.png")
    with pytest.raises(DataError):
        save_gray16(np.array([[-0.01]]), tmp_path / "x.png")


def test_load_errors_are_distinct(tmp_path):
    with pytest.raises(UnreadableImageError):
        load_gray16(tmp_path / "missing.png")
    junk = tmp_path / "junk.png"
    junk.write_bytes(b"not a png")
    with pytest.raises(UnreadableImageError):
        load_gray16(junk)
    eight = tmp_path / "eight.png"
    Image.fromarray(np.zeros((4, 4), np.uint8)).save(eight)
    with pytest.raises(BitDepthError):
        load_gray16(eight)
    rgb = tmp_path / "rgb.png"
    Image.fromarray(np.zeros((4, 4, 3), np.uint8)).save(rgb)
    with pytest.raises(ChannelCountError):
        load_gray16(rgb)


@settings(max_examples=50, deadline=None)
@given(unit_images)
def test_quantization_round_trip(tmp_path_factory, img):
    p = tmp_path_factory.mktemp("rt") / "x.png"
    save_gray16(img, p)
    assert np.max(np.abs(load_gray16(p) - img)) <= 1 / 131070 + 1e-15


def test_abs_diff_examples(rng):
    assert np.all(abs_diff(np.full((3, 3), 0.4), np.full((3, 3), 0.4)) == 0)
    np.testing.assert_allclose(abs_diff(np.full((2, 2), 0.5), np.full((2, 2), 0.2)), 0.3)
    a, b = rng.random((4, 4)), rng.random((4, 4))
    oracle = np.empty((4, 4))
    for r in range(4):
        for c in range(4):
            oracle[r, c] = abs(a[r, c] - b[r, c])
    assert np.array_equal(abs_diff(a, b), oracle)


def test_abs_diff_shape_mismatch():
    with pytest.raises(DimensionMismatchError):
        abs_diff(np.zeros((2, 2)), np.zeros((2, 3)))


@given(unit_images, st.data())
def test_abs_diff_symmetric(a, data):
    b = data.draw(arrays(np.float64, a.shape, elements=st.floats(0.0, 1.0)))
    assert np.array_equal(abs_diff(a, b), abs_diff(b, a))


def test_hflip_examples():
    assert np.array_equal(hflip(np.array([[1.0, 2.0, 3.0]])), [[3.0, 2.0, 1.0]])
    col = np.array([[0.1], [0.2]])
    assert np.array_equal(hflip(col), col)


@given(unit_images)
def test_hflip_involution(img):
    assert np.array_equal(hflip(hflip(img)), img)


def test_triple_container_round_trip(tmp_path, rng):
    triple = rng.random((3, 5, 7))
    stem = tmp_path / "pair"
    save_triple16(triple, stem)
    assert all(p.exists() for p in triple_paths(stem))
    assert [p.name for p in triple_paths(stem)] == ["pair_cc.png", "pair_mlo.png", "pair_diff.png"]
    assert np.max(np.abs(load_triple16(stem) - triple)) <= 1 / 131070 + 1e-15


def test_preview_is_8bit_rgb(tmp_path, rng):
    p = tmp_path / "prev.png"
    save_preview_rgb(rng.random((3, 4, 4)), p)
    im = Image.open(p)
    assert im.mode == "RGB" and im.size == (4, 4)
