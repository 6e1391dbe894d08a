import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from ersr.raster import (
    LAPLACIAN,
    SOBEL_H,
    SOBEL_V,
    RasterIOError,
    binarize,
    convolve3x3,
    read_image,
    read_mask,
    write_image,
    write_mask,
)

from oracles import correlate_oracle


def test_constant_grid_zero_sum_kernel():
    g = np.full((5, 7), 0.5)
    for k in (SOBEL_H, SOBEL_V, LAPLACIAN):
        assert np.array_equal(convolve3x3(g, k), np.zeros_like(g))


def test_single_pixel_grid_collapses_to_kernel_sum():
    k = np.arange(9, dtype=float).reshape(3, 3)
    assert convolve3x3([[0.25]], k)[0, 0] == pytest.approx(0.25 * k.sum())


def test_vertical_step_sobel_matches_frozen_oracle():
    g = np.array([[0, 0, 1, 1]] * 4, dtype=float)
    # Frozen from correlate_oracle on the same input.
    expected = np.array([[0.0, 4.0, 4.0, 0.0]] * 4)
    assert np.array_equal(convolve3x3(g, SOBEL_H), expected)
    assert np.array_equal(np.array(correlate_oracle(g.tolist(), SOBEL_H.tolist())), expected)


def test_sobel_pair_is_transpose():
    assert np.array_equal(SOBEL_V, SOBEL_H.T)
    assert SOBEL_H.tolist() == [[-1, 0, 1], [-2, 0, 2], [-1, 0, 1]]


@settings(max_examples=40, deadline=None)
@given(
    arrays(np.float64, st.tuples(st.integers(1, 9), st.integers(1, 9)), elements=st.floats(0, 1)),
    arrays(np.float64, (3, 3), elements=st.floats(-3, 3)),
)
def test_convolution_matches_direct_correlation(g, k):
    assert np.allclose(convolve3x3(g, k), correlate_oracle(g.tolist(), k.tolist()), atol=1e-12)


@settings(max_examples=40, deadline=None)
@given(
    st.integers(2, 8).flatmap(
        lambda n: st.tuples(
            arrays(np.float64, (n, n), elements=st.floats(0, 1)),
            arrays(np.float64, (n, n), elements=st.floats(0, 1)),
        )
    ),
    st.floats(-2, 2),
    st.floats(-2, 2),
)
def test_convolution_is_linear(grids, a, b):
    g1, g2 = grids
    k = SOBEL_H + 0.5 * LAPLACIAN
    lhs = convolve3x3(a * g1 + b * g2, k)
    rhs = a * convolve3x3(g1, k) + b * convolve3x3(g2, k)
    assert np.max(np.abs(lhs - rhs)) <= 1e-6


def test_interior_translation_equivariance():
    rng = np.random.default_rng(3)
    g = rng.random((12, 12))
    shifted = np.roll(g, (2, 3), axis=(0, 1))
    out, out_s = convolve3x3(g, SOBEL_V), convolve3x3(shifted, SOBEL_V)
    # Compare pixels whose 3x3 neighbourhoods are interior in both grids.
    assert np.allclose(out_s[3:11, 4:11], out[1:9, 1:8])


def test_binarize_is_strict():
    assert not binarize(np.full((3, 3), 0.5), 0.5).any()
    assert binarize(np.array([[0.2, 0.8]]), 0.5).tolist() == [[0, 1]]


def test_binarize_default_tau():
    assert binarize(np.array([[0.5, 0.500001]])).tolist() == [[0, 1]]


def test_raw_roundtrip_is_bit_exact(tmp_path):
    rng = np.random.default_rng(0)
    g = rng.random((17, 23)).astype(np.float32).astype(np.float64)
    p1, p2 = tmp_path / "a.ersrf32", tmp_path / "b.ersrf32"
    write_image(g, p1)
    back = read_image(p1)
    assert np.array_equal(back, g)
    write_image(back, p2)
    assert p1.read_bytes() == p2.read_bytes()


def test_raw_header_layout(tmp_path):
    p = tmp_path / "x.ersrf32"
    write_image(np.array([[0.0, 1.0, 0.5]]), p)
    blob = p.read_bytes()
    assert blob[:4] == b"ERSR"
    assert struct.unpack("<II", blob[4:12]) == (1, 3)
    assert np.frombuffer(blob[12:], "<f4").tolist() == [0.0, 1.0, 0.5]


@pytest.mark.parametrize(
    "blob, message",
    [
        (b"ERS", "truncated"),
        (b"NOPE" + struct.pack("<II", 1, 1) + struct.pack("<f", 0.5), "bad magic"),
        (b"ERSR" + struct.pack("<II", 2, 2) + struct.pack("<f", 0.5), "size mismatch"),
        (b"ERSR" + struct.pack("<II", 0xFFFFFFFF, 0xFFFFFFFF), "overflow"),
        (b"ERSR" + struct.pack("<II", 1, 1) + struct.pack("<f", 1.5), "out of range"),
        (b"ERSR" + struct.pack("<II", 1, 1) + struct.pack("<f", float("nan")), "non-finite"),
    ],
)
def test_raw_reader_rejects_malformed(tmp_path, blob, message):
    p = tmp_path / "bad.ersrf32"
    p.write_bytes(blob)
    with pytest.raises(RasterIOError, match=message):
        read_image(p)


def test_png_quantisation(tmp_path):
    p = tmp_path / "img.png"
    write_image(np.array([[1.0, 128 / 255, 0.0]]), p)
    back = read_image(p)
    assert back[0, 0] == 1.0
    assert back[0, 1] == pytest.approx(0.50196, abs=1e-5)
    assert back[0, 2] == 0.0


def test_png_mask_roundtrip(tmp_path):
    m = (np.random.default_rng(1).random((9, 11)) > 0.5).astype(np.uint8)
    p = tmp_path / "m.png"
    write_mask(m, p)
    assert np.array_equal(read_mask(p), m)
    assert set(np.unique(read_image(p) * 255).tolist()) <= {0.0, 255.0}


def test_png_rejects_rgb(tmp_path):
    from PIL import Image

    p = tmp_path / "rgb.png"
    Image.new("RGB", (4, 4)).save(p)
    with pytest.raises(RasterIOError, match="single-channel"):
        read_image(p)
