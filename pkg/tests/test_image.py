import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from attnlut.image import PpmError, bilinear_resize, decode_ppm, encode_ppm, read_ppm, write_ppm
from conftest import lattice_image


@pytest.mark.parametrize("maxval", [1, 15, 255, 256, 1023, 65535])
def test_lattice_round_trip_is_exact(tmp_path, rng, maxval):
    img = lattice_image(rng, 5, 7, maxval)
    write_ppm(img, tmp_path / "a.ppm", maxval=maxval)
    back, mv = read_ppm(tmp_path / "a.ppm", return_maxval=True)
    assert mv == maxval
    assert np.array_equal(back, img)


def test_sixteen_bit_is_big_endian():
    img = np.full((1, 1, 3), 258 / 65535)
    data = encode_ppm(img, maxval=65535)
    assert data.endswith(b"\x01\x02" * 3)


def test_encode_rounds_half_up_and_clamps():
    img = np.array([[[0.5 / 255, -0.2, 1.7]]])
    assert encode_ppm(img).endswith(bytes([1, 0, 255]))


def test_header_comments_and_whitespace():
    buf = b"P6\n# made by hand\n2 1 # trailing\n255\n" + bytes([0, 128, 255, 255, 0, 1])
    img = decode_ppm(buf)
    np.testing.assert_array_equal(img[0, 0], [0, 128 / 255, 1])
    assert img.shape == (1, 2, 3)


@pytest.mark.parametrize(
    "buf,fragment",
    [
        (b"P3\n1 1\n255\n0 0 0\n", "unsupported magic"),
        (b"P6\n1 1\n", "truncated header"),
        (b"P6\n1 1\n255\n\x00\x00", "truncated payload"),
        (b"P6\n0 1\n255\n", "invalid dimensions"),
        (b"P6\n1 1\n70000\n" + b"\x00" * 6, "maxval"),
        (b"P6\n1 1\n10\n\x00\x0b\x00", "exceeds maxval"),
        (b"P6\n1 x\n255\n", "unexpected byte"),
    ],
)
def test_malformed_ppm(buf, fragment):
    with pytest.raises(PpmError, match=fragment):
        decode_ppm(buf)


def test_read_error_names_file(tmp_path):
    path = tmp_path / "x.ppm"
    path.write_bytes(b"P5\n1 1\n255\n\x00")
    with pytest.raises(PpmError, match="x.ppm"):
        read_ppm(path)


def test_encode_refuses_nan():
    with pytest.raises(ValueError):
        encode_ppm(np.full((1, 1, 3), np.nan))


# resampling ------------------------------------------------------------------

def test_same_size_is_identity(rng):
    img = rng.uniform(0, 1, (9, 13, 3))
    assert np.array_equal(bilinear_resize(img, 13, 9), img)


@given(st.integers(1, 12), st.integers(1, 12), st.integers(1, 20), st.integers(1, 20), st.floats(0, 1))
def test_constant_images_stay_constant(h, w, oh, ow, v):
    out = bilinear_resize(np.full((h, w, 3), v), ow, oh)
    assert out.shape == (oh, ow, 3)
    assert np.all(out == v)


@given(arrays(np.float64, (5, 6, 3), elements=st.floats(0, 1)), st.integers(1, 17), st.integers(1, 17))
def test_output_stays_within_input_range(img, ow, oh):
    out = bilinear_resize(img, ow, oh)
    assert out.min() >= img.min() - 1e-15
    assert out.max() <= img.max() + 1e-15


def test_exact_halving_averages_pixel_pairs(rng):
    img = rng.uniform(0, 1, (4, 4, 3))
    out = bilinear_resize(img, 2, 2)
    expected = img.reshape(2, 2, 2, 2, 3).mean(axis=(1, 3))
    np.testing.assert_allclose(out, expected, atol=1e-15)


def test_resize_rejects_empty_target():
    with pytest.raises(ValueError):
        bilinear_resize(np.zeros((2, 2, 3)), 0, 2)
