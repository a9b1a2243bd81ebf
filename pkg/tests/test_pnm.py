import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from lanesense.pnm import decode_pnm, encode_pnm, read_image, to_u8, write_image


@settings(max_examples=30)
@given(arrays(np.uint8, st.tuples(st.integers(1, 9), st.integers(1, 9), st.just(3))))
def test_ppm_round_trip(img):
    out, maxval = decode_pnm(encode_pnm(img))
    assert maxval == 255
    assert out.dtype == np.uint8 and np.array_equal(out, img)


@settings(max_examples=30)
@given(arrays(np.uint16, st.tuples(st.integers(1, 9), st.integers(1, 9))))
def test_pgm16_round_trip(img):
    out, _ = decode_pnm(encode_pnm(img, maxval=65535))
    assert np.array_equal(out, img)


def test_header_comments_are_skipped():
    buf = b"P5\n# made by hand\n3 2 # width height\n255\n" + bytes(range(6))
    img, maxval = decode_pnm(buf)
    assert maxval == 255
    assert img.tolist() == [[0, 1, 2], [3, 4, 5]]


def test_bad_magic_rejected():
    with pytest.raises(ValueError):
        decode_pnm(b"P3\n1 1\n255\n0 0 0\n")


def test_file_round_trip(tmp_path):
    img = np.arange(24, dtype=np.uint8).reshape(2, 4, 3)
    write_image(tmp_path / "a.ppm", img)
    assert np.array_equal(read_image(tmp_path / "a.ppm"), img)
    gray = img[..., 0]
    write_image(tmp_path / "a.pgm", gray)
    assert np.array_equal(read_image(tmp_path / "a.pgm"), gray)


def test_png_reader(tmp_path):
    PIL = pytest.importorskip("PIL.Image")
    img = np.arange(48, dtype=np.uint8).reshape(4, 4, 3)
    PIL.fromarray(img).save(tmp_path / "a.png")
    assert np.array_equal(read_image(tmp_path / "a.png"), img)


def test_to_u8_range():
    out = to_u8(np.array([[0.0, 0.5, 1.0, np.nan]]))
    assert out.tolist() == [[0, 128, 255, 0]]
    assert to_u8(np.zeros((2, 2))).tolist() == [[0, 0], [0, 0]]
