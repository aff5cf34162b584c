import numpy as np
import pytest

from gradleak.imageio import ImageFormatError, decode, encode, image_read, image_write, quantize

P6_2X2 = b"P6\n# two by two\n2 2\n255\n" + bytes([255, 0, 0, 0, 255, 0, 0, 0, 255, 128, 64, 32])


def test_hand_decoded_p6():
    x = decode(P6_2X2)
    assert x.shape == (3, 2, 2)
    np.testing.assert_array_equal(x[0], [[1.0, 0.0], [0.0, 128 / 255]])
    np.testing.assert_array_equal(x[1], [[0.0, 1.0], [0.0, 64 / 255]])
    np.testing.assert_array_equal(x[2], [[0.0, 0.0], [1.0, 32 / 255]])


def test_p5_decode_and_comments():
    data = b"P5 3 1 # width and height\n255\n" + bytes([0, 51, 255])
    np.testing.assert_array_equal(decode(data), [[[0.0, 0.2, 1.0]]])


@pytest.mark.parametrize("channels", [1, 3])
def test_write_read_identity_on_8bit(channels, tmp_path, rng):
    x = rng.integers(0, 256, (channels, 5, 7)) / 255.0
    path = tmp_path / ("a.pgm" if channels == 1 else "a.ppm")
    image_write(path, x, comment="fixture")
    assert path.read_bytes().startswith(b"P5\n# fixture\n" if channels == 1 else b"P6\n# fixture\n")
    np.testing.assert_array_equal(image_read(path), x)
    np.testing.assert_array_equal(encode(image_read(path)), encode(x))


def test_quantize_rounds_half_away_from_zero():
    vals = np.array([0.5, 1.5, 2.5, 254.5, 254.49]) / 255
    assert quantize(vals).tolist() == [1, 2, 3, 255, 254]
    assert quantize(np.array([-0.2, 1.7])).tolist() == [0, 255]


def test_p5_into_three_channel_shape(tmp_path):
    path = tmp_path / "g.pgm"
    image_write(path, np.zeros((1, 4, 4)))
    with pytest.raises(ImageFormatError, match="expected"):
        image_read(path, (3, 4, 4))


@pytest.mark.parametrize("data", [b"P3\n1 1\n255\n0 0 0", b"P4\n1 1\n\x00", b"BM....",
                                  b"P6\n2 2\n65535\n" + bytes(24), b"P6\n2 2\n255\n" + bytes(5),
                                  b"P6\n2", b"P6\n0 2\n255\n", b"P5\nx 2\n255\n"])
def test_bad_files(data):
    with pytest.raises(ImageFormatError):
        decode(data)


def test_encode_rejects():
    with pytest.raises(ImageFormatError):
        encode(np.zeros((2, 3, 3)))
    with pytest.raises(ImageFormatError):
        encode(np.full((1, 2, 2), np.nan))
