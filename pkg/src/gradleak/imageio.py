"""Binary netpbm images: P6 (RGB) and P5 (grayscale), 8-bit only.

Pixels map to ``[0, 1]`` as ``value / 255``. Writing quantizes with
round-half-away-from-zero after clipping to range. Tensors are channel-first.
"""

import re

import numpy as np

from .errors import GradleakError

MAXVAL = 255
_MAGIC_CHANNELS = {b"P5": 1, b"P6": 3}


class ImageFormatError(GradleakError, ValueError):
    pass


_TOKEN = re.compile(rb"(?:\s|#[^\n]*\n?)*(\S+)")


def _header(data):
    """Parse magic, width, height, maxval; return them with the pixel offset."""
    tokens = []
    pos = 0
    while len(tokens) < 4:
        m = _TOKEN.match(data, pos)
        if m is None:
            raise ImageFormatError("truncated netpbm header")
        tokens.append(m.group(1))
        pos = m.end()
        if len(tokens) == 1 and tokens[0] not in _MAGIC_CHANNELS:
            raise ImageFormatError(f"unsupported magic number {tokens[0][:2]!r} (need P5 or P6)")
    if pos >= len(data) or not data[pos:pos + 1].isspace():
        raise ImageFormatError("missing whitespace after netpbm header")
    try:
        width, height, maxval = (int(t) for t in tokens[1:])
    except ValueError:
        raise ImageFormatError("non-integer field in netpbm header") from None
    if width < 1 or height < 1:
        raise ImageFormatError(f"bad image size {width}x{height}")
    if maxval != MAXVAL:
        raise ImageFormatError(f"only 8-bit images (maxval 255) are supported, got {maxval}")
    return tokens[0], width, height, pos + 1


def decode(data):
    data = bytes(data)
    magic, width, height, offset = _header(data)
    channels = _MAGIC_CHANNELS[magic]
    n = width * height * channels
    pixels = np.frombuffer(data, dtype=np.uint8, count=-1, offset=offset)
    if pixels.size < n:
        raise ImageFormatError(f"expected {n} pixel bytes, found {pixels.size}")
    arr = pixels[:n].reshape(height, width, channels).transpose(2, 0, 1)
    return arr.astype(np.float64) / MAXVAL


def quantize(x):
    """Map ``[0, 1]`` floats to uint8, rounding halves away from zero."""
    scaled = np.clip(np.asarray(x, dtype=np.float64), 0.0, 1.0) * MAXVAL
    return np.floor(scaled + 0.5).astype(np.uint8)


def encode(x, comment=None):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 3 or x.shape[0] not in (1, 3):
        raise ImageFormatError(f"need a (1|3, H, W) tensor, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ImageFormatError("image contains non-finite values")
    c, h, w = x.shape
    header = b"P5\n" if c == 1 else b"P6\n"
    if comment:
        header += b"".join(b"# " + line.encode() + b"\n" for line in comment.splitlines())
    header += f"{w} {h}\n{MAXVAL}\n".encode()
    return header + quantize(x).transpose(1, 2, 0).tobytes()


def image_read(path, shape=None):
    """Read a P5/P6 file; ``shape`` (C, H, W) is checked if given."""
    with open(path, "rb") as fh:
        x = decode(fh.read())
    if shape is not None and tuple(x.shape) != tuple(shape):
        raise ImageFormatError(f"{path}: image is {x.shape}, expected {tuple(shape)}")
    return x


def image_write(path, x, comment=None):
    data = encode(x, comment)
    with open(path, "wb") as fh:
        fh.write(data)
