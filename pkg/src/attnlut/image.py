"""Binary PPM (P6) codec and the half-pixel bilinear resampler.

Images are ``H x W x 3`` float arrays with values in ``[0, 1]``.
"""
from __future__ import annotations

import os

import numpy as np


class PpmError(ValueError):
    """Malformed or unsupported PPM data."""


def as_image(pixels) -> np.ndarray:
    """Validate an ``H x W x 3`` image array (float64 unless already floating)."""
    arr = np.asarray(pixels)
    if not np.issubdtype(arr.dtype, np.floating):
        arr = arr.astype(np.float64)
    if arr.ndim != 3 or arr.shape[2] != 3 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValueError(f"expected an H x W x 3 image, got shape {arr.shape}")
    return arr


def _read_header(buf: bytes):
    """Return (width, height, maxval, payload offset)."""
    if len(buf) < 2:
        raise PpmError("truncated header")
    magic = buf[:2]
    if magic != b"P6":
        raise PpmError(f"unsupported magic {magic.decode('latin-1')!r} (only binary P6 is supported)")
    pos = 2
    fields = []
    while len(fields) < 3:
        # whitespace and '#' comments may separate header tokens
        while pos < len(buf) and buf[pos:pos + 1] in b" \t\r\n\v\f":
            pos += 1
        if pos < len(buf) and buf[pos:pos + 1] == b"#":
            while pos < len(buf) and buf[pos:pos + 1] not in b"\r\n":
                pos += 1
            continue
        start = pos
        while pos < len(buf) and buf[pos:pos + 1].isdigit():
            pos += 1
        if start == pos:
            if pos >= len(buf):
                raise PpmError("truncated header")
            raise PpmError(f"unexpected byte {buf[pos:pos + 1]!r} in header at offset {pos}")
        fields.append(int(buf[start:pos]))
    if pos >= len(buf) or buf[pos:pos + 1] not in b" \t\r\n\v\f":
        raise PpmError("header must end with a single whitespace byte")
    width, height, maxval = fields
    if width < 1 or height < 1:
        raise PpmError(f"invalid dimensions {width}x{height}")
    if not 1 <= maxval <= 65535:
        raise PpmError(f"maxval {maxval} outside 1..65535")
    return width, height, maxval, pos + 1


def decode_ppm(buf: bytes, return_maxval: bool = False):
    width, height, maxval, offset = _read_header(buf)
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    count = width * height * 3
    need = count * dtype.itemsize
    if len(buf) - offset < need:
        raise PpmError(f"truncated payload: expected {need} bytes, found {len(buf) - offset}")
    samples = np.frombuffer(buf, dtype=dtype, count=count, offset=offset)
    if samples.max(initial=0) > maxval:
        raise PpmError(f"sample value exceeds maxval {maxval}")
    image = samples.reshape(height, width, 3).astype(np.float64) / maxval
    return (image, maxval) if return_maxval else image


def encode_ppm(image, maxval: int = 255) -> bytes:
    img = as_image(image)
    if not 1 <= maxval <= 65535:
        raise PpmError(f"maxval {maxval} outside 1..65535")
    if not np.all(np.isfinite(img)):
        raise ValueError("cannot encode non-finite pixel values")
    q = np.clip(np.floor(img.astype(np.float64) * maxval + 0.5), 0, maxval)
    dtype = ">u2" if maxval > 255 else "u1"
    h, w, _ = img.shape
    return f"P6\n{w} {h}\n{maxval}\n".encode("ascii") + q.astype(dtype).tobytes()


def read_ppm(path, return_maxval: bool = False):
    """Load a binary PPM; sample values map to ``v / maxval`` exactly.

    With ``return_maxval=True`` the result is ``(image, maxval)``.
    """
    with open(path, "rb") as fh:
        data = fh.read()
    try:
        return decode_ppm(data, return_maxval)
    except PpmError as exc:
        raise PpmError(f"{os.fspath(path)}: {exc}") from None


def write_ppm(image, path, maxval: int = 255) -> None:
    """Write ``round(v * maxval)`` samples (clamped), big-endian when 16-bit."""
    data = encode_ppm(image, maxval)
    with open(path, "wb") as fh:
        fh.write(data)


def _sample_axis(out_len: int, in_len: int):
    pos = (np.arange(out_len, dtype=np.float64) + 0.5) * (in_len / out_len) - 0.5
    pos = np.clip(pos, 0.0, in_len - 1)
    lo = np.floor(pos).astype(np.intp)
    hi = np.minimum(lo + 1, in_len - 1)
    return lo, hi, pos - lo


def bilinear_resize(image, out_w: int, out_h: int) -> np.ndarray:
    """Resample with pixel-center alignment (``align_corners=False``)."""
    img = as_image(image)
    if out_w < 1 or out_h < 1:
        raise ValueError(f"output size must be positive, got {out_w}x{out_h}")
    h, w, _ = img.shape
    y0, y1, fy = _sample_axis(out_h, h)
    x0, x1, fx = _sample_axis(out_w, w)
    fy = fy.astype(img.dtype)[:, None, None]
    fx = fx.astype(img.dtype)[None, :, None]
    # lerp form keeps constants and on-center samples exact
    top = img[y0][:, x0] + fx * (img[y0][:, x1] - img[y0][:, x0])
    bottom = img[y1][:, x0] + fx * (img[y1][:, x1] - img[y1][:, x0])
    return top + fy * (bottom - top)
