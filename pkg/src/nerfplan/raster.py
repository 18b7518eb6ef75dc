"""8-bit raster images and masks with binary PPM/PGM I/O.

Images are RGB (PPM, P6) or grayscale (PGM, P5) with maxval 255. Masks
are PGM files whose pixels are strictly 0 (background) or 255 (object).
Pixel data is held in read-only numpy arrays so instances are safe to
share between scoring threads.
"""

from __future__ import annotations

import os
import tempfile
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class RasterImage:
    """Row-major 8-bit raster; data shape is (h, w) or (h, w, 3)."""

    width: int
    height: int
    channels: int
    data: np.ndarray

    def __post_init__(self) -> None:
        if self.channels not in (1, 3):
            raise ValueError(f"channels must be 1 or 3, got {self.channels}")
        expected = (self.height, self.width) if self.channels == 1 else (self.height, self.width, 3)
        if self.data.shape != expected or self.data.dtype != np.uint8:
            raise ValueError(
                f"data must be uint8 with shape {expected}, got {self.data.dtype} {self.data.shape}"
            )
        self.data.flags.writeable = False

    @classmethod
    def from_array(cls, arr: np.ndarray) -> "RasterImage":
        arr = np.ascontiguousarray(arr, dtype=np.uint8)
        if arr.ndim == 2:
            h, w = arr.shape
            return cls(width=w, height=h, channels=1, data=arr)
        if arr.ndim == 3 and arr.shape[2] == 3:
            h, w, _ = arr.shape
            return cls(width=w, height=h, channels=3, data=arr)
        raise ValueError(f"unsupported array shape {arr.shape}")

    def luma(self) -> np.ndarray:
        """Grayscale view as float64 using ITU weights 0.299/0.587/0.114."""
        if self.channels == 1:
            return self.data.astype(np.float64)
        rgb = self.data.astype(np.float64)
        return 0.299 * rgb[..., 0] + 0.587 * rgb[..., 1] + 0.114 * rgb[..., 2]


@dataclass(frozen=True)
class ObjectMask:
    """Binary object mask tied to one (image, object) pair."""

    object_id: str
    image_id: str
    width: int
    height: int
    data: np.ndarray

    def __post_init__(self) -> None:
        if self.data.shape != (self.height, self.width) or self.data.dtype != np.uint8:
            raise ValueError(
                f"mask data must be uint8 with shape {(self.height, self.width)}, "
                f"got {self.data.dtype} {self.data.shape}"
            )
        bad = np.setdiff1d(np.unique(self.data), [0, 255])
        if bad.size:
            raise ValueError(f"mask pixels must be 0 or 255, found values {bad.tolist()}")
        self.data.flags.writeable = False

    def object_pixels(self) -> np.ndarray:
        return self.data == 255

    def bounding_box(self) -> "tuple[int, int, int, int] | None":
        """Tight bbox (x0, y0, x1, y1), exclusive upper bounds; None if empty."""
        on = self.object_pixels()
        rows = np.flatnonzero(on.any(axis=1))
        cols = np.flatnonzero(on.any(axis=0))
        if rows.size == 0:
            return None
        return int(cols[0]), int(rows[0]), int(cols[-1]) + 1, int(rows[-1]) + 1


# ---------------------------------------------------------------------------
# PNM parsing
# ---------------------------------------------------------------------------

def _parse_pnm(raw: bytes, path: str) -> np.ndarray:
    if raw[:2] not in (b"P5", b"P6"):
        raise ValueError(f"{path}: not a binary PGM/PPM file (magic {raw[:2]!r})")
    channels = 1 if raw[:2] == b"P5" else 3

    # Header: magic, width, height, maxval as whitespace-separated tokens,
    # with '#' comments running to end of line.
    tokens: list[int] = []
    pos = 2
    while len(tokens) < 3:
        if pos >= len(raw):
            raise ValueError(f"{path}: truncated header")
        c = raw[pos:pos + 1]
        if c == b"#":
            eol = raw.find(b"\n", pos)
            pos = len(raw) if eol < 0 else eol + 1
        elif c.isspace():
            pos += 1
        else:
            end = pos
            while end < len(raw) and not raw[end:end + 1].isspace() and raw[end:end + 1] != b"#":
                end += 1
            tokens.append(int(raw[pos:end]))
            pos = end
    pos += 1  # single whitespace byte after maxval

    width, height, maxval = tokens
    if maxval != 255:
        raise ValueError(f"{path}: only maxval 255 supported, got {maxval}")
    count = width * height * channels
    pixels = np.frombuffer(raw, dtype=np.uint8, count=count, offset=pos)
    if pixels.size != count:
        raise ValueError(f"{path}: expected {count} pixel bytes, got {pixels.size}")
    shape = (height, width) if channels == 1 else (height, width, 3)
    return pixels.reshape(shape).copy()


def read_image(path: str) -> RasterImage:
    with open(path, "rb") as f:
        return RasterImage.from_array(_parse_pnm(f.read(), path))


def read_mask(path: str, object_id: str, image_id: str) -> ObjectMask:
    arr = _parse_pnm(open(path, "rb").read(), path)
    if arr.ndim != 2:
        raise ValueError(f"{path}: masks must be grayscale PGM")
    h, w = arr.shape
    return ObjectMask(object_id=object_id, image_id=image_id, width=w, height=h, data=arr)


def write_image(path: str, image: RasterImage) -> None:
    magic = b"P5" if image.channels == 1 else b"P6"
    header = magic + b"\n%d %d\n255\n" % (image.width, image.height)
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix="~")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(header)
            f.write(image.data.tobytes())
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


# ---------------------------------------------------------------------------
# Resampling
# ---------------------------------------------------------------------------

def bilinear_resize(arr: np.ndarray, out_w: int, out_h: int) -> np.ndarray:
    """Bilinear resample with pixel-center alignment; returns uint8.

    Accepts (h, w) or (h, w, c) uint8 input.
    """
    if out_w < 1 or out_h < 1:
        raise ValueError(f"output dims must be >= 1, got {out_w}x{out_h}")
    in_h, in_w = arr.shape[:2]
    src = arr.astype(np.float64)

    def axis_coords(out_n: int, in_n: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        coords = (np.arange(out_n, dtype=np.float64) + 0.5) * (in_n / out_n) - 0.5
        coords = np.clip(coords, 0.0, in_n - 1.0)
        lo = np.floor(coords).astype(np.intp)
        lo = np.minimum(lo, in_n - 1)
        hi = np.minimum(lo + 1, in_n - 1)
        frac = coords - lo
        return lo, hi, frac

    x0, x1, fx = axis_coords(out_w, in_w)
    y0, y1, fy = axis_coords(out_h, in_h)
    if arr.ndim == 3:
        fx = fx[None, :, None]
        fy = fy[:, None, None]
    else:
        fx = fx[None, :]
        fy = fy[:, None]

    top = src[y0][:, x0] * (1.0 - fx) + src[y0][:, x1] * fx
    bot = src[y1][:, x0] * (1.0 - fx) + src[y1][:, x1] * fx
    out = top * (1.0 - fy) + bot * fy
    return np.clip(np.floor(out + 0.5), 0, 255).astype(np.uint8)
