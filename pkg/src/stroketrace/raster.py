"""Pixel grids, PGM/PNG input, PGM output, and the median prefilter.

PGM is the bit-exact interchange format (P2 and P5 read, P5 written).
PNG is supported read-only as a convenience; color input is reduced to
luma with round(0.299 R + 0.587 G + 0.114 B).
"""
from __future__ import annotations

import os
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.ndimage

__all__ = [
    "GrayImage",
    "BinaryImage",
    "ImageFormatError",
    "load_image",
    "save_image",
    "median_filter_5x5",
]

_WHITESPACE = b" \t\r\n\x0b\x0c"


class ImageFormatError(Exception):
    """Unreadable, malformed, or unsupported image data."""


def _check_grid(values: np.ndarray, what: str) -> None:
    if values.ndim != 2:
        raise ValueError(f"{what} must be a 2-D grid, got shape {values.shape}")
    if values.shape[0] == 0 or values.shape[1] == 0:
        raise ValueError(f"{what} has a zero dimension: {values.shape}")


@dataclass(frozen=True)
class GrayImage:
    """8-bit grayscale image; ``pixels`` is a (height, width) uint8 array."""

    pixels: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.pixels)
        _check_grid(p, "GrayImage.pixels")
        if p.dtype != np.uint8:
            if not np.issubdtype(p.dtype, np.integer):
                raise ValueError("intensities must be integers")
            if p.size and (p.min() < 0 or p.max() > 255):
                raise ValueError("intensities must lie in [0, 255]")
            p = p.astype(np.uint8)
        object.__setattr__(self, "pixels", p)

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]


@dataclass(frozen=True)
class BinaryImage:
    """Thresholded image; ``mask`` is a (height, width) bool array, True = ink."""

    mask: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.mask)
        _check_grid(m, "BinaryImage.mask")
        if m.dtype != bool:
            m = m.astype(bool)
        object.__setattr__(self, "mask", m)

    @property
    def width(self) -> int:
        return self.mask.shape[1]

    @property
    def height(self) -> int:
        return self.mask.shape[0]

    @property
    def foreground_count(self) -> int:
        return int(np.count_nonzero(self.mask))


def _pgm_tokens(data: bytes, start: int, count: int) -> tuple[list[int], int]:
    """Read ``count`` whitespace-separated integer tokens, honoring # comments."""
    tokens: list[bytes] = []
    pos = start
    while len(tokens) < count:
        if pos >= len(data):
            raise ImageFormatError("truncated PGM header")
        c = data[pos]
        if c in _WHITESPACE:
            pos += 1
            continue
        if c == ord("#"):
            nl = data.find(b"\n", pos)
            if nl < 0:
                raise ImageFormatError("unterminated PGM comment")
            pos = nl + 1
            continue
        end = pos
        while end < len(data) and data[end] not in _WHITESPACE and data[end] != ord("#"):
            end += 1
        tokens.append(data[pos:end])
        pos = end
    try:
        return [int(t) for t in tokens], pos
    except ValueError as exc:
        raise ImageFormatError(f"non-numeric PGM token: {exc}") from exc


def _rescale_to_255(values: np.ndarray, maxval: int) -> np.ndarray:
    if maxval == 255:
        return values.astype(np.uint8)
    scaled = np.floor(values.astype(np.float64) * 255.0 / maxval + 0.5)
    return scaled.astype(np.uint8)


def _read_pgm(data: bytes) -> GrayImage:
    magic = data[:2]
    (width, height, maxval), pos = _pgm_tokens(data, 2, 3)
    if width < 1 or height < 1:
        raise ImageFormatError(f"zero-dimension image: {width}x{height}")
    if not 1 <= maxval <= 65535:
        raise ImageFormatError(f"PGM maxval out of range: {maxval}")
    n = width * height
    if magic == b"P2":
        tokens, _ = _pgm_tokens(data, pos, n)
        values = np.array(tokens, dtype=np.int64)
    else:
        if pos >= len(data) or data[pos] not in _WHITESPACE:
            raise ImageFormatError("missing whitespace before PGM raster data")
        raw = data[pos + 1 :]
        if maxval < 256:
            if len(raw) < n:
                raise ImageFormatError("truncated PGM raster data")
            values = np.frombuffer(raw[:n], dtype=np.uint8).astype(np.int64)
        else:
            if len(raw) < 2 * n:
                raise ImageFormatError("truncated PGM raster data")
            values = np.frombuffer(raw[: 2 * n], dtype=">u2").astype(np.int64)
    if values.max(initial=0) > maxval:
        raise ImageFormatError("PGM sample exceeds declared maxval")
    grid = _rescale_to_255(values, maxval).reshape(height, width)
    return GrayImage(grid)


def _read_png(path: Path) -> GrayImage:
    from PIL import Image

    with Image.open(path) as im:
        if im.mode == "L":
            grid = np.asarray(im, dtype=np.uint8)
        elif im.mode in ("1", "P", "LA", "RGB", "RGBA"):
            rgb = np.asarray(im.convert("RGB"), dtype=np.float64)
            luma = 0.299 * rgb[..., 0] + 0.587 * rgb[..., 1] + 0.114 * rgb[..., 2]
            grid = np.floor(luma + 0.5).astype(np.uint8)
        else:
            raise ImageFormatError(f"unsupported PNG mode {im.mode!r}")
    if grid.ndim != 2 or 0 in grid.shape:
        raise ImageFormatError("zero-dimension image")
    return GrayImage(grid)


def load_image(path: str | Path) -> GrayImage:
    """Load a PGM (P2/P5) or PNG file as a grayscale image.

    PGM samples with maxval != 255 are rescaled by round(v * 255 / maxval).
    """
    path = Path(path)
    data = path.read_bytes()
    if data[:2] in (b"P2", b"P5"):
        return _read_pgm(data)
    if data[:8] == b"\x89PNG\r\n\x1a\n":
        return _read_png(path)
    raise ImageFormatError(f"unsupported image format in {path}")


def _atomic_write(path: Path, payload: bytes) -> None:
    fd, tmp = tempfile.mkstemp(dir=str(path.parent), prefix=path.name + ".")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save_image(img: GrayImage | BinaryImage, path: str | Path) -> None:
    """Write a binary PGM (P5, maxval 255).

    Binary masks are rendered ink-dark: foreground 0, background 255.
    The file is written to a temp name and renamed, so a failed write
    never leaves a partial file behind.
    """
    path = Path(path)
    if isinstance(img, BinaryImage):
        grid = np.where(img.mask, 0, 255).astype(np.uint8)
    else:
        grid = img.pixels
    header = f"P5\n{grid.shape[1]} {grid.shape[0]}\n255\n".encode("ascii")
    _atomic_write(path, header + grid.tobytes())


def median_filter_5x5(img: GrayImage) -> GrayImage:
    """Median-filter with a 5x5 window to knock out scanner speckle.

    Borders are handled by clamping coordinates to the image (replicate
    padding); the output value is the 13th order statistic of the 25
    samples, i.e. the exact median.
    """
    filtered = scipy.ndimage.median_filter(img.pixels, size=5, mode="nearest")
    return GrayImage(filtered)
