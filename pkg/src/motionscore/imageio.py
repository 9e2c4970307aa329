"""Image loading, luminance conversion, and multi-resolution pyramids.

Images are carried as float arrays with samples in [0, 1]. Binary PPM (P6)
and PGM (P5) are parsed directly; PNG goes through Pillow. Pyramids use a
2x2 box filter with 2:1 decimation, which is the downsampling the
coarse-to-fine flow estimator expects.
"""

from __future__ import annotations

import io
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import CorruptData, EmptyImage, MissingFile, UnsupportedFormat

# Rec.601 luma weights.
_LUMA_R, _LUMA_G, _LUMA_B = 0.299, 0.587, 0.114

# Smallest pyramid level the estimator can still work with.
MIN_PYRAMID_SIZE = 8


@dataclass(frozen=True)
class Image:
    """A raster image: data has shape (height, width, channels), samples in [0, 1]."""

    width: int
    height: int
    channels: int
    data: np.ndarray

    def __post_init__(self):
        if self.channels not in (1, 3):
            raise ValueError(f"channels must be 1 or 3, got {self.channels}")
        if self.data.shape != (self.height, self.width, self.channels):
            raise ValueError(
                f"data shape {self.data.shape} does not match "
                f"{self.height}x{self.width}x{self.channels}"
            )


@dataclass(frozen=True)
class GrayImage:
    """Single-channel luminance image: data has shape (height, width), samples in [0, 1]."""

    width: int
    height: int
    data: np.ndarray

    def __post_init__(self):
        if self.data.shape != (self.height, self.width):
            raise ValueError(
                f"data shape {self.data.shape} does not match {self.height}x{self.width}"
            )


@dataclass(frozen=True)
class Pyramid:
    """Coarse-to-fine image stack; levels[0] is full resolution."""

    levels: list[GrayImage]
    scale_factor: float = field(default=0.5)


_PNG_MAGIC = b"\x89PNG\r\n\x1a\n"
_OTHER_KNOWN_MAGICS = (b"\xff\xd8", b"GIF8", b"BM", b"II*\x00", b"MM\x00*", b"RIFF")


def load_image(path) -> Image:
    """Load an 8-bit PNG, PPM (P6), or PGM (P5) file.

    Samples are mapped v/255 into [0, 1]; the channel count of the file is
    preserved (1 for grayscale, 3 for RGB).
    """
    if not os.path.isfile(path):
        raise MissingFile(f"no such file: {path}")
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw.startswith(_PNG_MAGIC):
        return _decode_png(raw, path)
    if raw[:2] in (b"P5", b"P6"):
        return _decode_pnm(raw, path)
    if raw[:2] in (b"P1", b"P2", b"P3", b"P4", b"P7") or any(
        raw.startswith(m) for m in _OTHER_KNOWN_MAGICS
    ):
        raise UnsupportedFormat(f"unsupported image format: {path}")
    raise CorruptData(f"unrecognized or headerless image data: {path}")


def _decode_png(raw: bytes, path) -> Image:
    from PIL import Image as PILImage
    from PIL import UnidentifiedImageError

    try:
        pil = PILImage.open(io.BytesIO(raw))
        pil.load()
    except UnidentifiedImageError as exc:
        raise CorruptData(f"truncated or invalid PNG: {path}") from exc
    except OSError as exc:
        raise CorruptData(f"truncated or invalid PNG: {path}") from exc
    if pil.mode in ("I", "I;16", "I;16B", "F"):
        raise UnsupportedFormat(f"only 8-bit PNG is supported: {path}")
    if pil.mode in ("L", "1"):
        arr = np.asarray(pil.convert("L"), dtype=np.float64)[:, :, None]
    else:
        arr = np.asarray(pil.convert("RGB"), dtype=np.float64)
    h, w, c = arr.shape
    return Image(width=w, height=h, channels=c, data=arr / 255.0)


def _decode_pnm(raw: bytes, path) -> Image:
    channels = 1 if raw[:2] == b"P5" else 3
    pos = 2
    fields = []
    while len(fields) < 3:
        while pos < len(raw) and raw[pos : pos + 1].isspace():
            pos += 1
        if pos < len(raw) and raw[pos : pos + 1] == b"#":
            while pos < len(raw) and raw[pos] != 0x0A:
                pos += 1
            continue
        start = pos
        while pos < len(raw) and not raw[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise CorruptData(f"truncated PNM header: {path}")
        token = raw[start:pos]
        if not token.isdigit():
            raise CorruptData(f"malformed PNM header token {token!r}: {path}")
        fields.append(int(token))
    if pos >= len(raw):
        raise CorruptData(f"PNM header not followed by payload: {path}")
    pos += 1  # single whitespace byte after maxval
    width, height, maxval = fields
    if maxval != 255:
        raise UnsupportedFormat(f"only 8-bit PNM is supported (maxval={maxval}): {path}")
    if width < 1 or height < 1:
        raise CorruptData(f"non-positive PNM dimensions {width}x{height}: {path}")
    need = width * height * channels
    payload = raw[pos : pos + need]
    if len(payload) < need:
        raise CorruptData(
            f"truncated PNM payload ({len(payload)} of {need} bytes): {path}"
        )
    arr = np.frombuffer(payload, dtype=np.uint8).astype(np.float64)
    arr = arr.reshape(height, width, channels) / 255.0
    return Image(width=width, height=height, channels=channels, data=arr)


def save_image(img: Image | GrayImage, path) -> None:
    """Write an image as PGM/PPM (by channel count) or PNG (by extension)."""
    if isinstance(img, GrayImage):
        img = Image(img.width, img.height, 1, img.data[:, :, None])
    ext = os.path.splitext(str(path))[1].lower()
    quantized = np.clip(np.rint(img.data * 255.0), 0, 255).astype(np.uint8)
    if ext == ".png":
        from PIL import Image as PILImage

        mode = "L" if img.channels == 1 else "RGB"
        PILImage.fromarray(quantized.squeeze(-1) if img.channels == 1 else quantized, mode).save(
            path, format="PNG"
        )
        return
    magic = b"P5" if img.channels == 1 else b"P6"
    header = magic + f"\n{img.width} {img.height}\n255\n".encode("ascii")
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(quantized.tobytes())


def to_grayscale(img: Image | GrayImage) -> GrayImage:
    """Convert to luminance with Rec.601 weights; single-channel input is copied."""
    if isinstance(img, GrayImage):
        return GrayImage(img.width, img.height, img.data.copy())
    if img.channels == 1:
        return GrayImage(img.width, img.height, img.data[:, :, 0].copy())
    gray = (
        _LUMA_R * img.data[:, :, 0]
        + _LUMA_G * img.data[:, :, 1]
        + _LUMA_B * img.data[:, :, 2]
    )
    return GrayImage(img.width, img.height, gray)


def _halve(arr: np.ndarray) -> np.ndarray:
    # 2x2 box filter + 2:1 decimation as two separable pair averages.
    # Odd trailing row/column keeps its 1-wide footprint.
    h, w = arr.shape
    if h % 2:
        arr = np.concatenate([(arr[0:-1:2] + arr[1::2]) * 0.5, arr[-1:]], axis=0)
    else:
        arr = (arr[0::2] + arr[1::2]) * 0.5
    if w % 2:
        arr = np.concatenate([(arr[:, 0:-1:2] + arr[:, 1::2]) * 0.5, arr[:, -1:]], axis=1)
    else:
        arr = (arr[:, 0::2] + arr[:, 1::2]) * 0.5
    return arr


def build_pyramid(img: GrayImage, max_levels: int) -> Pyramid:
    """Build a coarse-to-fine pyramid by repeated 2x2 box downsampling.

    Stops before max_levels when the next level would fall below
    MIN_PYRAMID_SIZE in either dimension. Level 0 is the input unchanged.
    """
    if max_levels < 1:
        raise ValueError(f"max_levels must be >= 1, got {max_levels}")
    if img.width == 0 or img.height == 0:
        raise EmptyImage(f"cannot build pyramid from {img.width}x{img.height} image")
    levels = [img]
    current = img.data
    while len(levels) < max_levels:
        next_w = (current.shape[1] + 1) // 2
        next_h = (current.shape[0] + 1) // 2
        if next_w < MIN_PYRAMID_SIZE or next_h < MIN_PYRAMID_SIZE:
            break
        current = _halve(current)
        levels.append(GrayImage(width=current.shape[1], height=current.shape[0], data=current))
    return Pyramid(levels=levels)


def resize_bilinear(arr: np.ndarray, new_w: int, new_h: int) -> np.ndarray:
    """Bilinear resample of a 2-D array to (new_h, new_w), edges clamped."""
    h, w = arr.shape
    if (h, w) == (new_h, new_w):
        return arr.copy()
    # Align corners when the output has >1 sample per axis, else sample center.
    ys = np.linspace(0.0, h - 1.0, new_h) if new_h > 1 else np.array([(h - 1) / 2.0])
    xs = np.linspace(0.0, w - 1.0, new_w) if new_w > 1 else np.array([(w - 1) / 2.0])
    y0 = np.floor(ys).astype(np.intp)
    x0 = np.floor(xs).astype(np.intp)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    fy = (ys - y0)[:, None]
    fx = (xs - x0)[None, :]
    top = arr[np.ix_(y0, x0)] * (1 - fx) + arr[np.ix_(y0, x1)] * fx
    bot = arr[np.ix_(y1, x0)] * (1 - fx) + arr[np.ix_(y1, x1)] * fx
    return top * (1 - fy) + bot * fy
