"""Dense optical-flow fields: representation, diagonal normalization,
Middlebury .flo serialization, and color-wheel rendering.

FlowField stores float32 components so that .flo round-trips are bit-exact;
NormalizedFlow promotes to float64 for the downstream reward math.
"""

from __future__ import annotations

import math
import os
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import BadMagic, DimensionMismatch, IoFailure, MissingFile
from .imageio import Image

FLO_MAGIC = 202021.25
_FLO_MAGIC_BYTES = struct.pack("<f", FLO_MAGIC)


@dataclass(frozen=True)
class FlowField:
    """Per-pixel 2-D displacement in pixels; u and v have shape (height, width)."""

    width: int
    height: int
    u: np.ndarray
    v: np.ndarray
    # Set when ingestion had to resample the field to match an image pair.
    resized_from: tuple[int, int] | None = field(default=None, compare=False)

    def __post_init__(self):
        u = np.ascontiguousarray(self.u, dtype=np.float32)
        v = np.ascontiguousarray(self.v, dtype=np.float32)
        if u.shape != (self.height, self.width) or v.shape != (self.height, self.width):
            raise DimensionMismatch(
                f"flow component shapes {u.shape}/{v.shape} do not match "
                f"{self.height}x{self.width}"
            )
        if not (np.isfinite(u).all() and np.isfinite(v).all()):
            raise ValueError("flow components must be finite")
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "v", v)


@dataclass(frozen=True)
class NormalizedFlow:
    """Flow divided by the image diagonal; entries are dimensionless."""

    width: int
    height: int
    u: np.ndarray
    v: np.ndarray
    diag: float

    def __post_init__(self):
        if self.u.shape != (self.height, self.width) or self.v.shape != (
            self.height,
            self.width,
        ):
            raise DimensionMismatch(
                f"flow component shapes {self.u.shape}/{self.v.shape} do not match "
                f"{self.height}x{self.width}"
            )


@dataclass(frozen=True)
class ScalarField:
    """Non-negative per-pixel magnitudes, shape (height, width)."""

    width: int
    height: int
    data: np.ndarray

    def __post_init__(self):
        if self.data.shape != (self.height, self.width):
            raise DimensionMismatch(
                f"data shape {self.data.shape} does not match {self.height}x{self.width}"
            )


def read_flo(path) -> FlowField:
    """Parse a Middlebury .flo file.

    Layout: float32 202021.25 LE, int32 width, int32 height, then H*W
    interleaved (u, v) float32 pairs, row-major.
    """
    if not os.path.isfile(path):
        raise MissingFile(f"no such file: {path}")
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 12:
        raise BadMagic(f"file too short for a .flo header: {path}")
    if raw[:4] != _FLO_MAGIC_BYTES:
        raise BadMagic(
            f"bad .flo magic {struct.unpack('<f', raw[:4])[0]!r}, "
            f"expected {FLO_MAGIC}: {path}"
        )
    width, height = struct.unpack("<ii", raw[4:12])
    if width < 1 or height < 1:
        raise DimensionMismatch(f"invalid .flo dimensions {width}x{height}: {path}")
    expect = 2 * 4 * width * height
    payload = raw[12:]
    if len(payload) != expect:
        raise DimensionMismatch(
            f".flo payload is {len(payload)} bytes, expected {expect} "
            f"for {width}x{height}: {path}"
        )
    pairs = np.frombuffer(payload, dtype="<f4").reshape(height, width, 2)
    return FlowField(width=width, height=height, u=pairs[:, :, 0], v=pairs[:, :, 1])


def write_flo(flow: FlowField, path) -> None:
    """Emit the Middlebury .flo layout; inverse of read_flo bit for bit."""
    pairs = np.stack([flow.u, flow.v], axis=-1).astype("<f4")
    try:
        with open(path, "wb") as fh:
            fh.write(_FLO_MAGIC_BYTES)
            fh.write(struct.pack("<ii", flow.width, flow.height))
            fh.write(pairs.tobytes(order="C"))
    except OSError as exc:
        raise IoFailure(f"cannot write .flo file {path}: {exc}") from exc


def normalize_flow(flow: FlowField) -> NormalizedFlow:
    """Divide both components by the image diagonal sqrt(H^2 + W^2)."""
    diag = math.hypot(flow.height, flow.width)
    return NormalizedFlow(
        width=flow.width,
        height=flow.height,
        u=flow.u.astype(np.float64) / diag,
        v=flow.v.astype(np.float64) / diag,
        diag=diag,
    )


def flow_magnitude(flow: NormalizedFlow) -> ScalarField:
    """Per-pixel Euclidean norm of (u, v)."""
    return ScalarField(
        width=flow.width, height=flow.height, data=np.hypot(flow.u, flow.v)
    )


def flow_to_color(flow: FlowField, robust_percentile: float = 99.0) -> Image:
    """Render a flow field with the usual color-wheel convention.

    Hue encodes atan2(v, u), saturation scales with magnitude against a
    robust maximum (the 99th percentile by default, so single outliers do
    not wash out the rest), and zero flow renders white.
    """
    u = flow.u.astype(np.float64)
    v = flow.v.astype(np.float64)
    mag = np.hypot(u, v)
    robust_max = float(np.percentile(mag, robust_percentile))
    sat = np.clip(mag / robust_max, 0.0, 1.0) if robust_max > 0 else np.zeros_like(mag)
    hue = (np.arctan2(v, u) / (2.0 * np.pi)) % 1.0
    rgb = _hsv_to_rgb(hue, sat, np.ones_like(sat))
    return Image(width=flow.width, height=flow.height, channels=3, data=rgb)


def _hsv_to_rgb(h: np.ndarray, s: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Vectorized HSV -> RGB, all inputs in [0, 1], output (H, W, 3)."""
    i = np.floor(h * 6.0).astype(np.intp) % 6
    f = h * 6.0 - np.floor(h * 6.0)
    p = v * (1.0 - s)
    q = v * (1.0 - f * s)
    t = v * (1.0 - (1.0 - f) * s)
    channels = [
        np.choose(i, [v, q, p, p, t, v]),
        np.choose(i, [t, v, v, q, p, p]),
        np.choose(i, [p, p, t, v, v, q]),
    ]
    return np.stack(channels, axis=-1)
