"""Flow estimators behind one interface.

LucasKanadeEstimator is the self-contained default: coarse-to-fine pyramidal
Lucas-Kanade with iterative warping. PrecomputedEstimator ingests .flo files
produced by an external estimator, keyed by entry id. ZeroEstimator returns
the zero field and exists for baselines and tests.
"""

from __future__ import annotations

import abc
import os
from dataclasses import dataclass

import numpy as np

from ..errors import DimensionMismatch, UnresolvedPrecomputedFlow
from ..flowfield import FlowField, read_flo
from ..imageio import GrayImage, Pyramid, build_pyramid, resize_bilinear
from . import _backend
from ._backend import BACKEND

__all__ = [
    "BACKEND",
    "Estimator",
    "EstimatorConfig",
    "LucasKanadeEstimator",
    "PrecomputedEstimator",
    "ZeroEstimator",
    "estimate_flow",
    "lk_solve_window",
    "warp_image",
]


@dataclass(frozen=True)
class EstimatorConfig:
    """Pyramidal Lucas-Kanade parameters.

    window_radius is the half-width, so the default 7 means 15x15 windows.
    min_eigen rejects windows whose structure tensor is near-singular
    (aperture problem); those pixels keep the flow propagated from the
    coarser level.
    """

    pyramid_levels: int = 4
    window_radius: int = 7
    iterations_per_level: int = 5
    min_eigen: float = 1e-6

    def __post_init__(self):
        if self.pyramid_levels < 1:
            raise ValueError("pyramid_levels must be >= 1")
        if self.window_radius < 1:
            raise ValueError("window_radius must be >= 1")
        if self.iterations_per_level < 1:
            raise ValueError("iterations_per_level must be >= 1")
        if not self.min_eigen > 0:
            raise ValueError("min_eigen must be > 0")


class Estimator(abc.ABC):
    """Produces a dense FlowField mapping pixels of image a into image b."""

    name: str = "estimator"

    @abc.abstractmethod
    def estimate_flow(
        self, a: GrayImage, b: GrayImage, key: str | None = None
    ) -> FlowField:
        """Estimate flow for the pair (a, b).

        key identifies the pair for estimators that look flows up rather
        than compute them; computing estimators ignore it.
        """

    def _check_pair(self, a: GrayImage, b: GrayImage) -> None:
        if (a.width, a.height) != (b.width, b.height):
            raise DimensionMismatch(
                f"image pair dimensions differ: {a.width}x{a.height} vs "
                f"{b.width}x{b.height}"
            )


class ZeroEstimator(Estimator):
    name = "zero"

    def estimate_flow(self, a, b, key=None) -> FlowField:
        self._check_pair(a, b)
        zeros = np.zeros((a.height, a.width), dtype=np.float32)
        return FlowField(width=a.width, height=a.height, u=zeros, v=zeros.copy())


class LucasKanadeEstimator(Estimator):
    name = "lucas-kanade"

    def __init__(self, config: EstimatorConfig | None = None):
        self.config = config or EstimatorConfig()

    def estimate_flow(self, a, b, key=None) -> FlowField:
        self._check_pair(a, b)
        cfg = self.config
        pyr_a = build_pyramid(a, cfg.pyramid_levels)
        pyr_b = build_pyramid(b, cfg.pyramid_levels)
        u = v = None
        for level_a, level_b in zip(reversed(pyr_a.levels), reversed(pyr_b.levels)):
            ia = np.ascontiguousarray(level_a.data, dtype=np.float64)
            ib = np.ascontiguousarray(level_b.data, dtype=np.float64)
            h, w = ia.shape
            if u is None:
                u = np.zeros((h, w), dtype=np.float64)
                v = np.zeros((h, w), dtype=np.float64)
            else:
                u = np.ascontiguousarray(resize_bilinear(u, w, h) * 2.0)
                v = np.ascontiguousarray(resize_bilinear(v, w, h) * 2.0)
            if h < 2 or w < 2:
                continue
            for _ in range(cfg.iterations_per_level):
                # Warp with the window-mean flow: LK already models the flow
                # as constant per window, and warping with the raw per-pixel
                # field feeds each window's noise into its neighbours'
                # residuals, which destabilises the fixed point.
                u = _backend.box_filter(u, cfg.window_radius)
                v = _backend.box_filter(v, cfg.window_radius)
                warped = _backend.warp_bilinear(ib, u, v)
                base = 0.5 * (ia + warped)
                ix = _grad_x(base)
                iy = _grad_y(base)
                it = warped - ia
                du, dv = _backend.lk_step(
                    ix, iy, it, cfg.window_radius, cfg.min_eigen
                )
                u += du
                v += dv
        return FlowField(
            width=a.width,
            height=a.height,
            u=u.astype(np.float32),
            v=v.astype(np.float32),
        )


class PrecomputedEstimator(Estimator):
    """Resolves flows from <directory>/<key>.flo files.

    Callers pass key="<entry_id>__pred" or "<entry_id>__gt". Fields whose
    declared resolution differs from the image pair are bilinearly resized
    (components rescaled by the axis ratios) and flagged via resized_from.
    """

    name = "precomputed"

    def __init__(self, directory):
        self.directory = str(directory)

    def estimate_flow(self, a, b, key=None) -> FlowField:
        self._check_pair(a, b)
        if key is None:
            raise UnresolvedPrecomputedFlow(
                "precomputed estimator needs a pair key (<entry_id>__pred or __gt)"
            )
        path = os.path.join(self.directory, f"{key}.flo")
        if not os.path.isfile(path):
            raise UnresolvedPrecomputedFlow(f"no precomputed flow for {key!r}: {path}")
        flow = read_flo(path)
        if (flow.width, flow.height) == (a.width, a.height):
            return flow
        scale_x = a.width / flow.width
        scale_y = a.height / flow.height
        u = resize_bilinear(flow.u.astype(np.float64), a.width, a.height) * scale_x
        v = resize_bilinear(flow.v.astype(np.float64), a.width, a.height) * scale_y
        return FlowField(
            width=a.width,
            height=a.height,
            u=u.astype(np.float32),
            v=v.astype(np.float32),
            resized_from=(flow.width, flow.height),
        )


def estimate_flow(
    est: Estimator, a: GrayImage, b: GrayImage, key: str | None = None
) -> FlowField:
    return est.estimate_flow(a, b, key=key)


def warp_image(img: GrayImage, flow: FlowField) -> GrayImage:
    """Sample img at (x + u, y + v) with bilinear interpolation and border clamp."""
    if (img.width, img.height) != (flow.width, flow.height):
        raise DimensionMismatch(
            f"image {img.width}x{img.height} vs flow {flow.width}x{flow.height}"
        )
    warped = _backend.warp_bilinear(
        np.ascontiguousarray(img.data, dtype=np.float64),
        np.ascontiguousarray(flow.u, dtype=np.float64),
        np.ascontiguousarray(flow.v, dtype=np.float64),
    )
    return GrayImage(width=img.width, height=img.height, data=warped)


def lk_solve_window(ix, iy, it, min_eigen: float):
    """Solve the Lucas-Kanade normal equations for one window.

    Returns (du, dv), or None when the smaller eigenvalue of the structure
    tensor falls below min_eigen and the system is considered unsolvable.
    """
    ix = np.asarray(ix, dtype=np.float64)
    iy = np.asarray(iy, dtype=np.float64)
    it = np.asarray(it, dtype=np.float64)
    if not (ix.shape == iy.shape == it.shape):
        raise DimensionMismatch(
            f"window patches must share a footprint: {ix.shape}, {iy.shape}, {it.shape}"
        )
    g11 = float(np.sum(ix * ix))
    g12 = float(np.sum(ix * iy))
    g22 = float(np.sum(iy * iy))
    half_trace = 0.5 * (g11 + g22)
    half_gap = 0.5 * (g11 - g22)
    lam_min = half_trace - np.hypot(half_gap, g12)
    if lam_min < min_eigen:
        return None
    b1 = float(np.sum(ix * it))
    b2 = float(np.sum(iy * it))
    det = g11 * g22 - g12 * g12
    du = -(g22 * b1 - g12 * b2) / det
    dv = -(g11 * b2 - g12 * b1) / det
    return du, dv


def _grad_x(f: np.ndarray) -> np.ndarray:
    # Central differences; borders replicate, so edge derivatives are halved.
    g = np.empty_like(f)
    g[:, 1:-1] = 0.5 * (f[:, 2:] - f[:, :-2])
    g[:, 0] = 0.5 * (f[:, 1] - f[:, 0])
    g[:, -1] = 0.5 * (f[:, -1] - f[:, -2])
    return g


def _grad_y(f: np.ndarray) -> np.ndarray:
    g = np.empty_like(f)
    g[1:-1, :] = 0.5 * (f[2:, :] - f[:-2, :])
    g[0, :] = 0.5 * (f[1, :] - f[0, :])
    g[-1, :] = 0.5 * (f[-1, :] - f[-2, :])
    return g
