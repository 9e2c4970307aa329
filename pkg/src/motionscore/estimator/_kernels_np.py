"""Pure-numpy kernels for the dense Lucas-Kanade inner loop.

These mirror the compiled kernels in _kernels_cy and are the fallback when
the extension is not built. Box sums use integral images, so windows at the
borders shrink to the in-image footprint, matching the compiled path.
"""

import numpy as np


def warp_bilinear(img: np.ndarray, u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Sample img at (x + u, y + v) with bilinear interpolation.

    Out-of-bounds sample positions clamp to the border.
    """
    h, w = img.shape
    yy, xx = np.meshgrid(
        np.arange(h, dtype=np.float64), np.arange(w, dtype=np.float64), indexing="ij"
    )
    sx = np.clip(xx + u, 0.0, w - 1.0)
    sy = np.clip(yy + v, 0.0, h - 1.0)
    x0 = np.floor(sx).astype(np.intp)
    y0 = np.floor(sy).astype(np.intp)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = sx - x0
    fy = sy - y0
    return (
        img[y0, x0] * (1.0 - fx) * (1.0 - fy)
        + img[y0, x1] * fx * (1.0 - fy)
        + img[y1, x0] * (1.0 - fx) * fy
        + img[y1, x1] * fx * fy
    )


def _box_sum(arr: np.ndarray, radius: int) -> np.ndarray:
    h, w = arr.shape
    acc = np.zeros((h + 1, w + 1), dtype=np.float64)
    np.cumsum(arr, axis=0, out=acc[1:, 1:])
    np.cumsum(acc[1:, 1:], axis=1, out=acc[1:, 1:])
    y0 = np.clip(np.arange(h) - radius, 0, h)
    y1 = np.clip(np.arange(h) + radius + 1, 0, h)
    x0 = np.clip(np.arange(w) - radius, 0, w)
    x1 = np.clip(np.arange(w) + radius + 1, 0, w)
    return (
        acc[np.ix_(y1, x1)]
        - acc[np.ix_(y0, x1)]
        - acc[np.ix_(y1, x0)]
        + acc[np.ix_(y0, x0)]
    )


def box_filter(arr: np.ndarray, radius: int) -> np.ndarray:
    """Mean over (2*radius+1)^2 windows, truncated at the borders."""
    h, w = arr.shape
    counts_y = np.clip(np.arange(h) + radius + 1, 0, h) - np.clip(
        np.arange(h) - radius, 0, h
    )
    counts_x = np.clip(np.arange(w) + radius + 1, 0, w) - np.clip(
        np.arange(w) - radius, 0, w
    )
    counts = counts_y[:, None].astype(np.float64) * counts_x[None, :]
    return _box_sum(arr, radius) / counts


def lk_step(
    ix: np.ndarray,
    iy: np.ndarray,
    it: np.ndarray,
    radius: int,
    min_eigen: float,
):
    """One dense Lucas-Kanade increment from gradient images.

    Solves G d = -b per pixel over (2*radius+1)^2 windows, where
    G = [[sum ix^2, sum ix*iy], [sum ix*iy, sum iy^2]] and
    b = [sum ix*it, sum iy*it]. Pixels whose smaller eigenvalue of G falls
    below min_eigen get a zero increment (aperture problem).
    """
    g11 = _box_sum(ix * ix, radius)
    g12 = _box_sum(ix * iy, radius)
    g22 = _box_sum(iy * iy, radius)
    b1 = _box_sum(ix * it, radius)
    b2 = _box_sum(iy * it, radius)

    half_trace = 0.5 * (g11 + g22)
    half_gap = 0.5 * (g11 - g22)
    lam_min = half_trace - np.sqrt(half_gap * half_gap + g12 * g12)
    det = g11 * g22 - g12 * g12

    solvable = (lam_min >= min_eigen) & (det != 0.0)
    safe_det = np.where(solvable, det, 1.0)
    du = np.where(solvable, -(g22 * b1 - g12 * b2) / safe_det, 0.0)
    dv = np.where(solvable, -(g11 * b2 - g12 * b1) / safe_det, 0.0)
    return du, dv
