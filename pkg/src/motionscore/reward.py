"""Motion reward stack and the motion alignment score (MAS).

Both scores compare a predicted motion field (input -> edited) against a
ground-truth motion field (input -> gt) after diagonal normalization. The
reward side combines a robust magnitude distance, a magnitude-weighted
direction distance, and an anti-static hinge into a composite distance that
is normalized, inverted, and quantized into discrete reward levels. The MAS
side blends the magnitude and direction distances only and maps them onto a
0-100 scale with a static-failure override.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch
from .estimator import Estimator
from .flowfield import FlowField, NormalizedFlow, flow_magnitude, normalize_flow
from .imageio import GrayImage, Image, to_grayscale

__all__ = [
    "MasConfig",
    "MasResult",
    "RewardBreakdown",
    "RewardConfig",
    "direction_distance",
    "magnitude_distance",
    "mas_from_flows",
    "mas_score",
    "motion_reward",
    "motion_reward_from_flows",
    "movement_penalty",
    "quantize_reward",
]


def _default_d_max(q, eps, tau_move, alpha, beta_dir, lambda_move):
    # Worst case for diagonal-normalized flows: per-pixel |du|+|dv| <= 2,
    # e_dir <= 1, and mean magnitudes <= 1 in the hinge.
    del eps
    return alpha * 2.0**q + beta_dir * 1.0 + lambda_move * (tau_move + 0.5)


@dataclass(frozen=True)
class RewardConfig:
    """Constants of the composite motion reward.

    d_max defaults to the worst-case composite distance of normalized
    flows, alpha*2^q + beta_dir + lambda_move*(tau_move + 0.5).
    """

    q: float = 0.4
    eps: float = 1e-8
    tau_m: float = 1e-4
    tau_move: float = 0.01
    alpha: float = 0.7
    beta_dir: float = 0.2
    lambda_move: float = 0.1
    d_max: float | None = None
    levels: int = 6

    def __post_init__(self):
        if not 0.0 < self.q < 1.0:
            raise ValueError("q must lie in (0, 1)")
        if not self.eps > 0.0:
            raise ValueError("eps must be > 0")
        if self.alpha < 0 or self.beta_dir < 0 or self.lambda_move < 0:
            raise ValueError("term weights must be >= 0")
        if self.levels < 2:
            raise ValueError("levels must be >= 2")
        if self.d_max is None:
            object.__setattr__(
                self,
                "d_max",
                _default_d_max(
                    self.q,
                    self.eps,
                    self.tau_move,
                    self.alpha,
                    self.beta_dir,
                    self.lambda_move,
                ),
            )
        if not self.d_max > self.d_min_star:
            raise ValueError("d_max must exceed alpha * eps^q")

    @property
    def d_min_star(self) -> float:
        """Composite distance of a duplicated pair (zero flow vs zero flow)."""
        return self.alpha * self.eps**self.q


@dataclass(frozen=True)
class RewardBreakdown:
    d_mag: float
    d_dir: float
    m_move: float
    d_comb: float
    d_min_star: float
    d_tilde: float
    r_cont: float
    r_motion: float


@dataclass(frozen=True)
class MasConfig:
    """Constants of the motion alignment score.

    d_min and d_max default to the reachable extremes of D_ovl under the
    RewardConfig in effect: alpha_mas*eps^q and alpha_mas*2^q + (1-alpha_mas).
    Leave them None to get those values; set them to pin explicit bounds.
    """

    alpha_mas: float = 0.7
    d_min: float | None = None
    d_max: float | None = None
    rho_min: float = 0.01

    def __post_init__(self):
        if not 0.0 < self.rho_min < 1.0:
            raise ValueError("rho_min must lie in (0, 1)")
        if self.d_min is not None and self.d_max is not None:
            if not self.d_max > self.d_min:
                raise ValueError("d_max must exceed d_min")

    def resolve_bounds(self, rcfg: RewardConfig) -> tuple[float, float]:
        d_min = self.d_min
        if d_min is None:
            d_min = self.alpha_mas * rcfg.eps**rcfg.q
        d_max = self.d_max
        if d_max is None:
            d_max = self.alpha_mas * 2.0**rcfg.q + (1.0 - self.alpha_mas)
        if not d_max > d_min:
            raise ValueError("resolved MAS bounds degenerate: d_max <= d_min")
        return d_min, d_max


@dataclass(frozen=True)
class MasResult:
    d_ovl: float
    mas: float
    static_failure: bool


def _check_pair(pred: NormalizedFlow, gt: NormalizedFlow) -> None:
    if (pred.width, pred.height) != (gt.width, gt.height):
        raise DimensionMismatch(
            f"flow pair dimensions differ: {pred.width}x{pred.height} vs "
            f"{gt.width}x{gt.height}"
        )
    if not math.isclose(pred.diag, gt.diag, rel_tol=1e-12, abs_tol=0.0):
        raise DimensionMismatch(
            f"flows normalized by different diagonals: {pred.diag} vs {gt.diag}"
        )


def magnitude_distance(
    pred: NormalizedFlow, gt: NormalizedFlow, cfg: RewardConfig
) -> float:
    """Robust l1 magnitude distance: mean of (|du| + |dv| + eps)^q."""
    _check_pair(pred, gt)
    diff = np.abs(pred.u - gt.u) + np.abs(pred.v - gt.v)
    return float(np.mean((diff + cfg.eps) ** cfg.q))


def direction_distance(
    pred: NormalizedFlow, gt: NormalizedFlow, cfg: RewardConfig
) -> float:
    """Magnitude-weighted cosine direction distance.

    Per pixel, e_dir = (1 - cos angle)/2 between eps-stabilized unit
    vectors; weights are ground-truth magnitudes relative to their max,
    zeroed below tau_m. Near-static ground truth gets distance 0.
    """
    _check_pair(pred, gt)
    m_pred = np.hypot(pred.u, pred.v)
    m_gt = np.hypot(gt.u, gt.v)
    pu = pred.u / (m_pred + cfg.eps)
    pv = pred.v / (m_pred + cfg.eps)
    gu = gt.u / (m_gt + cfg.eps)
    gv = gt.v / (m_gt + cfg.eps)
    e_dir = 0.5 * (1.0 - (pu * gu + pv * gv))
    weights = (m_gt / (np.max(m_gt) + cfg.eps)) * (m_gt > cfg.tau_m)
    return float(np.sum(weights * e_dir) / (np.sum(weights) + cfg.eps))


def movement_penalty(
    pred: NormalizedFlow, gt: NormalizedFlow, cfg: RewardConfig
) -> float:
    """Hinge penalty against static outputs: max(0, tau + mean_gt/2 - mean_pred)."""
    _check_pair(pred, gt)
    mean_pred = float(np.mean(np.hypot(pred.u, pred.v)))
    mean_gt = float(np.mean(np.hypot(gt.u, gt.v)))
    return max(0.0, cfg.tau_move + 0.5 * mean_gt - mean_pred)


def quantize_reward(r_cont: float, levels: int) -> float:
    """Snap to the nearest of `levels` evenly spaced values in [0,1].

    Ties round half away from zero.
    """
    scaled = (levels - 1) * r_cont
    rounded = math.floor(abs(scaled) + 0.5)
    if scaled < 0:
        rounded = -rounded
    return rounded / (levels - 1)


def motion_reward_from_flows(
    pred: FlowField, gt: FlowField, cfg: RewardConfig | None = None
) -> RewardBreakdown:
    """Evaluate the reward stack on already-estimated (unnormalized) flows."""
    cfg = cfg or RewardConfig()
    pred_n = normalize_flow(pred)
    gt_n = normalize_flow(gt)
    d_mag = magnitude_distance(pred_n, gt_n, cfg)
    d_dir = direction_distance(pred_n, gt_n, cfg)
    m_move = movement_penalty(pred_n, gt_n, cfg)
    d_comb = cfg.alpha * d_mag + cfg.beta_dir * d_dir + cfg.lambda_move * m_move
    d_min_star = cfg.d_min_star
    d_tilde = (d_comb - d_min_star) / (cfg.d_max - d_min_star)
    d_tilde = min(1.0, max(0.0, d_tilde))
    r_cont = 1.0 - d_tilde
    r_motion = quantize_reward(r_cont, cfg.levels)
    return RewardBreakdown(
        d_mag=d_mag,
        d_dir=d_dir,
        m_move=m_move,
        d_comb=d_comb,
        d_min_star=d_min_star,
        d_tilde=d_tilde,
        r_cont=r_cont,
        r_motion=r_motion,
    )


def mas_from_flows(
    pred: FlowField,
    gt: FlowField,
    mcfg: MasConfig | None = None,
    rcfg: RewardConfig | None = None,
) -> MasResult:
    """Evaluate MAS on already-estimated (unnormalized) flows."""
    mcfg = mcfg or MasConfig()
    rcfg = rcfg or RewardConfig()
    pred_n = normalize_flow(pred)
    gt_n = normalize_flow(gt)
    d_mag = magnitude_distance(pred_n, gt_n, rcfg)
    d_dir = direction_distance(pred_n, gt_n, rcfg)
    d_ovl = mcfg.alpha_mas * d_mag + (1.0 - mcfg.alpha_mas) * d_dir
    d_min, d_max = mcfg.resolve_bounds(rcfg)
    clipped = min(1.0, max(0.0, (d_ovl - d_min) / (d_max - d_min)))
    mas = 100.0 * (1.0 - clipped)
    mean_pred = float(np.mean(flow_magnitude(pred_n).data))
    mean_gt = float(np.mean(flow_magnitude(gt_n).data))
    # Truly static ground truth cannot meaningfully fail the ratio test.
    static = mean_gt > rcfg.eps and (mean_pred / mean_gt) < mcfg.rho_min
    if static:
        mas = 0.0
    return MasResult(d_ovl=d_ovl, mas=mas, static_failure=static)


def _as_gray(img: Image | GrayImage) -> GrayImage:
    if isinstance(img, GrayImage):
        return img
    return to_grayscale(img)


def _triplet_flows(
    orig: Image | GrayImage,
    edited: Image | GrayImage,
    gt: Image | GrayImage,
    est: Estimator,
    key: str | None,
) -> tuple[FlowField, FlowField]:
    g_orig = _as_gray(orig)
    g_edited = _as_gray(edited)
    g_gt = _as_gray(gt)
    pred_key = f"{key}__pred" if key is not None else None
    gt_key = f"{key}__gt" if key is not None else None
    v_pred = est.estimate_flow(g_orig, g_edited, key=pred_key)
    v_gt = est.estimate_flow(g_orig, g_gt, key=gt_key)
    return v_pred, v_gt


def motion_reward(
    orig: Image | GrayImage,
    edited: Image | GrayImage,
    gt: Image | GrayImage,
    est: Estimator,
    cfg: RewardConfig | None = None,
    key: str | None = None,
) -> RewardBreakdown:
    """Score an edit triplet: flows via est, then the composite reward.

    key names the triplet for estimators that look flows up instead of
    computing them (resolved as <key>__pred / <key>__gt).
    """
    v_pred, v_gt = _triplet_flows(orig, edited, gt, est, key)
    return motion_reward_from_flows(v_pred, v_gt, cfg)


def mas_score(
    orig: Image | GrayImage,
    edited: Image | GrayImage,
    gt: Image | GrayImage,
    est: Estimator,
    mcfg: MasConfig | None = None,
    rcfg: RewardConfig | None = None,
    key: str | None = None,
) -> MasResult:
    """Motion alignment score of an edit triplet on the 0-100 scale."""
    v_pred, v_gt = _triplet_flows(orig, edited, gt, est, key)
    return mas_from_flows(v_pred, v_gt, mcfg, rcfg)
