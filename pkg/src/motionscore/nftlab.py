"""Toy 2-D flow-matching lab for the negative-aware finetuning objective.

Everything here is desk scale on purpose: a small hand-differentiated MLP
velocity model, Euler ODE sampling, the optimality-reward transform, group
filtering, and the NFT loss with its implicit positive/negative policies.
The point is to verify the training math end to end, not to train anything
of consequence.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateGroup, NonFiniteLoss

__all__ = [
    "FmSchedule",
    "NftConfig",
    "RoundStats",
    "SampleGroup",
    "ToyFlowModel",
    "TrainReport",
    "fm_pretrain",
    "group_filter",
    "implicit_velocities",
    "mode_target_reward",
    "nft_loss",
    "optimality_reward",
    "rewarded_mode_fraction",
    "sample_ode",
    "train_nft",
    "two_mode_data",
]

_PARAM_KEYS = ("w1", "b1", "w2", "b2", "w3", "b3")


class FmSchedule:
    """Rectified interpolation path: alpha_t = 1 - t, sigma_t = t.

    z_t = (1-t) x0 + t eps, and the regression target is the constant
    velocity eps - x0 along the path.
    """

    @staticmethod
    def alpha(t):
        return 1.0 - t

    @staticmethod
    def sigma(t):
        return t

    @staticmethod
    def interpolate(x0, noise, t):
        t = np.asarray(t, dtype=np.float64).reshape(-1, 1)
        return (1.0 - t) * x0 + t * noise

    @staticmethod
    def target(x0, noise):
        return noise - x0


class ToyFlowModel:
    """Two-hidden-layer tanh MLP velocity field v(x, t, c) -> R^2.

    Input is the 2-D point, the scalar time, and a conditioning scalar.
    Parameters live in a dict of arrays; v_old holds a frozen copy taken
    at the start of each finetuning round.
    """

    input_dim = 4
    output_dim = 2

    def __init__(self, width: int = 32, rng: np.random.Generator | None = None):
        if width < 1:
            raise ValueError("width must be >= 1")
        rng = rng or np.random.default_rng(0)
        self.width = width
        self.params = {
            "w1": rng.standard_normal((width, self.input_dim)) / np.sqrt(self.input_dim),
            "b1": np.zeros(width),
            "w2": rng.standard_normal((width, width)) / np.sqrt(width),
            "b2": np.zeros(width),
            "w3": rng.standard_normal((self.output_dim, width)) / np.sqrt(width),
            "b3": np.zeros(self.output_dim),
        }
        self.v_old = self.clone_params()

    # -- parameter plumbing ------------------------------------------------

    def clone_params(self) -> dict:
        return {k: v.copy() for k, v in self.params.items()}

    def snapshot_old(self) -> None:
        """Freeze the current parameters as the round's old policy."""
        self.v_old = self.clone_params()

    def params_vector(self) -> np.ndarray:
        return np.concatenate([self.params[k].ravel() for k in _PARAM_KEYS])

    def set_params_vector(self, vec: np.ndarray) -> None:
        offset = 0
        for k in _PARAM_KEYS:
            size = self.params[k].size
            self.params[k] = vec[offset : offset + size].reshape(self.params[k].shape).copy()
            offset += size
        if offset != vec.size:
            raise ValueError("parameter vector length mismatch")

    @property
    def n_params(self) -> int:
        return sum(p.size for p in self.params.values())

    # -- forward / backward ------------------------------------------------

    @staticmethod
    def _stack_input(x, t, c):
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        n = x.shape[0]
        t = np.broadcast_to(np.asarray(t, dtype=np.float64), (n,))
        c = np.broadcast_to(np.asarray(c, dtype=np.float64), (n,))
        return np.column_stack([x[:, 0], x[:, 1], t, c])

    def _forward(self, params, inp):
        a1 = inp @ params["w1"].T + params["b1"]
        h1 = np.tanh(a1)
        a2 = h1 @ params["w2"].T + params["b2"]
        h2 = np.tanh(a2)
        out = h2 @ params["w3"].T + params["b3"]
        return out, (inp, h1, h2)

    def velocity(self, x, t, c=0.0, params=None) -> np.ndarray:
        """Evaluate v(x, t, c) for a batch of points (or a single one)."""
        use = self.params if params is None else params
        single = np.asarray(x).ndim == 1
        out, _ = self._forward(use, self._stack_input(x, t, c))
        return out[0] if single else out

    def velocity_old(self, x, t, c=0.0) -> np.ndarray:
        return self.velocity(x, t, c, params=self.v_old)

    def _backward(self, params, cache, d_out):
        inp, h1, h2 = cache
        grads = {}
        grads["w3"] = d_out.T @ h2
        grads["b3"] = d_out.sum(axis=0)
        dh2 = d_out @ params["w3"]
        da2 = dh2 * (1.0 - h2 * h2)
        grads["w2"] = da2.T @ h1
        grads["b2"] = da2.sum(axis=0)
        dh1 = da2 @ params["w2"]
        da1 = dh1 * (1.0 - h1 * h1)
        grads["w1"] = da1.T @ inp
        grads["b1"] = da1.sum(axis=0)
        return grads


@dataclass
class SampleGroup:
    """One conditioning's worth of samples and their rewards."""

    conditioning: float
    samples: np.ndarray  # (G, 2)
    raw_rewards: np.ndarray  # (G,)
    opt_rewards: np.ndarray | None = None  # filled by the optimality transform


@dataclass(frozen=True)
class NftConfig:
    beta_mix: float = 1.0
    kl_weight: float = 1e-4
    group_size: int = 8
    groups: int = 24
    ode_steps: int = 6
    ban_mean: float = 0.9
    ban_std: float = 0.05
    learning_rate: float = 0.01
    rounds: int = 20
    descent_steps: int = 10

    def __post_init__(self):
        if not self.beta_mix > 0:
            raise ValueError("beta_mix must be > 0")
        if self.ban_std < 0:
            raise ValueError("ban_std must be >= 0")
        if not 0.0 <= self.ban_mean <= 1.0:
            raise ValueError("ban_mean must lie in [0, 1]")
        if self.group_size < 2:
            raise ValueError("group_size must be >= 2 for normalization")
        if self.groups < 1 or self.ode_steps < 1 or self.rounds < 0:
            raise ValueError("groups, ode_steps >= 1 and rounds >= 0 required")
        if self.descent_steps < 1:
            raise ValueError("descent_steps must be >= 1")


@dataclass(frozen=True)
class RoundStats:
    round_index: int
    mean_raw_reward: float
    kept_groups: int
    loss: float
    skipped: bool = False


@dataclass(frozen=True)
class TrainReport:
    seed: int
    rounds: tuple[RoundStats, ...]
    skipped_rounds: int
    final_mean_raw_reward: float


def fm_pretrain(
    data: np.ndarray,
    schedule: FmSchedule | None = None,
    steps: int = 2000,
    model: ToyFlowModel | None = None,
    batch_size: int = 64,
    learning_rate: float = 0.02,
    seed: int = 0,
) -> ToyFlowModel:
    """Train the velocity model on the flow-matching regression objective.

    Plain SGD on minibatches of (x0, eps, t); returns the model with v_old
    snapshotted at the trained parameters. steps=0 leaves the model at its
    initialization.
    """
    data = np.atleast_2d(np.asarray(data, dtype=np.float64))
    if data.size == 0:
        raise ValueError("pretraining data must be nonempty")
    schedule = schedule or FmSchedule()
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence((seed, 0))))
    model = model or ToyFlowModel(rng=rng)
    for _ in range(steps):
        idx = rng.integers(0, data.shape[0], size=batch_size)
        x0 = data[idx]
        noise = rng.standard_normal(x0.shape)
        t = rng.random(x0.shape[0])
        z_t = schedule.interpolate(x0, noise, t)
        target = schedule.target(x0, noise)
        inp = model._stack_input(z_t, t, 0.0)
        out, cache = model._forward(model.params, inp)
        diff = out - target
        loss = float(np.mean(np.sum(diff * diff, axis=1)))
        if not np.isfinite(loss):
            raise NonFiniteLoss(f"flow-matching loss diverged: {loss}")
        d_out = 2.0 * diff / x0.shape[0]
        grads = model._backward(model.params, cache, d_out)
        for k in _PARAM_KEYS:
            model.params[k] -= learning_rate * grads[k]
    model.snapshot_old()
    return model


def sample_ode(model: ToyFlowModel, c, ode_steps: int, noise_source) -> np.ndarray:
    """Draw one sample by Euler-integrating dz = v(z, t, c) dt from t=1 to 0.

    noise_source is either a numpy Generator (z1 is drawn from it) or an
    explicit z1 array, which makes the call fully deterministic.
    """
    if ode_steps < 1:
        raise ValueError("ode_steps must be >= 1")
    if isinstance(noise_source, np.ndarray):
        z1 = np.asarray(noise_source, dtype=np.float64)
    else:
        z1 = noise_source.standard_normal(2)
    single = z1.ndim == 1
    z = np.atleast_2d(z1).astype(np.float64, copy=True)
    dt = 1.0 / ode_steps
    for k in range(ode_steps):
        t = 1.0 - k * dt
        z -= dt * model.velocity(z, t, c)
    return z[0] if single else z


def optimality_reward(raw_rewards: np.ndarray, z_c: float) -> np.ndarray:
    """Map a group's raw rewards into [0,1] around the group mean.

    r = 1/2 + 1/2 clip((raw - mean)/z_c, -1, 1) with z_c the step-global
    reward standard deviation (caller-floored at 1e-6).
    """
    raw = np.asarray(raw_rewards, dtype=np.float64)
    if raw.size < 2:
        raise DegenerateGroup(
            f"group of {raw.size} cannot be mean-normalized; need >= 2"
        )
    if not z_c > 0:
        raise ValueError("z_c must be > 0")
    centered = (raw - raw.mean()) / z_c
    return 0.5 + 0.5 * np.clip(centered, -1.0, 1.0)


def implicit_velocities(v_old_val, v_theta_val, beta_mix: float):
    """Positive/negative policy velocities implied by mixing old and current."""
    v_old_val = np.asarray(v_old_val, dtype=np.float64)
    v_theta_val = np.asarray(v_theta_val, dtype=np.float64)
    if v_old_val.shape != v_theta_val.shape:
        raise ValueError(
            f"velocity shapes differ: {v_old_val.shape} vs {v_theta_val.shape}"
        )
    v_plus = (1.0 - beta_mix) * v_old_val + beta_mix * v_theta_val
    v_minus = (1.0 + beta_mix) * v_old_val - beta_mix * v_theta_val
    return v_plus, v_minus


def nft_loss(
    x_t: np.ndarray,
    t: np.ndarray,
    c: np.ndarray,
    target_v: np.ndarray,
    rewards: np.ndarray,
    model: ToyFlowModel,
    beta_mix: float,
    kl_weight: float,
):
    """NFT objective value and analytic parameter gradients.

    L = mean[r |v+ - v|^2 + (1-r) |v- - v|^2] + kl_weight mean|v_theta - v_old|^2
    with v+ and v- the implicit policies from implicit_velocities. Gradients
    flow through v_theta only; v_old is the frozen snapshot.
    """
    x_t = np.atleast_2d(np.asarray(x_t, dtype=np.float64))
    n = x_t.shape[0]
    t = np.broadcast_to(np.asarray(t, dtype=np.float64), (n,))
    c = np.broadcast_to(np.asarray(c, dtype=np.float64), (n,))
    target_v = np.atleast_2d(np.asarray(target_v, dtype=np.float64))
    rewards = np.asarray(rewards, dtype=np.float64).reshape(n, 1)
    if np.any(rewards < 0.0) or np.any(rewards > 1.0):
        raise ValueError("rewards must lie in [0, 1]")

    inp = model._stack_input(x_t, t, c)
    v_theta, cache = model._forward(model.params, inp)
    v_old_val, _ = model._forward(model.v_old, inp)
    v_plus, v_minus = implicit_velocities(v_old_val, v_theta, beta_mix)

    plus_err = v_plus - target_v
    minus_err = v_minus - target_v
    drift = v_theta - v_old_val
    loss = float(
        np.mean(
            np.sum(rewards * plus_err**2 + (1.0 - rewards) * minus_err**2, axis=1)
        )
        + kl_weight * np.mean(np.sum(drift * drift, axis=1))
    )
    if not np.isfinite(loss):
        raise NonFiniteLoss(f"NFT loss diverged: {loss}")

    d_v_theta = (
        rewards * 2.0 * plus_err * beta_mix
        + (1.0 - rewards) * 2.0 * minus_err * (-beta_mix)
        + kl_weight * 2.0 * drift
    ) / n
    grads = model._backward(model.params, cache, d_v_theta)
    return loss, grads


def group_filter(groups, ban_mean: float, ban_std: float):
    """Drop groups whose raw rewards carry no learning signal."""
    kept = []
    for group in groups:
        raw = np.asarray(group.raw_rewards, dtype=np.float64)
        if raw.mean() >= ban_mean or raw.std() <= ban_std:
            continue
        kept.append(group)
    return kept


def _group_rng(seed: int, round_index: int, group_index: int) -> np.random.Generator:
    return np.random.Generator(
        np.random.Philox(np.random.SeedSequence((seed, round_index, 2, group_index)))
    )


def _round_rng(seed: int, round_index: int) -> np.random.Generator:
    return np.random.Generator(
        np.random.Philox(np.random.SeedSequence((seed, round_index, 1)))
    )


def train_nft(
    model: ToyFlowModel,
    reward_fn,
    cfg: NftConfig | None = None,
    seed: int = 0,
) -> TrainReport:
    """Run negative-aware finetuning rounds against a raw reward function.

    Per round: freeze v_old, sample groups from it by ODE integration,
    score, transform to optimality rewards with the step-global deviation,
    filter degenerate groups, re-noise the kept samples, and descend on the
    NFT loss. Rounds where every group is filtered are recorded and skipped.
    """
    cfg = cfg or NftConfig()
    schedule = FmSchedule()
    stats = []
    skipped = 0
    mean_raw = 0.0
    for round_index in range(cfg.rounds):
        model.snapshot_old()
        groups = []
        for group_index in range(cfg.groups):
            rng = _group_rng(seed, round_index, group_index)
            noise = rng.standard_normal((cfg.group_size, 2))
            # v_old was snapshotted above, so sampling through the live
            # parameters is sampling from the old policy.
            samples = sample_ode(model, 0.0, cfg.ode_steps, noise)
            raw = np.array([float(reward_fn(s)) for s in samples])
            groups.append(
                SampleGroup(conditioning=0.0, samples=samples, raw_rewards=raw)
            )
        all_raw = np.concatenate([g.raw_rewards for g in groups])
        mean_raw = float(all_raw.mean())
        z_c = max(float(all_raw.std()), 1e-6)
        for group in groups:
            group.opt_rewards = optimality_reward(group.raw_rewards, z_c)
        kept = group_filter(groups, cfg.ban_mean, cfg.ban_std)
        if not kept:
            # AllGroupsFiltered is a recorded condition, not a fatal one:
            # the round is skipped and the parameters stay put.
            stats.append(
                RoundStats(
                    round_index=round_index,
                    mean_raw_reward=mean_raw,
                    kept_groups=0,
                    loss=float("nan"),
                    skipped=True,
                )
            )
            skipped += 1
            continue
        x0 = np.concatenate([g.samples for g in kept])
        rewards = np.concatenate([g.opt_rewards for g in kept])
        cond = np.concatenate(
            [np.full(len(g.samples), g.conditioning) for g in kept]
        )
        rng = _round_rng(seed, round_index)
        noise = rng.standard_normal(x0.shape)
        t = rng.random(x0.shape[0])
        x_t = schedule.interpolate(x0, noise, t)
        target_v = schedule.target(x0, noise)
        loss = float("nan")
        for _ in range(cfg.descent_steps):
            loss, grads = nft_loss(
                x_t, t, cond, target_v, rewards, model, cfg.beta_mix, cfg.kl_weight
            )
            for k in _PARAM_KEYS:
                model.params[k] -= cfg.learning_rate * grads[k]
        stats.append(
            RoundStats(
                round_index=round_index,
                mean_raw_reward=mean_raw,
                kept_groups=len(kept),
                loss=loss,
            )
        )
    return TrainReport(
        seed=seed,
        rounds=tuple(stats),
        skipped_rounds=skipped,
        final_mean_raw_reward=mean_raw,
    )


def two_mode_data(
    n: int = 800,
    separation: float = 2.0,
    spread: float = 0.3,
    seed: int = 0,
) -> np.ndarray:
    """Balanced 2-D mixture with modes at (+separation, 0) and (-separation, 0)."""
    rng = np.random.default_rng(seed)
    half = n // 2
    right = np.array([separation, 0.0]) + spread * rng.standard_normal((half, 2))
    left = np.array([-separation, 0.0]) + spread * rng.standard_normal((n - half, 2))
    return np.concatenate([right, left])


def mode_target_reward(
    sample: np.ndarray,
    center: tuple[float, float] = (2.0, 0.0),
    radius: float = 1.0,
) -> float:
    """Binary reward: 1.0 inside the ball around the rewarded mode."""
    dx = float(sample[0]) - center[0]
    dy = float(sample[1]) - center[1]
    return 1.0 if dx * dx + dy * dy <= radius * radius else 0.0


def rewarded_mode_fraction(
    model: ToyFlowModel,
    n: int = 1000,
    ode_steps: int = 6,
    seed: int = 0,
    center: tuple[float, float] = (2.0, 0.0),
    radius: float = 1.0,
) -> float:
    """Fraction of fresh model samples landing in the rewarded mode.

    The evaluation noise stream is decoupled from the training streams so
    the measurement never perturbs training reproducibility.
    """
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence((seed, 999))))
    noise = rng.standard_normal((n, 2))
    samples = sample_ode(model, 0.0, ode_steps, noise)
    hits = [mode_target_reward(s, center=center, radius=radius) for s in samples]
    return float(np.mean(hits))
