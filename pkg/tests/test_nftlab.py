import numpy as np
import pytest

from motionscore.errors import DegenerateGroup, NonFiniteLoss
from motionscore.nftlab import (
    FmSchedule,
    NftConfig,
    SampleGroup,
    ToyFlowModel,
    fm_pretrain,
    group_filter,
    implicit_velocities,
    mode_target_reward,
    nft_loss,
    optimality_reward,
    rewarded_mode_fraction,
    sample_ode,
    train_nft,
    two_mode_data,
)


def test_schedule_boundaries(rng):
    x0 = rng.standard_normal((5, 2))
    noise = rng.standard_normal((5, 2))
    sched = FmSchedule()
    np.testing.assert_array_equal(sched.interpolate(x0, noise, np.zeros(5)), x0)
    np.testing.assert_array_equal(sched.interpolate(x0, noise, np.ones(5)), noise)
    np.testing.assert_array_equal(sched.target(x0, noise), noise - x0)
    t = rng.random(5)
    z = sched.interpolate(x0, noise, t)
    np.testing.assert_allclose(
        z, (1 - t)[:, None] * x0 + t[:, None] * noise, atol=1e-15
    )


def test_model_param_vector_round_trip(rng):
    model = ToyFlowModel(width=5, rng=rng)
    vec = model.params_vector()
    assert vec.size == model.n_params
    model2 = ToyFlowModel(width=5, rng=np.random.default_rng(999))
    model2.set_params_vector(vec)
    np.testing.assert_array_equal(model2.params_vector(), vec)
    with pytest.raises(ValueError):
        model2.set_params_vector(vec[:-1])


def test_model_velocity_single_vs_batch(rng):
    model = ToyFlowModel(width=4, rng=rng)
    x = rng.standard_normal((3, 2))
    batch = model.velocity(x, 0.5, 0.0)
    singles = np.stack([model.velocity(x[i], 0.5, 0.0) for i in range(3)])
    # BLAS may reduce matmuls in a different order for 1-row and n-row
    # inputs, so agreement is to rounding, not bitwise.
    np.testing.assert_allclose(batch, singles, rtol=1e-12, atol=1e-15)
    assert model.velocity(x[0], 0.5).shape == (2,)


def test_model_velocity_old_uses_snapshot(rng):
    model = ToyFlowModel(width=4, rng=rng)
    x = rng.standard_normal(2)
    before = model.velocity(x, 0.3)
    model.snapshot_old()
    model.params["b3"] += 1.0
    np.testing.assert_array_equal(model.velocity_old(x, 0.3), before)
    assert not np.array_equal(model.velocity(x, 0.3), before)


def test_optimality_reward_properties(rng):
    raw = rng.random(16)
    z_c = max(float(np.concatenate([raw]).std()), 1e-6)
    r = optimality_reward(raw, z_c)
    assert np.all(r >= 0.0) and np.all(r <= 1.0)
    # Symmetric group maps symmetrically around 0.5.
    sym = np.array([1.0, 3.0])
    r_sym = optimality_reward(sym, 1.0)
    np.testing.assert_allclose(r_sym, [0.0, 1.0], atol=1e-15)
    # Constant group sits at 0.5 regardless of z_c.
    np.testing.assert_array_equal(optimality_reward(np.full(4, 0.7), 1e-6), 0.5)


def test_optimality_reward_three_point_example():
    raw = np.array([0.0, 0.5, 1.0])
    z_c = float(raw.std())
    np.testing.assert_allclose(
        optimality_reward(raw, z_c), [0.0, 0.5, 1.0], atol=1e-12
    )


def test_optimality_reward_errors():
    with pytest.raises(DegenerateGroup):
        optimality_reward(np.array([1.0]), 1.0)
    with pytest.raises(ValueError):
        optimality_reward(np.array([0.0, 1.0]), 0.0)


def test_implicit_velocities_midpoint_identity(rng):
    v_old = rng.standard_normal((7, 2))
    v_theta = rng.standard_normal((7, 2))
    for beta in (0.25, 1.0, 1.7):
        v_plus, v_minus = implicit_velocities(v_old, v_theta, beta)
        # The identity is algebraic; each mixed term carries one rounding,
        # so the midpoint matches v_old to a couple of ulps.
        np.testing.assert_allclose(0.5 * (v_plus + v_minus), v_old, atol=1e-13)
    v_plus, v_minus = implicit_velocities(v_old, v_theta, 1.0)
    np.testing.assert_array_equal(v_plus, v_theta)
    np.testing.assert_allclose(v_minus, 2.0 * v_old - v_theta, atol=1e-15)
    with pytest.raises(ValueError):
        implicit_velocities(v_old, v_theta[:3], 1.0)


def test_nft_loss_at_old_params_independent_of_rewards(rng):
    model = ToyFlowModel(width=6, rng=rng)
    model.snapshot_old()
    x_t = rng.standard_normal((10, 2))
    t = rng.random(10)
    c = np.zeros(10)
    target = rng.standard_normal((10, 2))
    loss_a, _ = nft_loss(x_t, t, c, target, np.zeros(10), model, 1.0, 0.0)
    loss_b, _ = nft_loss(x_t, t, c, target, np.ones(10), model, 1.0, 0.0)
    loss_c, _ = nft_loss(x_t, t, c, target, np.full(10, 0.31), model, 1.0, 0.0)
    assert loss_a == loss_b == loss_c


def test_nft_loss_rejects_out_of_range_rewards(rng):
    model = ToyFlowModel(width=3, rng=rng)
    x = rng.standard_normal((4, 2))
    with pytest.raises(ValueError):
        nft_loss(x, 0.5, 0.0, x, np.array([0.0, 1.1, 0.5, 0.5]), model, 1.0, 0.0)


def test_nft_loss_gradient_finite_difference(rng):
    model = ToyFlowModel(width=3, rng=rng)
    model.snapshot_old()
    model.params["w2"] += 0.05 * rng.standard_normal(model.params["w2"].shape)
    x_t = rng.standard_normal((6, 2))
    t = rng.random(6)
    c = np.zeros(6)
    target = rng.standard_normal((6, 2))
    rewards = rng.random(6)
    beta, kl = 0.8, 1e-3

    _, grads = nft_loss(x_t, t, c, target, rewards, model, beta, kl)
    flat = np.concatenate([grads[k].ravel() for k in ("w1", "b1", "w2", "b2", "w3", "b3")])

    vec = model.params_vector()
    h = 1e-6
    num = np.empty_like(vec)
    for i in range(vec.size):
        bump = vec.copy()
        bump[i] += h
        model.set_params_vector(bump)
        lp, _ = nft_loss(x_t, t, c, target, rewards, model, beta, kl)
        bump[i] -= 2 * h
        model.set_params_vector(bump)
        lm, _ = nft_loss(x_t, t, c, target, rewards, model, beta, kl)
        num[i] = (lp - lm) / (2 * h)
    model.set_params_vector(vec)
    denom = np.maximum(np.abs(num), 1e-8)
    assert float(np.max(np.abs(flat - num) / denom)) < 1e-4


def test_group_filter_rules():
    def grp(raw):
        raw = np.asarray(raw, dtype=np.float64)
        return SampleGroup(conditioning=0.0, samples=np.zeros((raw.size, 2)), raw_rewards=raw)

    saturated = grp([1.0, 0.9, 0.95, 0.85])  # mean 0.925 >= 0.9
    flat = grp([0.5, 0.5, 0.52, 0.5])  # std 0.0087 <= 0.05
    useful = grp([0.1, 0.9, 0.4, 0.6])
    kept = group_filter([saturated, flat, useful], ban_mean=0.9, ban_std=0.05)
    assert kept == [useful]


def test_fm_pretrain_learns_and_is_deterministic():
    data = two_mode_data(seed=4)
    m1 = fm_pretrain(data, steps=300, seed=4)
    m2 = fm_pretrain(data, steps=300, seed=4)
    np.testing.assert_array_equal(m1.params_vector(), m2.params_vector())
    # Training moved the parameters and snapshotted them.
    fresh = ToyFlowModel(
        rng=np.random.Generator(np.random.Philox(np.random.SeedSequence((4, 0))))
    )
    assert not np.array_equal(m1.params_vector(), fresh.params_vector())
    np.testing.assert_array_equal(
        m1.params_vector(),
        np.concatenate([m1.v_old[k].ravel() for k in ("w1", "b1", "w2", "b2", "w3", "b3")]),
    )


@pytest.mark.filterwarnings("ignore:overflow:RuntimeWarning")
@pytest.mark.filterwarnings("ignore:invalid value:RuntimeWarning")
def test_fm_pretrain_nonfinite_loss():
    data = two_mode_data(n=64, seed=0)
    with pytest.raises(NonFiniteLoss):
        fm_pretrain(data, steps=400, learning_rate=1e4, seed=0)


def test_fm_pretrain_rejects_empty():
    with pytest.raises(ValueError):
        fm_pretrain(np.zeros((0, 2)))


def test_sample_ode_constant_velocity_oracle(rng):
    # Zero all weights, set the output bias: v(z, t, c) = b3 everywhere,
    # so Euler integration moves z1 by exactly -b3.
    model = ToyFlowModel(width=3, rng=rng)
    model.set_params_vector(np.zeros(model.n_params))
    model.params["b3"] = np.array([1.25, -0.5])
    z1 = np.array([0.3, 0.7])
    out = sample_ode(model, 0.0, 5, z1)
    np.testing.assert_allclose(out, z1 - np.array([1.25, -0.5]), atol=1e-12)
    # Batch form integrates each row identically.
    batch = sample_ode(model, 0.0, 5, np.tile(z1, (3, 1)))
    np.testing.assert_allclose(batch, np.tile(out, (3, 1)), atol=1e-12)


def test_sample_ode_generator_draws():
    model = ToyFlowModel(width=3, rng=np.random.default_rng(5))
    g1 = np.random.default_rng(11)
    g2 = np.random.default_rng(11)
    s1 = sample_ode(model, 0.0, 4, g1)
    s2 = sample_ode(model, 0.0, 4, g2)
    np.testing.assert_array_equal(s1, s2)
    with pytest.raises(ValueError):
        sample_ode(model, 0.0, 0, g1)


def test_nft_config_validation():
    with pytest.raises(ValueError):
        NftConfig(beta_mix=0.0)
    with pytest.raises(ValueError):
        NftConfig(group_size=1)
    with pytest.raises(ValueError):
        NftConfig(ban_mean=1.5)
    with pytest.raises(ValueError):
        NftConfig(descent_steps=0)


def test_train_nft_report_structure_and_determinism():
    cfg = NftConfig(rounds=3, groups=4, group_size=4, descent_steps=2)
    data = two_mode_data(seed=6)
    m1 = fm_pretrain(data, steps=200, seed=6)
    m2 = fm_pretrain(data, steps=200, seed=6)
    r1 = train_nft(m1, mode_target_reward, cfg, seed=6)
    r2 = train_nft(m2, mode_target_reward, cfg, seed=6)
    assert r1 == r2
    assert len(r1.rounds) == 3
    assert [rs.round_index for rs in r1.rounds] == [0, 1, 2]
    assert r1.final_mean_raw_reward == r1.rounds[-1].mean_raw_reward
    np.testing.assert_array_equal(m1.params_vector(), m2.params_vector())


def test_train_nft_constant_reward_skips_all_rounds():
    cfg = NftConfig(rounds=2, groups=3, group_size=4)
    model = fm_pretrain(two_mode_data(seed=7), steps=100, seed=7)
    before = model.params_vector()
    report = train_nft(model, lambda s: 0.5, cfg, seed=7)
    assert report.skipped_rounds == 2
    assert all(rs.skipped for rs in report.rounds)
    assert all(rs.kept_groups == 0 for rs in report.rounds)
    # Nothing kept means nothing learned: parameters are untouched.
    np.testing.assert_array_equal(model.params_vector(), before)


def test_two_mode_data_shape_and_modes():
    data = two_mode_data(n=100, seed=1)
    assert data.shape == (100, 2)
    means = np.sort(np.round(data[:, 0]).astype(int))
    # Half the points cluster near each mode.
    assert np.mean(data[:50, 0]) > 1.5
    assert np.mean(data[50:, 0]) < -1.5


def test_mode_target_reward_boundary():
    assert mode_target_reward(np.array([2.0, 0.0])) == 1.0
    assert mode_target_reward(np.array([2.0, 0.999])) == 1.0
    assert mode_target_reward(np.array([2.0, 1.001])) == 0.0
    assert mode_target_reward(np.array([-2.0, 0.0])) == 0.0


def test_rewarded_mode_fraction_deterministic():
    model = fm_pretrain(two_mode_data(seed=2), steps=150, seed=2)
    f1 = rewarded_mode_fraction(model, n=200, seed=2)
    f2 = rewarded_mode_fraction(model, n=200, seed=2)
    assert f1 == f2
    assert 0.0 <= f1 <= 1.0
