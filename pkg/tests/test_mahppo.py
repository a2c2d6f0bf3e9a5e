import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from collabinf.mahppo import (
    LOG_COLUMNS,
    CheckpointError,
    MAHPPOAgent,
    ReturnScale,
    TrainConfig,
    TrainingDiverged,
    TrajectoryBuffer,
    actor_objective,
    clipped_surrogate,
    critic_loss,
    discounted_returns,
    gae,
    make_agent,
    minibatch_gradients,
    normalize,
    smooth,
    train,
)
from collabinf.simenv import CollabInferenceEnv, EnvConfig
from collabinf.toyenvs import DominantPartitionBandit, PowerTargetEnv

from oracles import brute_force_gae, numeric_grad, rel_error

SMALL = dict(actor_trunk=(8, 6), actor_branch=4, critic_hidden=(8, 6, 4))


class TestReturns:
    def test_example(self):
        np.testing.assert_allclose(discounted_returns([-1, -1], 0.95, [False, True]), [-1.95, -1.0])

    def test_gamma_zero_and_zero_rewards(self):
        r = np.array([0.3, -2.0, 5.0])
        np.testing.assert_array_equal(discounted_returns(r, 0.0, [False] * 3), r)
        np.testing.assert_array_equal(discounted_returns(np.zeros(4), 0.9, [False] * 4), np.zeros(4))

    def test_no_bootstrap_across_reset(self):
        out = discounted_returns([1, 1, 1], 1.0, [False, True, False], last_value=10.0)
        np.testing.assert_allclose(out, [2, 1, 11])


class TestGAE:
    def test_lambda_zero_is_td_residual(self):
        r = np.array([0.5, -1.0, 2.0])
        v = np.array([0.1, 0.2, 0.3])
        out = gae(r, v, 0.9, 0.0, [False, False, False], last_value=0.7)
        np.testing.assert_allclose(out, r + 0.9 * np.array([0.2, 0.3, 0.7]) - v)

    def test_two_step_example(self):
        np.testing.assert_allclose(gae([1, 1], [0, 0], 1.0, 1.0, [False, True]), [2, 1])

    def test_fixed_point(self):
        g, V = 0.9, 3.0
        T = 10
        out = gae(np.full(T, (1 - g) * V), np.full(T, V), g, 0.95, [False] * T, last_value=V)
        np.testing.assert_allclose(out, 0.0, atol=1e-12)
        np.testing.assert_allclose(out, brute_force_gae(np.full(T, (1 - g) * V), np.full(T, V),
                                                        np.zeros(T, bool), g, 0.95, V), atol=1e-12)

    @given(st.integers(0, 2**31), st.integers(1, 200))
    def test_matches_brute_force(self, seed, T):
        rng = np.random.default_rng(seed)
        r, v = rng.normal(size=T), rng.normal(size=T)
        d = rng.random(T) < 0.1
        g, lam, last = rng.uniform(0, 1), rng.uniform(0, 1), rng.normal()
        assert np.max(np.abs(gae(r, v, g, lam, d, last) - brute_force_gae(r, v, d, g, lam, last))) < 1e-10

    @given(st.integers(0, 2**31))
    def test_lambda_one_telescopes(self, seed):
        rng = np.random.default_rng(seed)
        T = 50
        r, v = rng.normal(size=T), rng.normal(size=T)
        d = np.zeros(T, bool)
        d[-1] = True
        ret = discounted_returns(r, 0.9, d)
        np.testing.assert_allclose(gae(r, v, 0.9, 1.0, d), ret - v, atol=1e-10)

    def test_misaligned(self):
        with pytest.raises(ValueError):
            gae([1, 2], [0], 0.9, 0.9, [False, False])


class TestLosses:
    def test_critic_loss(self):
        assert critic_loss([1.0, 2.0], [1.0, 2.0]) == 0
        assert critic_loss([1.0], [0.0]) == 1
        assert critic_loss([1.0, 0.0], [0.0, 2.0]) == 2.5

    def test_clip_examples(self):
        lp = np.log
        assert clipped_surrogate(lp(1.3), 0.0, 1.0, 0.2) == pytest.approx(1.2)
        assert clipped_surrogate(0.0, 0.0, 0.7, 0.2) == 0.7
        assert clipped_surrogate(lp(0.5), 0.0, -1.0, 0.2) == pytest.approx(-0.8)
        assert np.isnan(clipped_surrogate(1e6, 0.0, 1.0, 0.2))

    @given(st.floats(-5, 5), st.floats(-50, 50), st.floats(0.01, 0.99))
    def test_clip_bound(self, log_ratio, adv, eps):
        assert clipped_surrogate(log_ratio, 0.0, adv, eps) <= (1 + eps) * abs(adv) + 1e-12

    def test_actor_objective(self):
        assert actor_objective([0.1, 0.2], [1.0, 2.0], 0.001) == pytest.approx(0.303)
        assert actor_objective([0.1, 0.2], [1.0, 2.0], 0.0) == pytest.approx(0.3)
        assert actor_objective([0.0, 0.0], [math.log(6), math.log(2)], 0.01) == pytest.approx(0.01 * math.log(12))

    @given(st.lists(st.floats(-1e3, 1e3), min_size=2, max_size=300))
    def test_normalize(self, xs):
        x = np.array(xs)
        if x.std() < 1e-6:
            return
        z = normalize(x)
        assert abs(z.mean()) < 1e-9 and abs(z.std() - 1) < 1e-6

    def test_smooth(self):
        np.testing.assert_allclose(smooth([0, 0, 5, 0, 0, 10]), [5 / 3, 5 / 4, 1, 3, 15 / 4, 10 / 3])


def test_loop_arithmetic():
    assert TrainConfig(sample_reuse=10).updates_per_round == 40
    assert TrainConfig().updates_per_round == 80
    assert TrainConfig(total_steps=2048).rounds == 2
    assert TrainConfig().rounds == 49
    for kw in ({"batch_size": 2048}, {"clip_epsilon": 1.0}, {"gamma": 1.5}, {"total_steps": 0},
               {"precision": "float16"}):
        with pytest.raises(ValueError):
            TrainConfig(**kw)


def small_env(n=2):
    return CollabInferenceEnv(EnvConfig(ue_count=n, task_mean=8))


def collect(agent, env, steps, seed):
    rng = np.random.default_rng(seed)
    buf = TrajectoryBuffer(steps, env.obs_dim, env.n_agents)
    state = env.reset(seed)
    while not buf.full:
        obs = env.observation(state)
        act = agent.act(obs, rng)
        state, o = env.step(state, act.action)
        buf.add(obs, act, o.reward, env.observation(state), o.done)
        if o.done:
            state = env.reset()
    return buf


def test_ratio_is_one_at_collection():
    env = small_env(3)
    cfg = TrainConfig(**SMALL)
    agent = make_agent(env, cfg, 0)
    buf = collect(agent, env, 64, 1)
    adv = np.random.default_rng(2).normal(size=64)
    g = minibatch_gradients(agent, buf.obs, buf.partition, buf.channel, buf.raw_power,
                            buf.log_prob.sum(-1), adv, np.zeros(64), TrainConfig(entropy_weight=0.0, **SMALL))
    # every actor's surrogate equals the mean advantage, so the loss is -N * mean(A)
    assert g.stats.policy_loss == pytest.approx(-3 * adv.mean(), abs=1e-9)


@pytest.mark.parametrize("seed", range(3))
def test_minibatch_gradients_match_finite_differences(seed):
    env = small_env(2)
    cfg = TrainConfig(entropy_weight=0.05, **SMALL)
    agent = make_agent(env, cfg, seed)
    buf = collect(agent, env, 16, seed)
    rng = np.random.default_rng(seed)
    # jitter every parameter so no ReLU input sits exactly on its kink
    for p in agent.actors.params + agent.critic.params:
        p += rng.normal(scale=0.05, size=p.shape)
    # perturb the old log-probs so some samples sit in the clipped region
    old = buf.log_prob.sum(-1) + rng.normal(scale=0.3, size=(16, 2))
    adv = rng.normal(size=16)
    ret = rng.normal(size=16)
    args = (buf.obs, buf.partition, buf.channel, buf.raw_power, old, adv, ret, cfg)
    g = minibatch_gradients(agent, *args)

    def ploss():
        return minibatch_gradients(agent, *args).stats.policy_loss

    def vloss():
        return minibatch_gradients(agent, *args).stats.value_loss

    for p, an in zip(agent.actors.params, g.actor):
        assert rel_error(an, numeric_grad(ploss, p, h=1e-6)) < 1e-4
    for p, an in zip(agent.critic.params, g.critic):
        assert rel_error(an, numeric_grad(vloss, p)) < 1e-4


def test_buffer_cleared_each_round():
    buf = TrajectoryBuffer(4, 2, 1)
    env = small_env(1)
    agent = make_agent(env, TrainConfig(**SMALL), 0)
    act = agent.act(np.zeros(4), np.random.default_rng(0))
    for _ in range(4):
        buf.add(np.zeros(2), act, 0.0, np.zeros(2), False, round_index=1)
    with pytest.raises(OverflowError):
        buf.add(np.zeros(2), act, 0.0, np.zeros(2), False)
    buf.clear()
    assert buf.size == 0 and np.all(buf.round_tag == -1)


def test_training_is_reproducible(tmp_path):
    cfg = TrainConfig(total_steps=512, buffer_size=256, batch_size=64, sample_reuse=2, **SMALL)
    logs = []
    for run in range(2):
        env = small_env(2)
        agent = make_agent(env, cfg, 7)
        train(env, agent, cfg, 7, log_path=tmp_path / f"log{run}.csv", checkpoint_dir=tmp_path / f"ck{run}")
        logs.append((tmp_path / f"log{run}.csv").read_bytes())
        assert (tmp_path / f"ck{run}" / "final.json").exists()
    assert logs[0] == logs[1]
    assert logs[0].decode().splitlines()[0] == ",".join(LOG_COLUMNS)
    assert len(logs[0].decode().splitlines()) == 3
    a = (tmp_path / "ck0" / "final.json").read_bytes()
    assert a == (tmp_path / "ck1" / "final.json").read_bytes()


def test_checkpoint_round_trip(tmp_path):
    env = small_env(2)
    cfg = TrainConfig(total_steps=256, buffer_size=128, batch_size=64, sample_reuse=1, precision="float32", **SMALL)
    agent = make_agent(env, cfg, 3)
    train(env, agent, cfg, 3)
    path = agent.save(tmp_path / "a.json")
    again = MAHPPOAgent.load(path)
    assert again.save(tmp_path / "b.json").read_bytes() == path.read_bytes()
    obs = env.observation(env.reset(1))
    assert again.act(obs, greedy=True).action.partition.tolist() == agent.act(obs, greedy=True).action.partition.tolist()


def test_checkpoint_errors(tmp_path):
    env = small_env(2)
    agent = make_agent(env, TrainConfig(**SMALL), 0)
    with pytest.raises(CheckpointError, match="channel head"):
        agent.check_compatible(CollabInferenceEnv(EnvConfig(ue_count=2, channel=env.config.channel.__class__(channel_count=3))))
    with pytest.raises(CheckpointError, match="actor count"):
        agent.check_compatible(small_env(3))
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"format": "other"}))
    with pytest.raises(CheckpointError):
        MAHPPOAgent.load(bad)
    with pytest.raises(CheckpointError):
        MAHPPOAgent.load(tmp_path / "missing.json")


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_divergence_detector(tmp_path):
    env = small_env(2)
    cfg = TrainConfig(total_steps=256, buffer_size=128, batch_size=64, sample_reuse=1, **SMALL)
    agent = make_agent(env, cfg, 0)
    agent.critic.params[0][0, 0] = np.inf
    before = agent.snapshot()
    with pytest.raises(TrainingDiverged):
        train(env, agent, cfg, 0)
    assert all(np.array_equal(a, b) for a, b in zip(before, agent.snapshot()))


def test_toy_bandit_quick():
    env = DominantPartitionBandit(n_partitions=2, best=1)
    cfg = TrainConfig(total_steps=4096)
    agent = make_agent(env, cfg, 0)
    train(env, agent, cfg, 0)
    out = agent.actors.forward(np.ones((1, 1)), record=False)
    p = np.exp(out.partition_logits[0, 0]) / np.exp(out.partition_logits[0, 0]).sum()
    assert p[1] > 0.7


def test_power_target_env_reward():
    env = PowerTargetEnv(target=0.3)
    from collabinf.channel import JointAction

    assert env.reward(JointAction([0], [0], [0.3])) == 0.0
    assert env.reward(JointAction([0], [0], [0.5])) == pytest.approx(-0.04)


@given(st.lists(st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=40), min_size=1, max_size=6))
def test_return_scale_matches_pooled_std(chunks):
    sc = ReturnScale()
    for c in chunks:
        sc.update(np.array(c))
    pooled = np.concatenate([np.array(c) for c in chunks])
    assert sc.count == len(pooled)
    assert sc.mean == pytest.approx(pooled.mean(), abs=1e-9)
    expected = pooled.std() if len(pooled) > 1 and pooled.std() > 1e-8 else 1.0
    assert sc.scale == pytest.approx(expected, rel=1e-6, abs=1e-6)
