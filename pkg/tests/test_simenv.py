import csv
import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from collabinf.channel import ChannelConfig, JointAction, channel_gain
from collabinf.profiles import DeviceProfile, builtin_profile
from collabinf.simenv import (
    CollabInferenceEnv,
    EnvConfig,
    EnvError,
    EnvState,
    constant_policy,
    frame_reward,
    objective_p1,
    objective_p2,
    run_episode,
    task_overhead,
    write_trace_csv,
)

from conftest import make_profile

# B = 2 profile used by the hand-computed overhead examples
HAND = DeviceProfile(
    2,
    (0.0, 0.02, 0.05, 0.08),
    (0.0, 0.002, 0.003, 0.0),
    (0.0, 0.01, 0.03, 0.06),
    (0.0, 0.001, 0.002, 0.0),
    (8e6, 2e6, 1e6, 0.0),
    "hand",
)


def one_ue_env(profile, tasks, distance=10.0, **kw):
    cfg = EnvConfig(ue_count=1, profiles=(profile,), eval_mode=True, eval_tasks=tasks, eval_distance=distance, **kw)
    return CollabInferenceEnv(cfg)


class TestTaskOverhead:
    def test_full_local(self):
        assert task_overhead(3, 0.0, HAND) == (0.08, 0.06)

    def test_raw_offload(self):
        lat, en = task_overhead(0, 2e6, HAND, power=0.1)
        assert lat == 4.0 and en == pytest.approx(0.4, rel=1e-15)

    def test_interior(self):
        lat, en = task_overhead(2, 1e6, HAND, power=0.1)
        assert lat == pytest.approx(1.053, rel=1e-12)
        assert en == pytest.approx(0.03 + 0.002 + 0.1, rel=1e-12)

    def test_domain(self):
        with pytest.raises(EnvError):
            task_overhead(4, 1e6, HAND)
        with pytest.raises(EnvError):
            task_overhead(1, 0.0, HAND)


def test_reward_example():
    assert frame_reward(0.5, 0.47, 2.0, 4) == pytest.approx(-0.360, abs=1e-15)
    assert frame_reward(0.5, 0.47, 2.0, 0) == -(0.5 + 0.94)


class TestStep:
    def test_local_five_tasks_per_frame(self, tiny_profile):
        env = one_ue_env(tiny_profile, tasks=12)
        s = env.reset()
        a = JointAction([2], [0], [0.1])
        ks, es = [], []
        while not s.done:
            s, o = env.step(s, a)
            ks.append(o.completed)
            es.append(o.energy)
        assert ks == [5, 5, 2]
        assert es[0] == pytest.approx(5 * 0.2, rel=1e-12)
        assert es[2] == pytest.approx(2 * 0.2, rel=1e-12)
        assert s.frame_index == 3 and not s.truncated

    def test_idle_ue(self, tiny_profile):
        cfg = EnvConfig(ue_count=2, profiles=(tiny_profile,), eval_mode=True, eval_tasks=0)
        env = CollabInferenceEnv(cfg)
        s = env.reset()
        assert s.done
        s = EnvState(np.array([0, 3]), np.zeros(2), np.zeros(2), np.array([10.0, 10.0]))
        s2, o = env.step(s, JointAction([2, 2], [0, 0], [0.1, 0.1]))
        assert o.completed_per_ue[0] == 0 and o.energy_local[0] == 0
        assert s2.remaining_tasks[0] == 0 and s2.frame_index == 1 and s2.done

    def test_step_after_done(self, tiny_profile):
        env = one_ue_env(tiny_profile, tasks=1)
        s, _ = env.step(env.reset(), JointAction([2], [0], [0.1]))
        assert s.done
        with pytest.raises(EnvError):
            env.step(s, JointAction([2], [0], [0.1]))

    @pytest.mark.parametrize("action", [([3], [0], [0.1]), ([0], [2], [0.1]), ([0], [0], [0.0]),
                                        ([0], [0], [0.6]), ([0, 0], [0, 0], [0.1, 0.1])])
    def test_invalid_action(self, tiny_profile, action):
        env = one_ue_env(tiny_profile, tasks=3)
        with pytest.raises(EnvError):
            env.step(env.reset(), JointAction(*action))

    def test_state_is_not_mutated(self, tiny_profile):
        env = one_ue_env(tiny_profile, tasks=4)
        s = env.reset()
        before = replace(s)
        env.step(s, JointAction([0], [0], [0.3]))
        assert s.same_as(before)

    def test_in_flight_task_keeps_partition_but_takes_new_power(self):
        # one raw-input task needs several frames to transmit
        env = one_ue_env(HAND, tasks=2, distance=50.0)
        s = env.reset()
        s, o1 = env.step(s, JointAction([0], [1], [0.1]))
        assert s.task_partition[0] == 0 and s.task_channel[0] == 1 and s.residual_bits[0] > 0
        rate_new = 1e6 * math.log2(1 + 0.4 * channel_gain(50.0, 3) / 1e-9)
        s, o2 = env.step(s, JointAction([3], [0], [0.4]))
        # the old task finished on its old channel, at the rate of the new power
        t_tx = (8e6 - o1.bits_sent[0]) / rate_new
        assert o2.energy_tx[0] == pytest.approx(0.4 * t_tx, rel=1e-12)
        assert o2.completed == 2  # then the second task ran locally under the new action
        assert o2.energy_local[0] == pytest.approx(0.06, rel=1e-12)

    def test_pro_rated_local_energy(self):
        prof = make_profile(tf_last=0.8)  # local task longer than a frame
        env = one_ue_env(prof, tasks=1)
        s, o = env.step(env.reset(), JointAction([2], [0], [0.1]))
        assert o.completed == 0
        assert o.energy == pytest.approx(0.2 * 0.5 / 0.8, rel=1e-12)
        assert s.residual_local[0] == pytest.approx(0.3, rel=1e-12)
        s, o = env.step(s, JointAction([2], [0], [0.1]))
        assert o.completed == 1 and o.energy == pytest.approx(0.2 * 0.3 / 0.8, rel=1e-12)
        assert o.latency_sum[0] == pytest.approx(0.8, rel=1e-12)


class TestReset:
    def test_eval_mode(self):
        env = CollabInferenceEnv(EnvConfig(ue_count=4, eval_mode=True))
        s = env.reset()
        assert s.remaining_tasks.tolist() == [200] * 4
        assert s.distances.tolist() == [50.0] * 4
        assert s.frame_index == 0 and not s.residual_bits.any() and not s.residual_local.any()

    def test_seeded(self):
        env = CollabInferenceEnv(EnvConfig())
        assert env.reset(3).same_as(env.reset(3))
        assert not env.reset(3).same_as(env.reset(4))

    def test_poisson_mean(self):
        env = CollabInferenceEnv(EnvConfig(ue_count=5), np.random.default_rng(11))
        draws = np.concatenate([env.reset().remaining_tasks for _ in range(2000)])
        assert 196 <= draws.mean() <= 204
        d = np.concatenate([env.reset().distances for _ in range(200)])
        assert d.min() >= 1 and d.max() <= 100

    def test_config_validation(self):
        for kw in ({"ue_count": 0}, {"frame_duration": 0}, {"beta": 0}, {"task_mean": -1}, {"gamma": 1.5},
                   {"max_frames": 0}, {"distance_range": (0.5, 10)}):
            with pytest.raises(EnvError):
                EnvConfig(**kw)
        with pytest.raises(EnvError):
            EnvConfig(ue_count=2, profiles=(builtin_profile(), make_profile(B=2)))

    def test_frame_cap(self):
        assert EnvConfig().frame_cap == 10 * math.ceil(200 * 0.05 / 0.5)
        assert EnvConfig(max_frames=7).frame_cap == 7


def test_truncation(tiny_profile):
    env = one_ue_env(tiny_profile, tasks=50, max_frames=3)
    tr = run_episode(env, constant_policy([2], [0], [0.1]))
    assert tr.truncated and tr.frames == 3 and not tr.complete
    with pytest.raises(EnvError):
        tr.objective_p1(0.47)


def test_observation_normalization():
    env = CollabInferenceEnv(EnvConfig(ue_count=2))
    s = EnvState(np.array([100, 0]), np.array([0.25, 0.0]), np.array([602112.0, 0.0]), np.array([50.0, 100.0]))
    assert env.observation(s).tolist() == [0.5, 0.0, 0.5, 0.0, 0.5, 0.0, 0.5, 1.0]


class TestObjectives:
    def test_p1(self):
        assert objective_p1([3.0, 5.0], [1.5, 2.5], 0.5) == 7.0
        assert objective_p1([[1.0, 2.0], [4.0]], [[0.0], [9.0]], 0.0) == 4.0
        assert objective_p1([[0.3]], [[0.2]], 0.5) == pytest.approx(0.4)

    def test_p2(self):
        assert objective_p2([-0.36, -0.36]) == pytest.approx(0.72)
        assert objective_p2([]) == 0.0

    def test_p2_on_local_trace(self, tiny_profile):
        env = one_ue_env(tiny_profile, tasks=12)
        tr = run_episode(env, constant_policy([2], [0], [0.1]))
        hand = (0.5 + 0.47 * 1.0) / 5 * 2 + (0.5 + 0.47 * 0.4) / 2
        assert objective_p2(tr.rewards) == pytest.approx(hand, rel=1e-12)

    def test_p2_constant_rate_rewrite(self, tiny_profile):
        # every frame completes the same number of tasks, so the sum of
        # per-frame ratios equals (total time + beta * total energy) / K
        env = one_ue_env(tiny_profile, tasks=20)
        tr = run_episode(env, constant_policy([2], [0], [0.1]))
        ks = {o.completed for o in tr.outcomes}
        assert ks == {5}
        A = tr.frames * 0.5
        Bsum = sum(o.energy for o in tr.outcomes)
        assert objective_p2(tr.rewards) == pytest.approx((A + 0.47 * Bsum) / 5, rel=1e-12)


def test_power_never_slows_a_lone_offloader():
    lats = []
    for p in np.linspace(0.01, 0.5, 12):
        env = one_ue_env(builtin_profile(), tasks=30, distance=60.0)
        tr = run_episode(env, constant_policy([1], [0], [p]))
        lats.append(tr.per_ue("latency_sum").sum() / 30)
    assert all(b <= a + 1e-12 for a, b in zip(lats, lats[1:]))


def test_constant_rate_energy_matches_overhead_formula():
    env = one_ue_env(HAND, tasks=9, distance=20.0)
    tr = run_episode(env, constant_policy([1], [0], [0.2]))
    rate = 1e6 * math.log2(1 + 0.2 * channel_gain(20.0, 3) / 1e-9)
    lat, en = task_overhead(1, rate, HAND, power=0.2)
    assert tr.per_ue("completed_per_ue").sum() == 9
    assert sum(o.energy for o in tr.outcomes) == pytest.approx(9 * en, rel=1e-9)
    assert tr.per_ue("latency_sum")[0] == pytest.approx(9 * lat, rel=1e-9)


def random_policy(env, seed):
    rng = np.random.default_rng(seed)
    n = env.n_agents

    def act(state):
        return JointAction(rng.integers(0, env.n_partitions, n), rng.integers(0, env.n_channels, n),
                           rng.uniform(env.p_min, env.p_max, n))

    return act


@given(st.integers(0, 10_000), st.integers(1, 4))
def test_episode_accounting(seed, n):
    env = CollabInferenceEnv(EnvConfig(ue_count=n, task_mean=15), np.random.default_rng(seed))
    tr = run_episode(env, random_policy(env, seed))
    cfg = env.config
    for o in tr.outcomes:
        assert o.reward == -(cfg.frame_duration + cfg.beta * o.energy) / max(o.completed, 1)
        assert o.energy >= 0 and o.completed >= 0
        assert np.all(o.busy_time <= cfg.frame_duration + 1e-9)
    if not tr.truncated:
        assert tr.per_ue("completed_per_ue").tolist() == tr.initial_tasks.tolist()
        total = sum(o.energy for o in tr.outcomes)
        assert total == pytest.approx(tr.per_ue("completed_energy").sum(), rel=1e-9, abs=1e-12)


def test_determinism():
    def trace():
        env = CollabInferenceEnv(EnvConfig(ue_count=3, task_mean=10), np.random.default_rng(5))
        return run_episode(env, random_policy(env, 9))

    a, b = trace(), trace()
    assert np.array_equal(a.rewards, b.rewards)
    assert a.final_state.same_as(b.final_state)


def test_trace_csv(tmp_path, tiny_profile):
    env = one_ue_env(tiny_profile, tasks=7)
    tr = run_episode(env, constant_policy([2], [0], [0.1]))
    path = tmp_path / "trace.csv"
    write_trace_csv(path, tr)
    rows = list(csv.reader(open(path)))
    assert rows[0] == ["frame_index", "b_0", "c_0", "p_0", "K_t", "E_t", "r_t"]
    assert [int(r[4]) for r in rows[1:]] == [5, 2]
