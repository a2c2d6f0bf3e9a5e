"""Time-framed multi-UE collaborative inference environment.

Each frame of length ``T0`` every UE works through its task queue strictly
sequentially: local prefix execution plus compression, then transmission of
the payload, then the next task.  A task that straddles a frame boundary keeps
its partition point and channel but uses the power of the new action, and its
remaining bits go out at the rate implied by the new joint action.

Reward for a frame is ``-(T0 + beta * E_t) / max(K_t, 1)``.  The ``max`` guards
frames in which no task finishes; the undivided penalty keeps the reward
bounded while preserving the ordering of frames.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from . import kernels
from .channel import ChannelConfig, JointAction, channel_gain, rate_matrix
from .profiles import DeviceProfile, builtin_profile


class EnvError(ValueError):
    """Invalid configuration, action, or use of a finished episode."""


@dataclass(frozen=True)
class EnvConfig:
    ue_count: int = 5
    frame_duration: float = 0.5
    beta: float = 0.47
    task_mean: float = 200.0
    distance_range: tuple[float, float] = (1.0, 100.0)
    profiles: tuple[DeviceProfile, ...] = ()
    channel: ChannelConfig = field(default_factory=ChannelConfig)
    gamma: float = 0.95
    max_frames: int | None = None
    eval_mode: bool = False
    eval_distance: float = 50.0
    eval_tasks: int = 200

    def __post_init__(self) -> None:
        if isinstance(self.ue_count, bool) or not isinstance(self.ue_count, (int, np.integer)) or self.ue_count < 1:
            raise EnvError(f"ue_count must be a positive integer, got {self.ue_count!r}")
        profiles = self.profiles
        if isinstance(profiles, DeviceProfile):
            profiles = (profiles,)
        profiles = tuple(profiles) or (builtin_profile(),)
        if len(profiles) == 1:
            profiles = profiles * self.ue_count
        if len(profiles) != self.ue_count:
            raise EnvError(f"need 1 or {self.ue_count} profiles, got {len(profiles)}")
        if len({p.partition_count for p in profiles}) != 1:
            raise EnvError("all UE profiles must share the same partition_count")
        object.__setattr__(self, "profiles", profiles)
        object.__setattr__(self, "distance_range", tuple(float(x) for x in self.distance_range))
        if not self.frame_duration > 0:
            raise EnvError("frame_duration must be > 0")
        if not self.beta > 0:
            raise EnvError("beta must be > 0")
        if not self.task_mean > 0:
            raise EnvError("task_mean must be > 0")
        if not 0 <= self.gamma <= 1:
            raise EnvError("gamma must lie in [0, 1]")
        lo, hi = self.distance_range
        if not 1 <= lo <= hi:
            raise EnvError("distance_range must satisfy 1 <= low <= high")
        if self.eval_distance < 1:
            raise EnvError("eval_distance must be >= 1")
        if self.eval_tasks < 0:
            raise EnvError("eval_tasks must be >= 0")
        if self.max_frames is not None and self.max_frames < 1:
            raise EnvError("max_frames must be >= 1")

    @property
    def partition_count(self) -> int:
        return self.profiles[0].partition_count

    @property
    def n_points(self) -> int:
        return self.partition_count + 2

    @property
    def local_index(self) -> int:
        return self.partition_count + 1

    @property
    def frame_cap(self) -> int:
        """Episode cap: ``max_frames`` or ten times the expected all-local duration in frames."""
        if self.max_frames is not None:
            return int(self.max_frames)
        tasks = self.eval_tasks if self.eval_mode else self.task_mean
        workload = max(tasks * p.local_latency[-1] for p in self.profiles)
        return 10 * max(1, math.ceil(workload / self.frame_duration))

    @property
    def obs_dim(self) -> int:
        return 4 * self.ue_count


@dataclass(frozen=True)
class EnvState:
    """Environment state; the first four arrays are what the agent observes.

    ``task_*`` arrays describe the in-flight task of each UE (partition < 0
    when none).  ``task_elapsed`` and ``task_energy`` accumulate the task's
    latency and energy across frames.
    """

    remaining_tasks: np.ndarray
    residual_local: np.ndarray
    residual_bits: np.ndarray
    distances: np.ndarray
    frame_index: int = 0
    task_partition: np.ndarray | None = None
    task_channel: np.ndarray | None = None
    task_elapsed: np.ndarray | None = None
    task_energy: np.ndarray | None = None
    task_local_energy: np.ndarray | None = None
    done: bool = False
    truncated: bool = False

    def __post_init__(self) -> None:
        n = len(self.remaining_tasks)
        for name, dtype in (
            ("task_partition", np.int64),
            ("task_channel", np.int64),
            ("task_elapsed", np.float64),
            ("task_energy", np.float64),
            ("task_local_energy", np.float64),
        ):
            if getattr(self, name) is None:
                fill = -1 if dtype is np.int64 else 0.0
                object.__setattr__(self, name, np.full(n, fill, dtype=dtype))
        for name in ("remaining_tasks", "residual_local", "residual_bits", "distances", "task_partition",
                     "task_channel", "task_elapsed", "task_energy", "task_local_energy"):
            arr = np.array(getattr(self, name), copy=True)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    def same_as(self, other: "EnvState") -> bool:
        """Exact (bitwise) equality of every field."""
        if (self.frame_index, self.done, self.truncated) != (other.frame_index, other.done, other.truncated):
            return False
        return all(
            np.array_equal(getattr(self, f), getattr(other, f))
            for f in ("remaining_tasks", "residual_local", "residual_bits", "distances", "task_partition",
                      "task_channel", "task_elapsed", "task_energy", "task_local_energy")
        )


@dataclass(frozen=True)
class FrameOutcome:
    completed: int
    energy: float
    reward: float
    done: bool
    truncated: bool
    completed_per_ue: np.ndarray
    busy_time: np.ndarray
    bits_sent: np.ndarray
    energy_local: np.ndarray
    energy_tx: np.ndarray
    latency_sum: np.ndarray
    completed_energy: np.ndarray


def frame_reward(frame_duration: float, beta: float, energy: float, completed: int) -> float:
    return -(frame_duration + beta * energy) / max(completed, 1)


def task_overhead(b: int, rate: float, profile: DeviceProfile, power: float = 0.0) -> tuple[float, float]:
    """Latency and energy of one task run at partition ``b`` with a fixed uplink.

    Local prefix time counts for ``b != 0``, compression for interior points,
    and transmission ``payload / rate`` (at energy ``power * time``) for every
    ``b`` except full-local.
    """
    last = profile.local_index
    if isinstance(b, bool) or not 0 <= b <= last:
        raise EnvError(f"partition {b} outside 0..{last}")
    latency = 0.0
    energy = 0.0
    if b != 0:
        latency += profile.local_latency[b]
        energy += profile.local_energy[b]
    if b not in (0, last):
        latency += profile.compress_latency[b]
        energy += profile.compress_energy[b]
    if b != last:
        if not rate > 0:
            raise EnvError("offloading needs a positive uplink rate")
        t_tx = profile.payload_bits[b] / rate
        latency += t_tx
        energy += power * t_tx
    return latency, energy


class CollabInferenceEnv:
    """Simulator over :class:`EnvState`; ``step`` is a pure function of (state, action)."""

    def __init__(self, config: EnvConfig, rng: np.random.Generator | None = None):
        self.config = config
        self.rng = rng if rng is not None else np.random.default_rng()
        tables = [p.arrays() for p in config.profiles]
        self._tf = np.ascontiguousarray(np.stack([t["local_latency"] for t in tables]))
        self._tc = np.ascontiguousarray(np.stack([t["compress_latency"] for t in tables]))
        self._ef = np.ascontiguousarray(np.stack([t["local_energy"] for t in tables]))
        self._ec = np.ascontiguousarray(np.stack([t["compress_energy"] for t in tables]))
        self._payload = np.ascontiguousarray(np.stack([t["payload_bits"] for t in tables]))
        self._max_payload = float(self._payload.max())
        self._cap = config.frame_cap
        self._gain_key = None
        self._gains = None

    # interface used by the trainer
    @property
    def n_agents(self) -> int:
        return self.config.ue_count

    @property
    def n_partitions(self) -> int:
        return self.config.n_points

    @property
    def n_channels(self) -> int:
        return self.config.channel.channel_count

    @property
    def p_max(self) -> float:
        return self.config.channel.p_max

    @property
    def p_min(self) -> float:
        return self.config.channel.p_min

    @property
    def obs_dim(self) -> int:
        return self.config.obs_dim

    def reset(self, seed: int | None = None) -> EnvState:
        if seed is not None:
            self.rng = np.random.default_rng(seed)
        cfg = self.config
        n = cfg.ue_count
        if cfg.eval_mode:
            k = np.full(n, cfg.eval_tasks, dtype=np.int64)
            d = np.full(n, cfg.eval_distance, dtype=np.float64)
        else:
            k = self.rng.poisson(cfg.task_mean, size=n).astype(np.int64)
            lo, hi = cfg.distance_range
            d = self.rng.uniform(lo, hi, size=n)
        state = EnvState(k, np.zeros(n), np.zeros(n), d, frame_index=0)
        if not k.any():
            state = replace(state, done=True)
        return state

    def observation(self, state: EnvState) -> np.ndarray:
        cfg = self.config
        task_scale = cfg.eval_tasks if cfg.eval_mode and cfg.eval_tasks > 0 else cfg.task_mean
        return np.concatenate([
            state.remaining_tasks / task_scale,
            state.residual_local / cfg.frame_duration,
            state.residual_bits / self._max_payload,
            state.distances / 100.0,
        ])

    def validate(self, action: JointAction) -> None:
        if len(action) != self.config.ue_count:
            raise EnvError(f"action has {len(action)} entries for {self.config.ue_count} UEs")
        problems = action.violations(self.config.n_points, self.n_channels, self.p_max)
        if problems:
            raise EnvError("; ".join(problems))

    def rates(self, state: EnvState, action: JointAction) -> np.ndarray:
        """Per-UE, per-channel uplink rates for this frame, shape ``(N, C)``."""
        if self._gain_key is None or not np.array_equal(self._gain_key, state.distances):
            self._gain_key = state.distances
            self._gains = np.atleast_1d(channel_gain(state.distances, self.config.channel.path_loss_exponent))
        gains = self._gains
        offload = (action.partition != self.config.local_index) & (state.remaining_tasks > 0)
        return rate_matrix(action.power, gains, action.channel, offload, self.config.channel)

    def step(self, state: EnvState, action: JointAction, backend: str | None = None) -> tuple[EnvState, FrameOutcome]:
        if state.done:
            raise EnvError("episode is finished; call reset()")
        self.validate(action)
        cfg = self.config
        n = cfg.ue_count
        rates = np.ascontiguousarray(self.rates(state, action))

        k = np.array(state.remaining_tasks, dtype=np.int64)
        rl = np.array(state.residual_local, dtype=np.float64)
        rb = np.array(state.residual_bits, dtype=np.float64)
        tb = np.array(state.task_partition, dtype=np.int64)
        tcn = np.array(state.task_channel, dtype=np.int64)
        tel = np.array(state.task_elapsed, dtype=np.float64)
        ten = np.array(state.task_energy, dtype=np.float64)
        tle = np.array(state.task_local_energy, dtype=np.float64)
        completed = np.zeros(n, dtype=np.int64)
        out = [np.zeros(n) for _ in range(6)]
        kernels.simulate_frame(
            float(cfg.frame_duration), k, rl, rb, tb, tcn, tel, ten, tle,
            action.partition, action.channel, action.power, rates,
            self._tf, self._tc, self._ef, self._ec, self._payload,
            completed, *out, backend=backend,
        )
        e_loc, e_tx, bits, busy, lat, comp_e = out

        frame_index = state.frame_index + 1
        all_done = not k.any()
        truncated = (not all_done) and frame_index >= self._cap
        K_t = int(completed.sum())
        E_t = float(e_loc.sum() + e_tx.sum())
        new_state = EnvState(k, rl, rb, state.distances, frame_index, tb, tcn, tel, ten, tle,
                             done=all_done or truncated, truncated=truncated)
        outcome = FrameOutcome(
            completed=K_t,
            energy=E_t,
            reward=frame_reward(cfg.frame_duration, cfg.beta, E_t, K_t),
            done=all_done or truncated,
            truncated=truncated,
            completed_per_ue=completed,
            busy_time=busy,
            bits_sent=bits,
            energy_local=e_loc,
            energy_tx=e_tx,
            latency_sum=lat,
            completed_energy=comp_e,
        )
        return new_state, outcome


# ---------------------------------------------------------------------------
# episodes and objectives


@dataclass
class EpisodeTrace:
    """Frame-by-frame record of one episode."""

    initial_tasks: np.ndarray
    actions: list[JointAction] = field(default_factory=list)
    outcomes: list[FrameOutcome] = field(default_factory=list)
    truncated: bool = False
    final_state: EnvState | None = None

    @property
    def rewards(self) -> np.ndarray:
        return np.array([o.reward for o in self.outcomes])

    @property
    def frames(self) -> int:
        return len(self.outcomes)

    @property
    def complete(self) -> bool:
        return self.final_state is not None and self.final_state.done and not self.truncated

    def per_ue(self, attr: str) -> np.ndarray:
        if not self.outcomes:
            return np.zeros(len(self.initial_tasks))
        return np.sum([getattr(o, attr) for o in self.outcomes], axis=0)

    def objective_p1(self, beta: float) -> float:
        if not self.complete:
            raise EnvError("objective_p1 needs a complete (non-truncated) episode")
        return objective_p1(self.per_ue("latency_sum"), self.per_ue("completed_energy"), beta)


def objective_p1(latency, energy, beta: float) -> float:
    """Makespan of summed task latencies plus ``beta`` times total energy.

    ``latency`` and ``energy`` hold, per UE, either a sequence of per-task
    values or their sum.
    """
    lat = [float(np.sum(x)) for x in latency]
    en = [float(np.sum(x)) for x in energy]
    if len(lat) != len(en) or not lat:
        raise EnvError("latency and energy need one entry per UE")
    return max(lat) + beta * sum(en)


def objective_p2(rewards: Iterable[float]) -> float:
    return -float(np.sum(list(rewards)))


def run_episode(
    env: CollabInferenceEnv,
    policy: Callable[[EnvState], JointAction],
    seed: int | None = None,
    state: EnvState | None = None,
) -> EpisodeTrace:
    state = env.reset(seed) if state is None else state
    trace = EpisodeTrace(initial_tasks=np.array(state.remaining_tasks))
    while not state.done:
        action = policy(state)
        state, outcome = env.step(state, action)
        trace.actions.append(action)
        trace.outcomes.append(outcome)
    trace.truncated = state.truncated
    trace.final_state = state
    return trace


def write_trace_csv(path: str | Path, trace: EpisodeTrace) -> None:
    n = len(trace.initial_tasks)
    header = ["frame_index"]
    for i in range(n):
        header += [f"b_{i}", f"c_{i}", f"p_{i}"]
    header += ["K_t", "E_t", "r_t"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for t, (a, o) in enumerate(zip(trace.actions, trace.outcomes), start=1):
            row: list = [t]
            for i in range(n):
                row += [int(a.partition[i]), int(a.channel[i]), repr(float(a.power[i]))]
            row += [o.completed, repr(o.energy), repr(o.reward)]
            w.writerow(row)


def constant_policy(partition: Sequence[int], channel: Sequence[int], power: Sequence[float]):
    action = JointAction(partition, channel, power)
    return lambda state: action
