"""Multi-actor / single-critic PPO with hybrid (discrete + continuous) actions.

One actor per UE picks that UE's partition point, channel and transmit power;
all actors and the critic see the same global observation.  Training
alternates between filling a trajectory buffer with the current policy and
running ``floor(K * |M| / B)`` minibatch updates on it, after which the buffer
is discarded.
"""
from __future__ import annotations

import csv
import io
import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, NamedTuple

import numpy as np

from . import kernels
from .channel import JointAction
from .neural import (
    Adam,
    DenseNet,
    HybridActor,
    categorical_grads,
    categorical_head,
    clip_grad_norm,
    decode_array,
    encode_array,
    gaussian_grads,
    gaussian_head,
)
from .seeding import restore_rng, rng_state, stream

log = logging.getLogger(__name__)

CHECKPOINT_FORMAT = "collabinf-checkpoint"
CHECKPOINT_VERSION = 1
LOG_COLUMNS = (
    "env_steps",
    "round",
    "mean_cumulative_reward",
    "value_loss",
    "policy_loss",
    "mean_entropy_partition",
    "mean_entropy_channel",
    "mean_entropy_power",
)


class TrainingDiverged(RuntimeError):
    def __init__(self, message: str, checkpoint: Path | None = None):
        super().__init__(message)
        self.checkpoint = checkpoint


class CheckpointError(ValueError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    total_steps: int = 50_000
    buffer_size: int = 1024
    batch_size: int = 256
    sample_reuse: int = 20
    learning_rate: float = 1e-4
    gamma: float = 0.95
    gae_lambda: float = 0.95
    clip_epsilon: float = 0.2
    entropy_weight: float = 0.001
    normalize_advantages: bool = True
    max_grad_norm: float | None = 0.5
    actor_trunk: tuple[int, ...] = (256, 128)
    actor_branch: int = 64
    critic_hidden: tuple[int, ...] = (256, 128, 64)
    precision: str = "float64"
    scale_rewards: bool = True

    def __post_init__(self) -> None:
        object.__setattr__(self, "actor_trunk", tuple(int(w) for w in self.actor_trunk))
        object.__setattr__(self, "critic_hidden", tuple(int(w) for w in self.critic_hidden))
        for name in ("total_steps", "buffer_size", "batch_size", "sample_reuse", "actor_branch"):
            v = getattr(self, name)
            if isinstance(v, bool) or not isinstance(v, (int, np.integer)) or v < 1:
                raise ValueError(f"{name} must be a positive integer, got {v!r}")
        if self.batch_size > self.buffer_size:
            raise ValueError("batch_size cannot exceed buffer_size")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if not 0 < self.clip_epsilon < 1:
            raise ValueError("clip_epsilon must lie in (0, 1)")
        for name in ("gamma", "gae_lambda"):
            if not 0 <= getattr(self, name) <= 1:
                raise ValueError(f"{name} must lie in [0, 1]")
        if self.entropy_weight < 0:
            raise ValueError("entropy_weight must be >= 0")
        if self.max_grad_norm is not None and not self.max_grad_norm > 0:
            raise ValueError("max_grad_norm must be positive or None")
        if not self.actor_trunk or not self.critic_hidden:
            raise ValueError("network widths must be non-empty")
        if self.precision not in ("float32", "float64"):
            raise ValueError(f"precision must be 'float32' or 'float64', got {self.precision!r}")

    @property
    def updates_per_round(self) -> int:
        return (self.sample_reuse * self.buffer_size) // self.batch_size

    @property
    def rounds(self) -> int:
        return math.ceil(self.total_steps / self.buffer_size)


# ---------------------------------------------------------------------------
# estimators and losses


def discounted_returns(rewards, gamma: float, dones, last_value: float = 0.0) -> np.ndarray:
    """Discounted reward-to-go, restarting after each ``dones[t]``.

    ``last_value`` bootstraps the segment cut by the end of the buffer.
    """
    return kernels.discounted_returns(rewards, dones, gamma, last_value)


def gae(rewards, values, gamma: float, lam: float, dones, last_value: float = 0.0) -> np.ndarray:
    """Generalized advantage estimates using TD residuals
    ``r_t + gamma * V(s_{t+1}) - V(s_t)``, with ``V = 0`` after a terminal step."""
    return kernels.gae(rewards, values, dones, gamma, lam, last_value)


def critic_loss(values, targets) -> float:
    values = np.asarray(values, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    if values.shape != targets.shape:
        raise ValueError("values and targets must be aligned")
    return float(np.mean((values - targets) ** 2))


def surrogate_terms(ratio, advantage, eps: float) -> np.ndarray:
    ratio = np.asarray(ratio, dtype=np.float64)
    advantage = np.asarray(advantage, dtype=np.float64)
    return np.minimum(ratio * advantage, np.clip(ratio, 1 - eps, 1 + eps) * advantage)


def clipped_surrogate(log_prob_new, log_prob_old, advantage, eps: float) -> np.ndarray:
    """Per-sample clipped surrogate; non-finite ratios come back as NaN."""
    with np.errstate(over="ignore", invalid="ignore"):
        ratio = np.exp(np.asarray(log_prob_new, dtype=np.float64) - np.asarray(log_prob_old, dtype=np.float64))
    out = surrogate_terms(ratio, advantage, eps)
    return np.where(np.isfinite(ratio), out, np.nan)


def actor_objective(surrogates, entropies, entropy_weight: float) -> float:
    """Sum over actors of surrogate plus weighted entropy bonus (to be maximized)."""
    s = np.asarray(surrogates, dtype=np.float64)
    h = np.asarray(entropies, dtype=np.float64)
    return float(np.sum(s + entropy_weight * h))


def normalize(x: np.ndarray) -> np.ndarray:
    if len(x) < 2:
        return x - x.mean()
    std = x.std()
    if std < 1e-12:
        return x - x.mean()
    return (x - x.mean()) / std


def smooth(series, window: int = 5) -> np.ndarray:
    """Centred moving average over the ``window`` nearest values (shrinks at the edges)."""
    x = np.asarray(series, dtype=np.float64)
    half = window // 2
    out = np.empty_like(x)
    for i in range(len(x)):
        lo, hi = max(0, i - half), min(len(x), i + half + 1)
        out[i] = np.nanmean(x[lo:hi]) if np.isfinite(x[lo:hi]).any() else np.nan
    return out


class ReturnScale:
    """Running standard deviation of discounted returns (Chan et al. merge).

    Training rewards are divided by it so critic targets stay near unit
    scale whatever the magnitude of ``beta``.
    """

    def __init__(self) -> None:
        self.count = 0
        self.mean = 0.0
        self.m2 = 0.0

    def update(self, x: np.ndarray) -> None:
        x = np.asarray(x, dtype=np.float64)
        n = len(x)
        if n == 0:
            return
        mean = float(x.mean())
        m2 = float(((x - mean) ** 2).sum())
        total = self.count + n
        delta = mean - self.mean
        self.mean += delta * n / total
        self.m2 += m2 + delta**2 * self.count * n / total
        self.count = total

    @property
    def scale(self) -> float:
        if self.count < 2:
            return 1.0
        std = math.sqrt(self.m2 / self.count)
        return std if std > 1e-8 else 1.0


# ---------------------------------------------------------------------------
# agent


class ActResult(NamedTuple):
    action: JointAction
    partition: np.ndarray
    channel: np.ndarray
    raw_power: np.ndarray
    log_prob: np.ndarray  # (N, 3): partition, channel, power heads
    value: float


class MAHPPOAgent:
    """N hybrid actors (stored as one grouped network) plus a critic."""

    def __init__(
        self,
        obs_dim: int,
        n_agents: int,
        n_partitions: int,
        n_channels: int,
        p_min: float,
        p_max: float,
        config: TrainConfig = TrainConfig(),
        rng: np.random.Generator | None = None,
    ):
        rng = rng if rng is not None else np.random.default_rng()
        self.obs_dim = obs_dim
        self.n_agents = n_agents
        self.n_partitions = n_partitions
        self.n_channels = n_channels
        self.p_min = p_min
        self.p_max = p_max
        self.config = config
        self.actors = HybridActor(obs_dim, n_partitions, n_channels, p_max, rng, groups=n_agents,
                                  trunk=config.actor_trunk, branch=config.actor_branch,
                                  dtype=config.precision)
        self.critic = DenseNet([obs_dim, *config.critic_hidden, 1], rng, dtype=config.precision)
        self.actor_opt = Adam(self.actors.params, lr=config.learning_rate)
        self.critic_opt = Adam(self.critic.params, lr=config.learning_rate)

    @classmethod
    def for_env(cls, env, config: TrainConfig = TrainConfig(), rng=None) -> "MAHPPOAgent":
        return cls(env.obs_dim, env.n_agents, env.n_partitions, env.n_channels, env.p_min, env.p_max, config, rng)

    @property
    def dims(self) -> dict[str, int]:
        return {"obs_dim": self.obs_dim, "n_agents": self.n_agents,
                "n_partitions": self.n_partitions, "n_channels": self.n_channels}

    def value(self, obs: np.ndarray) -> np.ndarray:
        return self.critic.forward(np.atleast_2d(obs), record=False)[:, 0].astype(np.float64)

    def act(self, obs: np.ndarray, rng: np.random.Generator | None = None, greedy: bool = False) -> ActResult:
        x = np.asarray(obs, dtype=np.float64)[None, :]
        out = self.actors.forward(x, record=False)
        cp = categorical_head(out.partition_logits[:, 0], rng, greedy=greedy)
        cc = categorical_head(out.channel_logits[:, 0], rng, greedy=greedy)
        gp = gaussian_head(out.mean[:, 0], out.log_std[:, 0], self.p_min, self.p_max, rng, greedy=greedy)
        action = JointAction(cp.sample, cc.sample, gp.executed)
        logp = np.stack([cp.log_prob, cc.log_prob, gp.log_prob], axis=-1)
        value = float(self.critic.forward(x, record=False)[0, 0])
        return ActResult(action, cp.sample, cc.sample, gp.sample, logp, value)

    def policy(self, env, greedy: bool = True, rng=None):
        """Adapter: EnvState -> JointAction."""
        return lambda state: self.act(env.observation(state), rng, greedy=greedy).action

    def score(self, obs: np.ndarray, partition: np.ndarray, channel: np.ndarray, raw_power: np.ndarray):
        """Record a forward pass over a batch and score stored actions.

        ``obs`` is ``(B, D)``; action arrays are ``(N, B)``.
        """
        out = self.actors.forward(obs)
        cp = categorical_head(out.partition_logits, action=partition)
        cc = categorical_head(out.channel_logits, action=channel)
        gp = gaussian_head(out.mean, out.log_std, self.p_min, self.p_max, action=raw_power)
        return out, cp, cc, gp

    # checkpoints -----------------------------------------------------------

    def to_document(self, extra: dict | None = None) -> dict:
        doc = {
            "format": CHECKPOINT_FORMAT,
            "version": CHECKPOINT_VERSION,
            "dims": self.dims,
            "power_bounds": [self.p_min, self.p_max],
            "config": _config_doc(self.config),
            "actor_params": [encode_array(p) for p in self.actors.params],
            "critic_params": [encode_array(p) for p in self.critic.params],
            "actor_optimizer": self.actor_opt.state(),
            "critic_optimizer": self.critic_opt.state(),
        }
        if extra:
            doc.update(extra)
        return doc

    def save(self, path: str | Path, extra: dict | None = None) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.to_document(extra), sort_keys=True, indent=1))
        return path

    @classmethod
    def from_document(cls, doc: dict) -> "MAHPPOAgent":
        if doc.get("format") != CHECKPOINT_FORMAT:
            raise CheckpointError("not a collabinf checkpoint")
        if doc.get("version") != CHECKPOINT_VERSION:
            raise CheckpointError(f"unsupported checkpoint version {doc.get('version')}")
        cfg_doc = dict(doc["config"])
        config = TrainConfig(**cfg_doc)
        p_min, p_max = doc["power_bounds"]
        dims = doc["dims"]
        agent = cls(dims["obs_dim"], dims["n_agents"], dims["n_partitions"], dims["n_channels"],
                    p_min, p_max, config, np.random.default_rng(0))
        for dst, src in zip(agent.actors.params, doc["actor_params"]):
            dst[...] = decode_array(src)
        for dst, src in zip(agent.critic.params, doc["critic_params"]):
            dst[...] = decode_array(src)
        agent.actor_opt.load_state(doc["actor_optimizer"])
        agent.critic_opt.load_state(doc["critic_optimizer"])
        return agent

    @classmethod
    def load(cls, path: str | Path) -> "MAHPPOAgent":
        try:
            doc = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from None
        return cls.from_document(doc)

    def check_compatible(self, env) -> None:
        """Raise CheckpointError naming the first head whose size differs from ``env``."""
        expected = {"n_agents": env.n_agents, "obs_dim": env.obs_dim,
                    "n_partitions": env.n_partitions, "n_channels": env.n_channels}
        labels = {"n_agents": "actor count", "obs_dim": "observation width",
                  "n_partitions": "partition head", "n_channels": "channel head"}
        for key, want in expected.items():
            have = self.dims[key]
            if have != want:
                raise CheckpointError(f"{labels[key]} mismatch: checkpoint has {have}, environment needs {want}")
        if not math.isclose(self.p_max, env.p_max):
            raise CheckpointError(f"power head mismatch: checkpoint p_max {self.p_max}, environment {env.p_max}")

    def snapshot(self) -> list[np.ndarray]:
        return [p.copy() for p in self.actors.params + self.critic.params]

    def restore(self, snap: list[np.ndarray]) -> None:
        for dst, src in zip(self.actors.params + self.critic.params, snap):
            dst[...] = src


def _config_doc(cfg: TrainConfig) -> dict:
    d = asdict(cfg)
    d["actor_trunk"] = list(cfg.actor_trunk)
    d["critic_hidden"] = list(cfg.critic_hidden)
    return d


# ---------------------------------------------------------------------------
# buffer and update


class TrajectoryBuffer:
    def __init__(self, capacity: int, obs_dim: int, n_agents: int):
        self.capacity = capacity
        self.obs = np.zeros((capacity, obs_dim))
        self.next_obs = np.zeros((capacity, obs_dim))
        self.partition = np.zeros((capacity, n_agents), dtype=np.int64)
        self.channel = np.zeros((capacity, n_agents), dtype=np.int64)
        self.raw_power = np.zeros((capacity, n_agents))
        self.log_prob = np.zeros((capacity, n_agents, 3))
        self.reward = np.zeros(capacity)
        self.done = np.zeros(capacity, dtype=bool)
        self.value = np.zeros(capacity)
        self.size = 0
        self.round_tag = np.full(capacity, -1, dtype=np.int64)

    @property
    def full(self) -> bool:
        return self.size >= self.capacity

    def add(self, obs, act: ActResult, reward: float, next_obs, done: bool, round_index: int = 0) -> None:
        if self.full:
            raise OverflowError("trajectory buffer is full")
        i = self.size
        self.obs[i] = obs
        self.next_obs[i] = next_obs
        self.partition[i] = act.partition
        self.channel[i] = act.channel
        self.raw_power[i] = act.raw_power
        self.log_prob[i] = act.log_prob
        self.reward[i] = reward
        self.done[i] = done
        self.value[i] = act.value
        self.round_tag[i] = round_index
        self.size += 1

    def clear(self) -> None:
        self.size = 0
        self.round_tag[:] = -1


class UpdateStats(NamedTuple):
    value_loss: float
    policy_loss: float
    entropy: np.ndarray  # per head
    skipped: int


class MinibatchGrads(NamedTuple):
    critic: list[np.ndarray]
    actor: list[np.ndarray]
    stats: "UpdateStats"


def minibatch_gradients(agent: MAHPPOAgent, obs, partition, channel, raw_power, old_logp, adv, returns,
                        cfg: TrainConfig) -> MinibatchGrads:
    """Losses and their exact gradients for the critic and all actors.

    Action arrays are ``(B, N)``; ``old_logp`` is ``(B, N)`` (summed over heads).
    The policy loss is minus the sum over actors of the mean clipped
    surrogate plus ``entropy_weight`` times the mean summed head entropy.
    """
    B = obs.shape[0]
    # critic
    v = agent.critic.forward(obs)[:, 0].astype(np.float64)
    value_loss = critic_loss(v, returns)
    g_critic, _ = agent.critic.backward((2.0 * (v - returns) / B)[:, None])

    # actors, everything (N, B)
    out, cp, cc, gp = agent.score(obs, partition.T, channel.T, raw_power.T)
    new_logp = cp.log_prob + cc.log_prob + gp.log_prob
    with np.errstate(over="ignore", invalid="ignore"):
        ratio = np.exp(new_logp - old_logp.T)
    valid = np.isfinite(ratio)
    skipped = int((~valid).sum())
    ratio = np.where(valid, ratio, 1.0)
    A = np.broadcast_to(adv[None, :], ratio.shape)
    eps = cfg.clip_epsilon
    unclipped = ratio * A
    clipped = np.clip(ratio, 1 - eps, 1 + eps) * A
    surr = np.where(valid, np.minimum(unclipped, clipped), 0.0)
    n_valid = np.maximum(valid.sum(axis=1, keepdims=True), 1)
    surr_mean = surr.sum(axis=1) / n_valid[:, 0]
    ent_heads = np.stack([cp.entropy, cc.entropy, gp.entropy])  # (3, N, B)
    ent_mean = ent_heads.sum(axis=0).mean(axis=1)
    policy_loss = -actor_objective(surr_mean, ent_mean, cfg.entropy_weight)

    # d(loss)/d(new_logp) and d(loss)/d(entropy of each head)
    d_logp = -np.where(valid & (unclipped <= clipped), unclipped, 0.0) / n_valid
    d_ent = -cfg.entropy_weight / B
    dlp_part, dent_part = categorical_grads(cp.probs, cp.sample, cp.entropy)
    dlp_chan, dent_chan = categorical_grads(cc.probs, cc.sample, cc.entropy)
    dlp_mu, dlp_ls, dent_ls = gaussian_grads(out.mean, out.log_std, gp.sample)
    g_actor = agent.actors.backward(
        d_logp[..., None] * dlp_part + d_ent * dent_part,
        d_logp[..., None] * dlp_chan + d_ent * dent_chan,
        d_logp * dlp_mu,
        d_logp * dlp_ls + d_ent * dent_ls,
    )
    stats = UpdateStats(value_loss, policy_loss, ent_heads.mean(axis=(1, 2)), skipped)
    return MinibatchGrads(g_critic, g_actor, stats)


def update_minibatch(agent: MAHPPOAgent, obs, partition, channel, raw_power, old_logp, adv, returns,
                     cfg: TrainConfig) -> UpdateStats:
    """One clipped-gradient Adam step for the critic and all actors."""
    g = minibatch_gradients(agent, obs, partition, channel, raw_power, old_logp, adv, returns, cfg)
    if cfg.max_grad_norm is not None:
        clip_grad_norm(g.critic, cfg.max_grad_norm)
        clip_grad_norm(g.actor, cfg.max_grad_norm, grouped=True)
    if not (math.isfinite(g.stats.value_loss) and math.isfinite(g.stats.policy_loss)):
        return g.stats
    agent.critic_opt.step(g.critic)
    agent.actor_opt.step(g.actor)
    return g.stats


# ---------------------------------------------------------------------------
# training loop


@dataclass
class TrainingResult:
    rows: list[dict[str, Any]] = field(default_factory=list)
    episode_returns: list[float] = field(default_factory=list)
    seconds: list[float] = field(default_factory=list)
    skipped_samples: int = 0

    def rewards(self) -> np.ndarray:
        return np.array([r["mean_cumulative_reward"] for r in self.rows], dtype=np.float64)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(LOG_COLUMNS)
        for row in self.rows:
            w.writerow([_fmt(row[c]) for c in LOG_COLUMNS])
        return buf.getvalue()


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def train(
    env,
    agent: MAHPPOAgent,
    config: TrainConfig,
    seed: int,
    log_path: str | Path | None = None,
    checkpoint_dir: str | Path | None = None,
    checkpoint_every: int = 0,
) -> TrainingResult:
    """Run MAHPPO until ``config.total_steps`` environment steps are collected.

    Deterministic given ``seed`` and the agent's initial parameters.  The
    environment's generator is replaced by the seed's ``env`` stream.
    """
    env.rng = stream(seed, "env")
    sample_rng = stream(seed, "sampling")
    batch_rng = stream(seed, "minibatch")
    buf = TrajectoryBuffer(config.buffer_size, env.obs_dim, env.n_agents)
    result = TrainingResult()
    start = time.perf_counter()
    ckpt_dir = Path(checkpoint_dir) if checkpoint_dir is not None else None
    last_ckpt: Path | None = None

    scaler = ReturnScale()
    state = env.reset()
    obs = env.observation(state)
    ep_return = 0.0
    steps = 0
    for rnd in range(1, config.rounds + 1):
        snapshot = agent.snapshot()
        round_returns = []
        buf.clear()
        while not buf.full:
            act = agent.act(obs, sample_rng)
            state, outcome = env.step(state, act.action)
            next_obs = env.observation(state)
            buf.add(obs, act, outcome.reward, next_obs, outcome.done, rnd)
            ep_return += outcome.reward
            steps += 1
            if outcome.done:
                round_returns.append(ep_return)
                result.episode_returns.append(ep_return)
                ep_return = 0.0
                state = env.reset()
                next_obs = env.observation(state)
            obs = next_obs

        n = buf.size
        rewards = buf.reward[:n]
        if config.scale_rewards:
            scaler.update(discounted_returns(rewards, config.gamma, buf.done[:n]))
            rewards = rewards / scaler.scale
        last_value = 0.0 if buf.done[n - 1] else float(agent.value(obs)[0])
        returns = discounted_returns(rewards, config.gamma, buf.done[:n], last_value)
        adv = gae(rewards, buf.value[:n], config.gamma, config.gae_lambda, buf.done[:n], last_value)
        if config.normalize_advantages:
            adv = normalize(adv)
        old_logp = buf.log_prob[:n].sum(axis=-1)

        vl, pl, ents = [], [], []
        per_pass = max(1, n // config.batch_size)
        order = batch_rng.permutation(n)
        for u in range(config.updates_per_round):
            if u % per_pass == 0 and u:
                order = batch_rng.permutation(n)
            j = u % per_pass
            idx = np.sort(order[j * config.batch_size:(j + 1) * config.batch_size])
            stats = update_minibatch(agent, buf.obs[idx], buf.partition[idx], buf.channel[idx],
                                     buf.raw_power[idx], old_logp[idx], adv[idx], returns[idx], config)
            if not (math.isfinite(stats.value_loss) and math.isfinite(stats.policy_loss)):
                agent.restore(snapshot)
                raise TrainingDiverged(f"non-finite loss in round {rnd}, update {u}", last_ckpt)
            result.skipped_samples += stats.skipped
            vl.append(stats.value_loss)
            pl.append(stats.policy_loss)
            ents.append(stats.entropy)
        buf.clear()

        ent = np.mean(ents, axis=0) if ents else np.full(3, np.nan)
        row = {
            "env_steps": steps,
            "round": rnd,
            "mean_cumulative_reward": float(np.mean(round_returns)) if round_returns else float("nan"),
            "value_loss": float(np.mean(vl)) if vl else float("nan"),
            "policy_loss": float(np.mean(pl)) if pl else float("nan"),
            "mean_entropy_partition": float(ent[0]),
            "mean_entropy_channel": float(ent[1]),
            "mean_entropy_power": float(ent[2]),
        }
        result.rows.append(row)
        result.seconds.append(time.perf_counter() - start)
        log.info("round %d steps %d reward %.4f vloss %.4g", rnd, steps, row["mean_cumulative_reward"],
                 row["value_loss"])
        if ckpt_dir is not None and checkpoint_every and rnd % checkpoint_every == 0:
            last_ckpt = agent.save(ckpt_dir / f"round_{rnd:05d}.json",
                                   {"round": rnd, "env_steps": steps, "rng": _rng_doc(env, sample_rng, batch_rng)})
        if log_path is not None:
            Path(log_path).write_text(result.to_csv())
    if ckpt_dir is not None:
        agent.save(ckpt_dir / "final.json",
                   {"round": config.rounds, "env_steps": steps, "rng": _rng_doc(env, sample_rng, batch_rng)})
    return result


def _rng_doc(env, sample_rng, batch_rng) -> dict:
    return {"env": rng_state(env.rng), "sampling": rng_state(sample_rng), "minibatch": rng_state(batch_rng)}


def restore_streams(doc: dict) -> dict[str, np.random.Generator]:
    return {k: restore_rng(v) for k, v in doc["rng"].items()}


def make_agent(env, config: TrainConfig, seed: int) -> MAHPPOAgent:
    return MAHPPOAgent.for_env(env, config, stream(seed, "init"))
