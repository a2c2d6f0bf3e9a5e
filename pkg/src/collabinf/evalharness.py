"""Baseline policies, the fixed evaluation protocol, and the beta / UE-count sweeps.

Evaluation always runs the environment in evaluation mode (every UE at the
same distance with the same task count).  Trained agents act greedily.  Each
episode yields the mean per-task latency and energy; truncated episodes are
reported but left out of the aggregates.
"""
from __future__ import annotations

import csv
import io
import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy.stats import spearmanr

from .channel import JointAction
from .mahppo import MAHPPOAgent, TrainConfig, make_agent, smooth, train
from .seeding import stream
from .simenv import CollabInferenceEnv, EnvConfig, EnvState, run_episode

log = logging.getLogger(__name__)


class ConstraintViolation(RuntimeError):
    def __init__(self, policy: str, frame: int, problems: list[str]):
        self.policy = policy
        self.frame = frame
        self.problems = problems
        super().__init__(f"{policy} broke C1-C3 at frame {frame}: " + "; ".join(problems))


# ---------------------------------------------------------------------------
# policies


class Policy:
    """Maps an environment state to a joint action."""

    name = "policy"

    def reset(self, seed: int) -> None:
        """Called before every evaluation episode."""

    def __call__(self, state: EnvState) -> JointAction:
        raise NotImplementedError


class AgentPolicy(Policy):
    """Greedy trained agent: argmax of both categorical heads, mean power."""

    name = "agent"

    def __init__(self, agent: MAHPPOAgent, env: CollabInferenceEnv):
        agent.check_compatible(env)
        self.agent = agent
        self.env = env

    def __call__(self, state: EnvState) -> JointAction:
        return self.agent.act(self.env.observation(state), greedy=True).action


class LocalPolicy(Policy):
    """Every UE runs every task on the device."""

    name = "local"

    def __init__(self, env: CollabInferenceEnv):
        n = env.n_agents
        self.action = JointAction([env.config.local_index] * n, [0] * n, [env.p_max] * n)

    def __call__(self, state: EnvState) -> JointAction:
        return self.action


class RandomPolicy(Policy):
    """Uniform partition and channel, power uniform on ``[p_min, p_max]``."""

    name = "random"

    def __init__(self, env: CollabInferenceEnv, seed: int = 0):
        self.env = env
        self.base_seed = seed
        self.rng = stream(seed, "random-policy")

    def reset(self, seed: int) -> None:
        self.rng = stream(self.base_seed * 1_000_003 + seed, "random-policy")

    def __call__(self, state: EnvState) -> JointAction:
        n, env = self.env.n_agents, self.env
        return JointAction(
            self.rng.integers(0, env.n_partitions, n),
            self.rng.integers(0, env.n_channels, n),
            self.rng.uniform(env.p_min, env.p_max, n),
        )


class FixedPolicy(Policy):
    """Repeats one joint action forever."""

    name = "fixed"

    def __init__(self, action: JointAction):
        self.action = action

    def __call__(self, state: EnvState) -> JointAction:
        return self.action


def guarded(policy: Policy, env: CollabInferenceEnv) -> Callable[[EnvState], JointAction]:
    """Wrap ``policy`` so any C1-C3 violation aborts with diagnostics."""

    def act(state: EnvState) -> JointAction:
        action = policy(state)
        problems = [] if len(action) == env.n_agents else [f"{len(action)} actions for {env.n_agents} UEs"]
        problems += action.violations(env.config.n_points, env.n_channels, env.p_max)
        if problems:
            raise ConstraintViolation(policy.name, state.frame_index, problems)
        return action

    return act


# ---------------------------------------------------------------------------
# reports

ROW_FIELDS = ("seed", "episode", "frames", "tasks", "completed", "latency_per_task", "energy_per_task",
              "overhead_per_task", "episode_return", "truncated", "violations")


@dataclass(frozen=True)
class EpisodeRow:
    seed: int
    episode: int
    frames: int
    tasks: int
    completed: int
    latency_per_task: float
    energy_per_task: float
    overhead_per_task: float
    episode_return: float
    truncated: bool
    violations: int = 0


@dataclass
class EvalReport:
    policy: str
    beta: float
    config_hash: str
    seeds: tuple[int, ...]
    rows: list[EpisodeRow] = field(default_factory=list)
    violation_messages: list[str] = field(default_factory=list)

    @property
    def valid_rows(self) -> list[EpisodeRow]:
        return [r for r in self.rows if not r.truncated and r.violations == 0]

    @property
    def truncated_count(self) -> int:
        return sum(r.truncated for r in self.rows)

    @property
    def violations(self) -> int:
        return sum(r.violations for r in self.rows)

    def seed_means(self, metric: str) -> np.ndarray:
        """Per-seed mean of ``metric`` over that seed's valid episodes."""
        out = []
        for s in self.seeds:
            vals = [getattr(r, metric) for r in self.valid_rows if r.seed == s]
            if vals:
                out.append(float(np.mean(vals)))
        return np.array(out)

    def aggregate(self, metric: str) -> tuple[float, float]:
        """Mean and (population) standard deviation over replicate seeds."""
        m = self.seed_means(metric)
        if len(m) == 0:
            return math.nan, math.nan
        return float(m.mean()), float(m.std())

    def summary(self) -> dict:
        out = {
            "policy": self.policy,
            "beta": self.beta,
            "config_hash": self.config_hash,
            "seeds": list(self.seeds),
            "episodes": len(self.rows),
            "truncated": self.truncated_count,
            "violations": self.violations,
        }
        for metric in ("latency_per_task", "energy_per_task", "overhead_per_task"):
            mean, std = self.aggregate(metric)
            out[f"{metric}_mean"] = mean
            out[f"{metric}_std"] = std
        if self.violation_messages:
            out["violation_messages"] = list(self.violation_messages)
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(ROW_FIELDS)
        for r in self.rows:
            w.writerow([_cell(getattr(r, f)) for f in ROW_FIELDS])
        return buf.getvalue()

    def write(self, directory: str | Path, stem: str = "eval") -> tuple[Path, Path]:
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        csv_path = d / f"{stem}.csv"
        json_path = d / f"{stem}.json"
        csv_path.write_text(self.to_csv())
        json_path.write_text(json.dumps(self.summary(), sort_keys=True, indent=2) + "\n")
        return csv_path, json_path


def _cell(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def env_fingerprint(config: EnvConfig) -> str:
    from .config import document_hash

    doc = asdict(replace(config, profiles=()))
    doc["profiles"] = [p.to_document() for p in config.profiles]
    return document_hash(doc)


def evaluation_config(config: EnvConfig) -> EnvConfig:
    return config if config.eval_mode else replace(config, eval_mode=True)


def evaluate(
    policy: Policy | Callable[[CollabInferenceEnv], Policy],
    env_config: EnvConfig,
    episodes: int = 1,
    seeds: Sequence[int] = (0,),
) -> EvalReport:
    """Run ``episodes`` evaluation episodes for every seed.

    ``policy`` may be a ready policy or a factory taking the environment.  A
    C1-C3 violation ends that episode; it is recorded in the report rather
    than raised.
    """
    cfg = evaluation_config(env_config)
    env = CollabInferenceEnv(cfg)
    pol = policy if isinstance(policy, Policy) else policy(env)
    report = EvalReport(pol.name, cfg.beta, env_fingerprint(cfg), tuple(int(s) for s in seeds))
    act = guarded(pol, env)
    for seed in report.seeds:
        for ep in range(episodes):
            pol.reset(seed * 100_003 + ep)
            env.rng = stream(seed, f"eval-{ep}")
            try:
                trace = run_episode(env, act)
            except ConstraintViolation as exc:
                report.violation_messages.append(f"seed {seed} episode {ep}: {exc}")
                report.rows.append(EpisodeRow(seed, ep, exc.frame, 0, 0, math.nan, math.nan, math.nan,
                                              math.nan, False, len(exc.problems)))
                continue
            done = int(trace.per_ue("completed_per_ue").sum())
            lat = float(trace.per_ue("latency_sum").sum())
            en = float(trace.per_ue("completed_energy").sum())
            lat_pt = lat / done if done else math.nan
            en_pt = en / done if done else math.nan
            report.rows.append(EpisodeRow(
                seed=seed,
                episode=ep,
                frames=trace.frames,
                tasks=int(trace.initial_tasks.sum()),
                completed=done,
                latency_per_task=lat_pt,
                energy_per_task=en_pt,
                overhead_per_task=lat_pt + cfg.beta * en_pt,
                episode_return=float(trace.rewards.sum()),
                truncated=bool(trace.truncated),
            ))
    return report


def training_returns(
    policy: Policy | Callable[[CollabInferenceEnv], Policy],
    env_config: EnvConfig,
    episodes: int = 100,
    seed: int = 0,
) -> np.ndarray:
    """Episode returns on the training distribution (random distances and task counts).

    This is the scale of the training log's ``mean_cumulative_reward``, so a
    baseline's mean return can be drawn next to a learning curve.
    """
    cfg = replace(env_config, eval_mode=False)
    env = CollabInferenceEnv(cfg, stream(seed, "baseline"))
    pol = policy if isinstance(policy, Policy) else policy(env)
    act = guarded(pol, env)
    out = np.empty(episodes)
    for ep in range(episodes):
        pol.reset(seed * 100_003 + ep)
        out[ep] = run_episode(env, act).rewards.sum()
    return out


# ---------------------------------------------------------------------------
# training cells and sweeps


@dataclass
class CellResult:
    """One trained agent (or its absence) inside a sweep."""

    key: float
    seed: int
    checkpoint: Path
    present: bool
    report: EvalReport | None = None
    rewards: np.ndarray | None = None
    env_steps: np.ndarray | None = None


def write_timing_csv(path: str | Path, rows: list[dict], seconds: list[float]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["round", "env_steps", "seconds_elapsed"])
        for row, sec in zip(rows, seconds):
            w.writerow([row["round"], row["env_steps"], f"{sec:.3f}"])


def train_cell(env_config: EnvConfig, train_config: TrainConfig, seed: int, out_dir: str | Path,
               checkpoint_every: int = 0) -> Path:
    """Train one agent into ``out_dir`` (log.csv, timing.csv, checkpoints/final.json)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    env = CollabInferenceEnv(env_config)
    agent = make_agent(env, train_config, seed)
    result = train(env, agent, train_config, seed, log_path=out / "log.csv",
                   checkpoint_dir=out / "checkpoints", checkpoint_every=checkpoint_every)
    write_timing_csv(out / "timing.csv", result.rows, result.seconds)
    return out / "checkpoints" / "final.json"


def read_log(path: str | Path) -> tuple[np.ndarray, np.ndarray]:
    """``(env_steps, mean_cumulative_reward)`` columns of a training log."""
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    steps = np.array([int(r["env_steps"]) for r in rows])
    rewards = np.array([float(r["mean_cumulative_reward"]) for r in rows])
    return steps, rewards


def cell_dir(root: str | Path, prefix: str, key: float, seed: int) -> Path:
    label = f"{key:g}" if isinstance(key, float) else str(key)
    return Path(root) / f"{prefix}_{label}" / f"seed_{seed}"


def _run_cells(
    root: str | Path,
    prefix: str,
    keys: Sequence,
    seeds: Sequence[int],
    env_for: Callable[[object], EnvConfig],
    train_config: TrainConfig,
    episodes: int,
    train_missing: bool,
) -> list[CellResult]:
    cells = []
    for key in keys:
        env_cfg = env_for(key)
        for seed in seeds:
            d = cell_dir(root, prefix, key, seed)
            ckpt = d / "checkpoints" / "final.json"
            if not ckpt.exists() and train_missing:
                t0 = time.perf_counter()
                train_cell(env_cfg, train_config, seed, d)
                log.info("trained %s=%s seed %d in %.1fs", prefix, key, seed, time.perf_counter() - t0)
            if not ckpt.exists():
                cells.append(CellResult(key, seed, ckpt, present=False))
                continue
            agent = MAHPPOAgent.load(ckpt)
            report = evaluate(lambda env: AgentPolicy(agent, env), env_cfg, episodes, (seed,))
            steps, rewards = read_log(d / "log.csv") if (d / "log.csv").exists() else (None, None)
            cells.append(CellResult(key, seed, ckpt, True, report, rewards, steps))
    return cells


@dataclass
class SweepResult:
    parameter: str
    keys: tuple
    cells: list[CellResult]
    baseline: dict = field(default_factory=dict)  # key -> local EvalReport

    def absent(self) -> list[tuple]:
        return [(c.key, c.seed, str(c.checkpoint)) for c in self.cells if not c.present]

    def _seed_values(self, key, metric: str) -> np.ndarray:
        vals = []
        for c in self.cells:
            if c.key == key and c.present:
                v = c.report.seed_means(metric)
                if len(v):
                    vals.append(float(v[0]))
        return np.array(vals)

    def table(self) -> list[dict]:
        rows = []
        for key in self.keys:
            row: dict = {self.parameter: key}
            present = [c for c in self.cells if c.key == key and c.present]
            row["replicates"] = len(present)
            row["absent_seeds"] = " ".join(str(c.seed) for c in self.cells if c.key == key and not c.present)
            for metric, label in (("latency_per_task", "latency"), ("energy_per_task", "energy"),
                                  ("overhead_per_task", "overhead")):
                v = self._seed_values(key, metric)
                row[f"{label}_mean"] = float(v.mean()) if len(v) else math.nan
                row[f"{label}_std"] = float(v.std()) if len(v) else math.nan
            if key in self.baseline:
                local = self.baseline[key].aggregate("overhead_per_task")[0]
                row["local_overhead"] = local
                row["relative_gap"] = (local - row["overhead_mean"]) / local
            rows.append(row)
        return rows

    def trend(self, column: str) -> float:
        """Spearman correlation between the swept parameter and a table column."""
        rows = [r for r in self.table() if np.isfinite(r[column])]
        if len(rows) < 2:
            return math.nan
        xs = [r[self.parameter] for r in rows]
        ys = [r[column] for r in rows]
        if len(set(ys)) < 2:
            return 0.0
        return float(spearmanr(xs, ys).statistic)

    def table_csv(self) -> str:
        rows = self.table()
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        cols = list(rows[0].keys()) if rows else [self.parameter]
        w.writerow(cols)
        for r in rows:
            w.writerow([_cell(r[c]) for c in cols])
        return buf.getvalue()

    def curves_csv(self, window: int = 5) -> str:
        """Per-cell training curves, raw and smoothed over ``window`` rounds."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow([self.parameter, "seed", "round", "env_steps", "reward_raw", "reward_smoothed"])
        for c in self.cells:
            if c.rewards is None:
                continue
            sm = smooth(c.rewards, window)
            for i, (st, raw, s) in enumerate(zip(c.env_steps, c.rewards, sm), start=1):
                w.writerow([c.key, c.seed, i, int(st), _cell(raw), _cell(s)])
        return buf.getvalue()

    def write(self, directory: str | Path, stem: str) -> dict[str, Path]:
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        paths = {"table": d / f"{stem}_table.csv", "curves": d / f"{stem}_curves.csv",
                 "summary": d / f"{stem}_summary.json"}
        paths["table"].write_text(self.table_csv())
        paths["curves"].write_text(self.curves_csv())
        summary = {"parameter": self.parameter, "keys": list(self.keys), "absent": self.absent(),
                   "table": self.table()}
        summary.update(self.trends())
        paths["summary"].write_text(json.dumps(summary, sort_keys=True, indent=2, default=_json_num) + "\n")
        return paths

    def trends(self) -> dict:
        out = {f"spearman_{col}": self.trend(col) for col in ("latency_mean", "energy_mean", "overhead_mean")}
        if self.baseline:
            out["spearman_relative_gap"] = self.trend("relative_gap")
        return out


def _json_num(v):
    if isinstance(v, np.generic):
        return v.item()
    raise TypeError(type(v).__name__)


def sweep_beta(
    env_config: EnvConfig,
    train_config: TrainConfig,
    root: str | Path,
    values: Iterable[float] = (0.01, 0.1, 1.0, 10.0, 100.0, 1000.0),
    seeds: Sequence[int] = (0, 1, 2, 3, 4),
    episodes: int = 1,
    train_missing: bool = True,
) -> SweepResult:
    """One agent per (beta, seed); rows sorted by beta."""
    keys = tuple(sorted(float(v) for v in values))
    cells = _run_cells(root, "beta", keys, seeds, lambda b: replace(env_config, beta=b),
                       train_config, episodes, train_missing)
    return SweepResult("beta", keys, cells)


def sweep_ue_count(
    env_config: EnvConfig,
    train_config: TrainConfig,
    root: str | Path,
    counts: Iterable[int] = range(3, 11),
    seeds: Sequence[int] = (0, 1, 2, 3, 4),
    episodes: int = 1,
    train_missing: bool = True,
) -> SweepResult:
    """One agent per (N, seed) plus the full-local baseline at every N."""
    keys = tuple(sorted(int(n) for n in counts))

    def env_for(n: int) -> EnvConfig:
        profiles = env_config.profiles if len(set(env_config.profiles)) > 1 else env_config.profiles[:1]
        if len(profiles) not in (1, n):
            raise ValueError(f"cannot spread {len(profiles)} profiles over {n} UEs")
        return replace(env_config, ue_count=n, profiles=profiles)

    cells = _run_cells(root, "ue", keys, seeds, env_for, train_config, episodes, train_missing)
    baseline = {n: evaluate(LocalPolicy, env_for(n), 1, (0,)) for n in keys}
    return SweepResult("ue_count", keys, cells, baseline)
