"""Single-step control problems with known optima, for checking the trainer."""
from __future__ import annotations

from typing import NamedTuple

import numpy as np

from .channel import JointAction


class ToyState(NamedTuple):
    done: bool = False


class ToyOutcome(NamedTuple):
    reward: float
    done: bool = True
    truncated: bool = False


class _OneShotEnv:
    n_agents = 1
    n_channels = 1
    obs_dim = 1

    def __init__(self, n_partitions: int = 2, p_max: float = 1.0, rng: np.random.Generator | None = None):
        self.n_partitions = n_partitions
        self.p_max = p_max
        self.p_min = 1e-3 * p_max
        self.rng = rng if rng is not None else np.random.default_rng()

    def reset(self, seed: int | None = None) -> ToyState:
        if seed is not None:
            self.rng = np.random.default_rng(seed)
        return ToyState()

    def observation(self, state: ToyState) -> np.ndarray:
        return np.ones(1)

    def step(self, state: ToyState, action: JointAction):
        return ToyState(done=True), ToyOutcome(self.reward(action))

    def reward(self, action: JointAction) -> float:
        raise NotImplementedError


class DominantPartitionBandit(_OneShotEnv):
    """Partition ``best`` pays 1, every other partition pays 0."""

    def __init__(self, n_partitions: int = 2, best: int = 1, **kw):
        super().__init__(n_partitions, **kw)
        self.best = best

    def reward(self, action: JointAction) -> float:
        return 1.0 if int(action.partition[0]) == self.best else 0.0


class PowerTargetEnv(_OneShotEnv):
    """Reward ``-(p - target)**2`` on the executed power; optimum ``p = target``."""

    def __init__(self, target: float = 0.3, **kw):
        super().__init__(**kw)
        self.target = target

    def reward(self, action: JointAction) -> float:
        return -float((action.power[0] - self.target) ** 2)
