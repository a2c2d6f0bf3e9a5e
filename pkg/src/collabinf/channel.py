"""Wireless uplink model: path-loss gains and interference-limited rates.

Channels are indexed from 0 in code (``0..C-1``).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np


class ChannelError(ValueError):
    pass


@dataclass(frozen=True)
class ChannelConfig:
    """Static channel parameters.

    ``bandwidth`` and ``noise`` accept a scalar (shared by all channels) or one
    value per channel.  With ``same_channel_interference`` off, every other
    offloading UE interferes regardless of its channel.
    """

    channel_count: int = 2
    bandwidth: float | tuple[float, ...] = 1e6
    noise: float | tuple[float, ...] = 1e-9
    path_loss_exponent: float = 3.0
    p_max: float = 0.5
    same_channel_interference: bool = True

    def __post_init__(self) -> None:
        if isinstance(self.channel_count, bool) or not isinstance(self.channel_count, (int, np.integer)):
            raise ChannelError("channel_count must be an integer")
        if self.channel_count < 1:
            raise ChannelError(f"channel_count must be >= 1, got {self.channel_count}")
        for name in ("bandwidth", "noise"):
            v = getattr(self, name)
            if np.ndim(v) == 0:
                vals = (float(v),) * self.channel_count
            else:
                vals = tuple(float(x) for x in v)
                if len(vals) != self.channel_count:
                    raise ChannelError(f"{name} needs {self.channel_count} entries, got {len(vals)}")
            if not all(np.isfinite(x) and x > 0 for x in vals):
                raise ChannelError(f"{name} must be positive")
            object.__setattr__(self, name, vals)
        if not self.path_loss_exponent > 0:
            raise ChannelError("path_loss_exponent must be positive")
        if not self.p_max > 0:
            raise ChannelError("p_max must be positive")

    @property
    def p_min(self) -> float:
        """Smallest executed power; sampled powers are clipped to ``[p_min, p_max]``."""
        return 1e-3 * self.p_max

    @property
    def bandwidth_array(self) -> np.ndarray:
        return np.asarray(self.bandwidth, dtype=np.float64)

    @property
    def noise_array(self) -> np.ndarray:
        return np.asarray(self.noise, dtype=np.float64)


def channel_gain(distance, exponent: float):
    """Path-loss gain ``d ** -l``; distances below 1 m are outside the model."""
    d = np.asarray(distance, dtype=np.float64)
    if exponent <= 0:
        raise ChannelError("path-loss exponent must be positive")
    if np.any(d < 1):
        raise ChannelError("distance must be >= 1 m")
    g = d ** (-float(exponent))
    return float(g) if g.ndim == 0 else g


@dataclass(frozen=True)
class RadioState:
    distances: tuple[float, ...]
    exponent: float = 3.0
    gains: tuple[float, ...] = field(init=False)

    def __post_init__(self) -> None:
        d = tuple(float(x) for x in np.atleast_1d(self.distances))
        object.__setattr__(self, "distances", d)
        object.__setattr__(self, "gains", tuple(np.atleast_1d(channel_gain(np.array(d), self.exponent)).tolist()))

    @property
    def gain_array(self) -> np.ndarray:
        return np.asarray(self.gains, dtype=np.float64)


@dataclass(frozen=True)
class JointAction:
    """Per-UE partition point, channel index and transmit power."""

    partition: np.ndarray
    channel: np.ndarray
    power: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "partition", np.asarray(self.partition, dtype=np.int64).reshape(-1))
        object.__setattr__(self, "channel", np.asarray(self.channel, dtype=np.int64).reshape(-1))
        object.__setattr__(self, "power", np.asarray(self.power, dtype=np.float64).reshape(-1))
        n = len(self.partition)
        if len(self.channel) != n or len(self.power) != n:
            raise ChannelError("partition, channel and power must have one entry per UE")

    def __len__(self) -> int:
        return len(self.partition)

    def violations(self, n_points: int | Sequence[int], channel_count: int, p_max: float) -> list[str]:
        """Constraint C1-C3 violations as readable messages (empty when valid)."""
        pts = np.broadcast_to(np.asarray(n_points), self.partition.shape)
        p = self.power
        ok = ((self.partition >= 0) & (self.partition < pts) & (self.channel >= 0)
              & (self.channel < channel_count) & np.isfinite(p) & (p > 0) & (p <= p_max))
        if ok.all():
            return []
        out = []
        for n, (b, c, p, nb) in enumerate(zip(self.partition, self.channel, self.power, pts)):
            if not 0 <= b < nb:
                out.append(f"ue {n}: partition {b} outside 0..{nb - 1}")
            if not 0 <= c < channel_count:
                out.append(f"ue {n}: channel {c} outside 0..{channel_count - 1}")
            if not (np.isfinite(p) and 0 < p <= p_max):
                out.append(f"ue {n}: power {p} outside (0, {p_max}]")
        return out


def rate_matrix(
    power: np.ndarray,
    gains: np.ndarray,
    declared_channel: np.ndarray,
    interferes: np.ndarray,
    cfg: ChannelConfig,
) -> np.ndarray:
    """Uplink rate of every UE on every channel, shape ``(N, C)``.

    ``interferes[i]`` marks UEs whose declared action offloads this frame; they
    contribute ``p_i g_i`` to the interference on their declared channel (or
    on all channels when same-channel filtering is off).  A UE never
    interferes with itself.
    """
    power = np.asarray(power, dtype=np.float64)
    gains = np.asarray(gains, dtype=np.float64)
    rx = power * gains
    C = cfg.channel_count
    n = len(rx)
    if n == 1:
        return cfg.bandwidth_array[None, :] * np.log2(1.0 + rx[:, None] / cfg.noise_array[None, :])
    # others[n, i] = p_i g_i for interfering i != n; summed without the
    # subtract-self trick so removing an interferer is exact
    others = np.where(interferes, rx, 0.0)[None, :] * (1.0 - np.eye(n))
    if cfg.same_channel_interference:
        onehot = np.zeros((n, C))
        onehot[np.arange(n), declared_channel] = 1.0
        interference = others @ onehot
    else:
        interference = np.repeat(others.sum(axis=1)[:, None], C, axis=1)
    sinr = rx[:, None] / (cfg.noise_array[None, :] + interference)
    return cfg.bandwidth_array[None, :] * np.log2(1.0 + sinr)


def uplink_rate(
    ue: int,
    actions: JointAction,
    radio: RadioState,
    cfg: ChannelConfig,
    local_index: int | Sequence[int],
) -> float:
    """Rate in bit/s of offloading UE ``ue`` under the joint action.

    ``local_index`` is ``B + 1`` (scalar or per UE); UEs choosing it run
    locally and neither transmit nor interfere.
    """
    local = np.broadcast_to(np.asarray(local_index), actions.partition.shape)
    if actions.partition[ue] == local[ue]:
        raise ChannelError(f"ue {ue} runs locally; it has no uplink rate")
    offload = actions.partition != local
    p = actions.power
    bad = offload & ~((p > 0) & (p <= cfg.p_max))
    if np.any(bad):
        i = int(np.flatnonzero(bad)[0])
        raise ChannelError(f"ue {i}: power {p[i]} outside (0, {cfg.p_max}]")
    if np.any((actions.channel < 0) | (actions.channel >= cfg.channel_count)):
        raise ChannelError("channel index out of range")
    rates = rate_matrix(p, radio.gain_array, actions.channel, offload, cfg)
    return float(rates[ue, actions.channel[ue]])
