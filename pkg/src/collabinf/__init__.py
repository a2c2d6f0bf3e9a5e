"""Simulator and multi-agent PPO trainer for collaborative edge inference."""

__version__ = "0.1.0"

from .channel import ChannelConfig, JointAction, RadioState, channel_gain, uplink_rate
from .profiles import (
    DeviceProfile,
    QuantizerConfig,
    builtin_profile,
    compression_rate,
    dequantize,
    load_profile,
    quantize,
)
from .simenv import CollabInferenceEnv, EnvConfig, EnvState, FrameOutcome, run_episode, task_overhead
from .mahppo import MAHPPOAgent, TrainConfig, make_agent, train

__all__ = [
    "ChannelConfig", "JointAction", "RadioState", "channel_gain", "uplink_rate",
    "DeviceProfile", "QuantizerConfig", "builtin_profile", "compression_rate", "dequantize",
    "load_profile", "quantize",
    "CollabInferenceEnv", "EnvConfig", "EnvState", "FrameOutcome", "run_episode", "task_overhead",
    "MAHPPOAgent", "TrainConfig", "make_agent", "train",
]
