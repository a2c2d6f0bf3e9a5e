"""Device profiles and the feature quantizer.

A :class:`DeviceProfile` replaces on-device DNN execution: for every
partitioning point ``b`` in ``0..B+1`` it stores the latency and energy of
running the model prefix, of compressing the intermediate feature, and the
size of the payload that would be offloaded.  ``b = 0`` offloads the raw
input and ``b = B + 1`` runs the whole model on the device.
"""
from __future__ import annotations

import io
import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Any, Mapping

import numpy as np
import yaml

ARRAY_FIELDS = (
    "local_latency",
    "compress_latency",
    "local_energy",
    "compress_energy",
    "payload_bits",
)
DEFAULT_UNITS = {"latency": "s", "energy": "J", "payload": "bit"}


class ProfileError(ValueError):
    """A profile document failed schema or invariant validation."""

    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"{field}: {message}")


class QuantizerError(ValueError):
    pass


@dataclass(frozen=True)
class DeviceProfile:
    """Per-partition-point overhead table for one model on one device class.

    All arrays have length ``partition_count + 2``.
    """

    partition_count: int
    local_latency: tuple[float, ...]
    compress_latency: tuple[float, ...]
    local_energy: tuple[float, ...]
    compress_energy: tuple[float, ...]
    payload_bits: tuple[float, ...]
    name: str = "unnamed"

    def __post_init__(self) -> None:
        _check_invariants(self)

    @property
    def n_points(self) -> int:
        """Number of selectable partition decisions, ``B + 2``."""
        return self.partition_count + 2

    @property
    def local_index(self) -> int:
        return self.partition_count + 1

    def arrays(self) -> dict[str, np.ndarray]:
        return {k: np.asarray(getattr(self, k), dtype=np.float64) for k in ARRAY_FIELDS}

    def to_document(self) -> dict[str, Any]:
        doc: dict[str, Any] = {
            "name": self.name,
            "units": dict(DEFAULT_UNITS),
            "partition_count": self.partition_count,
        }
        for key in ARRAY_FIELDS:
            doc[key] = [float(v) for v in getattr(self, key)]
        return doc


def _check_invariants(p: DeviceProfile) -> None:
    if not isinstance(p.partition_count, (int, np.integer)) or isinstance(p.partition_count, bool):
        raise ProfileError("partition_count", "must be an integer")
    if p.partition_count < 1:
        raise ProfileError("partition_count", f"must be >= 1, got {p.partition_count}")
    size = p.partition_count + 2
    for key in ARRAY_FIELDS:
        arr = getattr(p, key)
        if len(arr) != size:
            raise ProfileError(key, f"expected {size} entries (partition_count + 2), got {len(arr)}")
        for i, v in enumerate(arr):
            if not math.isfinite(v):
                raise ProfileError(f"{key}[{i}]", "must be finite")
            if v < 0:
                raise ProfileError(f"{key}[{i}]", f"must be >= 0, got {v}")
    last = p.partition_count + 1
    for key in ("local_latency", "compress_latency", "local_energy", "compress_energy"):
        if getattr(p, key)[0] != 0:
            raise ProfileError(f"{key}[0]", "must be 0 (b=0 offloads the raw input)")
    for key in ("compress_latency", "compress_energy"):
        if getattr(p, key)[last] != 0:
            raise ProfileError(f"{key}[{last}]", "must be 0 (full-local inference compresses nothing)")
    tf = p.local_latency
    for b in range(1, last):
        if tf[b + 1] < tf[b]:
            raise ProfileError(f"local_latency[{b + 1}]", "local latency must be non-decreasing in b")
    for b in range(0, last):
        if p.payload_bits[b] <= 0:
            raise ProfileError(f"payload_bits[{b}]", "must be > 0 for offloading partitions")
    for b in range(1, last + 1):
        if tf[b] + p.compress_latency[b] <= 0:
            raise ProfileError(f"local_latency[{b}]", "local phase must take positive time for b >= 1")


def load_profile(source: str | Path | Mapping[str, Any]) -> DeviceProfile:
    """Parse and validate a profile document.

    ``source`` may be a mapping, a path to a YAML/JSON file, or the document
    text itself.
    """
    if isinstance(source, Mapping):
        doc = source
    else:
        text = None
        if isinstance(source, Path) or (isinstance(source, str) and "\n" not in source and Path(source).is_file()):
            text = Path(source).read_text()
        else:
            text = str(source)
        try:
            doc = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            raise ProfileError("<document>", f"not valid YAML/JSON: {exc}") from None
        if not isinstance(doc, Mapping):
            raise ProfileError("<document>", "top level must be a mapping")

    missing = [k for k in ("partition_count",) + ARRAY_FIELDS if k not in doc]
    if missing:
        raise ProfileError(missing[0], "required field is missing")
    unknown = set(doc) - {"name", "units", "partition_count", *ARRAY_FIELDS}
    if unknown:
        raise ProfileError(sorted(unknown)[0], "unknown field")
    units = doc.get("units", DEFAULT_UNITS)
    if units is not None:
        if not isinstance(units, Mapping):
            raise ProfileError("units", "must be a mapping")
        for key, expected in DEFAULT_UNITS.items():
            if key in units and units[key] != expected:
                raise ProfileError(f"units.{key}", f"only '{expected}' is supported, got {units[key]!r}")

    count = doc["partition_count"]
    if isinstance(count, bool) or not isinstance(count, int):
        raise ProfileError("partition_count", f"must be an integer, got {count!r}")
    arrays = {}
    for key in ARRAY_FIELDS:
        value = doc[key]
        if not isinstance(value, (list, tuple)):
            raise ProfileError(key, "must be a list of numbers")
        try:
            arrays[key] = tuple(float(v) for v in value)
        except (TypeError, ValueError):
            raise ProfileError(key, "entries must be numeric") from None
    return DeviceProfile(partition_count=count, name=str(doc.get("name", "unnamed")), **arrays)


def dump_profile(profile: DeviceProfile) -> str:
    buf = io.StringIO()
    yaml.safe_dump(profile.to_document(), buf, sort_keys=False, default_flow_style=None)
    return buf.getvalue()


def builtin_profile(name: str = "synthetic_default") -> DeviceProfile:
    """Load one of the shipped profiles (``synthetic_default`` or ``synthetic_jalad``)."""
    ref = resources.files("collabinf") / "data" / f"{name}.yaml"
    if not ref.is_file():
        raise ProfileError("<name>", f"no built-in profile called {name!r}")
    return load_profile(ref.read_text())


def resolve_profile(spec: str | Mapping[str, Any] | DeviceProfile) -> DeviceProfile:
    """Accept a built-in name, a file path, a mapping or a profile."""
    if isinstance(spec, DeviceProfile):
        return spec
    if isinstance(spec, str) and not Path(spec).is_file() and "\n" not in spec:
        return builtin_profile(spec)
    return load_profile(spec)


# ---------------------------------------------------------------------------
# quantization


@dataclass(frozen=True, eq=False)
class QuantizerConfig:
    """Uniform quantizer over ``[calib_min, calib_max]``.

    The bounds may be arrays that broadcast against the input, e.g. shape
    ``(rows, 1)`` to calibrate every row of a matrix separately.
    """

    bit_width: int
    calib_min: float | np.ndarray
    calib_max: float | np.ndarray

    def __post_init__(self) -> None:
        if isinstance(self.bit_width, bool) or not isinstance(self.bit_width, (int, np.integer)):
            raise QuantizerError(f"bit_width must be an integer, got {self.bit_width!r}")
        if not 1 <= self.bit_width <= 32:
            raise QuantizerError(f"bit_width must lie in [1, 32], got {self.bit_width}")
        lo = np.asarray(self.calib_min, dtype=np.float64)
        hi = np.asarray(self.calib_max, dtype=np.float64)
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            raise QuantizerError("calibration bounds must be finite")
        if not np.all(hi > lo):
            raise QuantizerError(f"calib_max ({self.calib_max}) must exceed calib_min ({self.calib_min})")
        if lo.ndim or hi.ndim:
            object.__setattr__(self, "calib_min", lo)
            object.__setattr__(self, "calib_max", hi)

    @property
    def levels(self) -> int:
        return (1 << int(self.bit_width)) - 1

    @property
    def max_error(self) -> float:
        """Worst-case round-trip error for in-range inputs."""
        return (self.calib_max - self.calib_min) / (2 * self.levels)

    @classmethod
    def calibrate(cls, samples: np.ndarray, bit_width: int, axis: int | None = None) -> "QuantizerConfig":
        """Bounds from the sample range; with ``axis`` one range per slice along it."""
        samples = np.asarray(samples, dtype=np.float64)
        if axis is None:
            return cls(bit_width, float(samples.min()), float(samples.max()))
        return cls(bit_width, samples.min(axis=axis, keepdims=True), samples.max(axis=axis, keepdims=True))


def quantize(x: np.ndarray, q: QuantizerConfig) -> np.ndarray:
    """Map reals onto ``0..2**bit_width - 1``; out-of-range values are clamped.

    Ties round away from zero (all scaled values are non-negative, so this is
    ``floor(v + 0.5)``).
    """
    x = np.clip(np.asarray(x, dtype=np.float64), q.calib_min, q.calib_max)
    scaled = q.levels * (x - q.calib_min) / (q.calib_max - q.calib_min)
    y = np.floor(scaled + 0.5).astype(np.int64)
    return np.clip(y, 0, q.levels)


def dequantize(y: np.ndarray, q: QuantizerConfig) -> np.ndarray:
    y = np.asarray(y)
    if y.size and (not np.issubdtype(y.dtype, np.integer)):
        if not np.all(np.equal(np.floor(y), y)):
            raise QuantizerError("quantized values must be integers")
        y = y.astype(np.int64)
    if y.size and (y.min() < 0 or y.max() > q.levels):
        raise QuantizerError(f"quantized values must lie in [0, {q.levels}]")
    return y.astype(np.float64) * (q.calib_max - q.calib_min) / q.levels + q.calib_min


def compression_rate(channels: int, reduced_channels: int, bit_width: int) -> float:
    """Overall compression rate of channel reduction plus ``bit_width`` quantization."""
    for name, v in (("channels", channels), ("reduced_channels", reduced_channels), ("bit_width", bit_width)):
        if isinstance(v, bool) or not isinstance(v, (int, np.integer)) or v < 1:
            raise QuantizerError(f"{name} must be a positive integer, got {v!r}")
    if reduced_channels > channels:
        raise QuantizerError("reduced_channels cannot exceed channels")
    if bit_width > 32:
        raise QuantizerError("bit_width must lie in [1, 32]")
    return (channels * 32) / (reduced_channels * bit_width)
