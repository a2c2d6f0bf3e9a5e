"""Dense networks with hand-written reverse-mode gradients, Adam, and policy heads.

Networks may carry a leading *group* axis so that several independent
networks of identical shape (one actor per UE) run in a single batched
matmul.  Grouped weights have shape ``(G, fan_in, fan_out)``, inputs
``(G, batch, fan_in)`` or a shared ``(batch, fan_in)``.  Groups never share
parameters, so the gradient of a sum of per-group losses with respect to one
group's weights only involves that group's loss.
"""
from __future__ import annotations

import base64
import logging
import math
from typing import NamedTuple, Sequence

import numpy as np

log = logging.getLogger(__name__)

LOG_STD_MIN = -5.0
LOG_STD_MAX = 2.0
HALF_LOG_2PI = 0.5 * math.log(2 * math.pi)


class NetworkError(RuntimeError):
    pass


def orthogonal(shape: tuple[int, int], gain: float, rng: np.random.Generator) -> np.ndarray:
    rows, cols = shape
    a = rng.standard_normal((max(rows, cols), min(rows, cols)))
    q, r = np.linalg.qr(a)
    q *= np.sign(np.diag(r))
    if rows < cols:
        q = q.T
    return gain * q[:rows, :cols]


class DenseNet:
    """Fully connected network; ReLU on hidden layers, identity on the output.

    ``dtype`` sets the storage and compute precision (float64 unless asked).
    """

    def __init__(
        self,
        widths: Sequence[int],
        rng: np.random.Generator,
        groups: int | None = None,
        hidden_gain: float = math.sqrt(2.0),
        out_gain: float = 1.0,
        out_relu: bool = False,
        dtype=np.float64,
    ):
        if len(widths) < 2:
            raise NetworkError("need at least input and output widths")
        self.widths = tuple(int(w) for w in widths)
        self.groups = groups
        self.out_relu = out_relu
        self.dtype = np.dtype(dtype)
        self.params: list[np.ndarray] = []
        n_layers = len(self.widths) - 1
        for i, (fan_in, fan_out) in enumerate(zip(self.widths[:-1], self.widths[1:])):
            gain = out_gain if i == n_layers - 1 else hidden_gain
            if groups is None:
                W = orthogonal((fan_in, fan_out), gain, rng)
                b = np.zeros((1, fan_out))
            else:
                W = np.stack([orthogonal((fan_in, fan_out), gain, rng) for _ in range(groups)])
                b = np.zeros((groups, 1, fan_out))
            self.params += [W.astype(self.dtype), b.astype(self.dtype)]
        self._cache: list[tuple[np.ndarray, np.ndarray]] | None = None
        self._vector = False

    @property
    def n_layers(self) -> int:
        return len(self.widths) - 1

    def _relu_at(self, i: int) -> bool:
        return i < self.n_layers - 1 or self.out_relu

    def forward(self, x: np.ndarray, record: bool = True) -> np.ndarray:
        x = np.asarray(x, dtype=self.dtype)
        if x.ndim == 1:
            if self.groups is not None:
                raise NetworkError("grouped networks need a (batch, features) input")
            out = self.forward(x[None, :], record)[0]
            self._vector = record
            return out
        if x.shape[-1] != self.widths[0]:
            raise NetworkError(f"input width {x.shape[-1]} does not match {self.widths[0]}")
        self._vector = False
        cache = []
        h = x
        for i in range(self.n_layers):
            W, b = self.params[2 * i], self.params[2 * i + 1]
            z = h @ W + b
            cache.append((h, z))
            h = np.maximum(z, 0.0) if self._relu_at(i) else z
        self._cache = cache if record else None
        return h

    def backward(self, dout: np.ndarray, need_input_grad: bool = False):
        """Gradients of the recorded forward pass given d(loss)/d(output).

        Returns ``(grads, dx)`` with ``grads`` aligned to ``params``; ``dx`` is
        None unless requested.
        """
        if self._cache is None:
            raise NetworkError("backward() called without a recorded forward pass")
        grads: list[np.ndarray] = [None] * len(self.params)  # type: ignore[list-item]
        d = np.asarray(dout, dtype=self.dtype)
        if self._vector and d.ndim == 1:
            d = d[None, :]
        dx = None
        for i in range(self.n_layers - 1, -1, -1):
            h, z = self._cache[i]
            if self._relu_at(i):
                d = d * (z > 0)
            W = self.params[2 * i]
            dW = np.swapaxes(h, -1, -2) @ d
            if self.groups is not None and dW.ndim == 2:
                dW = np.broadcast_to(dW, W.shape).copy()
            db = d.sum(axis=-2, keepdims=True)
            grads[2 * i] = dW
            grads[2 * i + 1] = db
            if i > 0 or need_input_grad:
                d = d @ np.swapaxes(W, -1, -2)
        if need_input_grad:
            dx = d[0] if self._vector else d
        return grads, dx


# ---------------------------------------------------------------------------
# distributions


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


class CategoricalDraw(NamedTuple):
    probs: np.ndarray
    sample: np.ndarray
    log_prob: np.ndarray
    entropy: np.ndarray


def categorical_head(
    logits: np.ndarray,
    rng: np.random.Generator | None = None,
    action: np.ndarray | None = None,
    greedy: bool = False,
) -> CategoricalDraw:
    """Softmax distribution over the last axis.

    Samples with ``rng`` unless ``action`` is given (scored as-is) or
    ``greedy`` (argmax).
    """
    logits = np.asarray(logits, dtype=np.float64)
    logp_all = log_softmax(logits)
    probs = np.exp(logp_all)
    if action is None:
        if greedy:
            action = probs.argmax(axis=-1)
        else:
            if rng is None:
                raise ValueError("sampling needs an rng")
            u = rng.random(probs.shape[:-1])
            action = (np.cumsum(probs, axis=-1) < u[..., None]).sum(axis=-1)
            action = np.minimum(action, probs.shape[-1] - 1)
    action = np.asarray(action, dtype=np.int64)
    log_prob = np.take_along_axis(logp_all, action[..., None], axis=-1)[..., 0]
    entropy = -(probs * logp_all).sum(axis=-1)
    return CategoricalDraw(probs, action, log_prob, entropy)


def categorical_grads(probs: np.ndarray, action: np.ndarray, entropy: np.ndarray):
    """d log_prob / d logits and d entropy / d logits."""
    onehot = np.zeros_like(probs)
    np.put_along_axis(onehot, np.asarray(action)[..., None], 1.0, axis=-1)
    with np.errstate(divide="ignore"):
        logp = np.log(probs)
    plogp = np.where(probs > 0, probs * logp, 0.0)
    d_logp = onehot - probs
    d_ent = -(plogp + probs * entropy[..., None])
    return d_logp, d_ent


class GaussianDraw(NamedTuple):
    sample: np.ndarray   # raw, unclipped
    executed: np.ndarray  # clipped into [low, high]
    log_prob: np.ndarray
    entropy: np.ndarray


def gaussian_head(
    mean: np.ndarray,
    log_std: np.ndarray,
    low: float,
    high: float,
    rng: np.random.Generator | None = None,
    action: np.ndarray | None = None,
    greedy: bool = False,
) -> GaussianDraw:
    """Gaussian over a scalar action; log-prob and entropy use the raw sample."""
    mean = np.asarray(mean, dtype=np.float64)
    log_std = np.asarray(log_std, dtype=np.float64)
    std = np.exp(log_std)
    if action is None:
        if greedy:
            action = mean.copy()
        else:
            if rng is None:
                raise ValueError("sampling needs an rng")
            action = mean + std * rng.standard_normal(mean.shape)
    action = np.asarray(action, dtype=np.float64)
    zscore = (action - mean) / std
    log_prob = -0.5 * zscore**2 - log_std - HALF_LOG_2PI
    entropy = 0.5 + HALF_LOG_2PI + log_std
    return GaussianDraw(action, np.clip(action, low, high), log_prob, entropy)


def gaussian_grads(mean: np.ndarray, log_std: np.ndarray, action: np.ndarray):
    """Return (dlogp/dmean, dlogp/dlog_std, dentropy/dlog_std)."""
    var = np.exp(2 * log_std)
    diff = action - mean
    return diff / var, diff**2 / var - 1.0, np.ones_like(log_std)


# ---------------------------------------------------------------------------
# hybrid actor


class ActorOutput(NamedTuple):
    partition_logits: np.ndarray
    channel_logits: np.ndarray
    mean: np.ndarray
    log_std: np.ndarray


class HybridActor:
    """Shared trunk with partition, channel and power branches.

    The power branch emits ``(mean, raw log-std)``; the log-std is clamped to
    ``[-5, 2]``.  Its output bias starts at ``(p_max / 2, log(p_max / 4))`` so the
    initial policy covers the feasible power range.
    """

    def __init__(
        self,
        obs_dim: int,
        n_partitions: int,
        n_channels: int,
        p_max: float,
        rng: np.random.Generator,
        groups: int | None = None,
        trunk: Sequence[int] = (256, 128),
        branch: int = 64,
        dtype=np.float64,
    ):
        self.groups = groups
        self.n_partitions = n_partitions
        self.n_channels = n_channels
        self.trunk = DenseNet([obs_dim, *trunk], rng, groups, out_relu=True, dtype=dtype)
        t_out = trunk[-1]
        self.part = DenseNet([t_out, branch, n_partitions], rng, groups, out_gain=0.01, dtype=dtype)
        self.chan = DenseNet([t_out, branch, n_channels], rng, groups, out_gain=0.01, dtype=dtype)
        self.power = DenseNet([t_out, branch, 2], rng, groups, out_gain=0.01, dtype=dtype)
        bias = self.power.params[-1]
        bias[..., 0] = p_max / 2
        bias[..., 1] = math.log(p_max / 4)
        self._raw_log_std: np.ndarray | None = None

    @property
    def nets(self) -> tuple[DenseNet, ...]:
        return (self.trunk, self.part, self.chan, self.power)

    @property
    def params(self) -> list[np.ndarray]:
        return [p for net in self.nets for p in net.params]

    def forward(self, obs: np.ndarray, record: bool = True) -> ActorOutput:
        h = self.trunk.forward(obs, record)
        pl = self.part.forward(h, record)
        cl = self.chan.forward(h, record)
        pw = self.power.forward(h, record)
        raw = pw[..., 1]
        self._raw_log_std = raw
        return ActorOutput(pl, cl, pw[..., 0], np.clip(raw, LOG_STD_MIN, LOG_STD_MAX))

    def backward(self, d_part: np.ndarray, d_chan: np.ndarray, d_mean: np.ndarray, d_log_std: np.ndarray):
        """Parameter gradients from gradients w.r.t. the four outputs."""
        raw = self._raw_log_std
        mask = (raw >= LOG_STD_MIN) & (raw <= LOG_STD_MAX)
        d_pw = np.stack([d_mean, d_log_std * mask], axis=-1)
        g_part, dh1 = self.part.backward(d_part, need_input_grad=True)
        g_chan, dh2 = self.chan.backward(d_chan, need_input_grad=True)
        g_pow, dh3 = self.power.backward(d_pw, need_input_grad=True)
        g_trunk, _ = self.trunk.backward(dh1 + dh2 + dh3)
        return g_trunk + g_part + g_chan + g_pow


# ---------------------------------------------------------------------------
# optimisation


class Adam:
    """Bias-corrected Adam over a list of arrays (updated in place)."""

    def __init__(self, params: list[np.ndarray], lr: float = 1e-4, betas=(0.9, 0.999), eps: float = 1e-8):
        self.params = params
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.rejected = 0

    def step(self, grads: list[np.ndarray]) -> bool:
        if len(grads) != len(self.params):
            raise NetworkError("gradient list does not match parameters")
        for g, p in zip(grads, self.params):
            if g.shape != p.shape:
                raise NetworkError(f"gradient shape {g.shape} does not match parameter {p.shape}")
            if not np.all(np.isfinite(g)):
                self.rejected += 1
                log.warning("Adam update rejected: non-finite gradient (rejections so far: %d)", self.rejected)
                return False
        self.t += 1
        c1 = 1 - self.beta1**self.t
        c2 = 1 - self.beta2**self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= self.beta1
            m += (1 - self.beta1) * g
            v *= self.beta2
            v += (1 - self.beta2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
        return True

    def state(self) -> dict:
        return {"t": self.t, "lr": self.lr, "betas": [self.beta1, self.beta2], "eps": self.eps,
                "m": [encode_array(x) for x in self.m], "v": [encode_array(x) for x in self.v]}

    def load_state(self, state: dict) -> None:
        self.t = int(state["t"])
        self.lr = float(state["lr"])
        self.beta1, self.beta2 = (float(b) for b in state["betas"])
        self.eps = float(state["eps"])
        for dst, src in zip(self.m + self.v, state["m"] + state["v"]):
            dst[...] = decode_array(src)


def clip_grad_norm(grads: list[np.ndarray], max_norm: float, grouped: bool = False) -> np.ndarray:
    """Scale gradients in place so each network's (or group's) norm is <= ``max_norm``.

    Returns the pre-clipping norm(s).
    """
    if grouped:
        sq = sum((g.reshape(g.shape[0], -1) ** 2).sum(axis=1) for g in grads)
    else:
        sq = np.array(sum(float((g**2).sum()) for g in grads))
    norm = np.sqrt(sq)
    scale = np.minimum(1.0, max_norm / np.maximum(norm, 1e-12))
    for g in grads:
        if grouped:
            g *= scale.reshape((-1,) + (1,) * (g.ndim - 1))
        else:
            g *= scale
    return norm


def encode_array(a: np.ndarray) -> dict:
    """Lossless text encoding of a float64 array (little-endian, base64)."""
    a = np.ascontiguousarray(a, dtype="<f8")
    return {"shape": list(a.shape), "data": base64.b64encode(a.tobytes()).decode("ascii")}


def decode_array(obj: dict) -> np.ndarray:
    raw = base64.b64decode(obj["data"])
    return np.frombuffer(raw, dtype="<f8").reshape(obj["shape"]).astype(np.float64)
