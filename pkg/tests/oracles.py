"""Independent reference implementations shared by the tests."""
import numpy as np


def numeric_grad(f, param: np.ndarray, h: float = 1e-5) -> np.ndarray:
    g = np.zeros_like(param)
    it = np.nditer(param, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        old = param[i]
        param[i] = old + h
        up = f()
        param[i] = old - h
        down = f()
        param[i] = old
        g[i] = (up - down) / (2 * h)
    return g


def rel_error(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.max(np.abs(a - b) / np.maximum(1e-6, np.abs(a) + np.abs(b))))


def brute_force_gae(r, v, done, gamma, lam, last_value):
    """Double loop over the TD-residual sum, restarting at episode ends."""
    T = len(r)
    nxt = np.empty(T)
    for t in range(T):
        nxt[t] = 0.0 if done[t] else (v[t + 1] if t + 1 < T else last_value)
    delta = r + gamma * nxt - v
    out = np.zeros(T)
    for t in range(T):
        acc, w = 0.0, 1.0
        for u in range(t, T):
            acc += w * delta[u]
            if done[u]:
                break
            w *= gamma * lam
        out[t] = acc
    return out


def rel_error_norm(a: np.ndarray, b: np.ndarray) -> float:
    """``|a - b| / (|a| + |b|)`` in the Euclidean norm over the whole array."""
    den = float(np.linalg.norm(a) + np.linalg.norm(b))
    return float(np.linalg.norm(a - b)) / den if den > 0 else 0.0
