"""Backend selection for the hot loops.

The compiled ``_kernels`` extension is used when importable; otherwise the
pure-Python ``_kernels_py`` fallback.  Set ``COLLABINF_PURE_PYTHON=1`` to force
the fallback.  Both backends produce bit-identical results.
"""
import os

import numpy as np

from . import _kernels_py

BACKEND = "python"
_impl = _kernels_py
if os.environ.get("COLLABINF_PURE_PYTHON") != "1":
    try:
        from . import _kernels as _compiled
    except ImportError:  # extension not built
        _compiled = None
    if _compiled is not None:
        _impl = _compiled
        BACKEND = "cython"


def get_backend(name: str | None = None):
    """Return the kernel module for ``name`` ('cython', 'python' or None=active)."""
    if name is None:
        return _impl
    if name == "python":
        return _kernels_py
    if name == "cython":
        from . import _kernels

        return _kernels
    raise ValueError(f"unknown kernel backend {name!r}")


def simulate_frame(*args, backend=None):
    return get_backend(backend).simulate_frame(*args)


def discounted_returns(rewards, dones, gamma: float, last_value: float = 0.0, backend=None):
    r = np.ascontiguousarray(rewards, dtype=np.float64)
    d = np.ascontiguousarray(dones, dtype=np.uint8)
    if r.shape != d.shape:
        raise ValueError("rewards and dones must be aligned")
    return get_backend(backend).discounted_returns(r, d, float(gamma), float(last_value))


def gae(rewards, values, dones, gamma: float, lam: float, last_value: float = 0.0, backend=None):
    r = np.ascontiguousarray(rewards, dtype=np.float64)
    v = np.ascontiguousarray(values, dtype=np.float64)
    d = np.ascontiguousarray(dones, dtype=np.uint8)
    if not (r.shape == v.shape == d.shape):
        raise ValueError("rewards, values and dones must be aligned")
    return get_backend(backend).gae(r, v, d, float(gamma), float(lam), float(last_value))
