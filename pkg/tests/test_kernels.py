import numpy as np
import pytest

from collabinf import kernels
from collabinf.channel import JointAction
from collabinf.simenv import CollabInferenceEnv, EnvConfig

needs_ext = pytest.mark.skipif(kernels.BACKEND != "cython", reason="compiled kernels not built")


def random_episode_states(seed, backend, n=4, frames=30):
    env = CollabInferenceEnv(EnvConfig(ue_count=n, task_mean=20), np.random.default_rng(seed))
    rng = np.random.default_rng(seed + 1)
    state = env.reset()
    out = []
    while not state.done and len(out) < frames:
        a = JointAction(rng.integers(0, env.n_partitions, n), rng.integers(0, env.n_channels, n),
                        rng.uniform(env.p_min, env.p_max, n))
        state, o = env.step(state, a, backend=backend)
        out.append((state, o))
    return out


@needs_ext
@pytest.mark.parametrize("seed", range(10))
def test_frame_kernel_backends_bit_identical(seed):
    py = random_episode_states(seed, "python")
    cy = random_episode_states(seed, "cython")
    assert len(py) == len(cy)
    for (s1, o1), (s2, o2) in zip(py, cy):
        assert s1.same_as(s2)
        assert (o1.completed, o1.energy, o1.reward) == (o2.completed, o2.energy, o2.reward)
        for f in ("busy_time", "bits_sent", "energy_local", "energy_tx", "latency_sum", "completed_energy"):
            assert np.array_equal(getattr(o1, f), getattr(o2, f))


@needs_ext
@pytest.mark.parametrize("seed", range(5))
def test_estimators_backends_bit_identical(seed):
    rng = np.random.default_rng(seed)
    T = 700
    r = rng.normal(size=T)
    v = rng.normal(size=T)
    d = rng.random(T) < 0.05
    a = kernels.gae(r, v, d, 0.95, 0.9, 0.3, backend="python")
    b = kernels.gae(r, v, d, 0.95, 0.9, 0.3, backend="cython")
    assert np.array_equal(a, b)
    a = kernels.discounted_returns(r, d, 0.95, 0.3, backend="python")
    b = kernels.discounted_returns(r, d, 0.95, 0.3, backend="cython")
    assert np.array_equal(a, b)


def test_alignment_checked():
    with pytest.raises(ValueError):
        kernels.gae(np.zeros(3), np.zeros(4), np.zeros(3, bool), 0.9, 0.9)
    with pytest.raises(ValueError):
        kernels.discounted_returns(np.zeros(3), np.zeros(2, bool), 0.9)


def test_backend_lookup():
    assert kernels.get_backend("python").EPS == 1e-12
    with pytest.raises(ValueError):
        kernels.get_backend("fortran")
