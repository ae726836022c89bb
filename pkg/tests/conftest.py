import hypothesis
import numpy as np
import pytest

from cfisac.experiments import desk_config
from cfisac.scenario import LayoutSpec, build_geometry, sample_realization, trial_rng

np.seterr(all="warn", under="ignore")

hypothesis.settings.register_profile("default", max_examples=30, deadline=None)
hypothesis.settings.register_profile("fast", max_examples=5, deadline=None)
hypothesis.settings.register_profile("thorough", max_examples=300, deadline=None)
hypothesis.settings.load_profile("default")


def realize(config, seed=7, *key):
    rng = trial_rng(seed, *key)
    return sample_realization(config, build_geometry(config, LayoutSpec(), rng), rng)


@pytest.fixture
def desk():
    return desk_config()


@pytest.fixture
def desk_real(desk):
    return realize(desk, 7, 0)


def random_hermitian(rng, n, psd=False, rank=None):
    a = rng.standard_normal((n, rank or n)) + 1j * rng.standard_normal((n, rank or n))
    if psd:
        return a @ a.conj().T
    b = a[:, :n] if a.shape[1] >= n else rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    return b + b.conj().T
