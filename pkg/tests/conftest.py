import numpy as np
import pytest

from uatpc.core import AccessPoint, NetworkInstance


def make_instance(n_aps, levels=(4, 8, 12, 16, 20, 24, 28, 32), channels=None, ap_pl=None):
    aps = tuple(AccessPoint(f"ap{i}", levels, 0 if channels is None else channels[i]) for i in range(n_aps))
    ch = np.array([a.channel for a in aps])
    if ap_pl is None:
        ap_pl = np.full((n_aps, n_aps), 80.0)
        np.fill_diagonal(ap_pl, 0.0)
    return NetworkInstance(aps, ap_pl, ch[:, None] == ch[None, :])


@pytest.fixture
def two_ap():
    return make_instance(2, levels=(10, 20))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
