import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from uatpc import kernels
from uatpc.kdtree import build_order

BACKENDS = kernels.available_backends()
needs_both = pytest.mark.skipif(len(BACKENDS) < 2, reason="compiled kernels not built")


def _inputs(seed, n_rp=20, n_ap=5, n_cfg=9):
    rng = np.random.default_rng(seed)
    pl = rng.uniform(40, 110, (n_rp, n_ap))
    cfg = rng.choice([4.0, 10.0, 20.0, 32.0], (n_cfg, n_ap))
    ch = rng.integers(0, 2, n_ap)
    return pl, cfg, (ch[:, None] == ch[None, :]).astype(np.uint8)


@pytest.mark.parametrize("backend", BACKENDS)
def test_backend_handles_empty(backend):
    b = kernels.get_backend(backend)
    assert b.batch_log_utility(np.zeros((0, 3)), np.zeros((2, 3)), np.ones((3, 3), np.uint8), -82, 1e-9).tolist() \
        == [0.0, 0.0]
    assert b.ball_query(np.zeros((0, 3)), np.zeros(3), 1.0).size == 0


@needs_both
@pytest.mark.parametrize("seed", range(5))
def test_utility_backends_agree(seed):
    pl, cfg, ov = _inputs(seed)
    a = kernels.get_backend("python").batch_log_utility(pl, cfg, ov, -82.0, 1e-9)
    b = kernels.get_backend("cython").batch_log_utility(pl, cfg, ov, -82.0, 1e-9)
    assert np.allclose(a, b, rtol=1e-12, atol=0)


@needs_both
@settings(max_examples=40, deadline=None)
@given(st.integers(0, 300), st.integers(1, 3), st.floats(0.0, 2.0), st.integers(0, 10_000))
def test_ball_backends_agree(n, k, r, seed):
    rng = np.random.default_rng(seed)
    pts = np.round(rng.normal(size=(n, k)), 1)  # rounding creates ties on split planes
    tree = np.ascontiguousarray(pts[build_order(pts)]) if n else np.zeros((0, k))
    q = rng.normal(size=(4, k))
    py, cy = kernels.get_backend("python"), kernels.get_backend("cython")
    assert np.array_equal(py.ball_count_many(tree, q, r), cy.ball_count_many(tree, q, r))
    for row in q:
        assert np.array_equal(np.sort(py.ball_query(tree, row, r)), np.sort(cy.ball_query(tree, row, r)))


def test_unknown_backend():
    with pytest.raises(ValueError):
        kernels.get_backend("fortran")


def test_env_var_forces_fallback():
    code = "from uatpc import kernels; print(kernels.BACKEND)"
    env = dict(os.environ, UATPC_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"
