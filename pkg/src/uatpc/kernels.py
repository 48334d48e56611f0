"""Kernel backend selection.

The Cython extension ``uatpc._kernels`` is used when importable; otherwise,
or when the environment variable ``UATPC_PURE_PYTHON`` is set to a non-empty
value other than ``0``, the numpy/pure-Python twin in ``uatpc._fallback`` is
used. Both expose ``batch_log_utility``, ``ball_query`` and ``ball_count_many``.
"""
import os

import numpy as np

from . import _fallback

try:
    from . import _kernels as _compiled
except ImportError:  # extension not built
    _compiled = None

_force_pure = os.environ.get("UATPC_PURE_PYTHON", "") not in ("", "0")

if _compiled is not None and not _force_pure:
    _impl = _compiled
    BACKEND = "cython"
else:
    _impl = _fallback
    BACKEND = "python"


def available_backends():
    return ["python"] + (["cython"] if _compiled is not None else [])


def get_backend(name: str):
    if name == "python":
        return _fallback
    if name == "cython":
        if _compiled is None:
            raise ImportError("compiled kernels are not built")
        return _compiled
    raise ValueError(f"unknown backend {name!r}")


def batch_log_utility(pl, configs, overlap, thr, eps):
    """Network log-utility for each row of ``configs`` (C x A) on ``pl`` (R x A)."""
    return _impl.batch_log_utility(
        np.ascontiguousarray(pl, dtype=np.float64),
        np.ascontiguousarray(np.atleast_2d(configs), dtype=np.float64),
        np.ascontiguousarray(overlap, dtype=np.uint8),
        float(thr), float(eps))


def ball_query(pts, q, r):
    return _impl.ball_query(np.ascontiguousarray(pts, dtype=np.float64),
                            np.ascontiguousarray(q, dtype=np.float64), float(r))


def ball_count_many(pts, queries, r):
    return _impl.ball_count_many(np.ascontiguousarray(pts, dtype=np.float64),
                                 np.ascontiguousarray(queries, dtype=np.float64), float(r))
