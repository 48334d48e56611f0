"""Pure-Python/numpy implementations of the compiled kernels.

Used when the extension is not built or when ``UATPC_PURE_PYTHON`` is set.
The per-RP log-utility is ``rssi * ln(10)/10 - log(max(load + interf, eps))``,
i.e. ``log(10**(rssi/10) / max(...))`` without forming the tiny linear value.
"""
import math

import numpy as np

LN10_OVER_10 = math.log(10.0) / 10.0

# cap on config x RP x AP cells materialized at once
_CHUNK_CELLS = 2_000_000


def batch_log_utility(pl, configs, overlap, thr, eps):
    pl = np.asarray(pl, dtype=float)
    configs = np.asarray(configs, dtype=float)
    overlap = np.asarray(overlap, dtype=bool)
    n_rp, n_ap = pl.shape
    out = np.zeros(len(configs))
    if n_rp == 0 or n_ap == 0:
        return out
    ap = np.arange(n_ap)
    step = max(1, _CHUNK_CELLS // (n_rp * n_ap))
    for start in range(0, len(configs), step):
        cf = configs[start:start + step]
        rssi = cf[:, None, :] - pl[None, :, :]
        srv = rssi.argmax(axis=2)
        onehot = srv[..., None] == ap
        load = onehot.sum(axis=1) / n_rp
        lam = np.take_along_axis(load, srv, axis=1)
        contend = overlap[srv] & ~onehot & (rssi >= thr)
        interf = (contend * load[:, None, :]).sum(axis=2)
        denom = np.maximum(lam + interf, eps)
        sig_db = np.take_along_axis(rssi, srv[..., None], axis=2)[..., 0]
        out[start:start + step] = (sig_db * LN10_OVER_10 - np.log(denom)).sum(axis=1)
    return out


def _ball(pts, q, r2, collect):
    n = len(pts)
    if n == 0:
        return [] if collect else 0
    k = len(q)
    hits = []
    found = 0
    stack = [(0, n, 0)]
    while stack:
        lo, hi, depth = stack.pop()
        if hi <= lo:
            continue
        mid = (lo + hi) // 2
        p = pts[mid]
        d2 = 0.0
        for j in range(k):
            dx = q[j] - p[j]
            d2 += dx * dx
        if d2 <= r2:
            found += 1
            if collect:
                hits.append(mid)
        if hi - lo == 1:
            continue
        ax = depth % k
        diff = q[ax] - p[ax]
        near = diff * diff <= r2
        if diff <= 0.0 or near:
            stack.append((lo, mid, depth + 1))
        if diff >= 0.0 or near:
            stack.append((mid + 1, hi, depth + 1))
    return hits if collect else found


def ball_query(pts, q, r):
    """Tree-order positions of points within distance ``r`` of ``q``."""
    hits = _ball(np.asarray(pts).tolist(), np.asarray(q).tolist(), r * r, True)
    return np.array(hits, dtype=np.intp)


def ball_count_many(pts, queries, r):
    plist = np.asarray(pts).tolist()
    r2 = r * r
    return np.array([_ball(plist, q, r2, False) for q in np.asarray(queries).tolist()], dtype=np.intp)
