"""Trace-driven utility evaluation.

Each reference point (RP) associates to the AP it hears loudest; AP load is
the fraction of RPs it serves; interference at an RP is the summed load of
co-channel APs (other than the serving one) it hears above the carrier-sense
threshold. Per-RP utility is ``SIG / (load + interference)`` with SIG in
linear mW, and the network utility sums the logs over RPs.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

from . import kernels
from .core import NetworkInstance, PowerConfig, ReferencePointSet, UtilityParams, ValidationError


def received_signal(power_dbm, pl_db):
    return power_dbm - pl_db


def _levels(config) -> np.ndarray:
    return config.levels if isinstance(config, PowerConfig) else np.asarray(config, dtype=float)


def _pl(rps) -> np.ndarray:
    return rps.rp_pl if isinstance(rps, ReferencePointSet) else np.asarray(rps, dtype=float)


def associate(rp_row, config) -> int:
    """Index of the strongest AP; ties go to the lowest index."""
    rssi = received_signal(_levels(config), np.asarray(rp_row, dtype=float))
    if rssi.size == 0:
        raise ValidationError("cannot associate with an empty AP set")
    return int(np.argmax(rssi))


def ap_loads(rps, config) -> np.ndarray:
    pl = _pl(rps)
    if pl.shape[0] == 0:
        raise ValidationError("empty RP set")
    serving = np.argmax(received_signal(_levels(config)[None, :], pl), axis=1)
    return np.bincount(serving, minlength=pl.shape[1]) / pl.shape[0]


def interference_at(rp_row, config, instance: NetworkInstance, loads, params: UtilityParams = UtilityParams(),
                    serving: int | None = None) -> float:
    p = _levels(config)
    row = np.asarray(rp_row, dtype=float)
    s = associate(row, p) if serving is None else serving
    heard = received_signal(p, row) >= params.cs_threshold_dbm
    mask = instance.channel_overlap[s] & heard
    mask[s] = False
    return float(np.sum(np.asarray(loads)[mask]))


def utility_ref(rp_row, config, instance: NetworkInstance, loads, params: UtilityParams = UtilityParams()) -> float:
    p = _levels(config)
    row = np.asarray(rp_row, dtype=float)
    s = associate(row, p)
    sig = 10.0 ** (received_signal(p[s], row[s]) / 10.0)
    interf = interference_at(row, p, instance, loads, params, serving=s)
    return sig / max(loads[s] + interf, params.epsilon)


@dataclass
class UtilityBreakdown:
    serving: np.ndarray
    rssi_dbm: np.ndarray
    sig_mw: np.ndarray
    load: np.ndarray
    interference: np.ndarray
    utility: np.ndarray
    total: float

    @property
    def per_rp(self):
        return list(zip(self.serving.tolist(), self.rssi_dbm.tolist(), self.sig_mw.tolist(),
                        self.load.tolist(), self.interference.tolist(), self.utility.tolist()))

    def write_csv(self, path, ap_ids=None) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["rp_index", "serving", "rssi_dbm", "load", "interference", "utility"])
            for i, (s, rssi, _, lam, interf, u) in enumerate(self.per_rp):
                w.writerow([i, ap_ids[s] if ap_ids is not None else s, repr(rssi), repr(lam),
                            repr(interf), repr(u)])


def network_utility(rps, config, instance: NetworkInstance,
                    params: UtilityParams = UtilityParams()) -> UtilityBreakdown:
    pl = _pl(rps)
    p = _levels(config)
    if pl.shape[0] == 0:
        raise ValidationError("empty RP set")
    if pl.shape[1] != instance.n_aps or p.shape[0] != instance.n_aps:
        raise ValidationError("RP matrix / config width does not match the AP count")
    rssi_all = received_signal(p[None, :], pl)
    serving = np.argmax(rssi_all, axis=1)
    n_rp = pl.shape[0]
    loads = np.bincount(serving, minlength=instance.n_aps) / n_rp
    contend = instance.channel_overlap[serving] & (rssi_all >= params.cs_threshold_dbm)
    contend[np.arange(n_rp), serving] = False
    interference = contend.astype(float) @ loads
    rssi = rssi_all[np.arange(n_rp), serving]
    lam = loads[serving]
    denom = np.maximum(lam + interference, params.epsilon)
    sig = 10.0 ** (rssi / 10.0)
    log_u = rssi * (math.log(10.0) / 10.0) - np.log(denom)
    total = 0.0
    for v in log_u:  # fixed sequential order
        total += float(v)
    return UtilityBreakdown(serving, rssi, sig, lam, interference, sig / denom, total)


class UtilityEvaluator:
    """Fast batched network utility bound to one RP matrix and instance.

    Counts every configuration it evaluates in ``evaluations``.
    """

    def __init__(self, rps, instance: NetworkInstance, params: UtilityParams = UtilityParams()):
        self.pl = np.ascontiguousarray(_pl(rps), dtype=np.float64)
        if self.pl.shape[0] == 0:
            raise ValidationError("empty RP set")
        if self.pl.shape[1] != instance.n_aps:
            raise ValidationError("RP matrix width does not match the AP count")
        self.instance = instance
        self.params = params
        self.overlap = np.ascontiguousarray(instance.channel_overlap, dtype=np.uint8)
        self.evaluations = 0

    def __call__(self, config) -> float:
        return float(self.batch(np.asarray(_levels(config), dtype=float)[None, :])[0])

    def batch(self, configs) -> np.ndarray:
        configs = np.atleast_2d(np.asarray(configs, dtype=np.float64))
        self.evaluations += configs.shape[0]
        return kernels.batch_log_utility(self.pl, configs, self.overlap,
                                         self.params.cs_threshold_dbm, self.params.epsilon)


def pearson_r(xs, ys) -> tuple[float, float]:
    """Pearson correlation and two-sided p-value (t distribution, n-2 dof)."""
    x = np.asarray(xs, dtype=float)
    y = np.asarray(ys, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ValidationError("series must be 1-D and of equal length")
    n = x.size
    if n < 3:
        raise ValidationError("need at least 3 samples")
    dx = x - x.mean()
    dy = y - y.mean()
    sxx = float(np.dot(dx, dx))
    syy = float(np.dot(dy, dy))
    if sxx == 0.0 or syy == 0.0:
        raise ValidationError("correlation undefined for a constant series")
    r = float(np.dot(dx, dy)) / math.sqrt(sxx * syy)
    r = max(-1.0, min(1.0, r))
    if abs(r) == 1.0:
        return r, 0.0
    t = r * math.sqrt((n - 2) / (1.0 - r * r))
    return r, float(2.0 * stats.t.sf(abs(t), n - 2))
