"""Synthetic topologies on a square with a log-distance path-loss model."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import AccessPoint, NetworkInstance, ReferencePointSet, ValidationError, matrix_to_records

DEFAULT_LEVELS = tuple(range(4, 33))


@dataclass(frozen=True)
class PathLossParams:
    pl0_db: float = 40.0
    ref_dist_m: float = 1.0
    exponent: float = 3.0
    shadowing_sigma_db: float = 0.0


def pathloss(d_m, params: PathLossParams = PathLossParams(), rng: np.random.Generator | None = None):
    """Log-distance path loss in dB; distances below the reference are clamped.

    Shadowing is drawn from ``rng`` when ``shadowing_sigma_db > 0``.
    """
    d = np.asarray(d_m, dtype=float)
    if np.any(d < 0):
        raise ValidationError("distance must be non-negative")
    pl = params.pl0_db + 10.0 * params.exponent * np.log10(np.maximum(d, params.ref_dist_m) / params.ref_dist_m)
    if params.shadowing_sigma_db > 0:
        if rng is None:
            raise ValidationError("shadowing requires a random generator")
        pl = pl + rng.normal(0.0, params.shadowing_sigma_db, size=pl.shape)
    if np.ndim(pl) == 0:
        return float(pl)
    return pl


@dataclass
class SyntheticScenario:
    ap_positions: np.ndarray
    sta_positions: np.ndarray
    instance: NetworkInstance
    rp_pl: np.ndarray
    pl_params: PathLossParams
    side_m: float
    clustered: np.ndarray | None = None
    hotspot_centers: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    @property
    def rps(self) -> ReferencePointSet:
        return ReferencePointSet(self.rp_pl)

    def distances(self):
        rp = np.linalg.norm(self.sta_positions[:, None, :] - self.ap_positions[None, :, :], axis=2)
        ap = np.linalg.norm(self.ap_positions[:, None, :] - self.ap_positions[None, :, :], axis=2)
        return rp, ap


def _build(ap_pos, sta_pos, levels, pl_params, rng, channels, side_m):
    n_aps = len(ap_pos)
    d_ap = np.linalg.norm(ap_pos[:, None, :] - ap_pos[None, :, :], axis=2)
    upper = np.triu(pathloss(d_ap, pl_params, rng), 1)
    ap_pl = upper + upper.T
    d_rp = np.linalg.norm(sta_pos[:, None, :] - ap_pos[None, :, :], axis=2)
    rp_pl = np.maximum(pathloss(d_rp, pl_params, rng), 0.0)
    ap_pl = np.maximum(ap_pl, 0.0)
    if channels is None:
        channels = [0] * n_aps
    if np.isscalar(levels[0]):
        levels = [tuple(levels)] * n_aps
    aps = tuple(AccessPoint(f"ap{i}", tuple(levels[i]), int(channels[i])) for i in range(n_aps))
    ch = np.asarray(channels)
    inst = NetworkInstance(aps, ap_pl, ch[:, None] == ch[None, :])
    return inst, rp_pl


def gen_uniform_scenario(n_aps: int, n_stas: int, side_m: float = 100.0, levels=DEFAULT_LEVELS,
                         pl_params: PathLossParams = PathLossParams(), seed: int = 0,
                         channels=None) -> SyntheticScenario:
    if n_aps < 1 or n_stas < 1:
        raise ValidationError("need at least one AP and one STA")
    rng = np.random.default_rng(seed)
    ap_pos = rng.uniform(0, side_m, size=(n_aps, 2))
    sta_pos = rng.uniform(0, side_m, size=(n_stas, 2))
    inst, rp_pl = _build(ap_pos, sta_pos, levels, pl_params, rng, channels, side_m)
    return SyntheticScenario(ap_pos, sta_pos, inst, rp_pl, pl_params, side_m,
                             meta={"kind": "uniform", "seed": seed})


def gen_hotspot_scenario(n_hotspots: int = 50, n_stas: int = 10_000, clustered_fraction: float = 0.9,
                         cluster_sigma_m: float = 1.0, side_m: float = 100.0, n_aps: int = 33,
                         levels=DEFAULT_LEVELS, pl_params: PathLossParams = PathLossParams(),
                         seed: int = 0, channels=None) -> SyntheticScenario:
    """STAs: a ``clustered_fraction`` share Gaussian around random hotspot centers, rest uniform."""
    if not 0.0 <= clustered_fraction <= 1.0:
        raise ValidationError("clustered_fraction must lie in [0, 1]")
    rng = np.random.default_rng(seed)
    ap_pos = rng.uniform(0, side_m, size=(n_aps, 2))
    centers = rng.uniform(0, side_m, size=(n_hotspots, 2))
    n_clu = int(round(clustered_fraction * n_stas))
    clustered = np.zeros(n_stas, dtype=bool)
    clustered[rng.permutation(n_stas)[:n_clu]] = True
    sta_pos = rng.uniform(0, side_m, size=(n_stas, 2))
    which = rng.integers(0, n_hotspots, size=n_clu)
    offsets = rng.normal(0.0, cluster_sigma_m, size=(n_clu, 2)) if cluster_sigma_m > 0 else np.zeros((n_clu, 2))
    sta_pos[clustered] = np.clip(centers[which] + offsets, 0.0, side_m)
    inst, rp_pl = _build(ap_pos, sta_pos, levels, pl_params, rng, channels, side_m)
    return SyntheticScenario(ap_pos, sta_pos, inst, rp_pl, pl_params, side_m, clustered=clustered,
                             hotspot_centers=centers,
                             meta={"kind": "hotspot", "seed": seed, "cluster_sigma_m": cluster_sigma_m})


def obfuscate_matrix(rp_pl, k_visible: int) -> np.ndarray:
    """Keep the ``k_visible`` smallest PLs per row (ties to the lower AP index); NaN elsewhere."""
    pl = np.asarray(rp_pl, dtype=float)
    n_ap = pl.shape[1]
    if not 1 <= k_visible <= n_ap:
        raise ValidationError(f"k_visible must lie in [1, {n_ap}]")
    order = np.argsort(pl, axis=1, kind="stable")[:, :k_visible]
    out = np.full_like(pl, np.nan)
    rows = np.arange(pl.shape[0])[:, None]
    out[rows, order] = pl[rows, order]
    return out


def obfuscate(ground_truth_rp_pl, k_visible: int, seed: int = 0, ap_ids=None, ts: float = 0.0):
    """Nearest-first obfuscation into measurement records.

    The rule is deterministic; ``seed`` is accepted for interface symmetry.
    """
    masked = obfuscate_matrix(ground_truth_rp_pl, k_visible)
    ap_ids = ap_ids or [f"ap{i}" for i in range(masked.shape[1])]
    return matrix_to_records(masked, ap_ids, ts=ts)
