"""Controlled study drivers. Each returns ``(rows, summary)`` and, given
``out_dir``, writes its tables there as CSV."""
from __future__ import annotations

from pathlib import Path

import numpy as np

from .imputation import DEFAULT_STRATEGIES, utility_degradation_study
from .optimize import exhaustive_search, local_search, optimality_gap, parse_trials
from .pipeline import write_rows_csv
from .selection import (isolated_mask, neighbor_counts, pca_project, radius_from_quantile, stratified_select,
                        uniform_select)
from .synth import gen_hotspot_scenario, gen_uniform_scenario

GAP_LEVELS = (8, 16, 24, 32)


def _quartiles(values) -> dict:
    q1, q2, q3 = np.percentile(np.asarray(values, dtype=float), [25, 50, 75])
    return {"q1": float(q1), "median": float(q2), "q3": float(q3)}


def _write(out_dir, name, rows, summary_rows):
    if out_dir is None:
        return
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_rows_csv(out / f"{name}_instances.csv", rows)
    write_rows_csv(out / f"{name}_summary.csv", summary_rows)


def study_optimality_gap(n_instances: int = 32, n_aps: int = 8, n_rps: int = 30, levels=GAP_LEVELS,
                         side_m: float = 100.0, variants=("nl", "l2"), seed: int = 0,
                         time_cap_s: float | None = None, out_dir=None):
    """LS variants against the exhaustive optimum on small random instances."""
    seeds = np.random.SeedSequence(seed).generate_state(n_instances)
    rows = []
    for i, s in enumerate(seeds):
        sc = gen_uniform_scenario(n_aps, n_rps, side_m, levels, seed=int(s))
        opt = exhaustive_search(sc.instance, sc.rp_pl)
        for v in variants:
            rep = local_search(sc.instance, sc.rp_pl, parse_trials(v), time_cap_s, seed=int(s))
            rows.append({"instance": i, "seed": int(s), "variant": v, "utility": rep.best_utility,
                         "opt_utility": opt.utility, "gap_pct": optimality_gap(rep.best_utility, opt.utility),
                         "iterations": rep.iterations, "evaluations": rep.evaluations})
    summary = {v: _quartiles([r["gap_pct"] for r in rows if r["variant"] == v]) for v in variants}
    _write(out_dir, "gap", rows, [{"variant": v, **q} for v, q in summary.items()])
    return rows, summary


def study_imputation_necessity(n_topologies: int = 32, n_aps: int = 33, n_rps: int = 330,
                               visible_counts=(2, 6, 33), strategies=DEFAULT_STRATEGIES, seed: int = 0,
                               side_m: float = 700.0, trials=5, time_cap_s: float = 120.0, out_dir=None):
    rows, summary = utility_degradation_study(n_topologies, n_aps, n_rps, visible_counts, strategies, seed,
                                              side_m, trials, time_cap_s)
    _write(out_dir, "imputation", rows,
           [{"visible": v, "strategy": s, **q} for (v, s), q in summary.items()])
    return rows, summary


def study_selection_hotspots(n_hotspots: int = 50, n_stas: int = 10_000, clustered_fraction: float = 0.9,
                             cluster_sigma_m: float = 1.0, radius_q: float = 0.01, isolated_pct: float = 10.0,
                             sweep=(0.05, 0.1, 0.2, 0.4), seed: int = 0, out_dir=None):
    """Coverage-friendly vs density-preserving selection on a hotspot population.

    Both methods keep the same number of points; isolation is judged by
    neighbor counts over the whole population at the selection radius.
    ``sweep`` lists radii as fractions of the embedding's widest extent.
    """
    sc = gen_hotspot_scenario(n_hotspots, n_stas, clustered_fraction, cluster_sigma_m, seed=seed)
    emb = pca_project(sc.rp_pl)
    r = radius_from_quantile(emb, radius_q, seed)
    strat = stratified_select(emb, r, seed)
    unif = uniform_select(len(emb), len(strat), seed)
    iso = isolated_mask(neighbor_counts(emb, r), isolated_pct)
    rows = []
    for sel in (strat, unif):
        idx = sel.selected_indices
        rows.append({"method": sel.method, "radius": r, "n_selected": len(idx),
                     "isolated_fraction": float(iso[idx].mean()),
                     "hotspot_fraction": float(sc.clustered[idx].mean())})
    extent = float(np.ptp(emb.coords, axis=0).max())
    sweep_rows = [{"radius_fraction": f, "radius": f * extent,
                   "n_selected": len(stratified_select(emb, f * extent, seed))} for f in sweep]
    summary = {"rows": rows, "sweep": sweep_rows, "population_isolated": float(iso.mean())}
    if out_dir is not None:
        Path(out_dir).mkdir(parents=True, exist_ok=True)
        write_rows_csv(Path(out_dir) / "selection_methods.csv", rows)
        write_rows_csv(Path(out_dir) / "selection_sweep.csv", sweep_rows)
    return rows, summary
