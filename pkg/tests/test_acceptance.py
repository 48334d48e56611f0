"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line."""
import time

import numpy as np
import pytest
from scipy.cluster.vq import kmeans2

from test_sim import brute_utility, two_pass_pearson
from uatpc.core import PowerConfig
from uatpc.imputation import build_datasets, hide_and_impute_eval, median_impute, train_model
from uatpc.kdtree import KDTree, brute_radius, brute_neighbor_counts
from uatpc.optimize import full_power, local_search, tpcv1_offline
from uatpc.selection import neighbor_counts, radius_from_quantile, stratified_select, tsne_project
from uatpc.sim import network_utility, pearson_r
from uatpc.studies import study_imputation_necessity, study_optimality_gap, study_selection_hotspots
from uatpc.synth import PathLossParams, gen_hotspot_scenario, gen_uniform_scenario, obfuscate_matrix

pytestmark = pytest.mark.acceptance


def verdict(capsys, n, ok, detail):
    with capsys.disabled():
        print(f"\n{'PASS' if ok else 'FAIL'} criterion {n}: {detail}")
    assert ok, detail


def test_criterion_01_optimality_gap(capsys):
    t0 = time.perf_counter()
    _, s = study_optimality_gap(32, 8, 30, seed=0)
    nl, l2 = s["nl"]["median"] + 0.0, s["l2"]["q3"] + 0.0
    ok = nl <= 0.5 and l2 <= 3.0
    verdict(capsys, 1, ok, f"LS-nl median gap {nl:.4f}% (<= 0.5), LS-l2 q3 gap {l2:.4f}% (<= 3), "
                           f"{time.perf_counter() - t0:.0f}s")


def test_criterion_02_monotone_and_deterministic(capsys):
    seeds = np.random.SeedSequence(2).generate_state(100)
    broken = []
    for s in seeds:
        r = np.random.default_rng(int(s))
        n = int(r.integers(1, 11))
        levels = tuple(sorted(r.choice(np.arange(4, 33), int(r.integers(2, 7)), replace=False).tolist()))
        sc = gen_uniform_scenario(n, int(r.integers(5, 40)), float(r.uniform(20, 300)), levels,
                                  seed=int(s), channels=r.integers(0, 3, n))
        trials = ["nl", 2, 5, 15][int(r.integers(4))]
        a = local_search(sc.instance, sc.rp_pl, trials, None, seed=int(s))
        b = local_search(sc.instance, sc.rp_pl, trials, None, seed=int(s))
        if np.any(np.diff(a.utility_trace) < 0) or a.to_json() != b.to_json():
            broken.append(int(s))
    verdict(capsys, 2, not broken, f"{100 - len(broken)}/100 reports monotone and reproducible")


def test_criterion_03_imputation_necessity(capsys):
    t0 = time.perf_counter()
    _, s = study_imputation_necessity(32, 33, 330, visible_counts=(2,), strategies=("median", "noise5"),
                                      seed=0, side_m=700.0, trials=5, time_cap_s=120.0)
    med, noise = s[(2, "median")]["median"], s[(2, "noise5")]["median"]
    ok = med >= 15.0 and noise <= 7.0
    verdict(capsys, 3, ok, f"median-imputer loss {med:.2f}% (>= 15), noise-oracle loss {noise:.2f}% (<= 7), "
                           f"{time.perf_counter() - t0:.0f}s")


@pytest.fixture(scope="module")
def imputation_fixture():
    sc = gen_uniform_scenario(20, 22_000, 100.0,
                              pl_params=PathLossParams(exponent=4.0, shadowing_sigma_db=5.0), seed=11)
    masked = obfuscate_matrix(sc.rp_pl[:20_000], 6)
    bundle = build_datasets(masked, 4, seed=0)
    t0 = time.perf_counter()
    model = train_model(bundle, seed=0)
    held_out = obfuscate_matrix(sc.rp_pl[20_000:], 11)
    return bundle, model, median_impute(masked), held_out, time.perf_counter() - t0


def test_criterion_04_learned_beats_median(capsys, imputation_fixture):
    bundle, model, med, _, secs = imputation_fixture
    ratios = [reg.test_mae / np.mean(np.abs(d.part("test")[1] - med.value))
              for d, reg in zip(bundle, model.per_ap)]
    agg = float(np.median([reg.test_mae for reg in model.per_ap]))
    ok = max(ratios) < 0.7 and agg <= 7.0
    verdict(capsys, 4, ok, f"worst per-AP MAE ratio {max(ratios):.3f} (< 0.7), median test MAE {agg:.2f} dB "
                           f"(<= 7), training {secs:.0f}s")


def test_criterion_05_hide_and_impute_flat(capsys, imputation_fixture):
    _, model, _, held_out, _ = imputation_fixture
    res = hide_and_impute_eval(held_out, [1, 8], model, seed=0)
    ratio = res[8].median / res[1].median
    verdict(capsys, 5, ratio <= 1.6, f"median |err| {res[1].median:.2f} dB hiding 1, {res[8].median:.2f} dB "
                                     f"hiding 8, ratio {ratio:.3f} (<= 1.6)")


def _separated_covered_partitioned(pts, sel, r):
    idx = sel.selected_indices
    chosen = pts[idx]
    d2 = ((chosen[:, None, :] - chosen[None, :, :]) ** 2).sum(axis=2)
    np.fill_diagonal(d2, np.inf)
    separated = bool(np.all(d2 > r * r))
    to_sel = ((pts[:, None, :] - chosen[None, :, :]) ** 2).sum(axis=2)
    covered = bool(np.all(to_sel.min(axis=1) <= r * r))
    rest = np.setdiff1d(np.arange(len(pts)), idx)
    partitioned = len(np.unique(idx)) == len(idx) and len(idx) + len(rest) == len(pts)
    return separated and covered and partitioned


def test_criterion_06_stratified_invariants(capsys):
    t0 = time.perf_counter()
    bad = []
    for seed in range(20):
        rng = np.random.default_rng(seed)
        pts = np.vstack([rng.uniform(-50, 50, (500, 3)), rng.normal(0, 3, (500, 3))])
        for q in (0.001, 0.01, 0.05):
            r = radius_from_quantile(pts, q, seed)
            if not _separated_covered_partitioned(pts, stratified_select(pts, r, seed), r):
                bad.append((seed, q))
        extent = float(np.ptp(pts, axis=0).max())
        counts = [len(stratified_select(pts, f * extent, seed)) for f in (0.05, 0.1, 0.2, 0.4)]
        if np.any(np.diff(counts) > 0):
            bad.append((seed, "sweep"))
    verdict(capsys, 6, not bad, f"{60 - len(bad)}/60 selections hold all invariants and every sweep is "
                                f"non-increasing, {time.perf_counter() - t0:.0f}s")


def test_criterion_07_hotspot_contrast(capsys):
    rows, s = study_selection_hotspots(seed=0)
    by = {r["method"]: r for r in rows}
    cov, dens = by["stratified"], by["uniform"]
    ok = cov["isolated_fraction"] >= 2 * dens["isolated_fraction"] and abs(dens["hotspot_fraction"] - 0.9) <= 0.05
    verdict(capsys, 7, ok, f"isolated {cov['isolated_fraction']:.3f} coverage-friendly vs "
                           f"{dens['isolated_fraction']:.3f} density-preserving, density-preserving hotspot "
                           f"share {dens['hotspot_fraction']:.3f}")


def test_criterion_08_oracles(capsys):
    worst = 0.0
    for n in range(1, 6):
        for seed in range(20):
            rng = np.random.default_rng([n, seed])
            sc = gen_uniform_scenario(n, 25, float(rng.uniform(10, 200)), seed=seed,
                                      channels=rng.integers(0, 2, n))
            levels = [float(rng.choice(ap.allowed_levels)) for ap in sc.instance.aps]
            got = network_utility(sc.rp_pl, PowerConfig(levels), sc.instance).total
            want = brute_utility(sc.rp_pl.tolist(), levels, sc.instance.channel_overlap.tolist())
            worst = max(worst, abs(got - want) / max(abs(want), 1e-300))
    tree_ok = True
    for n in (1, 2, 17, 500, 2000):
        rng = np.random.default_rng(n)
        pts = np.round(rng.normal(0, 10, (n, 3)), 1)  # rounding creates exact-boundary distances
        tree = KDTree(pts)
        for r in (0.0, 1.0, 5.0):
            tree_ok &= np.array_equal(neighbor_counts(pts, r) if r > 0 else tree.count_radius(pts, 0) - 1,
                                      brute_neighbor_counts(pts, r))
            for q in pts[:25]:
                tree_ok &= np.array_equal(tree.query_radius(q, r), brute_radius(pts, q, r))
    p_worst = 0.0
    for seed in range(200):
        rng = np.random.default_rng(seed)
        x = rng.normal(0, 1, 50)
        y = 0.3 * x + rng.normal(0, 1, 50)
        p_worst = max(p_worst, abs(pearson_r(x, y)[0] - two_pass_pearson(x.tolist(), y.tolist())))
    ok = worst <= 1e-9 and tree_ok and p_worst <= 1e-12
    verdict(capsys, 8, ok, f"utility rel err {worst:.2e} (<= 1e-9), k-d tree exact {tree_ok}, "
                           f"pearson abs err {p_worst:.2e} (<= 1e-12)")


def test_criterion_09_tsne(capsys):
    kl_ok = True
    for seed in range(3):
        rng = np.random.default_rng(seed)
        x = rng.normal(70, 8, (150, 12))
        e = tsne_project(x, perplexity=20, iterations=500, seed=seed)
        kl_ok &= e.method_params["kl_final"] < e.method_params["kl_initial"]
    rng = np.random.default_rng(9)
    blobs = np.vstack([rng.normal(60, 2, (100, 10)), rng.normal(80, 2, (100, 10))])
    e = tsne_project(blobs, seed=0)
    kl_ok &= e.method_params["kl_final"] < e.method_params["kl_initial"]
    _, lab = kmeans2(e.coords, 2, seed=1, minit="++")
    truth = np.r_[np.zeros(100), np.ones(100)]
    purity = max(np.mean(lab == truth), np.mean(lab != truth))
    ok = bool(kl_ok) and purity >= 0.95
    verdict(capsys, 9, ok, f"KL decreased on every run: {bool(kl_ok)}, two-blob 2-means purity {purity:.3f}")


def test_criterion_10_baseline_ordering(capsys):
    seeds = np.random.SeedSequence(10).generate_state(40)
    worst = np.inf
    for s in seeds:
        r = np.random.default_rng(int(s))
        n = int(r.integers(10, 34))
        sc = gen_uniform_scenario(n, 10 * n, float(r.choice([100, 300, 500, 700])), seed=int(s),
                                  channels=r.integers(0, 3, n) if r.random() < 0.5 else None)
        ls = local_search(sc.instance, sc.rp_pl, 15, 600, seed=int(s)).best_utility
        base = max(network_utility(sc.rp_pl, cfg, sc.instance).total
                   for cfg in (full_power(sc.instance), tpcv1_offline(sc.instance)))
        worst = min(worst, ls - base)
    verdict(capsys, 10, worst >= 0, f"smallest LS margin over the best baseline {worst:.4f} across 40 scenarios")
