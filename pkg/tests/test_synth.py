import numpy as np
import pytest

from uatpc.core import ValidationError
from uatpc.synth import (PathLossParams, gen_hotspot_scenario, gen_uniform_scenario, obfuscate, obfuscate_matrix,
                         pathloss)


@pytest.mark.parametrize("d, want", [(1.0, 40.0), (10.0, 70.0), (100.0, 100.0), (0.2, 40.0), (0.0, 40.0)])
def test_pathloss_values(d, want):
    assert pathloss(d) == pytest.approx(want, abs=1e-12)


def test_pathloss_shadowing_needs_rng_and_is_seeded():
    p = PathLossParams(shadowing_sigma_db=5.0)
    with pytest.raises(ValidationError):
        pathloss([1.0], p)
    a = pathloss(np.ones(1000) * 10, p, np.random.default_rng(0))
    b = pathloss(np.ones(1000) * 10, p, np.random.default_rng(0))
    assert np.array_equal(a, b)
    assert abs(a.mean() - 70) < 0.5 and abs(a.std() - 5) < 0.5
    with pytest.raises(ValidationError):
        pathloss(-1.0)


def test_uniform_scenario_deterministic():
    a = gen_uniform_scenario(5, 30, seed=7)
    b = gen_uniform_scenario(5, 30, seed=7)
    assert np.array_equal(a.rp_pl, b.rp_pl) and a.instance == b.instance
    assert not np.array_equal(a.rp_pl, gen_uniform_scenario(5, 30, seed=8).rp_pl)


def test_single_ap_scenario():
    sc = gen_uniform_scenario(1, 4, seed=0)
    assert sc.instance.ap_pl.tolist() == [[0.0]]


def test_pl_consistent_with_positions():
    sc = gen_uniform_scenario(33, 330, 100.0, seed=1)
    d_rp, d_ap = sc.distances()
    assert np.array_equal(sc.rp_pl, pathloss(d_rp))
    ap_pl = pathloss(d_ap)
    np.fill_diagonal(ap_pl, 0.0)
    assert np.allclose(sc.instance.ap_pl, ap_pl)
    assert np.allclose(np.percentile(sc.rp_pl, [25, 50, 75]), pathloss(np.percentile(d_rp, [25, 50, 75])),
                       atol=1e-9)


def test_channel_plan_and_levels():
    sc = gen_uniform_scenario(3, 5, levels=[(1, 2), (3, 4), (5,)], channels=[1, 1, 6], seed=0)
    assert sc.instance.channel_overlap.tolist() == [[True, True, False], [True, True, False], [False, False, True]]
    assert sc.instance.aps[2].allowed_levels == (5,)


def test_input_validation():
    with pytest.raises(ValidationError):
        gen_uniform_scenario(0, 10)
    with pytest.raises(ValidationError):
        gen_hotspot_scenario(clustered_fraction=1.5)


def test_hotspot_defaults_cluster_tightly():
    sc = gen_hotspot_scenario(seed=3)
    assert sc.rp_pl.shape == (10_000, 33)
    assert sc.clustered.mean() == pytest.approx(0.9)
    d = np.linalg.norm(sc.sta_positions[:, None, :] - sc.hotspot_centers[None, :, :], axis=2).min(axis=1)
    assert np.mean(d <= 3.0) >= 0.85


def test_hotspot_degenerate_limits():
    sc = gen_hotspot_scenario(n_hotspots=4, n_stas=50, clustered_fraction=1.0, cluster_sigma_m=0.0, seed=1)
    d = np.linalg.norm(sc.sta_positions[:, None, :] - sc.hotspot_centers[None, :, :], axis=2).min(axis=1)
    assert np.all(d == 0)
    sc0 = gen_hotspot_scenario(n_hotspots=4, n_stas=50, clustered_fraction=0.0, seed=1)
    assert not sc0.clustered.any()
    assert np.all((sc0.sta_positions >= 0) & (sc0.sta_positions <= 100))


def test_obfuscate_hand_row():
    m = obfuscate_matrix(np.array([[70.0, 50.0, 80.0, 60.0]]), 2)
    assert np.isnan(m).tolist() == [[True, False, True, False]]
    recs = obfuscate(np.array([[70.0, 50.0, 80.0, 60.0]]), 2)
    assert recs[0].pl == {"ap1": 50.0, "ap3": 60.0}
    assert recs[0].serving_ap == "ap1"


def test_obfuscate_ties_and_limits():
    row = np.array([[60.0, 50.0, 50.0]])
    assert obfuscate(row, 1)[0].pl == {"ap1": 50.0}
    full = np.array([[1.0, 2.0, 3.0]])
    assert np.array_equal(obfuscate_matrix(full, 3), full)
    with pytest.raises(ValidationError):
        obfuscate_matrix(full, 0)


def test_obfuscate_keeps_k_and_serving():
    sc = gen_uniform_scenario(10, 100, seed=0)
    recs = obfuscate(sc.rp_pl, 4, ap_ids=sc.instance.ap_ids)
    for rec, row in zip(recs, sc.rp_pl):
        assert rec.n_visible == 4
        assert rec.serving_ap == f"ap{int(np.argmin(row))}"
