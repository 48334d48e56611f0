import numpy as np
import pytest
from scipy.cluster.vq import kmeans2

from uatpc.core import ValidationError
from uatpc.kdtree import brute_neighbor_counts
from uatpc.selection import (Embedding, isolated_mask, neighbor_counts, pca_project, radius_for_count,
                             radius_from_quantile, stratified_select, tsne_project, uniform_select)
from uatpc.synth import gen_hotspot_scenario


def _pairwise(x):
    return np.sqrt(((x[:, None, :] - x[None, :, :]) ** 2).sum(axis=2))


def test_pca_recovers_3d_affine_subspace():
    rng = np.random.default_rng(0)
    latent = rng.normal(size=(60, 3)) * [5, 3, 1]
    basis, _ = np.linalg.qr(rng.normal(size=(33, 3)))
    x = 70 + latent @ basis.T
    emb = pca_project(x)
    assert np.allclose(_pairwise(emb.coords), _pairwise(x), rtol=1e-6, atol=1e-9)


def test_pca_duplicates_and_sign_convention():
    x = np.random.default_rng(1).normal(size=(20, 6))
    x[5] = x[3]
    emb = pca_project(x)
    assert np.array_equal(emb.coords[5], emb.coords[3])
    for v in emb.components:
        assert v[np.argmax(np.abs(v))] > 0


def test_pca_reconstruction_error_is_discarded_variance():
    x = np.random.default_rng(2).normal(size=(100, 33))
    emb = pca_project(x)
    xc = x - x.mean(axis=0)
    recon = emb.coords @ emb.components
    ev = np.sort(np.linalg.eigvalsh(xc.T @ xc))[::-1]
    assert np.sum((xc - recon) ** 2) == pytest.approx(ev[3:].sum(), rel=1e-9)
    assert emb.method_params["discarded"] == pytest.approx(ev[3:].sum(), rel=1e-9)


def test_pca_rank_deficient_pads_zeros():
    x = np.column_stack([np.arange(10.0), 2 * np.arange(10.0)])
    emb = pca_project(x)
    assert emb.coords.shape == (10, 3)
    assert np.all(emb.coords[:, 1:] == 0)
    with pytest.raises(ValidationError):
        pca_project(np.zeros((2, 5)))
    with pytest.raises(ValidationError):
        pca_project(np.array([[1.0, np.nan], [1, 2], [3, 4]]))


def _two_blobs(n=100, seed=0):
    rng = np.random.default_rng(seed)
    return np.vstack([rng.normal(60, 2, (n, 10)), rng.normal(80, 2, (n, 10))])


def test_tsne_separates_blobs_and_lowers_kl():
    emb = tsne_project(_two_blobs(), seed=0, iterations=1000)
    assert emb.method_params["kl_final"] < emb.method_params["kl_initial"]
    _, lab = kmeans2(emb.coords, 2, seed=1, minit="++")
    truth = np.r_[np.zeros(100), np.ones(100)]
    assert max(np.mean(lab == truth), np.mean(lab != truth)) >= 0.95


def test_tsne_deterministic_and_perplexity_guard():
    x = _two_blobs(40, 3)
    a = tsne_project(x, perplexity=10, iterations=300, seed=4)
    b = tsne_project(x, perplexity=10, iterations=300, seed=4)
    assert np.array_equal(a.coords, b.coords)
    with pytest.raises(ValidationError, match="perplexity"):
        tsne_project(np.random.default_rng(0).normal(size=(50, 5)), perplexity=40)
    with pytest.raises(ValidationError):
        tsne_project(np.zeros((20, 2)), perplexity=2, max_n=10)


def test_uniform_select():
    assert uniform_select(5, 5, 0).selected_indices.tolist() == [0, 1, 2, 3, 4]
    assert len(uniform_select(5, 0, 0)) == 0
    with pytest.raises(ValidationError):
        uniform_select(3, 4, 0)
    s = uniform_select(100, 30, 9).selected_indices
    assert len(set(s.tolist())) == 30 and s.min() >= 0 and s.max() < 100


def test_uniform_preserves_hotspot_share():
    clustered = np.zeros(1000, bool)
    clustered[:900] = True
    fracs = [clustered[uniform_select(1000, 100, s).selected_indices].mean() for s in range(1000)]
    assert np.mean(fracs) == pytest.approx(0.9, abs=0.03)


def _check_stratified(pts, res):
    sel = res.selected_indices
    d = _pairwise(pts)
    r = res.radius
    sub = d[np.ix_(sel, sel)]
    np.fill_diagonal(sub, np.inf)
    assert np.all(sub > r)  # separation
    others = np.setdiff1d(np.arange(len(pts)), sel)
    if len(others):
        assert np.all(d[np.ix_(others, sel)].min(axis=1) <= r)  # coverage
    assert len(set(sel.tolist())) == len(sel)


def test_stratified_properties_small():
    pts = np.random.default_rng(3).uniform(0, 1, (300, 3))
    for r in (0.05, 0.1, 0.3):
        _check_stratified(pts, stratified_select(pts, r, seed=1))


def test_stratified_extremes():
    pts = np.random.default_rng(4).uniform(0, 1, (50, 3))
    d = _pairwise(pts)
    np.fill_diagonal(d, np.inf)
    assert len(stratified_select(pts, d.min() * 0.99, 0)) == 50
    assert len(stratified_select(pts, 10.0, 0)) == 1
    with pytest.raises(ValidationError):
        stratified_select(pts, 0.0, 0)


def test_neighbor_counts_examples():
    assert neighbor_counts(np.array([[1.0, 1, 1], [1.0, 1, 1]]), 0.5).tolist() == [1, 1]
    assert neighbor_counts(np.array([[1.0, 2, 3]]), 0.5).tolist() == [0]
    pts = np.array([[0, 0, 0], [1, 0, 0], [0, 2, 0], [3, 3, 3], [1, 1, 0]], float)
    assert neighbor_counts(pts, 1.5).tolist() == brute_neighbor_counts(pts, 1.5).tolist() == [2, 2, 1, 0, 3]


def test_radius_helpers():
    pts = np.random.default_rng(5).uniform(0, 1, (400, 3))
    r = radius_from_quantile(pts, 0.5)
    d = _pairwise(pts)[np.triu_indices(400, 1)]
    assert r == pytest.approx(np.quantile(d, 0.5))
    r40 = radius_for_count(pts, 40, seed=0)
    assert abs(len(stratified_select(pts, r40, 0)) - 40) <= 3
    with pytest.raises(ValidationError):
        radius_from_quantile(pts, 1.0)


def test_isolated_mask():
    assert isolated_mask([0, 5, 5, 5, 5, 5, 5, 5, 5, 5]).tolist() == [True] + [False] * 9


def test_selected_count_falls_with_radius_on_hotspots():
    sc = gen_hotspot_scenario(seed=2)
    emb = pca_project(sc.rp_pl)
    extent = np.ptp(emb.coords, axis=0).max()
    counts = [len(stratified_select(emb, f * extent, 0)) for f in (0.05, 0.1, 0.2, 0.4)]
    assert counts == sorted(counts, reverse=True) and counts[0] > counts[-1]


def test_embedding_csv(tmp_path):
    emb = Embedding(np.array([[0.5, 1.0, 2.0]]), "pca")
    emb.write_csv(tmp_path / "e.csv")
    assert (tmp_path / "e.csv").read_text().splitlines() == ["index,x0,x1,x2", "0,0.5,1,2"]
    with pytest.raises(ValidationError):
        Embedding(np.array([[np.inf, 0, 0]]), "pca")
