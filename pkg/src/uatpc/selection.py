"""Reference-point downsampling in a 3-D embedding of PL space."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import ValidationError
from .kdtree import KDTree

TSNE_MAX_N = 10_000


@dataclass
class Embedding:
    coords: np.ndarray
    method: str
    method_params: dict = field(default_factory=dict)
    components: np.ndarray | None = None

    def __post_init__(self):
        self.coords = np.asarray(self.coords, dtype=float)
        if self.coords.ndim != 2:
            raise ValidationError("embedding coordinates must be 2-D")
        if not np.all(np.isfinite(self.coords)):
            raise ValidationError("embedding has non-finite coordinates")

    def __len__(self):
        return len(self.coords)

    def write_csv(self, path) -> None:
        dims = self.coords.shape[1]
        header = "index," + ",".join(f"x{i}" for i in range(dims))
        data = np.column_stack([np.arange(len(self.coords)), self.coords])
        np.savetxt(path, data, delimiter=",", header=header, comments="",
                   fmt=["%d"] + ["%.17g"] * dims)


@dataclass
class SelectionResult:
    selected_indices: np.ndarray
    method: str
    seed: int | None
    radius: float | None = None
    n_total: int = 0

    def to_json(self) -> dict:
        return {"method": self.method, "seed": self.seed, "radius": self.radius,
                "n_total": self.n_total, "selected_indices": [int(i) for i in self.selected_indices]}

    def __len__(self):
        return len(self.selected_indices)


def _complete(pl_matrix) -> np.ndarray:
    x = np.asarray(pl_matrix, dtype=float)
    if x.ndim != 2:
        raise ValidationError("PL matrix must be 2-D")
    if not np.all(np.isfinite(x)):
        raise ValidationError("PL matrix must be complete (impute first)")
    return x


def pca_project(pl_matrix, dims: int = 3) -> Embedding:
    """Centered projection on the top principal directions.

    Each direction is signed so its largest-magnitude loading is positive.
    Directions beyond the data rank come out as zero columns.
    """
    x = _complete(pl_matrix)
    n, f = x.shape
    if n < dims:
        raise ValidationError(f"need at least {dims} rows for a {dims}-D projection")
    xc = x - x.mean(axis=0)
    _, s, vt = np.linalg.svd(xc, full_matrices=False)
    tol = (s[0] if s.size else 0.0) * max(n, f) * np.finfo(float).eps
    comps = np.zeros((dims, f))
    keep = min(dims, int(np.sum(s > tol)))
    for i in range(keep):
        v = vt[i]
        comps[i] = v if v[np.argmax(np.abs(v))] > 0 else -v
    coords = xc @ comps.T
    var = s ** 2
    return Embedding(coords, "pca", {"dims": dims, "rank": keep,
                                     "explained": var[:keep].tolist(),
                                     "discarded": float(var[keep:].sum())}, comps)


# -- exact t-SNE -----------------------------------------------------------

def _conditional_p(d2: np.ndarray, perplexity: float, tol: float = 1e-5, max_iter: int = 100) -> np.ndarray:
    """Row-wise Gaussian affinities whose entropy matches log(perplexity)."""
    n = d2.shape[0]
    target = math.log(perplexity)
    p = np.zeros((n, n))
    for i in range(n):
        di = np.delete(d2[i], i)
        beta, lo, hi = 1.0, 0.0, math.inf
        for _ in range(max_iter):
            e = np.exp(-(di - di.min()) * beta)
            se = e.sum()
            h = math.log(se) + beta * float(np.dot(di - di.min(), e)) / se
            if abs(h - target) < tol:
                break
            if h > target:
                lo = beta
                beta = beta * 2.0 if hi == math.inf else (beta + hi) / 2.0
            else:
                hi = beta
                beta = (beta + lo) / 2.0
        p[i, np.arange(n) != i] = e / se
    return p


def _kl(p, q) -> float:
    m = p > 0
    return float(np.sum(p[m] * np.log(p[m] / q[m])))


def tsne_project(pl_matrix, perplexity: float = 40.0, iterations: int = 2500, seed: int = 0,
                 dims: int = 3, learning_rate: float | None = None, early_exaggeration: float = 12.0,
                 exaggeration_iters: int = 250, max_n: int = TSNE_MAX_N) -> Embedding:
    """Exact O(N^2) t-SNE started from the PCA layout.

    ``seed`` only drives a 1e-8-scale jitter that breaks exact ties in the
    starting layout; the run is fully deterministic given its inputs.
    """
    x = _complete(pl_matrix)
    n = x.shape[0]
    if n > max_n:
        raise ValidationError(f"exact t-SNE is capped at {max_n} samples; downsample or use PCA")
    if perplexity >= (n - 1) / 3.0:
        raise ValidationError(f"perplexity {perplexity} too large for {n} samples (needs < {(n - 1) / 3.0:.2f})")
    sq = (x ** 2).sum(axis=1)
    d2 = np.maximum(sq[:, None] + sq[None, :] - 2.0 * x @ x.T, 0.0)
    p = _conditional_p(d2, perplexity)
    p = np.maximum((p + p.T) / (2.0 * n), 1e-12)
    np.fill_diagonal(p, 0.0)

    y = pca_project(x, dims).coords
    if np.std(y[:, 0]) > 0:
        y = y / np.std(y[:, 0]) * 1e-4
    rng = np.random.default_rng(seed)
    y = y + rng.normal(0.0, 1e-8, size=y.shape)
    lr = learning_rate if learning_rate is not None else max(n / early_exaggeration / 4.0, 50.0)

    def affinities(y):
        yy = (y ** 2).sum(axis=1)
        num = 1.0 / (1.0 + np.maximum(yy[:, None] + yy[None, :] - 2.0 * y @ y.T, 0.0))
        np.fill_diagonal(num, 0.0)
        q = np.maximum(num / num.sum(), 1e-12)
        np.fill_diagonal(q, 0.0)
        return num, q

    _, q = affinities(y)
    kl_hist = [(0, _kl(p, q))]
    update = np.zeros_like(y)
    gains = np.ones_like(y)
    for it in range(1, iterations + 1):
        exag = early_exaggeration if it <= exaggeration_iters else 1.0
        momentum = 0.5 if it <= exaggeration_iters else 0.8
        num, q = affinities(y)
        pq = (exag * p - q) * num
        grad = 4.0 * (np.diag(pq.sum(axis=1)) - pq) @ y
        same = np.sign(grad) == np.sign(update)
        gains = np.where(same, gains * 0.8, gains + 0.2)
        np.maximum(gains, 0.01, out=gains)
        update = momentum * update - lr * gains * grad
        y = y + update
        y = y - y.mean(axis=0)
        if it % 50 == 0 or it == iterations:
            kl_hist.append((it, _kl(p, affinities(y)[1])))
    return Embedding(y, "tsne", {"perplexity": perplexity, "iterations": iterations, "seed": seed,
                                 "learning_rate": lr, "kl_initial": kl_hist[0][1],
                                 "kl_final": kl_hist[-1][1], "kl_history": kl_hist})


# -- selection -------------------------------------------------------------

def uniform_select(n_total: int, k: int, seed: int = 0) -> SelectionResult:
    if k < 0 or n_total < 0:
        raise ValidationError("counts must be non-negative")
    if k > n_total:
        raise ValidationError(f"cannot select {k} of {n_total}")
    rng = np.random.default_rng(seed)
    idx = np.sort(rng.choice(n_total, size=k, replace=False)) if k else np.zeros(0, dtype=np.intp)
    return SelectionResult(idx.astype(np.intp), "uniform", seed, None, n_total)


def _coords(embedding) -> np.ndarray:
    return embedding.coords if isinstance(embedding, Embedding) else np.asarray(embedding, dtype=float)


def stratified_select(embedding, r: float, seed: int = 0, tree: KDTree | None = None) -> SelectionResult:
    """Walk a seeded permutation; each still-unmarked point is kept and marks
    every unmarked point within ``r`` of it as discarded."""
    if not r > 0:
        raise ValidationError("radius must be positive")
    pts = _coords(embedding)
    tree = tree or KDTree(pts)
    n = len(pts)
    marked = np.zeros(n, dtype=bool)
    chosen = []
    for i in np.random.default_rng(seed).permutation(n):
        if marked[i]:
            continue
        chosen.append(i)
        marked[tree.query_radius(pts[i], r)] = True
    return SelectionResult(np.sort(np.array(chosen, dtype=np.intp)), "stratified", seed, float(r), n)


def neighbor_counts(embedding, r: float, tree: KDTree | None = None) -> np.ndarray:
    """Per point, how many other points lie within distance ``r``."""
    if not r > 0:
        raise ValidationError("radius must be positive")
    pts = _coords(embedding)
    if len(pts) == 0:
        return np.zeros(0, dtype=np.intp)
    tree = tree or KDTree(pts)
    return tree.count_radius(pts, r) - 1


def radius_from_quantile(embedding, q: float, seed: int = 0, max_pairs: int = 200_000) -> float:
    """Radius at the ``q`` quantile of pairwise distances (sampled pairs above ``max_pairs``)."""
    if not 0.0 < q < 1.0:
        raise ValidationError("quantile must lie in (0, 1)")
    pts = _coords(embedding)
    n = len(pts)
    if n < 2:
        raise ValidationError("need at least two points")
    if n * (n - 1) // 2 <= max_pairs:
        i, j = np.triu_indices(n, 1)
    else:
        rng = np.random.default_rng(seed)
        i = rng.integers(0, n, max_pairs)
        j = (i + rng.integers(1, n, max_pairs)) % n
    d = np.sqrt(((pts[i] - pts[j]) ** 2).sum(axis=1))
    return float(np.quantile(d, q))


def radius_for_count(embedding, target: int, seed: int = 0, iters: int = 40) -> float:
    """Bisect the radius so stratified selection keeps about ``target`` points."""
    pts = _coords(embedding)
    n = len(pts)
    if not 1 <= target <= n:
        raise ValidationError("target must lie in [1, n]")
    tree = KDTree(pts)
    lo = 0.0
    hi = float(np.sqrt(((pts.max(axis=0) - pts.min(axis=0)) ** 2).sum())) + 1e-12
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if len(stratified_select(pts, mid, seed, tree)) > target:
            lo = mid
        else:
            hi = mid
    return hi


def isolated_mask(counts, pct: float = 10.0) -> np.ndarray:
    """Points whose neighbor count is below the ``pct`` percentile of all counts."""
    counts = np.asarray(counts)
    return counts < np.percentile(counts, pct)
