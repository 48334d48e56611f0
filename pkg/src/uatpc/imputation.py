"""Path-loss map completion.

One small regressor per AP predicts that AP's PL from whatever other entries
a measurement carries. Inputs are ``2 * n_aps`` wide: a standardized PL per AP
(0 when absent) followed by the 0/1 presence flags.
"""
from __future__ import annotations

import hashlib
import json
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .core import MeasurementRecord, ValidationError, records_to_matrix

log = logging.getLogger(__name__)

HIDDEN = (200, 100, 40)
PL_RANGE = (0.0, 120.0)
MIN_PRESENT = 3
SPLITS = ("train", "val", "test")
DEFAULT_FRACTIONS = (0.70, 0.15, 0.15)


class NotImputableError(ValidationError):
    """Raised when a vector has too few present entries to feed the regressors."""


def _as_matrix(records, ap_ids=None) -> np.ndarray:
    if isinstance(records, np.ndarray):
        return np.asarray(records, dtype=float)
    records = list(records)
    if records and isinstance(records[0], MeasurementRecord):
        if ap_ids is None:
            ap_ids = sorted({k for r in records for k in r.pl})
        return records_to_matrix(records, ap_ids)
    return np.asarray(records, dtype=float).reshape(len(records), -1)


def ap_fingerprint(ap_ids) -> str:
    return hashlib.sha256("\n".join(ap_ids).encode()).hexdigest()


def encode(masked_pl, mean: float, std: float) -> np.ndarray:
    """NaN-masked PL rows -> network inputs (standardized values, presence flags)."""
    m = np.atleast_2d(np.asarray(masked_pl, dtype=float))
    present = ~np.isnan(m)
    vals = np.where(present, (np.nan_to_num(m) - mean) / std, 0.0)
    return np.concatenate([vals, present.astype(float)], axis=1)


@dataclass
class PerApDataset:
    """Labeled samples for one target AP.

    ``inputs`` holds the masked PL rows (NaN = absent, target always NaN);
    ``encoded(mean, std)`` turns them into network features.
    """
    ap_index: int
    inputs: np.ndarray
    labels: np.ndarray
    split: np.ndarray
    source_rows: np.ndarray

    def __len__(self):
        return len(self.labels)

    def part(self, name: str):
        sel = self.split == name
        return self.inputs[sel], self.labels[sel]

    def encoded(self, mean: float, std: float) -> np.ndarray:
        return encode(self.inputs, mean, std)


@dataclass
class DatasetBundle:
    datasets: list
    mean: float
    std: float
    n_aps: int

    def __iter__(self):
        return iter(self.datasets)

    def __len__(self):
        return len(self.datasets)

    def __getitem__(self, i):
        return self.datasets[i]


def _split_labels(n: int, rng, fractions) -> np.ndarray:
    n_tr = int(round(fractions[0] * n))
    n_va = int(round(fractions[1] * n))
    n_tr = min(max(n_tr, 1 if n else 0), n)
    n_va = min(n_va, n - n_tr)
    lab = np.empty(n, dtype="<U5")
    order = rng.permutation(n)
    lab[order[:n_tr]] = "train"
    lab[order[n_tr:n_tr + n_va]] = "val"
    lab[order[n_tr + n_va:]] = "test"
    return lab


def build_datasets(records, min_visible: int = 4, ap_ids=None, seed: int = 0,
                   fractions=DEFAULT_FRACTIONS) -> DatasetBundle:
    """One dataset per AP; a record with ``v >= min_visible`` entries yields ``v`` samples."""
    if min_visible < MIN_PRESENT + 1:
        raise ValidationError(f"min_visible must be at least {MIN_PRESENT + 1}")
    m = _as_matrix(records, ap_ids)
    n_aps = m.shape[1]
    present = ~np.isnan(m)
    eligible = present.sum(axis=1) >= min_visible
    obs = m[eligible][present[eligible]]
    if obs.size:
        mean = float(obs.mean())
        std = float(obs.std()) or 1.0
    else:
        mean, std = 0.0, 1.0
    out = []
    for a in range(n_aps):
        rows = np.flatnonzero(eligible & present[:, a])
        x = m[rows].copy()
        y = x[:, a].copy()
        x[:, a] = np.nan
        rng = np.random.default_rng([seed, a])
        out.append(PerApDataset(a, x, y, _split_labels(len(rows), rng, fractions), rows))
    return DatasetBundle(out, mean, std, n_aps)


# -- regressor ---------------------------------------------------------------

@dataclass
class Regressor:
    """Frozen MLP weights; inference is plain numpy."""
    weights: list
    biases: list
    train_mae: float = math.nan
    val_mae: float = math.nan
    test_mae: float = math.nan
    history: list = field(default_factory=list)
    epochs_run: int = 0

    @property
    def n_params(self) -> int:
        return int(sum(w.size + b.size for w, b in zip(self.weights, self.biases)))

    def forward(self, x) -> np.ndarray:
        h = np.asarray(x, dtype=np.float64)
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ w.T + b
            if i < last:
                h = np.maximum(h, 0.0)
        return h[:, 0]


def _torch_net(n_in: int):
    import torch.nn as nn
    layers, width = [], n_in
    for h in HIDDEN:
        layers += [nn.Linear(width, h), nn.ReLU()]
        width = h
    layers.append(nn.Linear(width, 1))
    return nn.Sequential(*layers).double()


def _mae_db(net, x, y_std, std):
    import torch
    if len(y_std) == 0:
        return math.nan
    with torch.no_grad():
        pred = net(x)[:, 0]
    return float((pred - y_std).abs().mean()) * std


def train_regressor(dataset: PerApDataset, mean: float, std: float, epochs: int = 200, seed: int = 0,
                    patience: int = 10, lr: float = 1e-3, batch_size: int = 128) -> Regressor:
    """Fit one per-AP network (Adam on MSE of standardized labels).

    Stops after ``patience`` epochs without a better validation MAE and keeps
    the best weights seen. Without a validation split, training MAE is tracked.
    """
    import torch

    x_tr, y_tr = dataset.part("train")
    if len(y_tr) == 0:
        raise ValidationError(f"empty training split for AP index {dataset.ap_index}")
    x_va, y_va = dataset.part("val")
    x_te, y_te = dataset.part("test")

    def tensors(x, y):
        return (torch.from_numpy(encode(x, mean, std) if len(y) else np.zeros((0, 2 * dataset.inputs.shape[1]))),
                torch.from_numpy((y - mean) / std))

    xt, yt = tensors(x_tr, y_tr)
    xv, yv = tensors(x_va, y_va)
    xs, ys = tensors(x_te, y_te)
    with torch.random.fork_rng():
        torch.manual_seed(seed)
        net = _torch_net(xt.shape[1])
    opt = torch.optim.Adam(net.parameters(), lr=lr)
    loss_fn = torch.nn.MSELoss()
    rng = np.random.default_rng(seed)
    monitor_val = len(y_va) > 0

    def snapshot():
        return {k: v.clone() for k, v in net.state_dict().items()}

    history = [(_mae_db(net, xt, yt, std), _mae_db(net, xv, yv, std))]
    best = history[0][1] if monitor_val else history[0][0]
    best_state, since = snapshot(), 0
    ran = 0
    for _ in range(epochs):
        net.train()
        order = torch.from_numpy(rng.permutation(len(yt)))
        for s in range(0, len(order), batch_size):
            idx = order[s:s + batch_size]
            opt.zero_grad()
            loss = loss_fn(net(xt[idx])[:, 0], yt[idx])
            loss.backward()
            opt.step()
        ran += 1
        net.eval()
        tr, va = _mae_db(net, xt, yt, std), _mae_db(net, xv, yv, std)
        history.append((tr, va))
        score = va if monitor_val else tr
        if score < best:
            best, best_state, since = score, snapshot(), 0
        else:
            since += 1
            if since >= patience:
                break
    net.load_state_dict(best_state)
    lin = [m for m in net if isinstance(m, torch.nn.Linear)]
    reg = Regressor([m.weight.detach().numpy().copy() for m in lin],
                    [m.bias.detach().numpy().copy() for m in lin],
                    history=history, epochs_run=ran)
    reg.train_mae = _mae_db(net, xt, yt, std)
    reg.val_mae = _mae_db(net, xv, yv, std)
    reg.test_mae = _mae_db(net, xs, ys, std)
    return reg


# -- model -------------------------------------------------------------------

@dataclass
class ImputationModel:
    ap_ids: list
    per_ap: list
    mean: float
    std: float
    fallback_pl: float

    @property
    def fingerprint(self) -> str:
        return ap_fingerprint(self.ap_ids)

    @property
    def n_aps(self) -> int:
        return len(self.ap_ids)

    def predict(self, ap: int, masked_rows) -> np.ndarray:
        reg = self.per_ap[ap]
        rows = np.atleast_2d(masked_rows)
        if reg is None:
            return np.full(len(rows), self.fallback_pl)
        out = reg.forward(encode(rows, self.mean, self.std)) * self.std + self.mean
        return np.clip(out, *PL_RANGE)

    def impute(self, record_pl) -> np.ndarray:
        return impute(record_pl, self)

    def impute_matrix(self, masked, fallback=None) -> np.ndarray:
        """Complete every row. Rows with fewer than 3 present entries go to ``fallback``
        (an imputer with ``impute_matrix``) or raise."""
        m = np.array(masked, dtype=float)
        if m.ndim != 2 or m.shape[1] != self.n_aps:
            raise ValidationError("matrix width does not match the model's AP count")
        present = ~np.isnan(m)
        ok = present.sum(axis=1) >= MIN_PRESENT
        if not ok.all():
            if fallback is None:
                raise NotImputableError(f"{int((~ok).sum())} rows have fewer than {MIN_PRESENT} entries")
            m[~ok] = fallback.impute_matrix(m[~ok])
        out = m.copy()
        for a in range(self.n_aps):
            rows = np.flatnonzero(ok & ~present[:, a])
            if len(rows):
                out[rows, a] = self.predict(a, m[rows])
        return out

    def save(self, path) -> None:
        arrays = {}
        for a, reg in enumerate(self.per_ap):
            if reg is None:
                continue
            for i, (w, b) in enumerate(zip(reg.weights, reg.biases)):
                arrays[f"ap{a}_w{i}"] = w
                arrays[f"ap{a}_b{i}"] = b
        meta = {
            "ap_ids": list(self.ap_ids), "fingerprint": self.fingerprint,
            "mean": self.mean, "std": self.std, "fallback_pl": self.fallback_pl,
            "hidden": list(HIDDEN),
            "trained": [reg is not None for reg in self.per_ap],
            "mae": [None if r is None else [r.train_mae, r.val_mae, r.test_mae] for r in self.per_ap],
        }
        arrays["meta"] = np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8)
        with open(path, "wb") as fh:
            np.savez(fh, **arrays)

    @classmethod
    def load(cls, path, ap_ids=None) -> "ImputationModel":
        with np.load(path) as z:
            meta = json.loads(bytes(z["meta"]).decode())
            if meta["fingerprint"] != ap_fingerprint(meta["ap_ids"]):
                raise ValidationError("model file fingerprint does not match its AP list")
            if ap_ids is not None and ap_fingerprint(list(ap_ids)) != meta["fingerprint"]:
                raise ValidationError("model was trained for a different AP order")
            per_ap = []
            n_layers = len(meta["hidden"]) + 1
            for a, trained in enumerate(meta["trained"]):
                if not trained:
                    per_ap.append(None)
                    continue
                tr, va, te = (math.nan if v is None else v for v in meta["mae"][a])
                per_ap.append(Regressor([z[f"ap{a}_w{i}"] for i in range(n_layers)],
                                        [z[f"ap{a}_b{i}"] for i in range(n_layers)], tr, va, te))
        return cls(meta["ap_ids"], per_ap, meta["mean"], meta["std"], meta["fallback_pl"])


def train_model(bundle: DatasetBundle, ap_ids=None, epochs: int = 200, seed: int = 0,
                patience: int = 10) -> ImputationModel:
    """Train every per-AP regressor; APs without training rows get none (median fallback)."""
    ap_ids = list(ap_ids) if ap_ids is not None else [f"ap{i}" for i in range(bundle.n_aps)]
    seeds = np.random.SeedSequence(seed).generate_state(bundle.n_aps)
    per_ap = []
    labels = [d.labels for d in bundle.datasets if len(d)]
    fallback = float(np.median(np.concatenate(labels))) if labels else 100.0
    for ds, s in zip(bundle.datasets, seeds):
        if not np.any(ds.split == "train"):
            log.warning("AP %s has no training rows; it will be imputed with the median", ap_ids[ds.ap_index])
            per_ap.append(None)
            continue
        reg = train_regressor(ds, bundle.mean, bundle.std, epochs=epochs, seed=int(s), patience=patience)
        log.info("AP %s: train %.2f dB, val %.2f dB, test %.2f dB", ap_ids[ds.ap_index],
                 reg.train_mae, reg.val_mae, reg.test_mae)
        per_ap.append(reg)
    return ImputationModel(ap_ids, per_ap, bundle.mean, bundle.std, fallback)


def impute(record_pl, model: ImputationModel) -> np.ndarray:
    """Fill the NaN entries of one PL vector; present entries are returned untouched."""
    v = np.asarray(record_pl, dtype=float)
    if v.shape != (model.n_aps,):
        raise ValidationError("vector length does not match the model's AP count")
    present = ~np.isnan(v)
    if present.sum() < MIN_PRESENT:
        raise NotImputableError(f"need at least {MIN_PRESENT} present entries, got {int(present.sum())}")
    out = v.copy()
    for a in np.flatnonzero(~present):
        out[a] = model.predict(a, v)[0]
    return out


# -- baselines ---------------------------------------------------------------

@dataclass(frozen=True)
class ConstantImputer:
    value: float
    name: str = "constant"

    def impute(self, record_pl) -> np.ndarray:
        v = np.asarray(record_pl, dtype=float)
        return np.where(np.isnan(v), self.value, v)

    def impute_matrix(self, masked, fallback=None) -> np.ndarray:
        return self.impute(masked)


def median_impute(records, ap_ids=None) -> ConstantImputer:
    m = _as_matrix(records, ap_ids)
    obs = m[~np.isnan(m)]
    if obs.size == 0:
        raise ValidationError("median imputer needs at least one observed PL")
    return ConstantImputer(float(np.median(obs)), "median")


def high_impute(pl_high: float = 100.0) -> ConstantImputer:
    return ConstantImputer(float(pl_high), "high")


def noisy_oracle_impute(masked, truth, mae_db: float = 5.0, seed: int = 0) -> np.ndarray:
    """Missing entries get the true PL plus Gaussian noise whose mean absolute value is ``mae_db``."""
    m = np.asarray(masked, dtype=float)
    t = np.asarray(truth, dtype=float)
    rng = np.random.default_rng(seed)
    sigma = mae_db * math.sqrt(math.pi / 2.0)
    noisy = np.clip(t + rng.normal(0.0, sigma, size=t.shape), *PL_RANGE)
    return np.where(np.isnan(m), noisy, m)


# -- evaluation --------------------------------------------------------------

@dataclass
class HideResult:
    n_hidden: int
    errors: np.ndarray
    n_records: int

    @property
    def median(self) -> float:
        return float(np.median(self.errors)) if self.errors.size else 0.0

    @property
    def quartiles(self) -> tuple:
        if not self.errors.size:
            return (0.0, 0.0, 0.0)
        return tuple(float(q) for q in np.percentile(self.errors, [25, 50, 75]))

    @property
    def mae(self) -> float:
        return float(self.errors.mean()) if self.errors.size else 0.0


def hide_and_impute_eval(records, n_hidden, model, seed: int = 0, ap_ids=None):
    """Hide ``n_hidden`` random present entries per eligible record and measure |error| in dB.

    ``n_hidden`` may be an int (returns one HideResult) or an iterable (dict by count).
    ``model`` is anything with ``impute_matrix``.
    """
    if not isinstance(n_hidden, (int, np.integer)):
        return {int(n): hide_and_impute_eval(records, int(n), model, seed, ap_ids) for n in n_hidden}
    m = _as_matrix(records, ap_ids)
    present = ~np.isnan(m)
    rows = np.flatnonzero(present.sum(axis=1) >= n_hidden + MIN_PRESENT)
    if len(rows) == 0:
        raise ValidationError(f"no record has {n_hidden + MIN_PRESENT} present entries")
    if n_hidden == 0:
        return HideResult(0, np.zeros(0), len(rows))
    rng = np.random.default_rng([seed, n_hidden])
    masked = m[rows].copy()
    hidden = np.zeros_like(masked, dtype=bool)
    for i, r in enumerate(rows):
        pick = rng.choice(np.flatnonzero(present[r]), size=n_hidden, replace=False)
        hidden[i, pick] = True
    masked[hidden] = np.nan
    filled = model.impute_matrix(masked)
    return HideResult(n_hidden, np.abs(filled[hidden] - m[rows][hidden]), len(rows))


# -- necessity study -----------------------------------------------------------

DEFAULT_STRATEGIES = ("high", "median", "noise5")


def relative_loss(u: float, u_ref: float) -> float:
    """Percent utility loss on the exp(U) scale."""
    return -100.0 * math.expm1(u - u_ref)


def utility_degradation_study(n_topologies: int = 32, n_aps: int = 33, n_rps: int = 330,
                              visible_counts=(2, 6), strategies=DEFAULT_STRATEGIES, seed: int = 0,
                              side_m: float = 700.0, trials=5, time_cap_s: float = 120.0,
                              pl_params=None, levels=None, noise_mae_db: float = 5.0):
    """Utility lost when LS runs on an imputed RP matrix instead of the true one.

    Per topology the reference is LS on the full matrix. Each strategy's LS
    result is scored on the true matrix. Returns ``(rows, summary)`` where the
    summary maps ``(visible, strategy)`` to loss quartiles in percent.
    """
    from .optimize import local_search
    from .sim import UtilityEvaluator
    from .synth import DEFAULT_LEVELS, PathLossParams, gen_uniform_scenario, obfuscate_matrix

    pl_params = pl_params or PathLossParams()
    levels = levels or DEFAULT_LEVELS
    for s in strategies:
        if s not in DEFAULT_STRATEGIES:
            raise ValidationError(f"unknown strategy {s!r}")
    topo_seeds = np.random.SeedSequence(seed).generate_state(n_topologies)
    rows = []
    for t, ts in enumerate(topo_seeds):
        sc = gen_uniform_scenario(n_aps, n_rps, side_m, levels, pl_params, seed=int(ts))
        truth = sc.rp_pl
        ev = UtilityEvaluator(truth, sc.instance)
        ls_seed = int(ts) % (2 ** 31)
        ref = local_search(sc.instance, truth, trials, time_cap_s, seed=ls_seed, evaluator=ev)
        for v in visible_counts:
            masked = obfuscate_matrix(truth, min(v, n_aps))
            for strat in strategies:
                if strat == "high":
                    filled = high_impute().impute_matrix(masked)
                elif strat == "median":
                    filled = median_impute(masked).impute_matrix(masked)
                else:
                    filled = noisy_oracle_impute(masked, truth, noise_mae_db, seed=ls_seed + v)
                if np.array_equal(filled, truth):
                    u = ref.best_utility
                else:
                    rep = local_search(sc.instance, filled, trials, time_cap_s, seed=ls_seed)
                    u = ev(rep.best_config)
                rows.append({"topology": t, "seed": int(ts), "visible": v, "strategy": strat,
                             "utility": u, "ref_utility": ref.best_utility,
                             "loss_pct": relative_loss(u, ref.best_utility)})
    summary = {}
    for v in visible_counts:
        for strat in strategies:
            losses = [r["loss_pct"] for r in rows if r["visible"] == v and r["strategy"] == strat]
            q1, q2, q3 = np.percentile(losses, [25, 50, 75])
            summary[(v, strat)] = {"q1": float(q1), "median": float(q2), "q3": float(q3)}
    return rows, summary
