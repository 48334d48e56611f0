"""End-to-end run: ingest, impute, select, optimize, evaluate."""
from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import (NetworkInstance, PowerConfig, UtilityParams, ValidationError, load_instance,
                   parse_measurements, records_to_matrix, save_rp_matrix)
from .imputation import ImputationModel, build_datasets, high_impute, median_impute, train_model
from .optimize import full_power, local_search_restarts, tpcv1_offline
from .selection import (SelectionResult, pca_project, radius_from_quantile, stratified_select, tsne_project,
                        uniform_select)
from .sim import network_utility

log = logging.getLogger(__name__)

GOOD_RSSI_DBM = -65.0
BAD_RSSI_DBM = -80.0


class StageError(RuntimeError):
    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause


def stage_seed(seed: int, stage: str) -> int:
    digest = hashlib.sha256(f"{int(seed)}:{stage}".encode()).digest()
    return int.from_bytes(digest[:4], "little")


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 16), b""):
            h.update(block)
    return h.hexdigest()


def write_rows_csv(path, rows, columns=None) -> None:
    rows = list(rows)
    columns = columns or (list(rows[0]) if rows else [])
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=columns, extrasaction="ignore")
        w.writeheader()
        for r in rows:
            w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in r.items()})


def write_json(path, doc) -> None:
    Path(path).write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")


# -- config ------------------------------------------------------------------

@dataclass
class ImputationSettings:
    min_visible: int = 4
    epochs: int = 200
    model_path: str | None = None
    fallback: str = "median"


@dataclass
class SelectionSettings:
    method: str = "stratified"  # stratified | uniform | none
    k: int | None = None
    radius: float | None = None
    radius_q: float | None = 0.01
    projection: str = "pca"


@dataclass
class OptimizerSettings:
    trials: int | str | None = 15
    time_cap_s: float | None = 600.0
    restarts: int = 1
    tpc_threshold_dbm: float = -70.0


@dataclass
class RunConfig:
    topology: str
    measurements: str
    out_dir: str
    measurement_format: str | None = None
    imputation: ImputationSettings = field(default_factory=ImputationSettings)
    selection: SelectionSettings = field(default_factory=SelectionSettings)
    optimizer: OptimizerSettings = field(default_factory=OptimizerSettings)
    utility: UtilityParams = field(default_factory=UtilityParams)
    seed: int = 0

    _nested = {"imputation": ImputationSettings, "selection": SelectionSettings,
               "optimizer": OptimizerSettings, "utility": UtilityParams}

    @classmethod
    def from_dict(cls, doc: dict) -> "RunConfig":
        doc = dict(doc)
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ValidationError(f"unknown RunConfig keys: {sorted(unknown)}")
        for key, typ in cls._nested.items():
            if isinstance(doc.get(key), dict):
                sub = doc[key]
                bad = set(sub) - {f.name for f in dataclasses.fields(typ)}
                if bad:
                    raise ValidationError(f"unknown {key} keys: {sorted(bad)}")
                doc[key] = typ(**sub)
        missing = [k for k in ("topology", "measurements", "out_dir") if not doc.get(k)]
        if missing:
            raise ValidationError(f"RunConfig lacks {missing}")
        return cls(**doc)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


# -- comparison ----------------------------------------------------------------

def compare_configs(rps, instance: NetworkInstance, configs, params: UtilityParams = UtilityParams()) -> list:
    """One row per named config, all scored on the same RP set and parameters."""
    items = list(configs.items()) if isinstance(configs, dict) else list(configs)
    rows = []
    for name, cfg in items:
        cfg = cfg if isinstance(cfg, PowerConfig) else PowerConfig(cfg)
        cfg.validate(instance)
        b = network_utility(rps, cfg, instance, params)
        rq = np.percentile(b.rssi_dbm, [25, 50, 75])
        iq = np.percentile(b.interference, [25, 50, 75])
        rows.append({
            "config": name, "utility": b.total,
            "rssi_q1": float(rq[0]), "rssi_median": float(rq[1]), "rssi_q3": float(rq[2]),
            "mean_power_dbm": float(np.mean(cfg.levels)),
            "interf_q1": float(iq[0]), "interf_median": float(iq[1]), "interf_q3": float(iq[2]),
            "good_coverage": float(np.mean(b.rssi_dbm >= GOOD_RSSI_DBM)),
            "bad_coverage": float(np.mean(b.rssi_dbm < BAD_RSSI_DBM)),
        })
    return rows


# -- run ---------------------------------------------------------------------------

class _Stage:
    def __init__(self, name):
        self.name = name

    def __enter__(self):
        log.info("stage %s", self.name)

    def __exit__(self, typ, exc, tb):
        if exc is not None and not isinstance(exc, StageError):
            raise StageError(self.name, exc) from exc
        return False


def select_rps(matrix, settings: SelectionSettings, seed: int):
    """Returns (SelectionResult or None, Embedding or None)."""
    n = len(matrix)
    if settings.method == "none":
        return None, None
    if settings.method == "uniform":
        k = settings.k if settings.k is not None else n
        return uniform_select(n, min(k, n), seed), None
    if settings.method != "stratified":
        raise ValidationError(f"unknown selection method {settings.method!r}")
    if settings.projection == "pca":
        emb = pca_project(matrix)
    elif settings.projection == "tsne":
        emb = tsne_project(matrix, seed=seed)
    else:
        raise ValidationError(f"unknown projection {settings.projection!r}")
    if settings.radius is not None:
        r = settings.radius
    elif settings.radius_q is not None:
        r = radius_from_quantile(emb, settings.radius_q, seed)
        if r <= 0:  # most pairs coincide; nothing to thin out
            return SelectionResult(np.arange(n, dtype=np.intp), "stratified", seed, 0.0, n), emb
    else:
        raise ValidationError("stratified selection needs radius or radius_q")
    return stratified_select(emb, r, seed), emb


def run_pipeline(config: RunConfig) -> dict:
    """Run every stage and return the manifest (also written as ``manifest.json``)."""
    out = Path(config.out_dir)
    written = []

    def emit(name):
        written.append(name)
        return out / name

    with _Stage("ingest"):
        for p in (config.topology, config.measurements):
            if not Path(p).is_file():
                raise ValidationError(f"missing input file: {p}")
        out.mkdir(parents=True, exist_ok=True)
        write_json(emit("run_config.json"), config.to_dict())
        instance = load_instance(config.topology)
        parsed = parse_measurements(config.measurements, config.measurement_format, instance)
        if not parsed.records:
            raise ValidationError("no valid measurement records")
        write_json(emit("ingest_report.json"), {
            "lines": parsed.n_lines, "accepted": len(parsed.records),
            "rejected": [{"line": ln, "reason": why} for ln, why in parsed.rejected]})
        masked = records_to_matrix(parsed.records, instance.ap_ids)

    with _Stage("impute"):
        imp = config.imputation
        fallback = median_impute(masked) if imp.fallback == "median" else high_impute()
        if imp.model_path:
            model = ImputationModel.load(imp.model_path, instance.ap_ids)
        else:
            bundle = build_datasets(masked, imp.min_visible, seed=stage_seed(config.seed, "split"))
            if any(np.any(d.split == "train") for d in bundle):
                model = train_model(bundle, instance.ap_ids, imp.epochs, stage_seed(config.seed, "impute"))
                model.save(emit("imputation_model.npz"))
            else:
                log.warning("no record has %d entries; using the %s imputer", imp.min_visible, imp.fallback)
                model = fallback
        rp = model.impute_matrix(masked, fallback=fallback)
        save_rp_matrix(emit("reference_points.csv"), rp, instance.ap_ids)

    with _Stage("select"):
        sel, emb = select_rps(rp, config.selection, stage_seed(config.seed, "select"))
        if sel is not None:
            write_json(emit("selection.json"), sel.to_json())
            rp_sel = rp[sel.selected_indices]
        else:
            rp_sel = rp
        if emb is not None:
            emb.write_csv(emit("embedding.csv"))
        if len(rp_sel) == 0:
            raise ValidationError("selection kept no reference points")

    with _Stage("optimize"):
        o = config.optimizer
        rep = local_search_restarts(instance, rp_sel, o.trials, o.time_cap_s,
                                    stage_seed(config.seed, "optimize"), o.restarts, config.utility)
        write_json(emit("search_report.json"), rep.to_json(instance))
        write_json(emit("power_config.json"), rep.best_config.to_json(instance))

    with _Stage("evaluate"):
        configs = {"UA": rep.best_config, "FullPower": full_power(instance),
                   "TPCv1": tpcv1_offline(instance, o.tpc_threshold_dbm)}
        for name, cfg in configs.items():
            network_utility(rp_sel, cfg, instance, config.utility).write_csv(
                emit(f"breakdown_{name}.csv"), instance.ap_ids)
        write_rows_csv(emit("comparison.csv"), compare_configs(rp_sel, instance, configs, config.utility))

    manifest = {"seed": config.seed,
                "files": [{"path": name, "sha256": sha256_file(out / name)} for name in written]}
    write_json(out / "manifest.json", manifest)
    return manifest
