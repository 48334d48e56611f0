"""Domain types, trace/topology ingestion and result persistence."""
from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

log = logging.getLogger(__name__)

# AP-AP path loss used when neither direction was measured; inaudible at any
# allowed power with the default carrier-sense threshold.
MISSING_AP_PL_DB = 100.0


class ValidationError(ValueError):
    """Input data violates a structural invariant."""


@dataclass(frozen=True)
class AccessPoint:
    id: str
    allowed_levels: tuple[int, ...]
    channel: int = 0

    def __post_init__(self):
        levels = tuple(int(v) for v in self.allowed_levels)
        if not levels:
            raise ValidationError(f"AP {self.id!r}: allowed_levels is empty")
        if any(b <= a for a, b in zip(levels, levels[1:])):
            raise ValidationError(f"AP {self.id!r}: allowed_levels must be strictly increasing")
        object.__setattr__(self, "allowed_levels", levels)

    @property
    def max_level(self) -> int:
        return self.allowed_levels[-1]

    @property
    def min_level(self) -> int:
        return self.allowed_levels[0]


@dataclass(frozen=True)
class MeasurementRecord:
    timestamp: float
    sta_id: str
    serving_ap: str
    pl: dict

    def __post_init__(self):
        if not self.pl:
            raise ValidationError("record has no path-loss entries")
        if self.serving_ap not in self.pl:
            raise ValidationError("serving not measured")
        for k, v in self.pl.items():
            if not math.isfinite(v) or v < 0:
                raise ValidationError(f"invalid path loss {v!r} toward {k!r}")

    @property
    def n_visible(self) -> int:
        return len(self.pl)


@dataclass(frozen=True, eq=False)
class NetworkInstance:
    aps: tuple[AccessPoint, ...]
    ap_pl: np.ndarray
    channel_overlap: np.ndarray

    def __post_init__(self):
        aps = tuple(self.aps)
        n = len(aps)
        ids = [a.id for a in aps]
        if len(set(ids)) != n:
            raise ValidationError("duplicate AP ids")
        ap_pl = np.array(self.ap_pl, dtype=float).reshape(n, n) if n else np.zeros((0, 0))
        ov = np.array(self.channel_overlap, dtype=bool)
        if ov.shape != (n, n):
            raise ValidationError("channel_overlap must be |aps| x |aps|")
        if not np.array_equal(ov, ov.T) or not ov.diagonal().all():
            raise ValidationError("channel_overlap must be symmetric with a true diagonal")
        if not np.allclose(ap_pl, ap_pl.T) or np.any(ap_pl.diagonal() != 0):
            raise ValidationError("ap_pl must be symmetric with a zero diagonal")
        ap_pl.flags.writeable = False
        ov.flags.writeable = False
        object.__setattr__(self, "aps", aps)
        object.__setattr__(self, "ap_pl", ap_pl)
        object.__setattr__(self, "channel_overlap", ov)

    @property
    def n_aps(self) -> int:
        return len(self.aps)

    @property
    def ap_ids(self) -> list[str]:
        return [a.id for a in self.aps]

    def index_of(self, ap_id: str) -> int:
        return self.ap_ids.index(ap_id)

    def __eq__(self, other):
        if not isinstance(other, NetworkInstance):
            return NotImplemented
        return (self.aps == other.aps
                and np.array_equal(self.ap_pl, other.ap_pl)
                and np.array_equal(self.channel_overlap, other.channel_overlap))

    def to_json(self) -> dict:
        return {
            "aps": [{"id": a.id, "allowed_levels_dbm": list(a.allowed_levels), "channel": a.channel}
                    for a in self.aps],
            "ap_pl": self.ap_pl.tolist(),
            "channel_overlap": self.channel_overlap.tolist(),
        }


@dataclass(frozen=True, eq=False)
class ReferencePointSet:
    rp_pl: np.ndarray
    origin_ids: tuple = ()

    def __post_init__(self):
        m = np.array(self.rp_pl, dtype=float)
        if m.ndim != 2:
            raise ValidationError("rp_pl must be a 2-D matrix")
        if not np.all(np.isfinite(m)) or np.any(m < 0):
            raise ValidationError("rp_pl must be complete, finite and non-negative")
        ids = tuple(self.origin_ids) if len(self.origin_ids) else tuple(range(m.shape[0]))
        if len(ids) != m.shape[0]:
            raise ValidationError("origin_ids length must match row count")
        m.flags.writeable = False
        object.__setattr__(self, "rp_pl", m)
        object.__setattr__(self, "origin_ids", ids)

    def __len__(self):
        return self.rp_pl.shape[0]

    def subset(self, indices) -> "ReferencePointSet":
        idx = np.asarray(indices, dtype=int)
        return ReferencePointSet(self.rp_pl[idx], tuple(self.origin_ids[i] for i in idx))


@dataclass(frozen=True, eq=False)
class PowerConfig:
    levels: np.ndarray

    def __post_init__(self):
        lv = np.array(self.levels, dtype=float).ravel()
        lv.flags.writeable = False
        object.__setattr__(self, "levels", lv)

    def __eq__(self, other):
        if not isinstance(other, PowerConfig):
            return NotImplemented
        return np.array_equal(self.levels, other.levels)

    def __hash__(self):
        return hash(self.levels.tobytes())

    def __repr__(self):
        return f"PowerConfig({[int(v) if float(v).is_integer() else float(v) for v in self.levels]})"

    def validate(self, instance: NetworkInstance) -> None:
        if len(self.levels) != instance.n_aps:
            raise ValidationError("PowerConfig length does not match AP count")
        for ap, lv in zip(instance.aps, self.levels):
            if lv not in ap.allowed_levels:
                raise ValidationError(f"level {lv} not allowed for AP {ap.id!r}")

    def to_json(self, instance: NetworkInstance) -> dict:
        return {"levels_dbm": {ap.id: _num(lv) for ap, lv in zip(instance.aps, self.levels)}}

    @classmethod
    def from_json(cls, doc: dict, instance: NetworkInstance) -> "PowerConfig":
        levels = doc["levels_dbm"]
        missing = [i for i in instance.ap_ids if i not in levels]
        if missing:
            raise ValidationError(f"power config lacks APs {missing}")
        cfg = cls([levels[i] for i in instance.ap_ids])
        cfg.validate(instance)
        return cfg


@dataclass(frozen=True)
class UtilityParams:
    cs_threshold_dbm: float = -82.0
    epsilon: float = 1e-9

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValidationError("epsilon must be positive")


def _num(v):
    v = float(v)
    return int(v) if v.is_integer() else v


# --------------------------------------------------------------------------
# Ingestion

@dataclass
class ParseResult:
    records: list = field(default_factory=list)
    rejected: list = field(default_factory=list)  # (line number, reason)
    n_lines: int = 0

    def __iter__(self):
        return iter(self.records)

    def __len__(self):
        return len(self.records)


def _make_record(ts, sta, serving, pl, known_aps):
    if known_aps is not None:
        unknown = [k for k in pl if k not in known_aps]
        if unknown:
            raise ValidationError(f"AP id not in topology: {unknown[0]}")
    return MeasurementRecord(float(ts), str(sta), str(serving), {str(k): float(v) for k, v in pl.items()})


def parse_measurements(path, format: str | None = None, topology: NetworkInstance | None = None) -> ParseResult:
    """Read 802.11k samples from JSON-lines or long-format CSV.

    Malformed lines are collected in ``rejected`` with a reason rather than
    dropped; ``len(records) + len(rejected)`` equals the number of input
    lines (JSONL) or record groups (CSV).
    """
    path = Path(path)
    if format is None:
        format = "csv" if path.suffix.lower() == ".csv" else "jsonl"
    known = set(topology.ap_ids) if topology is not None else None
    try:
        text = path.read_text()
    except OSError as exc:
        raise ValidationError(f"cannot read measurements {path}: {exc}") from exc

    out = ParseResult()
    if format == "jsonl":
        for lineno, line in enumerate(text.splitlines(), 1):
            if not line.strip():
                continue
            out.n_lines += 1
            try:
                doc = json.loads(line)
                rec = _make_record(doc["ts"], doc["sta"], doc["serving"], doc["pl"], known)
            except (ValueError, KeyError, TypeError, AttributeError) as exc:
                reason = str(exc) if isinstance(exc, ValidationError) else f"malformed: {exc!r}"
                out.rejected.append((lineno, reason))
                continue
            out.records.append(rec)
    elif format == "csv":
        groups: dict = {}
        bad_rows = []
        reader = csv.DictReader(text.splitlines())
        for lineno, row in enumerate(reader, 2):
            try:
                key = (row["ts"], row["sta"], row["serving"])
                groups.setdefault(key, {"lines": [], "pl": {}, "error": None})
                g = groups[key]
                g["lines"].append(lineno)
                g["pl"][row["ap_id"]] = float(row["pl_db"])
            except (KeyError, TypeError, ValueError) as exc:
                bad_rows.append((lineno, f"malformed: {exc!r}"))
        out.n_lines = len(groups) + len(bad_rows)
        out.rejected.extend(bad_rows)
        for (ts, sta, serving), g in groups.items():
            try:
                out.records.append(_make_record(float(ts), sta, serving, g["pl"], known))
            except (ValueError, TypeError) as exc:
                out.rejected.append((g["lines"][0], str(exc)))
    else:
        raise ValidationError(f"unknown measurement format {format!r}")
    if out.rejected:
        log.warning("%s: rejected %d of %d records", path, len(out.rejected), out.n_lines)
    return out


def write_measurements(records: Iterable[MeasurementRecord], path) -> None:
    with open(path, "w") as fh:
        for r in records:
            fh.write(json.dumps({"ts": _num(r.timestamp), "sta": r.sta_id, "serving": r.serving_ap,
                                 "pl": r.pl}) + "\n")


def symmetrize_pl(ap_pl) -> np.ndarray:
    """Average directed AP-AP readings; NaN marks an unmeasured direction."""
    m = np.array(ap_pl, dtype=float)
    t = m.T
    out = np.where(np.isnan(m), t, np.where(np.isnan(t), m, (m + t) / 2.0))
    out = np.where(np.isnan(out), MISSING_AP_PL_DB, out)
    np.fill_diagonal(out, 0.0)
    return out


def instance_from_json(doc: dict) -> NetworkInstance:
    try:
        aps = tuple(AccessPoint(str(a["id"]), tuple(a["allowed_levels_dbm"]), int(a.get("channel", 0)))
                    for a in doc["aps"])
    except (KeyError, TypeError) as exc:
        raise ValidationError(f"malformed aps entry: {exc!r}") from exc
    n = len(aps)
    if len({a.id for a in aps}) != n:
        raise ValidationError("duplicate AP ids")
    raw = doc.get("ap_pl")
    if raw is None:
        raise ValidationError("topology lacks ap_pl")
    rows = [[math.nan if v is None else float(v) for v in row] for row in raw]
    if len(rows) != n or any(len(r) != n for r in rows):
        raise ValidationError(f"ap_pl must be {n}x{n}")
    ap_pl = symmetrize_pl(rows) if n else np.zeros((0, 0))
    if "channel_overlap" in doc and doc["channel_overlap"] is not None:
        ov = np.array(doc["channel_overlap"], dtype=bool)
        if ov.shape != (n, n):
            raise ValidationError(f"channel_overlap must be {n}x{n}")
    else:
        ch = np.array([a.channel for a in aps])
        ov = ch[:, None] == ch[None, :]
    return NetworkInstance(aps, ap_pl, ov)


def load_instance(topology_path) -> NetworkInstance:
    path = Path(topology_path)
    try:
        doc = json.loads(path.read_text())
    except OSError as exc:
        raise ValidationError(f"cannot read topology {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ValidationError(f"topology {path} is not valid JSON: {exc}") from exc
    return instance_from_json(doc)


def save_instance(instance: NetworkInstance, path) -> None:
    Path(path).write_text(json.dumps(instance.to_json(), indent=1))


def records_to_matrix(records: Sequence[MeasurementRecord], ap_ids: Sequence[str]) -> np.ndarray:
    """Dense RP x AP matrix with NaN for unobserved entries."""
    col = {a: i for i, a in enumerate(ap_ids)}
    m = np.full((len(records), len(ap_ids)), np.nan)
    for r, rec in enumerate(records):
        for k, v in rec.pl.items():
            m[r, col[k]] = v
    return m


def matrix_to_records(pl: np.ndarray, ap_ids: Sequence[str], sta_prefix="sta", ts: float = 0.0):
    """Inverse of records_to_matrix; serving AP is the smallest observed PL."""
    out = []
    for r, row in enumerate(np.asarray(pl, dtype=float)):
        seen = np.flatnonzero(~np.isnan(row))
        serving = seen[np.argmin(row[seen])]
        out.append(MeasurementRecord(ts, f"{sta_prefix}{r}", ap_ids[serving],
                                     {ap_ids[i]: float(row[i]) for i in seen}))
    return out


def save_rp_matrix(path, matrix, ap_ids: Sequence[str]) -> None:
    """RP x AP PL matrix as CSV with an AP-id header; missing entries are written empty."""
    m = np.asarray(matrix, dtype=float)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(list(ap_ids))
        for row in m:
            w.writerow(["" if math.isnan(v) else repr(float(v)) for v in row])


def load_rp_matrix(path) -> tuple[np.ndarray, list[str]]:
    try:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise ValidationError(f"cannot read RP matrix {path}: {exc}") from exc
    if not rows:
        raise ValidationError(f"RP matrix {path} is empty")
    ap_ids = rows[0]
    try:
        m = np.array([[math.nan if v == "" else float(v) for v in r] for r in rows[1:]], dtype=float)
    except ValueError as exc:
        raise ValidationError(f"non-numeric entry in {path}: {exc}") from exc
    if m.size and m.shape[1] != len(ap_ids):
        raise ValidationError(f"row width does not match header in {path}")
    return m.reshape(-1, len(ap_ids)), ap_ids
