"""Power-level search: local search, exhaustive oracle and baseline heuristics."""
from __future__ import annotations

import itertools
import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .core import NetworkInstance, PowerConfig, UtilityParams, ValidationError
from .sim import UtilityEvaluator

log = logging.getLogger(__name__)

DEFAULT_TRIALS = 15
DEFAULT_TIME_CAP_S = 600.0
EXHAUSTIVE_CAP = 10 ** 7


@dataclass
class SearchReport:
    best_config: PowerConfig
    best_utility: float
    iterations: int
    utility_trace: list
    terminated_by: str
    evaluations: int
    seed: int | None = None
    trials: int | None = None
    restarts: list = field(default_factory=list)

    def to_json(self, instance: NetworkInstance | None = None) -> dict:
        doc = {
            "best_utility": self.best_utility,
            "iterations": self.iterations,
            "utility_trace": list(self.utility_trace),
            "terminated_by": self.terminated_by,
            "evaluations": self.evaluations,
            "seed": self.seed,
            "trials": "nl" if self.trials is None else self.trials,
        }
        if instance is not None:
            doc["best_config"] = self.best_config.to_json(instance)["levels_dbm"]
        else:
            doc["best_config"] = self.best_config.levels.tolist()
        if self.restarts:
            doc["restarts"] = self.restarts
        return doc


def _check(instance, rps):
    if instance.n_aps == 0:
        raise ValidationError("instance has no APs")
    n_rp = rps.shape[0] if isinstance(rps, np.ndarray) else len(rps)
    if n_rp == 0:
        raise ValidationError("empty RP set")


def parse_trials(value) -> int | None:
    """``'nl'`` / None means unlimited; otherwise a positive int (also ``'l15'``)."""
    if value is None:
        return None
    if isinstance(value, str):
        v = value.strip().lower()
        if v in ("nl", "none", "inf"):
            return None
        value = int(v[1:] if v.startswith("l") else v)
    if int(value) < 1:
        raise ValidationError("per-AP trial cap must be >= 1")
    return int(value)


def _fresh_pools(allowed, cur, rng, cap):
    """Per-AP levels not yet tried against the incumbent ``cur``."""
    pools = []
    for a, lv in enumerate(allowed):
        others = lv[lv != cur[a]]
        pools.append(others if cap is None else rng.permutation(others))
    return pools


def local_search(instance: NetworkInstance, rps, trials=DEFAULT_TRIALS, time_cap_s: float | None = DEFAULT_TIME_CAP_S,
                 seed: int = 0, params: UtilityParams = UtilityParams(),
                 evaluator: UtilityEvaluator | None = None, initial: PowerConfig | None = None) -> SearchReport:
    """Iterated best-response search over per-AP power levels.

    Each pass evaluates, for every AP, up to ``trials`` levels (its current
    level always among them) with the other APs held at the incumbent. The
    best single-AP move is then compared with the vector combining every
    AP's best level, and the better one becomes the incumbent.

    Under a trial cap, alternatives are drawn without replacement from the
    levels not yet tried against the current incumbent, so a run of
    non-improving passes eventually covers every single-AP move. The search
    stops once no single-AP move improves (a local optimum) or when
    ``time_cap_s`` elapses.
    """
    _check(instance, rps)
    cap = parse_trials(trials)
    ev = evaluator or UtilityEvaluator(rps, instance, params)
    start_evals = ev.evaluations
    rng = np.random.default_rng(seed)
    allowed = [np.asarray(ap.allowed_levels, dtype=float) for ap in instance.aps]
    if initial is None:
        cur = np.array([lv[rng.integers(len(lv))] for lv in allowed])
    else:
        cur = np.array(initial.levels, dtype=float)
    t0 = time.perf_counter()
    cur_u = ev(cur)
    trace = [cur_u]
    iterations = 0
    terminated = "local_optimum"
    n = instance.n_aps

    pools = _fresh_pools(allowed, cur, rng, cap)
    while True:
        best_lv = cur.copy()
        best_u = np.full(n, cur_u)
        timed_out = False
        for a in range(n):
            if cap is None:
                others = pools[a]
                pools[a] = others[:0]
            else:
                others, pools[a] = pools[a][:cap - 1], pools[a][cap - 1:]
            if len(others):
                cands = np.concatenate(([cur[a]], others))
                trial = np.repeat(cur[None, :], len(cands), axis=0)
                trial[:, a] = cands
                u = ev.batch(trial)
                u[0] = cur_u  # incumbent is known; keeps it on ties
                k = int(np.argmax(u))
                best_lv[a] = cands[k]
                best_u[a] = u[k]
            if time_cap_s is not None and time.perf_counter() - t0 > time_cap_s:
                timed_out = True
                break
        if timed_out:
            # the incomplete pass is discarded except for a strictly better single move
            terminated = "time_cap"
            a_star = int(np.argmax(best_u))
            if best_u[a_star] > cur_u:
                cur = cur.copy()
                cur[a_star] = best_lv[a_star]
                cur_u = float(best_u[a_star])
                iterations += 1
                trace.append(cur_u)
            break
        iterations += 1
        a_star = int(np.argmax(best_u))
        single = cur.copy()
        single[a_star] = best_lv[a_star]
        single_u = float(best_u[a_star])
        if np.array_equal(best_lv, single):
            comb_u = single_u
        else:
            comb_u = ev(best_lv)
        if comb_u > single_u:
            nxt, nxt_u = best_lv, comb_u
        else:
            nxt, nxt_u = single, single_u
        if nxt_u > cur_u:
            cur, cur_u = nxt, nxt_u
            pools = _fresh_pools(allowed, cur, rng, cap)
        elif not any(len(p) for p in pools):
            trace.append(cur_u)
            break
        trace.append(cur_u)
        if time_cap_s is not None and time.perf_counter() - t0 > time_cap_s:
            terminated = "time_cap"
            break

    return SearchReport(PowerConfig(cur), cur_u, iterations, trace, terminated,
                        ev.evaluations - start_evals, seed=seed, trials=cap)


def local_search_restarts(instance, rps, trials=DEFAULT_TRIALS, time_cap_s=DEFAULT_TIME_CAP_S, seed=0,
                          restarts: int = 1, params: UtilityParams = UtilityParams()) -> SearchReport:
    """Best of ``restarts`` independently seeded runs; the time cap applies per run."""
    ev = UtilityEvaluator(rps, instance, params)
    seeds = np.random.SeedSequence(seed).generate_state(restarts) if restarts > 1 else [seed]
    best = None
    summary = []
    for s in seeds:
        rep = local_search(instance, rps, trials, time_cap_s, int(s), params, evaluator=ev)
        summary.append({"seed": int(s), "utility": rep.best_utility, "iterations": rep.iterations})
        if best is None or rep.best_utility > best.best_utility:
            best = rep
    if restarts > 1:
        best.restarts = summary
        best.evaluations = ev.evaluations
    return best


def search_space_size(instance: NetworkInstance) -> int:
    return math.prod(len(ap.allowed_levels) for ap in instance.aps)


@dataclass
class ExhaustiveResult:
    config: PowerConfig
    utility: float
    evaluations: int

    def __iter__(self):
        return iter((self.config, self.utility))


def exhaustive_search(instance: NetworkInstance, rps, params: UtilityParams = UtilityParams(),
                      cap: int = EXHAUSTIVE_CAP, chunk: int = 8192) -> ExhaustiveResult:
    """Evaluate every feasible config; ties go to the lexicographically smallest level vector."""
    _check(instance, rps)
    size = search_space_size(instance)
    if size > cap:
        raise ValidationError(f"search space {size} exceeds cap {cap}")
    ev = UtilityEvaluator(rps, instance, params)
    level_sets = [ap.allowed_levels for ap in instance.aps]
    best_u = -math.inf
    best = None
    it = itertools.product(*level_sets)
    while True:
        block = np.array(list(itertools.islice(it, chunk)), dtype=float)
        if block.size == 0:
            break
        u = ev.batch(block)
        k = int(np.argmax(u))
        if u[k] > best_u:
            best_u = float(u[k])
            best = block[k]
    return ExhaustiveResult(PowerConfig(best), best_u, ev.evaluations)


def full_power(instance: NetworkInstance) -> PowerConfig:
    return PowerConfig([ap.max_level for ap in instance.aps])


def _nearest_level(target: float, levels) -> float:
    lv = np.asarray(levels, dtype=float)
    if target <= lv[0]:
        return float(lv[0])
    if target >= lv[-1]:
        return float(lv[-1])
    dist = np.abs(lv - target)
    return float(lv[int(np.argmin(dist))])  # first min = lower level on ties


def tpcv1_offline(instance: NetworkInstance, tpc_threshold_dbm: float = -70.0) -> PowerConfig:
    """Neighbor-threshold power: the third-closest AP (in PL) should hear each AP at the threshold."""
    n = instance.n_aps
    if n < 4:
        log.warning("tpcv1 needs at least 4 APs for a third neighbor; using max power")
        return full_power(instance)
    levels = []
    for a, ap in enumerate(instance.aps):
        row = np.delete(instance.ap_pl[a], a)
        pl3 = np.sort(row)[2]
        levels.append(_nearest_level(tpc_threshold_dbm + pl3, ap.allowed_levels))
    return PowerConfig(levels)


def optimality_gap(u: float, u_ref: float) -> float:
    """Percent shortfall of exp(u) below exp(u_ref); negative when u > u_ref."""
    return -100.0 * math.expm1(u - u_ref)
