"""Command-line entry point (``uatpc`` / ``python -m uatpc``).

Exit codes: 0 success, 2 validation error, 3 stage failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .core import (PowerConfig, UtilityParams, ValidationError, load_instance, load_rp_matrix,
                   parse_measurements, records_to_matrix, save_instance, save_rp_matrix, write_measurements)
from .pipeline import (RunConfig, StageError, compare_configs, run_pipeline, select_rps, SelectionSettings,
                       stage_seed, write_json, write_rows_csv)

log = logging.getLogger("uatpc")

EXIT_OK, EXIT_VALIDATION, EXIT_STAGE = 0, 2, 3


def _out(args) -> Path:
    p = Path(args.out)
    p.mkdir(parents=True, exist_ok=True)
    return p


def _params(args) -> UtilityParams:
    return UtilityParams(cs_threshold_dbm=args.cs_threshold)


def _rp_for(instance, path):
    m, ids = load_rp_matrix(path)
    if ids != instance.ap_ids:
        raise ValidationError(f"RP matrix columns {ids} do not match topology AP order")
    if np.isnan(m).any():
        raise ValidationError("RP matrix has missing entries; run 'impute apply' first")
    return m


def _selected(m, selection_path):
    if not selection_path:
        return m
    doc = json.loads(Path(selection_path).read_text())
    idx = np.asarray(doc["selected_indices"], dtype=int)
    if idx.size and (idx.min() < 0 or idx.max() >= len(m)):
        raise ValidationError("selection indices exceed the RP matrix")
    return m[idx]


# -- subcommands ---------------------------------------------------------------

def cmd_synth(args):
    from .synth import PathLossParams, gen_hotspot_scenario, gen_uniform_scenario, obfuscate
    plp = PathLossParams(args.pl0, 1.0, args.exponent, args.sigma)
    if args.kind == "uniform":
        sc = gen_uniform_scenario(args.n_aps, args.n_stas, args.side, pl_params=plp, seed=args.seed)
    else:
        sc = gen_hotspot_scenario(args.n_hotspots, args.n_stas, args.clustered_fraction, args.cluster_sigma,
                                  args.side, args.n_aps, pl_params=plp, seed=args.seed)
    out = _out(args)
    ids = sc.instance.ap_ids
    save_instance(sc.instance, out / "topology.json")
    k = args.visible if args.visible is not None else len(ids)
    write_measurements(obfuscate(sc.rp_pl, min(k, len(ids)), ap_ids=ids), out / "measurements.jsonl")
    save_rp_matrix(out / "groundtruth_pl.csv", sc.rp_pl, ids)
    if sc.clustered is not None:
        np.savetxt(out / "groundtruth_clustered.csv", sc.clustered.astype(int), fmt="%d", header="clustered",
                   comments="")
    print(f"wrote {len(ids)} APs and {len(sc.rp_pl)} records to {out}")


def cmd_ingest(args):
    inst = load_instance(args.topology)
    res = parse_measurements(args.measurements, args.format, inst)
    report = {"lines": res.n_lines, "accepted": len(res.records),
              "rejected": [{"line": ln, "reason": why} for ln, why in res.rejected]}
    write_json(_out(args) / "ingest_report.json", report)
    print(f"accepted {len(res.records)}, rejected {len(res.rejected)}")


def _masked(args, inst):
    res = parse_measurements(args.measurements, args.format, inst)
    return records_to_matrix(res.records, inst.ap_ids)


def cmd_impute(args):
    from .imputation import (ImputationModel, build_datasets, hide_and_impute_eval, high_impute, median_impute,
                             train_model)
    inst = load_instance(args.topology)
    masked = _masked(args, inst)
    out = _out(args)
    if args.action == "train":
        bundle = build_datasets(masked, args.min_visible, seed=stage_seed(args.seed, "split"))
        model = train_model(bundle, inst.ap_ids, args.epochs, stage_seed(args.seed, "impute"))
        path = Path(args.model) if args.model else out / "imputation_model.npz"
        model.save(path)
        rows = [{"ap": inst.ap_ids[d.ap_index], "rows": len(d),
                 "train_mae": r.train_mae if r else float("nan"), "val_mae": r.val_mae if r else float("nan"),
                 "test_mae": r.test_mae if r else float("nan")} for d, r in zip(bundle, model.per_ap)]
        write_rows_csv(out / "imputation_training.csv", rows)
        print(f"saved model to {path}")
        return
    if not args.model:
        raise ValidationError("--model is required")
    model = ImputationModel.load(args.model, inst.ap_ids)
    fallback = median_impute(masked) if args.fallback == "median" else high_impute()
    if args.action == "apply":
        save_rp_matrix(out / "reference_points.csv", model.impute_matrix(masked, fallback=fallback), inst.ap_ids)
        print(f"wrote {out / 'reference_points.csv'}")
    else:
        res = hide_and_impute_eval(masked, args.hide, model, seed=args.seed)
        rows = [{"n_hidden": n, "n_records": r.n_records, "mae": r.mae, "q1": r.quartiles[0],
                 "median": r.quartiles[1], "q3": r.quartiles[2]} for n, r in res.items()]
        write_rows_csv(out / "hide_and_impute.csv", rows)
        for row in rows:
            print(f"hide {row['n_hidden']}: median |err| {row['median']:.2f} dB over {row['n_records']} records")


def cmd_select(args):
    m, ids = load_rp_matrix(args.rp)
    if np.isnan(m).any():
        raise ValidationError("RP matrix has missing entries")
    settings = SelectionSettings(args.method, args.k, args.radius, args.radius_q, args.proj)
    if args.method == "uniform" and args.k is None:
        raise ValidationError("uniform selection needs --k")
    sel, emb = select_rps(m, settings, args.seed)
    out = _out(args)
    write_json(out / "selection.json", sel.to_json())
    if emb is not None:
        emb.write_csv(out / "embedding.csv")
    print(f"selected {len(sel)} of {len(m)}")


def cmd_optimize(args):
    from .optimize import exhaustive_search, full_power, local_search_restarts, tpcv1_offline
    inst = load_instance(args.topology)
    m = _selected(_rp_for(inst, args.rp), args.selection)
    out = _out(args)
    params = _params(args)
    if args.algo == "ls":
        rep = local_search_restarts(inst, m, args.trials, args.time_cap, args.seed, args.restarts, params)
        write_json(out / "search_report.json", rep.to_json(inst))
        cfg, u = rep.best_config, rep.best_utility
    elif args.algo == "exhaustive":
        res = exhaustive_search(inst, m, params)
        cfg, u = res.config, res.utility
        write_json(out / "search_report.json", {"best_utility": u, "evaluations": res.evaluations,
                                                "best_config": cfg.to_json(inst)["levels_dbm"]})
    else:
        cfg = full_power(inst) if args.algo == "fullpower" else tpcv1_offline(inst, args.tpc_threshold)
        from .sim import network_utility
        u = network_utility(m, cfg, inst, params).total
    write_json(out / "power_config.json", cfg.to_json(inst))
    print(f"utility {u:.6f}")


def cmd_baseline(args):
    from .optimize import full_power, tpcv1_offline
    inst = load_instance(args.topology)
    cfg = full_power(inst) if args.algo == "fullpower" else tpcv1_offline(inst, args.tpc_threshold)
    write_json(_out(args) / f"power_config_{args.algo}.json", cfg.to_json(inst))
    print(json.dumps(cfg.to_json(inst)["levels_dbm"]))


def cmd_evaluate(args):
    from .sim import network_utility
    inst = load_instance(args.topology)
    m = _selected(_rp_for(inst, args.rp), args.selection)
    configs = {}
    for item in args.power:
        name, _, path = item.rpartition("=")
        name = name or Path(path).stem
        configs[name] = PowerConfig.from_json(json.loads(Path(path).read_text()), inst)
    out = _out(args)
    params = _params(args)
    rows = compare_configs(m, inst, configs, params)
    write_rows_csv(out / "comparison.csv", rows)
    for name, cfg in configs.items():
        network_utility(m, cfg, inst, params).write_csv(out / f"breakdown_{name}.csv", inst.ap_ids)
    for r in rows:
        print(f"{r['config']}: utility {r['utility']:.6f}, median RSSI {r['rssi_median']:.1f} dBm")


def cmd_study(args):
    from . import studies
    out = _out(args)
    if args.which == "gap":
        _, summary = studies.study_optimality_gap(args.n, seed=args.seed, out_dir=out)
        for v, q in summary.items():
            print(f"LS-{v}: median gap {q['median']:.3f}%, 75th pct {q['q3']:.3f}%")
    elif args.which == "imputation":
        _, summary = studies.study_imputation_necessity(args.n, seed=args.seed, side_m=args.side,
                                                        time_cap_s=args.time_cap, out_dir=out)
        for (v, s), q in summary.items():
            print(f"visible {v:>2} {s:>7}: median loss {q['median']:.2f}%")
    else:
        rows, _ = studies.study_selection_hotspots(seed=args.seed, out_dir=out)
        for r in rows:
            print(f"{r['method']}: {r['n_selected']} selected, isolated {r['isolated_fraction']:.3f}, "
                  f"hotspot {r['hotspot_fraction']:.3f}")


def cmd_pipeline(args):
    doc = {}
    if args.config:
        doc = json.loads(Path(args.config).read_text())
    for key, val in (("topology", args.topology), ("measurements", args.measurements)):
        if val:
            doc[key] = val
    if args.out_given or "out_dir" not in doc:
        doc["out_dir"] = args.out
    if args.seed_given or "seed" not in doc:
        doc["seed"] = args.seed
    manifest = run_pipeline(RunConfig.from_dict(doc))
    print(f"wrote {len(manifest['files'])} artifacts to {doc['out_dir']}")


# -- parser ------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="global seed (default 0)")
    common.add_argument("--out", default=None, help="output directory (default ./out)")
    common.add_argument("--config", default=None, help="JSON RunConfig; CLI flags override it")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="uatpc", description="User-aware WLAN transmit power control toolkit",
                                parents=[common])
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, fn, **kw):
        sp = sub.add_parser(name, parents=[common], **kw)
        sp.set_defaults(func=fn)
        return sp

    def topo(sp, meas=False):
        sp.add_argument("--topology", required=True)
        if meas:
            sp.add_argument("--measurements", required=True)
            sp.add_argument("--format", choices=["jsonl", "csv"], default=None)

    def util(sp):
        sp.add_argument("--cs-threshold", type=float, default=-82.0, help="carrier-sense threshold, dBm")

    sp = add("synth", cmd_synth, help="generate a synthetic scenario")
    sp.add_argument("kind", choices=["uniform", "hotspot"])
    sp.add_argument("--n-aps", type=int, default=33)
    sp.add_argument("--n-stas", type=int, default=330)
    sp.add_argument("--side", type=float, default=100.0)
    sp.add_argument("--visible", type=int, default=None, help="keep the nearest K PLs per record")
    sp.add_argument("--pl0", type=float, default=40.0)
    sp.add_argument("--exponent", type=float, default=3.0)
    sp.add_argument("--sigma", type=float, default=0.0, help="shadowing std, dB")
    sp.add_argument("--n-hotspots", type=int, default=50)
    sp.add_argument("--clustered-fraction", type=float, default=0.9)
    sp.add_argument("--cluster-sigma", type=float, default=1.0)

    sp = add("ingest", cmd_ingest, help="validate measurements against a topology")
    topo(sp, meas=True)

    sp = add("impute", cmd_impute, help="train, apply or evaluate PL imputation")
    sp.add_argument("action", choices=["train", "apply", "eval"])
    topo(sp, meas=True)
    sp.add_argument("--model", default=None)
    sp.add_argument("--min-visible", type=int, default=4)
    sp.add_argument("--epochs", type=int, default=200)
    sp.add_argument("--fallback", choices=["median", "high"], default="median")
    sp.add_argument("--hide", type=int, nargs="+", default=[1])

    sp = add("select", cmd_select, help="downsample reference points")
    sp.add_argument("--rp", required=True, help="complete RP matrix CSV")
    sp.add_argument("--method", choices=["uniform", "stratified"], default="stratified")
    sp.add_argument("--k", type=int, default=None)
    g = sp.add_mutually_exclusive_group()
    g.add_argument("--radius", type=float, default=None)
    g.add_argument("--radius-q", type=float, default=None)
    sp.add_argument("--proj", choices=["pca", "tsne"], default="pca")

    sp = add("optimize", cmd_optimize, help="search power levels")
    topo(sp)
    util(sp)
    sp.add_argument("--rp", required=True)
    sp.add_argument("--selection", default=None)
    sp.add_argument("--algo", choices=["ls", "exhaustive", "fullpower", "tpcv1"], default="ls")
    sp.add_argument("--trials", default="15", help="per-AP trial cap L, or 'nl'")
    sp.add_argument("--time-cap", type=float, default=600.0)
    sp.add_argument("--restarts", type=int, default=1)
    sp.add_argument("--tpc-threshold", type=float, default=-70.0)

    sp = add("baseline", cmd_baseline, help="baseline power configs")
    topo(sp)
    sp.add_argument("--algo", choices=["fullpower", "tpcv1"], default="fullpower")
    sp.add_argument("--tpc-threshold", type=float, default=-70.0)

    sp = add("evaluate", cmd_evaluate, help="score power configs on an RP set")
    topo(sp)
    util(sp)
    sp.add_argument("--rp", required=True)
    sp.add_argument("--selection", default=None)
    sp.add_argument("--power", nargs="+", required=True, metavar="[NAME=]CONFIG.json")

    sp = add("study", cmd_study, help="run a controlled study")
    sp.add_argument("which", choices=["gap", "imputation", "selection"])
    sp.add_argument("--n", type=int, default=32, help="instances / topologies")
    sp.add_argument("--side", type=float, default=700.0, help="square side for the imputation study, m")
    sp.add_argument("--time-cap", type=float, default=120.0)

    sp = add("pipeline", cmd_pipeline, help="run ingest through evaluation")
    sp.add_argument("--topology", default=None)
    sp.add_argument("--measurements", default=None)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    args.seed_given = args.seed is not None
    args.out_given = args.out is not None
    args.seed = 0 if args.seed is None else args.seed
    args.out = "out" if args.out is None else args.out
    if args.config and args.command != "pipeline":
        try:
            doc = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            print(f"error: cannot read config: {exc}", file=sys.stderr)
            return EXIT_VALIDATION
        if not args.seed_given and "seed" in doc:
            args.seed = int(doc["seed"])
        if not args.out_given and "out_dir" in doc:
            args.out = doc["out_dir"]
    try:
        args.func(args)
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION if isinstance(exc.cause, ValidationError) else EXIT_STAGE
    except (ValidationError, FileNotFoundError, json.JSONDecodeError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except Exception as exc:  # noqa: BLE001 - any other failure is a stage failure
        log.debug("failure", exc_info=True)
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_STAGE
    return EXIT_OK
