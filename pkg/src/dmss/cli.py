"""Command-line entry point.

Exit codes: 0 success, 2 configuration/usage error, 3 data error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .baselines import (CascadePolicy, OraclePolicy, SampleOncePolicy, TieredSamplingPolicy,
                        random_param_search)
from .core import DatasetError, build_dataset, make_profiles
from .planner import PlannerPolicy
from .policy import objective_for
from .predictor import DEFAULT_K_GRID, DEFAULT_METRIC_GRID, tune_knn
from .selector import Selector
from .sim import (REPORT_COLUMNS, atomic_write, optimal_subset_analysis, pareto_sweep,
                  run_policy, write_decision_log, write_rows_csv)
from .traceio import SynthConfig, gen_synthetic, load_models, load_trace, write_models, write_trace

log = logging.getLogger("dmss")

POLICIES = ("planner", "sample-once", "cascade", "tiered", "oracle")


class ConfigError(ValueError):
    pass


def load_config(path: str | None, overrides: list[str]) -> dict:
    cfg: dict = {}
    if path:
        try:
            with open(path, encoding="utf-8") as fh:
                cfg = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        if not isinstance(cfg, dict):
            raise ConfigError("config must be a JSON object")
        cfg["_dir"] = str(Path(path).resolve().parent)
    for item in overrides:
        key, sep, raw = item.partition("=")
        if not sep:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        node = cfg
        *parents, leaf = key.split(".")
        for p in parents:
            node = node.setdefault(p, {})
        node[leaf] = value
    return cfg


def section(cfg: dict, name: str) -> dict:
    value = cfg.get(name, {})
    if not isinstance(value, dict):
        raise ConfigError(f"config section {name!r} must be an object")
    return value


def _models(cfg: dict, flag: str | None, history) -> list:
    if flag:
        entries = load_models(flag)
    elif "models_file" in cfg:
        entries = load_models(Path(cfg.get("_dir", ".")) / cfg["models_file"])
    elif "models" in cfg:
        entries = cfg["models"]
    else:
        raise ConfigError("no models given (--models, models_file or models)")
    frames = cfg.get("frames_per_segment") or float(np.median([r.frame_count for r in history]))
    try:
        return make_profiles(entries, frames, cfg.get("exemplar_frames", 1))
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad model definitions: {exc}") from None


def build_policy(name: str, cfg: dict):
    obj = section(cfg, "objective")
    knn = section(cfg, "knn")
    binning = section(cfg, "binning")
    common = {"alpha": obj.get("alpha", 0.5)}
    knn_kw = {"k": knn.get("k", 10), "metric": knn.get("metric", "L2")}
    try:
        if name == "planner":
            p = section(cfg, "planner")
            return PlannerPolicy(**common, acc_target=obj.get("acc_target"),
                                 confidence=obj.get("confidence", 0.9), **knn_kw,
                                 weights=knn.get("weights", "uniform"),
                                 t_min=p.get("t_min", 10), max_iters=p.get("max_iters"),
                                 bin_count=binning.get("bin_count", 15),
                                 binning=binning.get("strategy", "quantile"),
                                 stat_resolution=p.get("stat_resolution", "bin"),
                                 charge_sampling=p.get("charge_sampling", True))
        if name == "sample-once":
            return SampleOncePolicy(**common, acc_target=obj.get("acc_target"),
                                    confidence=obj.get("confidence", 0.9), **knn_kw,
                                    bin_count=binning.get("bin_count", 15))
        if name == "cascade":
            return CascadePolicy(**section(cfg, "cascade"))
        if name == "tiered":
            return TieredSamplingPolicy(**common, **knn_kw, **section(cfg, "tiered"))
        if name == "oracle":
            return OraclePolicy(**common, acc_target=obj.get("acc_target"),
                                **section(cfg, "oracle"))
    except TypeError as exc:
        raise ConfigError(f"bad {name} parameters: {exc}") from None
    raise ConfigError(f"unknown policy {name!r}")


def _seed(args, cfg) -> int:
    seed = args.seed if args.seed is not None else cfg.get("seed")
    if seed is None:
        raise ConfigError("--seed is required")
    return int(seed)


def cmd_gen_trace(args, cfg):
    seed = _seed(args, cfg)
    try:
        synth = SynthConfig.from_dict(section(cfg, "synth"))
        out = gen_synthetic(synth, seed)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad synth config: {exc}") from None
    write_trace(args.output, out.records)
    models_out = args.models_out or str(Path(args.output).with_suffix("")) + ".models.json"
    write_models(models_out, out.models)
    log.info("wrote %d segments to %s and models to %s", len(out.records), args.output, models_out)


def _load_pair(args, cfg):
    history = load_trace(args.history)
    trace = load_trace(args.trace) if getattr(args, "trace", None) else history
    models = _models(cfg, args.models, history)
    return history, trace, models


def cmd_run(args, cfg):
    history, trace, models = _load_pair(args, cfg)
    binning = section(cfg, "binning")
    ds = build_dataset(history, binning.get("bin_count", 15), binning.get("strategy", "quantile"))
    alpha = section(cfg, "objective").get("alpha", 0.5)
    spec = objective_for(ds, models, alpha)
    policy = build_policy(args.policy, cfg).fit(ds, models)
    report = run_policy(trace, policy, spec)
    ref = report if args.policy == "sample-once" else run_policy(
        trace, build_policy("sample-once", cfg).fit(ds, models), spec)
    report.normalize(ref)
    report.alpha_or_target = alpha
    write_rows_csv(args.output, [report.row()], REPORT_COLUMNS)
    if args.log:
        write_decision_log(args.log, report.decisions, report.policy)
    log.info("%s: cost %.4f GFLOPs/frame, accuracy %.4f", report.policy, report.cost,
             report.accuracy)


def cmd_sweep(args, cfg):
    seed = _seed(args, cfg)
    history, trace, models = _load_pair(args, cfg)
    sw = section(cfg, "sweep")
    names = args.policies.split(",") if args.policies else sw.get("policies", ["planner",
                                                                              "sample-once"])
    policies = {n: build_policy(n, cfg) for n in names}
    alpha_grid, target_grid = sw.get("alpha_grid"), sw.get("target_grid")
    if alpha_grid is None and target_grid is None:
        alpha_grid = [0.1, 0.3, 0.5, 0.7, 0.9]
    try:
        rows = pareto_sweep(history, trace, policies, models, alpha_grid=alpha_grid,
                            target_grid=target_grid, spaces=section(cfg, "search"),
                            trials=sw.get("trials", 10), seed=seed)
    except ValueError as exc:
        if isinstance(exc, DatasetError):
            raise
        raise ConfigError(str(exc)) from None
    write_rows_csv(args.output, [r.row() for r in rows], (*REPORT_COLUMNS, "on_frontier"))
    log.info("wrote %d sweep rows to %s", len(rows), args.output)


def cmd_tune(args, cfg):
    history = load_trace(args.history)
    seed = args.seed if args.seed is not None else cfg.get("seed", 0)
    binning = section(cfg, "binning")
    ds = build_dataset(history, binning.get("bin_count", 15), binning.get("strategy", "quantile"))
    if args.policy is None:
        knn = section(cfg, "knn")
        est = tune_knn(ds, knn.get("k_grid", DEFAULT_K_GRID),
                       knn.get("metric_grid", DEFAULT_METRIC_GRID),
                       knn.get("holdout_fraction", 0.2), seed)
        result = {"k": est.k, "metric": est.metric,
                  "results": [list(r) for r in est.tuning_results_]}
    else:
        models = _models(cfg, args.models, history)
        space = section(cfg, "search").get(args.policy)
        if not space:
            raise ConfigError(f"no search space for {args.policy!r} in config 'search'")
        obj = section(cfg, "objective")
        spec = objective_for(ds, models, obj.get("alpha", 0.5))
        res = random_param_search(build_policy(args.policy, cfg), space, history, models,
                                  spec=spec, trials=section(cfg, "sweep").get("trials", 20),
                                  seed=seed, history=ds, acc_target=args.target)
        result = {"policy": args.policy, "best_params": res.best_params,
                  "best_score": list(res.best_score)}
    atomic_write(args.output, lambda fh: fh.write(json.dumps(result, indent=2) + "\n"))


def cmd_subset(args, cfg):
    history, trace, models = _load_pair(args, cfg)
    policy = build_policy("planner", cfg).fit(history, models)
    sel: Selector = policy.selector_
    rows = optimal_subset_analysis(trace, sel)
    for r in rows:
        r["subset"] = " ".join(map(str, r["subset"]))
    write_rows_csv(args.output, rows,
                   ("video_id", "segment_index", "optimal_size", "subset", "selected", "objective"))


def cmd_validate(args, cfg):
    records = load_trace(args.trace)
    if args.models:
        make_profiles(load_models(args.models), float(np.median([r.frame_count for r in records])))
    videos = len({r.video_id for r in records})
    print(f"ok: {len(records)} segments, {videos} videos, {len(records[0].stats)} models",
          file=sys.stderr)


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dmss", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def with_config(p, needs_config=True):
        if needs_config:
            p.add_argument("config")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override a config key (dotted path, JSON value)")
        return p

    p = with_config(sub.add_parser("gen-trace", help="write a synthetic trace"))
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--models-out")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_gen_trace)

    p = with_config(sub.add_parser("run", help="replay one policy over a trace"))
    p.add_argument("--policy", choices=POLICIES, required=True)
    p.add_argument("--trace", required=True)
    p.add_argument("--history", required=True)
    p.add_argument("--models")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--log", help="JSON-lines decision log")
    p.set_defaults(func=cmd_run)

    p = with_config(sub.add_parser("sweep", help="cost/accuracy frontier over operating points"))
    p.add_argument("--trace", required=True)
    p.add_argument("--history", required=True)
    p.add_argument("--models")
    p.add_argument("--policies", help="comma-separated policy names")
    p.add_argument("--seed", type=int)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_sweep)

    p = with_config(sub.add_parser("tune", help="tune the kNN predictor or a policy"))
    p.add_argument("--history", required=True)
    p.add_argument("--models")
    p.add_argument("--policy", choices=POLICIES)
    p.add_argument("--target", type=float, help="accuracy target for policy tuning")
    p.add_argument("--seed", type=int)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_tune)

    p = with_config(sub.add_parser("subset-analysis", help="optimal sampling-subset sizes"))
    p.add_argument("--trace", required=True)
    p.add_argument("--history", required=True)
    p.add_argument("--models")
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_subset)

    p = sub.add_parser("validate", help="check a trace file")
    p.add_argument("trace")
    p.add_argument("--models")
    p.set_defaults(func=cmd_validate, set=[], config=None)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = make_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        cfg = load_config(args.config, args.set)
        args.func(args, cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (DatasetError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
