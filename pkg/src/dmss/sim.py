"""Trace replay, aggregation, Pareto sweeps and the deadline-commit protocol."""

from __future__ import annotations

import csv
import itertools
import json
import logging
import math
import os
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable, Mapping, Sequence

import numpy as np
from sklearn.base import clone

from .core import ModelProfile, ObservationSet, SegmentRecord, group_by_video
from .objective import ObjectiveSpec, realized_objective, scalarized_objective
from .policy import Policy, SegmentDecision, objective_for
from .selector import Selector

log = logging.getLogger(__name__)

REPORT_COLUMNS = ("policy", "alpha_or_target", "cost_gflops_per_frame", "normalized_cost",
                  "accuracy", "n_segments", "n_videos")

POLICY_NAMES = {
    "PlannerPolicy": "planner",
    "SampleOncePolicy": "sample-once",
    "CascadePolicy": "cascade",
    "TieredSamplingPolicy": "tiered",
    "OraclePolicy": "oracle",
    "StaticPolicy": "static",
}


def policy_name(policy: Policy) -> str:
    return POLICY_NAMES.get(type(policy).__name__, type(policy).__name__)


@dataclass
class PolicyRunReport:
    policy: str
    params: dict
    decisions: list[SegmentDecision]
    cost: float
    accuracy: float
    objective: float
    n_segments: int
    n_videos: int
    total_frames: int
    normalized_cost: float = math.nan
    alpha_or_target: float = math.nan

    def normalize(self, reference: "PolicyRunReport") -> "PolicyRunReport":
        self.normalized_cost = self.cost / reference.cost
        return self

    def row(self) -> dict:
        return {
            "policy": self.policy,
            "alpha_or_target": self.alpha_or_target,
            "cost_gflops_per_frame": self.cost,
            "normalized_cost": self.normalized_cost,
            "accuracy": self.accuracy,
            "n_segments": self.n_segments,
            "n_videos": self.n_videos,
        }

    def segment_objectives(self, spec: ObjectiveSpec) -> np.ndarray:
        return np.array([realized_objective(spec, d.charged_cost, d.accuracy)
                         for d in self.decisions])


def summarize(decisions: Sequence[SegmentDecision], spec: ObjectiveSpec | None = None,
              policy: str = "", params: dict | None = None) -> PolicyRunReport:
    frames = np.array([d.frame_count for d in decisions], dtype=float)
    cost = math.fsum(d.charged_cost for d in decisions) / frames.sum()
    acc = float(np.dot(frames, [d.accuracy for d in decisions]) / frames.sum())
    if spec is not None and spec.kind == "scalarized":
        objective = float(np.mean([realized_objective(spec, d.charged_cost, d.accuracy)
                                   for d in decisions]))
    else:
        objective = math.nan
    return PolicyRunReport(policy, params or {}, list(decisions), cost, acc, objective,
                           len(decisions), len({d.video_id for d in decisions}),
                           int(frames.sum()))


def run_policy(trace: Sequence[SegmentRecord], policy: Policy,
               spec: ObjectiveSpec | None = None) -> PolicyRunReport:
    """Replay ``trace`` through a fitted policy.

    ``spec`` is the evaluation objective for the per-segment realized
    objective (total charged cost, true accuracy).
    """
    if not trace:
        raise ValueError("empty trace")
    m = len(policy.profiles_)
    for r in trace:
        if r.model_ids != tuple(range(m)):
            raise ValueError(f"segment {r.key} covers models {r.model_ids}, policy has {m}")
    decisions = policy.run(trace)
    params = {k: v for k, v in policy.get_params().items()}
    return summarize(decisions, spec, policy_name(policy), params)


def pareto_mask(costs: Sequence[float], accs: Sequence[float]) -> np.ndarray:
    """True for points no other point dominates (lower-or-equal cost, higher-or-equal accuracy)."""
    c, a = np.asarray(costs, float), np.asarray(accs, float)
    keep = np.ones(len(c), dtype=bool)
    for i in range(len(c)):
        dom = (c <= c[i]) & (a >= a[i]) & ((c < c[i]) | (a > a[i]))
        keep[i] = not dom.any()
    return keep


def cost_at_accuracy(costs: Sequence[float], accs: Sequence[float],
                     targets: Iterable[float]) -> np.ndarray:
    """Cheapest cost among points reaching each accuracy target (inf if none)."""
    c, a = np.asarray(costs, float), np.asarray(accs, float)
    out = []
    for t in targets:
        ok = a >= t
        out.append(c[ok].min() if ok.any() else math.inf)
    return np.array(out)


@dataclass
class FrontierRow:
    policy: str
    alpha_or_target: float
    cost_gflops_per_frame: float
    normalized_cost: float
    accuracy: float
    n_segments: int
    n_videos: int
    on_frontier: bool = False
    params: dict = field(default_factory=dict)

    def row(self) -> dict:
        return {k: getattr(self, k) for k in (*REPORT_COLUMNS, "on_frontier")}


def _thread_count() -> int:
    try:
        return max(1, int(os.environ.get("DMSS_THREADS", "1")))
    except ValueError:
        return 1


def _evaluate_point(args) -> PolicyRunReport:
    name, policy, space, point, mode, train, test, models, trials, seed = args
    from .baselines import random_param_search

    history_ds = _dataset_for(train, policy)
    if mode == "alpha":
        spec = objective_for(history_ds, models, alpha=point)
        est = clone(policy)
        if "alpha" in est.get_params():
            est.set_params(alpha=point)
        target = None
    else:
        spec = objective_for(history_ds, models, alpha=0.5)
        est = clone(policy)
        target = point
    if space:
        res = random_param_search(est, space, train, models, spec=spec, trials=trials,
                                  seed=seed, history=history_ds, acc_target=target)
        est.set_params(**res.best_params)
    est.fit(history_ds, models)
    rep = run_policy(test, est, spec)
    rep.alpha_or_target = point
    rep.policy = name
    return rep


def _dataset_for(train, policy):
    from .core import build_dataset
    return build_dataset(train, getattr(policy, "bin_count", 15),
                         getattr(policy, "binning", "quantile"))


def pareto_sweep(trace_train: Sequence[SegmentRecord], trace_test: Sequence[SegmentRecord],
                 policies: Policy | Mapping[str, Policy], models: Sequence[ModelProfile],
                 alpha_grid: Sequence[float] | None = None,
                 target_grid: Sequence[float] | None = None,
                 spaces: Mapping[str, Mapping] | None = None, trials: int = 20,
                 seed: int = 0, reference: str = "sample-once") -> list[FrontierRow]:
    """Evaluate each policy at every operating point and flag its Pareto frontier.

    Operating points are cost weights (``alpha_grid``) or accuracy targets
    (``target_grid``). Policies with a search space in ``spaces`` are tuned on
    the training trace first. Costs are normalized by the ``reference``
    policy's cost at the same point when it is part of the sweep.
    Rows come back sorted by (policy, accuracy).
    """
    if (alpha_grid is None) == (target_grid is None):
        raise ValueError("give exactly one of alpha_grid or target_grid")
    grid = list(alpha_grid if alpha_grid is not None else target_grid)
    if not grid:
        raise ValueError("empty operating-point grid")
    mode = "alpha" if alpha_grid is not None else "target"
    if isinstance(policies, Policy):
        policies = {policy_name(policies): policies}
    spaces = spaces or {}
    jobs = []
    for pi, (name, pol) in enumerate(policies.items()):
        for gi, point in enumerate(grid):
            sub_seed = int(np.random.SeedSequence([seed, pi, gi]).generate_state(1)[0])
            jobs.append((name, pol, spaces.get(name), point, mode, trace_train, trace_test,
                         models, trials, sub_seed))
    threads = _thread_count()
    if threads > 1:
        with ProcessPoolExecutor(threads) as ex:
            reports = list(ex.map(_evaluate_point, jobs))
    else:
        reports = []
        for j in jobs:
            log.info("sweep %s @ %s", j[0], j[3])
            reports.append(_evaluate_point(j))

    ref = {r.alpha_or_target: r for r in reports if r.policy == reference}
    rows = []
    for rep in reports:
        if rep.alpha_or_target in ref:
            rep.normalize(ref[rep.alpha_or_target])
        rows.append(FrontierRow(rep.policy, rep.alpha_or_target, rep.cost, rep.normalized_cost,
                                rep.accuracy, rep.n_segments, rep.n_videos, params=rep.params))
    for name in policies:
        mine = [r for r in rows if r.policy == name]
        mask = pareto_mask([r.cost_gflops_per_frame for r in mine], [r.accuracy for r in mine])
        for r, keep in zip(mine, mask):
            r.on_frontier = bool(keep)
    rows.sort(key=lambda r: (r.policy, r.accuracy, r.cost_gflops_per_frame))
    return rows


# -- deadline commit protocol ------------------------------------------------

def commit_time(t_arr: float, deadline: float, q_hat: float, t_exec: float) -> float:
    return t_arr + deadline - q_hat - t_exec


@dataclass(frozen=True)
class CommitConfig:
    t_arr: float
    deadline: float
    q_hat: float
    exec_time: Mapping[int, float]
    default_model: int

    def commit_for(self, model_id: int) -> float:
        return commit_time(self.t_arr, self.deadline, self.q_hat, self.exec_time[model_id])


@dataclass
class CommitResult:
    model_id: int
    t_commit: float
    timeline: list[dict]
    truncated: bool
    n_accepted: int

    @property
    def termination(self) -> str | None:
        return "deadline" if self.truncated else None


def simulate_commit(events: Sequence[tuple[float, int]], cfg: CommitConfig) -> CommitResult:
    """Replay timed tentative selections against the commit timestamp.

    The default model is committed at arrival with its commit time. A later
    tentative selection replaces it only if it arrives no later than the
    current commit time and its own commit time has not already passed.
    Updates arriving after the commit fires are discarded.
    """
    cur_m = cfg.default_model
    cur_t = cfg.commit_for(cur_m)
    timeline = [{"t": cfg.t_arr, "model": cur_m, "t_commit": cur_t, "accepted": True}]
    if cur_t < cfg.t_arr:
        # no slack even for the default model: execute it right away
        return CommitResult(cur_m, cfg.t_arr, timeline, bool(events), 0)
    accepted = 0
    truncated = False
    for t, m in sorted(events, key=lambda e: e[0]):
        if t > cur_t:
            truncated = True
            timeline.append({"t": t, "model": m, "t_commit": None, "accepted": False})
            continue
        new_t = cfg.commit_for(m)
        ok = new_t >= t
        timeline.append({"t": t, "model": m, "t_commit": new_t, "accepted": ok})
        if ok:
            cur_m, cur_t = m, new_t
            accepted += 1
    return CommitResult(cur_m, cur_t, timeline, truncated, accepted)


def plan_events(transcript, iteration_latency: float | Sequence[float],
                t_arr: float = 0.0) -> list[tuple[float, int]]:
    """Completion time and tentative selection of each planner iteration."""
    steps = transcript.steps
    if np.isscalar(iteration_latency):
        lat = [float(iteration_latency)] * len(steps)
    else:
        lat = list(iteration_latency)
    times = t_arr + np.cumsum(lat[: len(steps)]) if steps else []
    return [(float(t), s.tentative) for t, s in zip(times, steps)]


# -- optimal sampling subsets ------------------------------------------------

def optimal_subset_analysis(trace: Sequence[SegmentRecord], selector: Selector,
                            spec: ObjectiveSpec | None = None) -> list[dict]:
    """Per segment, the smallest sampling subset minimizing the realized objective.

    Every subset is charged its sampling cost, the selector picks a model from
    the subset's (bin-level) observations, and the outcome is scored with the
    segment's true accuracy.
    """
    spec = spec or selector.spec
    if spec.kind != "scalarized":
        raise ValueError("subset analysis needs a scalarized objective")
    profiles = selector.profiles
    m_count = len(profiles)
    if m_count > 12:
        raise ValueError(f"{m_count} models: exhaustive subset analysis is limited to 12")
    subsets = [c for size in range(m_count + 1)
               for c in itertools.combinations(range(m_count), size)]
    ds = selector.dataset
    rows = []
    for seg in trace:
        best = None
        for sub in subsets:
            obs = ObservationSet(ds.observe(seg, m, with_value=False) for m in sub)
            chosen = selector.select(obs).model_id
            cost = sum(profiles[m].sample_cost for m in sub) \
                + profiles[chosen].segment_cost(seg.frame_count)
            obj = scalarized_objective(spec, cost, seg.accuracies[chosen])
            if best is None or obj < best[0]:
                best = (obj, sub, chosen)
        rows.append({"video_id": seg.video_id, "segment_index": seg.segment_index,
                     "optimal_size": len(best[1]), "subset": list(best[1]),
                     "selected": best[2], "objective": best[0]})
    return rows


# -- output ------------------------------------------------------------------

def atomic_write(path: str | os.PathLike, write: Callable[[Any], None], newline: str = "") -> None:
    path = os.fspath(path)
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-")
    try:
        with os.fdopen(fd, "w", newline=newline, encoding="utf-8") as fh:
            write(fh)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_rows_csv(path, rows: Sequence[Mapping], columns: Sequence[str]) -> None:
    def write(fh):
        w = csv.DictWriter(fh, fieldnames=list(columns), lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({c: r[c] for c in columns})
    atomic_write(path, write)


def write_decision_log(path, decisions: Sequence[SegmentDecision], policy: str = "") -> None:
    def write(fh):
        for d in decisions:
            fh.write(json.dumps({"policy": policy, **d.to_dict()}, sort_keys=True) + "\n")
    atomic_write(path, write)


def subset_heatmap(rows: Sequence[Mapping]) -> dict[str, list[int]]:
    """Optimal subset sizes laid out as video -> sizes by segment order."""
    table: dict[str, list[tuple[int, int]]] = {}
    for r in rows:
        table.setdefault(r["video_id"], []).append((r["segment_index"], r["optimal_size"]))
    return {v: [s for _, s in sorted(table[v])] for v in sorted(table)}


__all__ = [
    "PolicyRunReport", "FrontierRow", "CommitConfig", "CommitResult", "run_policy", "summarize",
    "pareto_sweep", "pareto_mask", "cost_at_accuracy", "commit_time", "simulate_commit",
    "plan_events", "optimal_subset_analysis", "write_rows_csv", "write_decision_log",
    "subset_heatmap", "group_by_video",
]
