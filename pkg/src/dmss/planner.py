"""Sequential measurement-driven sampling planner.

Each iteration estimates, for every unsampled model, the expected objective
improvement from learning its statistic (weighted by empirical conditional
bin probabilities) minus its sampling cost, and samples the best model while
that net gain is positive.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .core import ModelProfile, ObservationSet, SegmentRecord
from .objective import ObjectiveSpec
from .policy import Policy, SegmentDecision
from .prob import cond_counts, match_count
from .selector import Selection, Selector

TERMINATIONS = ("no_positive_gain", "drift_fallback", "max_iterations", "deadline")


@dataclass(frozen=True)
class PlanStep:
    model_id: int
    bin: int
    raw_stat: float
    gain: float
    j_before: float
    j_after_expected: float
    tentative: int


@dataclass
class PlanTranscript:
    steps: list[PlanStep] = field(default_factory=list)
    termination: str | None = None
    obs: ObservationSet = field(default_factory=ObservationSet)
    selection: Selection | None = None

    @property
    def sampled(self) -> tuple[int, ...]:
        """Every model run on exemplar frames, including one dropped by fallback."""
        return tuple(s.model_id for s in self.steps)

    def to_json(self) -> str:
        return json.dumps({
            "steps": [asdict(s) for s in self.steps],
            "termination": self.termination,
            "obs": [[o.model_id, o.bin] for o in self.obs],
            "selection": None if self.selection is None else self.selection._asdict(),
        })


def objective_under_selection(selector: Selector, obs: ObservationSet) -> float:
    return selector.objective_under_selection(obs)


def expected_objective_after(selector: Selector, model_id: int, obs: ObservationSet) -> float:
    """Probability-weighted objective after observing ``model_id``'s bin.

    Bins with zero conditional probability are skipped.
    """
    counts, n = cond_counts(selector.dataset, model_id, obs)
    if n == 0:
        raise ValueError(f"no historical support for {obs!r}")
    total = 0.0
    for s in np.flatnonzero(counts):
        j = selector.objective_under_selection(obs.add(model_id, int(s)))
        total += (counts[s] / n) * j
    return total


def component_ii(selector: Selector, model_id: int, obs: ObservationSet) -> float:
    """Expected objective reduction from sampling ``model_id`` given ``obs``."""
    return selector.objective_under_selection(obs) - expected_objective_after(selector, model_id, obs)


def sample_cost_units(spec: ObjectiveSpec, profile: ModelProfile) -> float:
    """Sampling cost expressed in objective units."""
    return spec.cost_weight() * profile.sample_cost / spec.cost_normalizer


class Planner:
    """Runs the greedy sampling loop for single segments against one selector.

    ``stat_resolution="bin"`` evaluates everything on bin-level observations
    (so gains and selections are cached across segments); ``"raw"`` feeds the
    recorded raw statistics of sampled models to the predictor.
    """

    def __init__(self, selector: Selector, t_min: int = 10, max_iters: int | None = None,
                 stat_resolution: str = "bin"):
        if stat_resolution not in ("bin", "raw"):
            raise ValueError("stat_resolution must be 'bin' or 'raw'")
        self.selector = selector
        self.t_min = t_min
        self.max_iters = selector.n_models - 1 if max_iters is None else max_iters
        self.stat_resolution = stat_resolution
        self._gain_cache: dict[tuple, dict[int, tuple[float, float, float]]] = {}
        self._select_cache: dict[tuple, Selection] = {}
        self._tie = {p.model_id: (p.sample_cost, p.model_id) for p in selector.profiles}

    def _view(self, obs: ObservationSet) -> ObservationSet:
        return obs.without_values() if self.stat_resolution == "bin" else obs

    def _select(self, obs: ObservationSet) -> Selection:
        view = self._view(obs)
        if self.stat_resolution == "raw":
            return self.selector.select(view)
        key = view.key()
        hit = self._select_cache.get(key)
        if hit is None:
            hit = self._select_cache[key] = self.selector.select(view)
        return hit

    def gains(self, obs: ObservationSet) -> dict[int, float]:
        """Net gain G[m] for every unsampled model."""
        return {m: g for m, (g, _, _) in self._gain_table(obs).items()}

    def _gain_table(self, obs: ObservationSet) -> dict[int, tuple[float, float, float]]:
        view = self._view(obs)
        key = view.key() if self.stat_resolution == "bin" else None
        if key is not None and key in self._gain_cache:
            return self._gain_cache[key]
        sel = self.selector
        j0 = sel.objective_under_selection(view)
        table = {}
        for p in sel.profiles:
            if p.model_id in obs.models:
                continue
            after = expected_objective_after(sel, p.model_id, view)
            table[p.model_id] = (j0 - after - sample_cost_units(sel.spec, p), j0, after)
        if key is not None:
            self._gain_cache[key] = table
        return table

    def plan(self, segment: SegmentRecord, max_iters: int | None = None) -> PlanTranscript:
        max_iters = self.max_iters if max_iters is None else max_iters
        sel = self.selector
        ds = sel.dataset
        tr = PlanTranscript()
        obs = ObservationSet()
        while True:
            if len(tr.steps) >= max_iters:
                tr.termination = "max_iterations"
                break
            table = self._gain_table(obs)
            if not table:
                tr.termination = "no_positive_gain"
                break
            m = max(table, key=lambda c: (table[c][0], tuple(-x for x in self._tie[c])))
            g, j0, after = table[m]
            if g <= 0:
                tr.termination = "no_positive_gain"
                break
            o = ds.observe(segment, m)
            obs = obs.add(o.model_id, o.bin, o.value)
            supported = match_count(ds, obs) >= self.t_min
            if not supported:
                obs = obs.drop_last()
            tentative = self._select(obs).model_id
            tr.steps.append(PlanStep(m, o.bin, o.value, g, j0, after, tentative))
            if not supported:
                tr.termination = "drift_fallback"
                break
        tr.obs = obs
        tr.selection = self._select(obs)
        return tr


def plan_segment(selector: Selector, segment: SegmentRecord, t_min: int = 10,
                 max_iters: int | None = None, stat_resolution: str = "bin") -> PlanTranscript:
    return Planner(selector, t_min, max_iters, stat_resolution).plan(segment)


class PlannerPolicy(Policy):
    """Per-segment greedy sampling followed by kNN-backed selection.

    Parameters
    ----------
    alpha : float
        Cost weight of the scalarized objective.
    acc_target, confidence : float, optional
        When ``acc_target`` is set, select with the chance-threshold objective.
    k, metric, weights : kNN predictor settings.
    t_min : int
        Minimum historical support for an observation set.
    max_iters : int, optional
        Sampling iterations per segment; defaults to ``M - 1``.
    bin_count, binning : discretization of historical statistics.
    stat_resolution : {"bin", "raw"}
    charge_sampling : bool
        ``False`` gives the no-cost-sampling diagnostic.
    """

    def __init__(self, alpha: float = 0.5, acc_target: float | None = None,
                 confidence: float = 0.9, k: int = 10, metric: str = "L2",
                 weights: str = "uniform", t_min: int = 10, max_iters: int | None = None,
                 bin_count: int = 15, binning: str = "quantile", stat_resolution: str = "bin",
                 charge_sampling: bool = True):
        self.alpha = alpha
        self.acc_target = acc_target
        self.confidence = confidence
        self.k = k
        self.metric = metric
        self.weights = weights
        self.t_min = t_min
        self.max_iters = max_iters
        self.bin_count = bin_count
        self.binning = binning
        self.stat_resolution = stat_resolution
        self.charge_sampling = charge_sampling

    def _fit_extra(self):
        self.selector_ = self._make_selector(self.alpha, self.acc_target, self.confidence)
        self.planner_ = Planner(self.selector_, self.t_min, self.max_iters, self.stat_resolution)

    def plan(self, segment: SegmentRecord) -> PlanTranscript:
        return self.planner_.plan(segment)

    def decide(self, segments: Sequence[SegmentRecord]) -> list[SegmentDecision]:
        out = []
        for seg in segments:
            tr = self.planner_.plan(seg)
            m = tr.selection.model_id
            out.append(SegmentDecision(
                seg.video_id, seg.segment_index, seg.frame_count, m, tr.sampled, (m,),
                self._sample_cost(tr.sampled), self._exec_cost((m,), seg.frame_count),
                float(seg.accuracies[m]), tr.termination))
        return out
