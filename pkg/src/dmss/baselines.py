"""Comparison policies and control-parameter random search."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Mapping, Sequence

import numpy as np
from sklearn.base import clone

from .core import ModelProfile, ObservationSet, SegmentRecord
from .objective import ObjectiveSpec, scalarized_objective
from .policy import Policy, SegmentDecision, objective_for


class StaticPolicy(Policy):
    """Always run one model; never samples."""

    uses_history = False

    def __init__(self, model_id: int = 0):
        self.model_id = model_id

    def decide(self, segments):
        m = self.model_id
        return [SegmentDecision(s.video_id, s.segment_index, s.frame_count, m, (), (m,), 0.0,
                                self._exec_cost((m,), s.frame_count), float(s.accuracies[m]))
                for s in segments]


class SampleOncePolicy(Policy):
    """Sample every model on a video's first segment, then fix the selected model."""

    def __init__(self, alpha: float = 0.5, acc_target: float | None = None,
                 confidence: float = 0.9, k: int = 10, metric: str = "L2",
                 bin_count: int = 15, charge_sampling: bool = True):
        self.alpha = alpha
        self.acc_target = acc_target
        self.confidence = confidence
        self.k = k
        self.metric = metric
        self.bin_count = bin_count
        self.charge_sampling = charge_sampling

    def _fit_extra(self):
        self.selector_ = self._make_selector(self.alpha, self.acc_target, self.confidence)

    def decide(self, segments):
        first = segments[0]
        everyone = tuple(range(len(self.profiles_)))
        obs = ObservationSet(self.dataset_.observe(first, m) for m in everyone)
        m = self.selector_.select(obs).model_id
        return [SegmentDecision(s.video_id, s.segment_index, s.frame_count, m,
                                everyone if i == 0 else (), (m,),
                                self._sample_cost(everyone) if i == 0 else 0.0,
                                self._exec_cost((m,), s.frame_count), float(s.accuracies[m]))
                for i, s in enumerate(segments)]


@dataclass(frozen=True)
class CascadeParams:
    """Early-exit rule: escalate when the small model's in-range mean confidence is below ``c``."""

    l: float = 0.0
    h: float = 1.0
    c: float = 0.5
    small_id: int = 0
    large_id: int = 1
    empty_range_action: str = "small"

    def __post_init__(self):
        if not 0.0 <= self.l < self.h <= 1.0:
            raise ValueError("cascade bounds must satisfy 0 <= l < h <= 1")
        if not 0.0 <= self.c <= 1.0:
            raise ValueError("cascade threshold c must lie in [0, 1]")
        if self.empty_range_action not in ("small", "large"):
            raise ValueError("empty_range_action must be 'small' or 'large'")


def cascade_segment(segment: SegmentRecord, params: CascadeParams,
                    profiles: Sequence[ModelProfile]) -> tuple[int, float]:
    """Model whose output is kept and the total cost charged on ``segment``.

    The small model's recorded statistic stands for the mean confidence of its
    detections inside ``[l, h)``; a statistic outside that range means no
    detection fell in range.
    """
    small, large = profiles[params.small_id], profiles[params.large_id]
    cost = small.segment_cost(segment.frame_count)
    conf = float(segment.stats[params.small_id])
    if params.l <= conf < params.h:
        escalate = conf < params.c
    else:
        escalate = params.empty_range_action == "large"
    if escalate:
        return params.large_id, cost + large.segment_cost(segment.frame_count)
    return params.small_id, cost


class CascadePolicy(Policy):
    uses_history = False

    def __init__(self, l: float = 0.0, h: float = 1.0, c: float = 0.5, small_id: int = 0,
                 large_id: int | None = None, empty_range_action: str = "small"):
        self.l = l
        self.h = h
        self.c = c
        self.small_id = small_id
        self.large_id = large_id
        self.empty_range_action = empty_range_action

    def _fit_extra(self):
        large = len(self.profiles_) - 1 if self.large_id is None else self.large_id
        self.params_ = CascadeParams(self.l, self.h, self.c, self.small_id, large,
                                     self.empty_range_action)
        if not self.profiles_[self.small_id].selection_cost < self.profiles_[large].selection_cost:
            raise ValueError("cascade small model must be cheaper than the large model")

    def decide(self, segments):
        p = self.params_
        out = []
        for s in segments:
            m, cost = cascade_segment(s, p, self.profiles_)
            executed = (p.small_id,) if m == p.small_id else (p.small_id, p.large_id)
            out.append(SegmentDecision(s.video_id, s.segment_index, s.frame_count, m, (),
                                       executed, 0.0, cost, float(s.accuracies[m])))
        return out


@dataclass(frozen=True)
class TieredParams:
    window_length: float = 12
    expensive_period: float = 4
    cheap_period: float = 1
    top_k: int = 2
    reference_model_id: int | None = None

    def __post_init__(self):
        if not 1 <= self.cheap_period <= self.expensive_period <= self.window_length:
            raise ValueError("tiered periods must satisfy 1 <= cheap <= expensive <= window")
        if self.top_k < 1:
            raise ValueError("top_k must be >= 1")

    def event(self, index: int) -> str | None:
        """``"expensive"``, ``"cheap"`` or None for segment ``index`` of a video."""
        offset = index % self.window_length
        if offset % self.expensive_period == 0:
            return "expensive"
        if offset % self.cheap_period == 0:
            return "cheap"
        return None


def _period(x):
    return math.inf if x is None else x


class TieredSamplingPolicy(Policy):
    """Infrequent full sampling to choose a top-k subset, frequent sampling of that subset.

    Models are ranked for the top-k by how close their (z-normalized)
    statistic is to the reference model's; selection then runs over the top-k
    with the kNN predictor. The last selection persists between sampling events.
    Periods of ``None`` mean "only at the start of the video/window".
    """

    def __init__(self, alpha: float = 0.5, window_length: int | None = 12,
                 expensive_period: int | None = 4, cheap_period: int | None = 1, top_k: int = 2,
                 reference_model_id: int | None = None, k: int = 10, metric: str = "L2",
                 bin_count: int = 15, charge_sampling: bool = True):
        self.alpha = alpha
        self.window_length = window_length
        self.expensive_period = expensive_period
        self.cheap_period = cheap_period
        self.top_k = top_k
        self.reference_model_id = reference_model_id
        self.k = k
        self.metric = metric
        self.bin_count = bin_count
        self.charge_sampling = charge_sampling

    def _fit_extra(self):
        n = len(self.profiles_)
        ref = n - 1 if self.reference_model_id is None else self.reference_model_id
        self.params_ = TieredParams(_period(self.window_length), _period(self.expensive_period),
                                    _period(self.cheap_period), min(self.top_k, n), ref)
        self.selector_ = self._make_selector(self.alpha)
        st = self.dataset_.stats
        self._mu, self._sd = st.mean(axis=0), np.where(st.std(axis=0) > 0, st.std(axis=0), 1.0)

    def _rank(self, seg: SegmentRecord) -> tuple[int, ...]:
        p = self.params_
        z = {m: (seg.stats[m] - self._mu[m]) / self._sd[m] for m in range(len(self.profiles_))}
        order = sorted(z, key=lambda m: (abs(z[m] - z[p.reference_model_id]),
                                         self.profiles_[m].selection_cost, m))
        return tuple(sorted(order[: p.top_k]))

    def decide(self, segments):
        p = self.params_
        everyone = tuple(range(len(self.profiles_)))
        top = everyone
        current = None
        out = []
        for i, s in enumerate(segments):
            event = p.event(i)
            sampled: tuple[int, ...] = ()
            if event == "expensive":
                sampled = everyone
                top = self._rank(s)
            elif event == "cheap":
                sampled = top
            if sampled:
                obs = ObservationSet(self.dataset_.observe(s, m) for m in sampled)
                current = self.selector_.select(obs, candidates=top).model_id
            m = current
            out.append(SegmentDecision(s.video_id, s.segment_index, s.frame_count, m, sampled,
                                       (m,), self._sample_cost(sampled),
                                       self._exec_cost((m,), s.frame_count),
                                       float(s.accuracies[m]), event))
        return out


def oracle_select(segment: SegmentRecord, spec: ObjectiveSpec, profiles: Sequence[ModelProfile],
                  charge_sampling: bool = False) -> tuple[int, float]:
    """Best model under true accuracies and its charged cost."""
    order = sorted(profiles, key=lambda p: (p.selection_cost, p.model_id))
    if spec.kind == "chance_threshold":
        meets = [p for p in order if segment.accuracies[p.model_id] >= spec.acc_target]
        best = (meets or order[-1:])[0]
    else:
        best = min(order, key=lambda p: scalarized_objective(
            spec, p.segment_cost(segment.frame_count), segment.accuracies[p.model_id]))
    cost = best.segment_cost(segment.frame_count)
    if charge_sampling:
        cost += sum(p.sample_cost for p in profiles)
    return best.model_id, cost


class OraclePolicy(Policy):
    """Selection with true per-segment accuracies (history is used only for normalization)."""

    def __init__(self, alpha: float = 0.5, acc_target: float | None = None,
                 charge_sampling: bool = False):
        self.alpha = alpha
        self.acc_target = acc_target
        self.charge_sampling = charge_sampling

    def _fit_extra(self):
        self.spec_ = objective_for(self.dataset_, self.profiles_, self.alpha, self.acc_target)

    def decide(self, segments):
        everyone = tuple(range(len(self.profiles_)))
        out = []
        for s in segments:
            m, _ = oracle_select(s, self.spec_, self.profiles_)
            sampled = everyone if self.charge_sampling else ()
            out.append(SegmentDecision(s.video_id, s.segment_index, s.frame_count, m, sampled,
                                       (m,), self._sample_cost(sampled),
                                       self._exec_cost((m,), s.frame_count),
                                       float(s.accuracies[m])))
        return out


@dataclass
class SearchResult:
    best_params: dict
    best_score: tuple
    trials: list = field(default_factory=list)


def sample_params(space: Mapping[str, Any], rng: np.random.Generator) -> dict:
    """Draw one vector: ``[lo, hi]`` ranges uniformly (integers if both ends are), enums uniformly."""
    out = {}
    for name in sorted(space):
        dom = space[name]
        if isinstance(dom, Mapping):
            choices = list(dom["enum"])
            out[name] = choices[int(rng.integers(len(choices)))]
        else:
            lo, hi = dom
            if isinstance(lo, (int, np.integer)) and isinstance(hi, (int, np.integer)) \
                    and not isinstance(lo, bool):
                out[name] = int(rng.integers(lo, hi + 1))
            else:
                out[name] = float(rng.uniform(lo, hi))
    return out


def random_param_search(policy: Policy, param_space: Mapping[str, Any],
                        trace_train: Sequence[SegmentRecord], models: Sequence[ModelProfile],
                        spec: ObjectiveSpec | None = None, trials: int = 20, seed: int = 0,
                        history=None, acc_target: float | None = None) -> SearchResult:
    """Random search over ``param_space`` on a training trace.

    With ``acc_target`` the score is the cost of vectors meeting the target
    (infeasible vectors rank by accuracy shortfall); otherwise the mean
    realized objective under ``spec``. The policy is fitted on ``history``
    (default: the training trace). Invalid vectors are skipped.
    """
    from .sim import run_policy

    if not param_space:
        raise ValueError("empty parameter space")
    if trials < 1:
        raise ValueError("trials must be >= 1")
    rng = np.random.default_rng(seed)
    history = trace_train if history is None else history
    best = None
    log = []
    for _ in range(trials):
        params = sample_params(param_space, rng)
        try:
            est = clone(policy).set_params(**params).fit(history, models)
            rep = run_policy(trace_train, est, spec)
        except ValueError as exc:
            log.append((params, None, str(exc)))
            continue
        if acc_target is not None:
            shortfall = max(0.0, acc_target - rep.accuracy)
            score = (shortfall, rep.cost)
        else:
            score = (rep.objective,)
        log.append((params, score, None))
        if best is None or score < best[1]:
            best = (params, score)
    if best is None:
        raise ValueError("no valid parameter vector found")
    return SearchResult(best[0], best[1], log)
