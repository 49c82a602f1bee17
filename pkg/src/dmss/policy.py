"""Shared estimator plumbing for selection policies."""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .core import (DEFAULT_BIN_COUNT, HistoricalDataset, ModelProfile, SegmentRecord,
                   build_dataset, check_profiles, group_by_video)
from .objective import ObjectiveSpec
from .predictor import fit_predictor
from .selector import Selector


@dataclass(frozen=True)
class SegmentDecision:
    """What a policy did on one segment and what it was charged."""

    video_id: str
    segment_index: int
    frame_count: int
    selected: int
    sampled: tuple[int, ...]
    executed: tuple[int, ...]
    sample_cost: float
    exec_cost: float
    accuracy: float
    termination: str | None = None

    @property
    def charged_cost(self) -> float:
        return self.sample_cost + self.exec_cost

    def to_dict(self) -> dict:
        d = asdict(self)
        d["sampled"] = list(self.sampled)
        d["executed"] = list(self.executed)
        return d


def objective_for(dataset: HistoricalDataset, profiles: Sequence[ModelProfile], alpha: float = 0.5,
                  acc_target: float | None = None, confidence: float = 0.9) -> ObjectiveSpec:
    """Objective normalized by the largest selection cost and the historical accuracy range."""
    lo, hi = float(dataset.accuracies.min()), float(dataset.accuracies.max())
    if hi <= lo:
        hi = lo + 1.0
    norm = max(p.selection_cost for p in profiles)
    if acc_target is None:
        return ObjectiveSpec.scalarized(alpha, cost_normalizer=norm, acc_lo=lo, acc_hi=hi)
    return ObjectiveSpec.chance_threshold(acc_target, confidence, cost_normalizer=norm,
                                          acc_lo=lo, acc_hi=hi)


class Policy(BaseEstimator):
    """Base class: ``fit`` on history, then ``decide`` one video at a time.

    Subclasses set ``uses_history = False`` when they need no dataset.
    """

    uses_history = True

    def fit(self, history, models: Sequence[ModelProfile]):
        """Fit on historical segments (a record list or a prebuilt dataset)."""
        check_profiles(models)
        self.profiles_ = sorted(models, key=lambda p: p.model_id)
        if self.uses_history:
            if isinstance(history, HistoricalDataset):
                self.dataset_ = history
            else:
                self.dataset_ = build_dataset(
                    history, getattr(self, "bin_count", DEFAULT_BIN_COUNT),
                    getattr(self, "binning", "quantile"))
            if self.dataset_.n_models != len(self.profiles_):
                raise ValueError("history and models cover different model sets")
        self._fit_extra()
        return self

    def _fit_extra(self):
        pass

    def _make_selector(self, alpha=None, acc_target=None, confidence=0.9) -> Selector:
        spec = objective_for(self.dataset_, self.profiles_, alpha, acc_target, confidence)
        predictor = fit_predictor(self.dataset_, getattr(self, "k", 10),
                                  getattr(self, "metric", "L2"), getattr(self, "weights", "uniform"))
        return Selector(self.dataset_, predictor, self.profiles_, spec)

    def decide(self, segments: Sequence[SegmentRecord]) -> list[SegmentDecision]:
        """Decisions for the segments of one video, in segment order."""
        raise NotImplementedError

    def run(self, segments: Sequence[SegmentRecord]) -> list[SegmentDecision]:
        check_is_fitted(self, "profiles_")
        out = []
        for video in group_by_video(segments).values():
            out.extend(self.decide(video))
        return out

    def predict(self, segments: Sequence[SegmentRecord]) -> np.ndarray:
        """Selected model per segment, in input order."""
        chosen = {(d.video_id, d.segment_index): d.selected for d in self.run(segments)}
        return np.array([chosen[s.key] for s in segments], dtype=int)

    # accounting helpers
    def _exec_cost(self, models: Sequence[int], frame_count: int) -> float:
        return sum(self.profiles_[m].segment_cost(frame_count) for m in models)

    def _sample_cost(self, models: Sequence[int]) -> float:
        if not getattr(self, "charge_sampling", True):
            return 0.0
        return sum(self.profiles_[m].sample_cost for m in models)
