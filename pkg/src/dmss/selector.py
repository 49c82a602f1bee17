"""Model selection from (possibly partial) observed statistics."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .core import HistoricalDataset, ModelProfile, ObservationSet
from .objective import ObjectiveSpec, scalarized_objective
from .predictor import KNNAccuracyRegressor, PredictionCache, predict_accuracy
from .prob import match_ids


class Selection(NamedTuple):
    model_id: int
    predicted_acc: float
    objective_value: float


@dataclass
class Selector:
    """Picks the model minimizing the objective for an observation set.

    Scalarized objectives use the kNN predictor. Chance-threshold objectives
    use the empirical share of matching historical segments in which each
    model reaches the target; the cheapest model reaching ``confidence`` wins,
    the most expensive one if none does.
    """

    dataset: HistoricalDataset
    predictor: KNNAccuracyRegressor | None
    profiles: Sequence[ModelProfile]
    spec: ObjectiveSpec
    cache: PredictionCache | None = field(default_factory=PredictionCache)

    def __post_init__(self):
        if len(self.profiles) != self.dataset.n_models:
            raise ValueError("profiles and dataset cover different model sets")
        self._costs = np.array([p.selection_cost for p in self.profiles])
        # candidate order for ties: cost, then id
        self._tie_order = sorted(range(len(self.profiles)), key=lambda m: (self._costs[m], m))

    @property
    def n_models(self) -> int:
        return len(self.profiles)

    def predict(self, obs: ObservationSet) -> np.ndarray:
        return predict_accuracy(self.dataset, self.predictor, obs, self.cache)

    def select(self, obs: ObservationSet, candidates: Sequence[int] | None = None) -> Selection:
        if self.spec.kind == "chance_threshold":
            return self._select_chance(obs, candidates)
        pred = self.predict(obs)
        best = None
        for m in self._tie_order:
            if candidates is not None and m not in candidates:
                continue
            obj = scalarized_objective(self.spec, self._costs[m], pred[m])
            if best is None or obj < best[1]:
                best = (m, obj)
        m, obj = best
        return Selection(m, float(pred[m]), float(obj))

    def _select_chance(self, obs: ObservationSet, candidates) -> Selection:
        ids = match_ids(self.dataset, obs)
        if len(ids) == 0:
            ids = np.arange(self.dataset.n_records)
        accs = self.dataset.accuracies[ids]
        meets = (accs >= self.spec.acc_target).mean(axis=0)
        order = [m for m in self._tie_order if candidates is None or m in candidates]
        chosen = next((m for m in order if meets[m] >= self.spec.confidence - 1e-12), order[-1])
        return Selection(chosen, float(accs[:, chosen].mean()),
                         float(self._costs[chosen] / self.spec.cost_normalizer))

    def objective_under_selection(self, obs: ObservationSet) -> float:
        """Objective value of the model selected for ``obs``."""
        return self.select(obs).objective_value


def select(selector: Selector, obs: ObservationSet) -> Selection:
    return selector.select(obs)
