"""Cost/accuracy objectives used for selection and evaluation."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Iterable


@dataclass(frozen=True)
class ObjectiveSpec:
    """Either a scalarized cost/accuracy trade-off or a chance threshold.

    ``scalarized``: ``alpha * cost/cost_normalizer + (1 - alpha) * (1 - acc_norm)``.
    ``chance_threshold``: the cheapest model whose accuracy reaches
    ``acc_target`` with probability at least ``confidence``; its objective
    value is the normalized selection cost.
    """

    kind: str = "scalarized"
    alpha: float = 0.5
    acc_target: float | None = None
    confidence: float = 0.9
    cost_normalizer: float = 1.0
    acc_lo: float = 0.0
    acc_hi: float = 1.0

    def __post_init__(self):
        if self.kind not in ("scalarized", "chance_threshold"):
            raise ValueError(f"unknown objective kind {self.kind!r}")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must lie in [0, 1]")
        if not 0.0 < self.confidence <= 1.0:
            raise ValueError("confidence must lie in (0, 1]")
        if self.kind == "chance_threshold" and self.acc_target is None:
            raise ValueError("chance_threshold objective needs acc_target")
        if not self.cost_normalizer > 0:
            raise ValueError("cost_normalizer must be positive")
        if not self.acc_lo < self.acc_hi:
            raise ValueError("acc_lo must be below acc_hi")

    @classmethod
    def scalarized(cls, alpha: float, **kw) -> "ObjectiveSpec":
        return cls(kind="scalarized", alpha=alpha, **kw)

    @classmethod
    def chance_threshold(cls, acc_target: float, confidence: float = 0.9, **kw) -> "ObjectiveSpec":
        return cls(kind="chance_threshold", acc_target=acc_target, confidence=confidence, **kw)

    def with_alpha(self, alpha: float) -> "ObjectiveSpec":
        return replace(self, alpha=alpha)

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}

    def cost_weight(self) -> float:
        """Objective units per unit of normalized cost."""
        return self.alpha if self.kind == "scalarized" else 1.0

    def normalized_accuracy(self, acc: float) -> float:
        x = (acc - self.acc_lo) / (self.acc_hi - self.acc_lo)
        return min(1.0, max(0.0, x))


def scalarized_objective(spec: ObjectiveSpec, cost: float, acc: float) -> float:
    """Lower is better."""
    a = spec.alpha
    return a * (cost / spec.cost_normalizer) + (1.0 - a) * (1.0 - spec.normalized_accuracy(acc))


def realized_objective(spec: ObjectiveSpec, charged_cost: float, true_acc: float) -> float:
    """Objective of a decision evaluated with its total charged cost and true accuracy."""
    if spec.kind == "scalarized":
        return scalarized_objective(spec, charged_cost, true_acc)
    return math.nan


def expected_selection_cost(probabilities: Iterable[tuple[float, float]]) -> float:
    pairs = list(probabilities)
    total = math.fsum(p for p, _ in pairs)
    if any(p < 0 for p, _ in pairs) or abs(total - 1.0) > 1e-9:
        raise ValueError(f"probabilities must be nonnegative and sum to 1 (got {total})")
    return math.fsum(p * c for p, c in pairs)
