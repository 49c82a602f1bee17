"""Domain types: model profiles, segment records, observations and the
historical dataset with its discretization scheme."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

DEFAULT_BIN_COUNT = 15
STAT_KINDS = ("confidence_mean", "objectness_sum", "disagreement")


class DatasetError(ValueError):
    """Raised for malformed or inconsistent trace data."""


@dataclass(frozen=True)
class ModelProfile:
    """One candidate model size.

    Costs are in GFLOPs. ``sample_cost`` covers the exemplar frames of a
    segment, ``selection_cost`` a nominal full segment.
    """

    model_id: int
    name: str
    flops_per_frame: float
    exec_time_estimate: float | None = None
    sample_cost: float = 0.0
    selection_cost: float = 0.0

    def __post_init__(self):
        if not self.flops_per_frame > 0:
            raise ValueError(f"model {self.model_id}: flops_per_frame must be > 0")
        if self.sample_cost < 0 or self.selection_cost < 0:
            raise ValueError(f"model {self.model_id}: costs must be nonnegative")
        if self.sample_cost > self.selection_cost:
            raise ValueError(f"model {self.model_id}: sample_cost exceeds selection_cost")

    def segment_cost(self, frame_count: int) -> float:
        return self.flops_per_frame * frame_count


def make_profiles(
    models: Sequence[Mapping],
    frames_per_segment: float,
    exemplar_frames: float = 1,
) -> list[ModelProfile]:
    """Build profiles from model-file entries.

    ``models`` are mappings with ``model_id``, ``name``, ``flops_per_frame``
    and optionally ``exec_time_estimate``.
    """
    if exemplar_frames > frames_per_segment:
        raise ValueError("exemplar_frames cannot exceed frames_per_segment")
    profiles = [
        ModelProfile(
            model_id=int(m["model_id"]),
            name=str(m.get("name", f"model{m['model_id']}")),
            flops_per_frame=float(m["flops_per_frame"]),
            exec_time_estimate=(
                None if m.get("exec_time_estimate") is None else float(m["exec_time_estimate"])
            ),
            sample_cost=float(m["flops_per_frame"]) * exemplar_frames,
            selection_cost=float(m["flops_per_frame"]) * frames_per_segment,
        )
        for m in models
    ]
    check_profiles(profiles)
    return sorted(profiles, key=lambda p: p.model_id)


def check_profiles(profiles: Sequence[ModelProfile]) -> None:
    ids = sorted(p.model_id for p in profiles)
    if ids != list(range(len(profiles))):
        raise ValueError(f"model ids must be dense 0..M-1, got {ids}")
    by_id = sorted(profiles, key=lambda p: p.model_id)
    costs = [p.selection_cost for p in by_id]
    if any(b < a for a, b in zip(costs, costs[1:])):
        raise ValueError("model ids must be ordered by nondecreasing selection_cost")


@dataclass(frozen=True)
class StatSpec:
    stat_id: int
    kind: str
    value_range: tuple[float, float]

    def __post_init__(self):
        if self.kind not in STAT_KINDS:
            raise ValueError(f"unknown statistic kind {self.kind!r}")
        lo, hi = self.value_range
        if not lo < hi:
            raise ValueError("value_range must satisfy lo < hi")


@dataclass(frozen=True)
class SegmentRecord:
    """Ground truth for one video segment: a statistic and true accuracy per model."""

    video_id: str
    segment_index: int
    frame_count: int
    stats: Mapping[int, float]
    accuracies: Mapping[int, float]

    def __post_init__(self):
        if self.frame_count <= 0:
            raise DatasetError(f"{self.key}: frame_count must be positive")
        if set(self.stats) != set(self.accuracies):
            raise DatasetError(f"{self.key}: stats and accuracies cover different models")
        for m, a in self.accuracies.items():
            if not math.isfinite(a):
                raise DatasetError(f"{self.key}: non-finite accuracy for model {m}")

    @property
    def key(self) -> tuple[str, int]:
        return (self.video_id, self.segment_index)

    @property
    def model_ids(self) -> tuple[int, ...]:
        return tuple(sorted(self.stats))


@dataclass(frozen=True)
class BinningScheme:
    """Per-model interior cut points.

    Model ``m`` has ``len(cuts[m]) + 1`` bins. Bins are half-open
    ``[e_i, e_{i+1})`` with the last bin closed; values outside the fitted
    range clamp to the first or last bin.
    """

    cuts: tuple[np.ndarray, ...]
    bin_count: int = DEFAULT_BIN_COUNT

    def __post_init__(self):
        if not 2 <= self.bin_count <= 64:
            raise ValueError("bin_count must lie in [2, 64]")
        for m, c in enumerate(self.cuts):
            if np.any(np.diff(c) <= 0):
                raise ValueError(f"model {m}: bin edges must be strictly increasing")

    @classmethod
    def from_edges(cls, edges: Sequence[Sequence[float]]) -> "BinningScheme":
        """Scheme from full edge lists ``[e_0, ..., e_B]`` per model."""
        cuts = tuple(np.asarray(e, dtype=float)[1:-1].copy() for e in edges)
        count = max(2, max(len(c) + 1 for c in cuts))
        return cls(cuts=cuts, bin_count=count)

    @classmethod
    def fit(cls, stats: np.ndarray, bin_count: int = DEFAULT_BIN_COUNT,
            strategy: str = "quantile") -> "BinningScheme":
        """Fit edges per model column of ``stats`` (records x models)."""
        if not 2 <= bin_count <= 64:
            raise ValueError("bin_count must lie in [2, 64]")
        cuts = []
        for col in stats.T:
            lo, hi = float(col.min()), float(col.max())
            if strategy == "quantile":
                edges = np.quantile(col, np.linspace(0.0, 1.0, bin_count + 1))
            elif strategy == "uniform":
                edges = np.linspace(lo, hi, bin_count + 1)
            else:
                raise ValueError(f"unknown binning strategy {strategy!r}")
            # Cut points strictly inside (lo, hi]; ties collapse.
            inner = np.unique(edges[1:-1])
            inner = inner[inner > lo]
            cuts.append(inner)
        return cls(cuts=tuple(cuts), bin_count=bin_count)

    def n_bins(self, model_id: int) -> int:
        return len(self.cuts[model_id]) + 1

    def discretize(self, model_id: int, value: float) -> int:
        if math.isnan(value):
            raise ValueError(f"NaN statistic for model {model_id}")
        return int(np.searchsorted(self.cuts[model_id], value, side="right"))

    def discretize_column(self, model_id: int, values: np.ndarray) -> np.ndarray:
        if np.isnan(values).any():
            raise ValueError(f"NaN statistic for model {model_id}")
        return np.searchsorted(self.cuts[model_id], values, side="right").astype(np.int64)


@dataclass(frozen=True)
class Observation:
    model_id: int
    bin: int
    value: float | None = None


class ObservationSet(tuple):
    """Insertion-ordered (model, bin) observations of the current segment.

    Entries may carry the raw statistic; ``key`` ignores it unless asked.
    """

    def __new__(cls, items: Iterable = ()):
        obs = []
        seen = set()
        for it in items:
            if not isinstance(it, Observation):
                it = Observation(*it)
            if it.model_id in seen:
                raise ValueError(f"model {it.model_id} observed twice")
            seen.add(it.model_id)
            obs.append(it)
        return super().__new__(cls, obs)

    def add(self, model_id: int, bin: int, value: float | None = None) -> "ObservationSet":
        return ObservationSet((*self, Observation(model_id, bin, value)))

    def drop_last(self) -> "ObservationSet":
        return ObservationSet(self[:-1])

    def without_values(self) -> "ObservationSet":
        return ObservationSet(Observation(o.model_id, o.bin) for o in self)

    @property
    def models(self) -> frozenset[int]:
        return frozenset(o.model_id for o in self)

    def key(self, with_values: bool = False) -> tuple:
        """Canonical form: pairs sorted by model id."""
        if with_values:
            return tuple(sorted((o.model_id, o.bin, o.value) for o in self))
        return tuple(sorted((o.model_id, o.bin) for o in self))

    def __repr__(self):
        return "ObservationSet(" + ", ".join(f"{o.model_id}:{o.bin}" for o in self) + ")"


@dataclass(frozen=True, eq=False)
class HistoricalDataset:
    """Immutable, indexed historical segments.

    ``stats``/``accuracies`` are (records x models) arrays, ``disc`` the
    discretized statistics, ``postings[(m, b)]`` the sorted record ids whose
    model ``m`` statistic falls in bin ``b``.
    """

    records: tuple[SegmentRecord, ...]
    binning: BinningScheme
    stats: np.ndarray
    accuracies: np.ndarray
    frame_counts: np.ndarray
    disc: np.ndarray
    means: np.ndarray
    postings: Mapping[tuple[int, int], np.ndarray]
    bin_values: tuple[np.ndarray, ...] = field(repr=False)

    @property
    def n_records(self) -> int:
        return len(self.records)

    @property
    def n_models(self) -> int:
        return self.stats.shape[1]

    def n_bins(self, model_id: int) -> int:
        return self.binning.n_bins(model_id)

    def discretize(self, model_id: int, value: float) -> int:
        return discretize(self, model_id, value)

    def observe(self, record: SegmentRecord, model_id: int, with_value: bool = True) -> Observation:
        """The observation produced by sampling ``model_id`` on ``record``."""
        v = float(record.stats[model_id])
        return Observation(model_id, self.discretize(model_id, v), v if with_value else None)


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


def records_to_arrays(records: Sequence[SegmentRecord]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    model_ids = records[0].model_ids
    m = len(model_ids)
    if model_ids != tuple(range(m)):
        raise DatasetError(f"model ids must be dense 0..M-1, got {model_ids}")
    stats = np.empty((len(records), m))
    accs = np.empty((len(records), m))
    frames = np.empty(len(records), dtype=np.int64)
    for i, r in enumerate(records):
        if r.model_ids != model_ids:
            raise DatasetError(
                f"record {i} ({r.video_id}, {r.segment_index}) covers models "
                f"{r.model_ids}, expected {model_ids}"
            )
        for j in range(m):
            stats[i, j] = r.stats[j]
            accs[i, j] = r.accuracies[j]
        frames[i] = r.frame_count
    return stats, accs, frames


def build_dataset(
    records: Sequence[SegmentRecord],
    bin_count: int = DEFAULT_BIN_COUNT,
    strategy: str = "quantile",
    binning: BinningScheme | None = None,
) -> HistoricalDataset:
    """Index ``records`` for probability estimation and neighbor search.

    Edges are fitted per model (equal-mass by default) unless an explicit
    ``binning`` is given.
    """
    records = tuple(records)
    if not records:
        raise DatasetError("cannot build a dataset from zero records")
    stats, accs, frames = records_to_arrays(records)
    if np.isnan(stats).any():
        raise DatasetError("NaN statistic in historical records")
    if binning is None:
        binning = BinningScheme.fit(stats, bin_count, strategy)
    elif len(binning.cuts) != stats.shape[1]:
        raise DatasetError("binning covers a different number of models")

    m = stats.shape[1]
    disc = np.column_stack([binning.discretize_column(j, stats[:, j]) for j in range(m)])
    postings = {}
    bin_values = []
    for j in range(m):
        nb = binning.n_bins(j)
        order = np.argsort(disc[:, j], kind="stable")
        counts = np.bincount(disc[:, j], minlength=nb)
        bounds = np.concatenate([[0], np.cumsum(counts)])
        reps = np.empty(nb)
        cuts = binning.cuts[j]
        for b in range(nb):
            ids = np.sort(order[bounds[b]:bounds[b + 1]])
            postings[(j, b)] = _frozen(ids)
            if len(ids):
                reps[b] = stats[ids, j].mean()
            else:
                lo = cuts[b - 1] if b > 0 else cuts[0]
                hi = cuts[b] if b < len(cuts) else cuts[-1]
                reps[b] = 0.5 * (lo + hi)
        bin_values.append(_frozen(reps))

    return HistoricalDataset(
        records=records,
        binning=binning,
        stats=_frozen(stats),
        accuracies=_frozen(accs),
        frame_counts=_frozen(frames),
        disc=_frozen(disc),
        means=_frozen(accs.mean(axis=0)),
        postings=postings,
        bin_values=tuple(bin_values),
    )


def discretize(dataset: HistoricalDataset, model_id: int, raw_stat: float) -> int:
    return dataset.binning.discretize(model_id, raw_stat)


def group_by_video(records: Iterable[SegmentRecord]) -> dict[str, list[SegmentRecord]]:
    """Records per video, each list ordered by segment index; videos sorted by id."""
    videos: dict[str, list[SegmentRecord]] = {}
    for r in records:
        videos.setdefault(r.video_id, []).append(r)
    return {v: sorted(videos[v], key=lambda r: r.segment_index) for v in sorted(videos)}
