"""Empirical conditional probabilities of discretized statistics."""

from __future__ import annotations

import numpy as np

from .core import HistoricalDataset, ObservationSet


def match_ids(dataset: HistoricalDataset, obs: ObservationSet) -> np.ndarray:
    """Sorted ids of historical records agreeing with every pair in ``obs``."""
    if not obs:
        return np.arange(dataset.n_records)
    lists = []
    for o in obs:
        ids = dataset.postings.get((o.model_id, o.bin))
        if ids is None or len(ids) == 0:
            return np.empty(0, dtype=np.int64)
        lists.append(ids)
    lists.sort(key=len)
    out = lists[0]
    for ids in lists[1:]:
        out = np.intersect1d(out, ids, assume_unique=True)
        if len(out) == 0:
            break
    return out


def match_count(dataset: HistoricalDataset, obs: ObservationSet) -> int:
    if not obs:
        return dataset.n_records
    return int(len(match_ids(dataset, obs)))


def cond_counts(dataset: HistoricalDataset, model_id: int, obs: ObservationSet) -> tuple[np.ndarray, int]:
    """Counts ``N(obs + (model_id, s))`` for every bin ``s``, and ``N(obs)``.

    The counts partition ``N(obs)``.
    """
    if model_id in obs.models:
        raise ValueError(f"model {model_id} already observed")
    ids = match_ids(dataset, obs)
    counts = np.bincount(dataset.disc[ids, model_id], minlength=dataset.n_bins(model_id))
    return counts, len(ids)


def cond_probs(dataset: HistoricalDataset, model_id: int, obs: ObservationSet) -> np.ndarray:
    counts, n = cond_counts(dataset, model_id, obs)
    if n == 0:
        raise ValueError(f"no historical support for {obs!r}")
    return counts / n


def cond_prob(dataset: HistoricalDataset, model_id: int, bin: int, obs: ObservationSet) -> float:
    """Estimated probability that sampling ``model_id`` yields ``bin`` given ``obs``."""
    return float(cond_probs(dataset, model_id, obs)[bin])


def support_ok(dataset: HistoricalDataset, obs: ObservationSet, t_min: int) -> bool:
    return match_count(dataset, obs) >= t_min
