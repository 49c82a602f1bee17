"""Trace files, model files and synthetic trace generation.

Trace CSV (long form, one row per segment and model)::

    video_id,segment_index,frame_count,model_id,stat_value,accuracy

Model JSON: an array of ``{model_id, name, flops_per_frame, exec_time_estimate}``.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, fields
from typing import NamedTuple, Sequence

import numpy as np

from .core import DatasetError, SegmentRecord
from .sim import atomic_write

TRACE_COLUMNS = ("video_id", "segment_index", "frame_count", "model_id", "stat_value", "accuracy")
MODEL_KEYS = ("model_id", "name", "flops_per_frame", "exec_time_estimate")


class TraceError(DatasetError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


def _num(text: str, kind, line: int, column: str):
    try:
        v = kind(text)
    except (TypeError, ValueError):
        raise TraceError(f"bad {column} value {text!r}", line) from None
    if kind is float and math.isnan(v):
        raise TraceError(f"NaN {column}", line)
    return v


def load_trace(path) -> list[SegmentRecord]:
    """Parse and validate a trace file; records sorted by (video_id, segment_index)."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [c for c in TRACE_COLUMNS if c not in header]
        if missing:
            raise TraceError(f"missing columns {missing}", 1)
        segs: dict[tuple[str, int], dict] = {}
        for row in reader:
            line = reader.line_num
            vid = row["video_id"]
            if not vid:
                raise TraceError("empty video_id", line)
            seg = _num(row["segment_index"], int, line, "segment_index")
            frames = _num(row["frame_count"], int, line, "frame_count")
            model = _num(row["model_id"], int, line, "model_id")
            stat = _num(row["stat_value"], float, line, "stat_value")
            acc = _num(row["accuracy"], float, line, "accuracy")
            if seg < 0 or model < 0:
                raise TraceError("negative segment_index or model_id", line)
            if frames <= 0:
                raise TraceError("frame_count must be positive", line)
            if not math.isfinite(acc):
                raise TraceError("non-finite accuracy", line)
            entry = segs.setdefault((vid, seg), {"frames": frames, "stats": {}, "accs": {},
                                                 "line": line})
            if entry["frames"] != frames:
                raise TraceError(f"frame_count differs within segment ({vid}, {seg})", line)
            if model in entry["stats"]:
                raise TraceError(f"duplicate row for ({vid}, {seg}, model {model})", line)
            entry["stats"][model] = stat
            entry["accs"][model] = acc
    if not segs:
        raise TraceError("trace has no rows")
    models = sorted({m for e in segs.values() for m in e["stats"]})
    if models != list(range(len(models))):
        raise TraceError(f"model ids must be dense 0..M-1, got {models}")
    records = []
    for (vid, seg), e in sorted(segs.items()):
        if len(e["stats"]) != len(models):
            lacking = sorted(set(models) - set(e["stats"]))
            raise TraceError(f"segment ({vid}, {seg}) lacks models {lacking}", e["line"])
        records.append(SegmentRecord(vid, seg, e["frames"], e["stats"], e["accs"]))
    return records


def write_trace(path, records: Sequence[SegmentRecord]) -> None:
    def write(fh):
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACE_COLUMNS)
        for r in records:
            for m in r.model_ids:
                w.writerow([r.video_id, r.segment_index, r.frame_count, m,
                            repr(float(r.stats[m])), repr(float(r.accuracies[m]))])
    atomic_write(path, write)


def load_models(path) -> list[dict]:
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    if not isinstance(data, list) or not data:
        raise DatasetError(f"{path}: model file must be a nonempty JSON array")
    for i, m in enumerate(data):
        for key in ("model_id", "flops_per_frame"):
            if key not in m:
                raise DatasetError(f"{path}: model entry {i} lacks {key!r}")
    return sorted(data, key=lambda m: int(m["model_id"]))


def write_models(path, models: Sequence[dict]) -> None:
    def write(fh):
        json.dump([{k: m.get(k) for k in MODEL_KEYS} for m in models], fh, indent=2)
        fh.write("\n")
    atomic_write(path, write)


# -- synthetic traces ---------------------------------------------------------

@dataclass
class SynthConfig:
    """Latent-difficulty generator settings.

    A per-video AR(1) latent with unit variance drives every model's
    statistic (loading ``sqrt(stat_corr)``, so pairwise statistic correlation
    is ``stat_corr``) and, through coupling ``rho_a``, the difficulty that
    lowers accuracies with model-dependent slopes.
    """

    n_models: int = 5
    n_videos: int = 100
    segments_per_video: int = 10
    frame_count: int = 60
    flops: list[float] | None = None
    acc_means: list[float] | None = None
    acc_slopes: list[float] | None = None
    stat_corr: float = 0.75
    stat_loadings: list[float] | None = None
    rho_a: float = 0.9
    ar_coef: float = 0.8
    noise: float = 0.02
    stat_shift: float = 0.0
    sec_per_gflop: float = 0.001
    video_prefix: str = "v"

    @classmethod
    def from_dict(cls, d: dict) -> "SynthConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown synthetic config keys {sorted(unknown)}")
        return cls(**d)

    def resolved(self) -> dict:
        m = self.n_models
        flops = self.flops or [round(2.5 * 2.2 ** i, 3) for i in range(m)]
        means = self.acc_means or list(np.linspace(0.45, 0.70, m))
        slopes = self.acc_slopes or list(np.linspace(0.25, 0.05, m))
        if self.stat_loadings is not None:
            loadings = list(self.stat_loadings)
        else:
            if not 0.0 <= self.stat_corr <= 1.0:
                raise ValueError(
                    f"stat_corr={self.stat_corr} is infeasible for a one-factor model "
                    "(implied covariance not PSD)")
            loadings = [math.sqrt(self.stat_corr)] * m
        for name, seq in (("flops", flops), ("acc_means", means), ("acc_slopes", slopes),
                          ("stat_loadings", loadings)):
            if len(seq) != m:
                raise ValueError(f"{name} needs {m} entries, got {len(seq)}")
        if any(abs(x) > 1 for x in loadings):
            raise ValueError("stat loadings above 1 imply a non-PSD covariance")
        if not -1.0 <= self.rho_a <= 1.0:
            raise ValueError("rho_a must lie in [-1, 1]")
        if not -1.0 < self.ar_coef < 1.0:
            raise ValueError("ar_coef must lie in (-1, 1)")
        if self.noise < 0:
            raise ValueError("noise must be nonnegative")
        if any(b < a for a, b in zip(flops, flops[1:])):
            raise ValueError("flops ladder must be nondecreasing")
        return {"flops": [float(x) for x in flops], "acc_means": [float(x) for x in means],
                "acc_slopes": [float(x) for x in slopes],
                "stat_loadings": [float(x) for x in loadings]}


class SyntheticTrace(NamedTuple):
    records: list[SegmentRecord]
    models: list[dict]
    params: dict


def gen_synthetic(cfg: SynthConfig, seed: int) -> SyntheticTrace:
    res = cfg.resolved()
    rng = np.random.default_rng(seed)
    m, v, s = cfg.n_models, cfg.n_videos, cfg.segments_per_video
    lam = np.array(res["stat_loadings"])
    means, slopes = np.array(res["acc_means"]), np.array(res["acc_slopes"])

    z = np.empty((v, s))
    z[:, 0] = rng.standard_normal(v)
    innov = math.sqrt(1.0 - cfg.ar_coef ** 2)
    for t in range(1, s):
        z[:, t] = cfg.ar_coef * z[:, t - 1] + innov * rng.standard_normal(v)
    stat_noise = rng.standard_normal((v, s, m))
    stats = lam * z[..., None] + np.sqrt(1.0 - lam ** 2) * stat_noise + cfg.stat_shift
    difficulty = cfg.rho_a * z + math.sqrt(1.0 - cfg.rho_a ** 2) * rng.standard_normal((v, s))
    accs = means - slopes * difficulty[..., None] + cfg.noise * rng.standard_normal((v, s, m))

    width = len(str(v - 1))
    records = [
        SegmentRecord(f"{cfg.video_prefix}{i:0{width}d}", t, cfg.frame_count,
                      {j: float(stats[i, t, j]) for j in range(m)},
                      {j: float(accs[i, t, j]) for j in range(m)})
        for i in range(v) for t in range(s)
    ]
    models = [{"model_id": j, "name": f"size{j}", "flops_per_frame": res["flops"][j],
               "exec_time_estimate": res["flops"][j] * cfg.sec_per_gflop} for j in range(m)]
    params = {**asdict(cfg), **res, "seed": seed}
    return SyntheticTrace(records, models, params)
