"""Trace-driven dynamic model-size selection."""

from .baselines import (CascadeParams, CascadePolicy, OraclePolicy, SampleOncePolicy,
                        StaticPolicy, TieredParams, TieredSamplingPolicy, cascade_segment,
                        oracle_select, random_param_search)
from .core import (BinningScheme, DatasetError, HistoricalDataset, ModelProfile, Observation,
                   ObservationSet, SegmentRecord, StatSpec, build_dataset, discretize,
                   make_profiles)
from .objective import ObjectiveSpec, expected_selection_cost, scalarized_objective
from .planner import (Planner, PlannerPolicy, PlanTranscript, component_ii,
                      objective_under_selection, plan_segment)
from .predictor import KNNAccuracyRegressor, PredictionCache, predict_accuracy, tune_knn
from .prob import cond_prob, cond_probs, match_count, support_ok
from .selector import Selection, Selector, select
from .sim import (CommitConfig, PolicyRunReport, optimal_subset_analysis, pareto_sweep,
                  run_policy, simulate_commit)
from .traceio import SynthConfig, gen_synthetic, load_models, load_trace, write_trace

__all__ = [
    "BinningScheme", "CascadeParams", "CascadePolicy", "CommitConfig", "DatasetError",
    "HistoricalDataset", "KNNAccuracyRegressor", "ModelProfile", "ObjectiveSpec",
    "Observation", "ObservationSet", "OraclePolicy", "PlanTranscript", "Planner",
    "PlannerPolicy", "PolicyRunReport", "PredictionCache", "SampleOncePolicy", "SegmentRecord",
    "Selection", "Selector", "StatSpec", "StaticPolicy", "SynthConfig", "TieredParams",
    "TieredSamplingPolicy", "build_dataset", "cascade_segment", "component_ii", "cond_prob",
    "cond_probs", "discretize", "expected_selection_cost", "gen_synthetic", "load_models",
    "load_trace", "make_profiles", "match_count", "objective_under_selection",
    "optimal_subset_analysis", "oracle_select", "pareto_sweep", "plan_segment",
    "predict_accuracy", "random_param_search", "run_policy", "scalarized_objective", "select",
    "simulate_commit", "support_ok", "tune_knn", "write_trace",
]

__version__ = "0.1.0"
