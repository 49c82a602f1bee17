"""Acceptance suite: one reported line per criterion.

Run with ``pytest tests/test_acceptance.py -s`` to see each line as it is
produced; the lines are also collected in the terminal summary.
"""

import json
import math
import time
from fractions import Fraction

import numpy as np
import pytest

from dmss import (CascadePolicy, CommitConfig, KNNAccuracyRegressor, ModelProfile, ObjectiveSpec,
                  ObservationSet, OraclePolicy, Planner, PlannerPolicy, SampleOncePolicy,
                  Selector, SynthConfig, TieredSamplingPolicy, build_dataset,
                  cond_prob, gen_synthetic, make_profiles, match_count, pareto_sweep,
                  predict_accuracy, run_policy, simulate_commit, support_ok)
from dmss.cli import main as cli_main
from dmss.planner import component_ii, expected_objective_after
from dmss.policy import objective_for
from dmss.predictor import fit_predictor
from dmss.prob import cond_counts
from dmss.sim import cost_at_accuracy, commit_time
from dmss.traceio import write_trace

from toy import (BIN_H, BIN_L, LARGE, MEDIUM, discrete_records, integer_binning,
                 toy_selector, toy_segment)

TOL = 1e-9


# -- 1, 2: three-model toy ---------------------------------------------------------

def test_criterion_01_toy_first_sample(criterion):
    start = time.perf_counter()
    sel = toy_selector()
    empty = ObservationSet()
    after = expected_objective_after(sel, LARGE, empty)
    comp = component_ii(sel, LARGE, empty)
    tr = Planner(sel).plan(toy_segment(BIN_H, 0))
    elapsed = time.perf_counter() - start
    ok = (abs(after - 63.5) <= TOL and abs(comp - 36.5) <= TOL and tr.sampled[:1] == (LARGE,)
          and elapsed < 1.0)
    criterion(1, "toy: Large sampled first from an empty set", ok,
              f"expected cost after sampling {after:.12g}, component {comp:.12g}, "
              f"first sample {tr.sampled[:1]}, {elapsed * 1000:.0f} ms")


def test_criterion_02_toy_filtered_gain(criterion):
    sel = toy_selector()
    medium_l = ObservationSet([(MEDIUM, BIN_L)])
    baseline = sel.objective_under_selection(medium_l)
    unfiltered = baseline - expected_objective_after(sel, LARGE, ObservationSet())
    filtered = component_ii(sel, LARGE, medium_l)
    gains = Planner(sel).gains(medium_l)
    # Medium=L already observed: the planner's next step is Large
    best = max(gains, key=gains.get)
    ok = (baseline == 55.0 and abs(unfiltered + 8.5) <= TOL and abs(filtered - 19.1) <= TOL
          and best == LARGE and gains[LARGE] > 0 and unfiltered <= 0)
    criterion(2, "toy: conditioning on Medium=L makes Large worth sampling", ok,
              f"unfiltered {unfiltered:.12g}, filtered {filtered:.12g}, G[Large] {gains[LARGE]:.12g}")


# -- 3: probability suite -----------------------------------------------------

def test_criterion_03_probability_suite(criterion):
    start = time.perf_counter()
    trace = gen_synthetic(SynthConfig(n_models=5, n_videos=50, segments_per_video=10), seed=21)
    ds = build_dataset(trace.records)
    rng = np.random.default_rng(3)
    raw = [[ds.binning.discretize(m, r.stats[m]) for m in range(5)] for r in trace.records]

    def scan(pairs):
        return sum(all(row[m] == b for m, b in pairs) for row in raw)

    mismatches = checked = 0
    for _ in range(200):
        size = int(rng.integers(0, 4))
        models = [int(m) for m in rng.permutation(5)[:size]]
        if rng.random() < 0.6:
            anchor = raw[int(rng.integers(500))]
            pairs = [(m, anchor[m]) for m in models]
        else:
            pairs = [(m, int(rng.integers(ds.n_bins(m)))) for m in models]
        obs = ObservationSet(pairs)
        n = scan(pairs)
        mismatches += match_count(ds, obs) != n
        for m in set(range(5)) - set(models):
            if n == 0:
                with pytest.raises(ValueError):
                    cond_prob(ds, m, 0, obs)
                continue
            counts, total = cond_counts(ds, m, obs)
            mismatches += Fraction(int(counts.sum()), total) != 1
            for b in range(ds.n_bins(m)):
                checked += 1
                mismatches += cond_prob(ds, m, b, obs) != scan(pairs + [(m, b)]) / n
    elapsed = time.perf_counter() - start
    criterion(3, "conditional probabilities against a linear scan", mismatches == 0 and elapsed < 10,
              f"{checked} probabilities, {mismatches} mismatches, {elapsed:.2f} s")


# -- 4: planner against exhaustive enumeration -----------------------------------

def oracle_first_sample(S, A, sample_costs, sel_costs, alpha, norm, lo, hi, k):
    """Expected net gain of every first sample by full enumeration."""
    n, m_count = S.shape
    mu, sd = S.mean(axis=0), S.std(axis=0)

    def predict(pairs):
        if not pairs:
            return A.mean(axis=0)
        feats = [(m, b) for m, b in pairs if sd[m] > 0]
        if not feats:
            return A.mean(axis=0)
        d = []
        for i in range(n):
            acc = 0.0
            for m, b in feats:
                diff = (S[i, m] - mu[m]) / sd[m] - (b - mu[m]) / sd[m]
                acc += diff * diff
            d.append((math.sqrt(acc), i))
        nearest = [i for _, i in sorted(d)[:min(k, n)]]
        return A[nearest].mean(axis=0)

    def objective(pairs):
        pred = predict(pairs)
        best = None
        for m in range(m_count):
            acc = min(1.0, max(0.0, (pred[m] - lo) / (hi - lo)))
            obj = alpha * sel_costs[m] / norm + (1 - alpha) * (1 - acc)
            key = (obj, sel_costs[m], m)
            if best is None or key < best:
                best = key
        return best[0]

    j0 = objective([])
    gains = {}
    for m in range(m_count):
        expected = 0.0
        for b in range(int(S[:, m].max()) + 1):
            cnt = int((S[:, m] == b).sum())
            if cnt:
                expected += cnt / n * objective([(m, b)])
        gains[m] = j0 - expected - alpha * sample_costs[m] / norm
    best = max(gains, key=lambda m: (gains[m], -sample_costs[m], -m))
    return (best if gains[best] > 0 else None), gains


def test_criterion_04_planner_vs_enumeration(criterion):
    rng = np.random.default_rng(44)
    matches = sampled = 0
    for _ in range(100):
        n = int(rng.integers(60, 200))
        recs = discrete_records(rng, n, n_models=3, n_bins=4)
        ds = build_dataset(recs, binning=integer_binning(3, 4))
        sel_costs = np.sort(rng.uniform(5, 50, 3))
        sample_costs = sel_costs * rng.uniform(0.0, 0.3, 3) * rng.choice([0.02, 0.2, 1.0])
        profiles = [ModelProfile(m, f"m{m}", sel_costs[m] / 30, None, sample_costs[m], sel_costs[m])
                    for m in range(3)]
        alpha = float(rng.uniform(0.05, 0.95))
        k = int(rng.choice([1, 3, 5, 10]))
        lo, hi = float(ds.accuracies.min()), float(ds.accuracies.max())
        spec = ObjectiveSpec.scalarized(alpha, cost_normalizer=sel_costs[-1], acc_lo=lo, acc_hi=hi)
        sel = Selector(ds, fit_predictor(ds, k=k), profiles, spec)
        tr = Planner(sel, t_min=1).plan(recs[int(rng.integers(n))], max_iters=1)
        got = tr.sampled[0] if tr.sampled else None
        S = np.array([[r.stats[m] for m in range(3)] for r in recs])
        want, _ = oracle_first_sample(S, ds.accuracies, sample_costs, sel_costs, alpha,
                                      sel_costs[-1], lo, hi, k)
        matches += got == want
        sampled += got is not None
    criterion(4, "planner first sample equals exhaustive argmax", matches == 100,
              f"{matches}/100 match, {sampled} instances sample")


# -- 5: kNN suite ------------------------------------------------------------------

def full_sort_knn(X, Y, row, k):
    sd = X.std(axis=0)
    cols = [j for j in range(X.shape[1]) if not math.isnan(row[j]) and sd[j] > 0]
    d = sorted((math.sqrt(sum(((X[i, j] - row[j]) / sd[j]) ** 2 for j in cols)), i)
               for i in range(len(X)))
    idx = [i for _, i in d[:k]]
    return Y[idx].mean(axis=0)


def test_criterion_05_knn_suite(criterion):
    trace = gen_synthetic(SynthConfig(n_models=4, n_videos=40, segments_per_video=10), seed=5)
    ds = build_dataset(trace.records)
    X, Y = ds.stats, ds.accuracies
    empty = predict_accuracy(ds, fit_predictor(ds, k=10), ObservationSet())
    stream = np.array([math.fsum(Y[:, m]) / len(Y) for m in range(4)])
    means_ok = empty.tobytes() == ds.means.tobytes() and np.allclose(empty, stream, rtol=0, atol=1e-15)

    one = KNNAccuracyRegressor(k=1).fit(X, Y)
    exact_ok = all(one.predict(X[i:i + 1])[0].tobytes() == Y[i].tobytes() for i in range(0, 400, 8))

    three = KNNAccuracyRegressor(k=3).fit(X, Y)
    rng = np.random.default_rng(6)
    worst = 0.0
    for _ in range(50):
        row = X[int(rng.integers(len(X)))] + rng.normal(0, 0.3, 4)
        row[rng.random(4) < 0.3] = np.nan
        if np.isnan(row).all():
            row[0] = 0.0
        worst = max(worst, float(np.abs(three.predict([row])[0] - full_sort_knn(X, Y, row, 3)).max()))
    ok = means_ok and exact_ok and worst <= 1e-12
    criterion(5, "kNN predictor", ok,
              f"empty-obs means exact {means_ok}, k=1 exact {exact_ok}, k=3 max error {worst:.1e}")


# -- 6: oracle dominance ---------------------------------------------------------

def test_criterion_06_oracle_dominance(criterion):
    cfg = SynthConfig(n_models=5, n_videos=1000, segments_per_video=10, ar_coef=0.5)
    hist = gen_synthetic(SynthConfig(n_models=5, n_videos=100, segments_per_video=10, ar_coef=0.5), 1)
    test = gen_synthetic(cfg, 2)
    profiles = make_profiles(hist.models, 60)
    ds = build_dataset(hist.records)
    violations = checked = 0
    for alpha in (0.2, 0.6):
        spec = objective_for(ds, profiles, alpha)
        oracle = run_policy(test.records, OraclePolicy(alpha=alpha).fit(ds, profiles), spec)
        base = oracle.segment_objectives(spec)
        for pol in (PlannerPolicy(alpha=alpha), SampleOncePolicy(alpha=alpha),
                    CascadePolicy(c=0.5), TieredSamplingPolicy(alpha=alpha)):
            rep = run_policy(test.records, pol.fit(ds, profiles), spec)
            other = rep.segment_objectives(spec)
            violations += int((base > other).sum())
            checked += len(other)
    criterion(6, "oracle objective never above any policy", violations == 0,
              f"{checked} segment comparisons on a {len(test.records)}-segment trace, "
              f"{violations} violations")


# -- 7: synthetic end-to-end frontier -------------------------------------------------

ALPHA_GRID = sorted({round(float(a), 4) for a in
                     np.concatenate([np.linspace(0, 1, 41), np.geomspace(0.005, 0.5, 41)])})


def test_criterion_07_synthetic_frontier(criterion):
    start = time.perf_counter()
    cfg = SynthConfig(n_models=5, n_videos=100, segments_per_video=10, stat_corr=0.75,
                      rho_a=0.9, noise=0.02, ar_coef=0.5)
    hist, test = gen_synthetic(cfg, 1), gen_synthetic(cfg, 2)
    profiles = make_profiles(hist.models, cfg.frame_count)
    S = np.array([[r.stats[m] for m in range(5)] for r in hist.records])
    stat_corr = np.corrcoef(S.T)[np.triu_indices(5, 1)].mean()
    rows = pareto_sweep(hist.records, test.records,
                        {"planner": PlannerPolicy(), "sample-once": SampleOncePolicy()},
                        profiles, alpha_grid=ALPHA_GRID)
    pts = {n: ([r.cost_gflops_per_frame for r in rows if r.policy == n],
               [r.accuracy for r in rows if r.policy == n]) for n in ("planner", "sample-once")}
    lo = max(min(a) for _, a in pts.values())
    hi = min(max(a) for _, a in pts.values())
    grid = np.linspace(lo, hi, 9)
    planner = cost_at_accuracy(*pts["planner"], grid)
    once = cost_at_accuracy(*pts["sample-once"], grid)
    ratio = planner / once
    elapsed = time.perf_counter() - start
    mid = ratio[len(grid) // 2]
    ok = bool(np.all(planner <= once)) and mid <= 0.85 and elapsed < 120
    criterion(7, "planner frontier against sample-once", ok,
              f"mean stat correlation {stat_corr:.3f}, cost ratios {np.round(ratio, 3).tolist()}, "
              f"mid-accuracy saving {100 * (1 - mid):.1f}%, {elapsed:.1f} s")


# -- 8: drift fallback ---------------------------------------------------------------

def test_criterion_08_drift_fallback(criterion):
    base = SynthConfig(n_models=5, n_videos=100, segments_per_video=10, ar_coef=0.5)
    hist = gen_synthetic(base, 1)
    normal = gen_synthetic(base, 2).records[:300]
    shifted_cfg = SynthConfig(n_models=5, n_videos=30, segments_per_video=10, ar_coef=0.5,
                              stat_shift=6.0, video_prefix="shift")
    shifted = gen_synthetic(shifted_cfg, 3).records
    profiles = make_profiles(hist.models, 60)
    pol = PlannerPolicy(alpha=0.2, binning="uniform").fit(hist.records, profiles)
    ds, planner, t_min = pol.dataset_, pol.planner_, pol.t_min
    first_gains = planner.gains(ObservationSet())
    assert max(first_gains.values()) > 0, "planner never samples at this operating point"
    first = max(first_gains, key=first_gains.get)
    default = pol.selector_.select(ObservationSet()).model_id

    affected = fallbacks = bad_obs = over_budget = 0
    for seg in normal + shifted:
        support = match_count(ds, ObservationSet([ds.observe(seg, first)]))
        tr = planner.plan(seg)
        if not (len(tr.obs) == 0 or support_ok(ds, tr.obs, t_min)):
            bad_obs += 1
        if support >= t_min:
            continue
        affected += 1
        fallbacks += tr.termination == "drift_fallback"
        (d,) = pol.decide([seg])
        budget = profiles[default].segment_cost(seg.frame_count) + profiles[first].sample_cost
        over_budget += d.charged_cost > budget + 1e-9
    ok = (affected >= len(shifted) and fallbacks == affected and bad_obs == 0 and over_budget == 0)
    criterion(8, "drift fallback on unsupported statistics", ok,
              f"{affected} affected segments, {fallbacks} fell back, {bad_obs} unsupported final "
              f"sets, {over_budget} over budget")


# -- 9: iteration ablation (soft) ---------------------------------------------------------

def test_criterion_09_iteration_ablation(criterion):
    cfg = SynthConfig(n_models=5, n_videos=100, segments_per_video=10, ar_coef=0.5)
    hist, test = gen_synthetic(cfg, 1), gen_synthetic(cfg, 2)
    profiles = make_profiles(hist.models, 60)
    ds = build_dataset(hist.records)
    lines, ok = [], True
    for alpha in (0.1, 0.3, 0.5):
        spec = objective_for(ds, profiles, alpha)
        stats = []
        for iters in (0, 1, 2, 5):
            rep = run_policy(test.records, PlannerPolicy(alpha=alpha, max_iters=iters).fit(ds, profiles),
                             spec)
            o = rep.segment_objectives(spec)
            stats.append((o.mean(), o.std(ddof=1) / math.sqrt(len(o))))
        for (m0, _), (m1, se1) in zip(stats, stats[1:]):
            ok &= m1 <= m0 + se1
        lines.append(f"alpha {alpha}: " + " ".join(f"{m:.4f}±{s:.4f}" for m, s in stats))
    criterion(9, "objective nonincreasing in max_iters within one SE", ok, "; ".join(lines), soft=True)


# -- 10: commit-time arithmetic ---------------------------------------------------------------

def test_criterion_10_commit_arithmetic(criterion):
    rng = np.random.default_rng(10)
    exact = truncated_ok = truncated = 0
    for _ in range(100):
        t_arr = float(rng.uniform(0, 100))
        deadline = float(rng.uniform(1, 10))
        q_hat = float(rng.uniform(0, 1))
        exec_t = {m: float(rng.uniform(0.05, 0.8)) for m in range(4)}
        cfg = CommitConfig(t_arr, deadline, q_hat, exec_t, 0)
        events = sorted((t_arr + float(rng.uniform(0, deadline)), int(rng.integers(4)))
                        for _ in range(int(rng.integers(1, 6))))
        res = simulate_commit(events, cfg)
        exact += res.t_commit == t_arr + deadline - q_hat - exec_t[res.model_id] and \
            commit_time(t_arr, deadline, q_hat, exec_t[res.model_id]) == res.t_commit
        # independent replay: the latest tentative selection accepted before the commit fires
        cur, cur_t, cut = 0, t_arr + deadline - q_hat - exec_t[0], False
        for t, m in events:
            if t > cur_t:
                cut = True
                continue
            if t_arr + deadline - q_hat - exec_t[m] >= t:
                cur, cur_t = m, t_arr + deadline - q_hat - exec_t[m]
        if cut:
            truncated += 1
            truncated_ok += res.model_id == cur and res.termination == "deadline"
        else:
            truncated_ok += res.model_id == cur and res.termination is None
    spot = commit_time(0.0, 5.0, 0.5, 1.5) == 3.0
    ok = exact == 100 and truncated_ok == 100 and truncated > 0 and spot
    criterion(10, "commit-time arithmetic", ok,
              f"{exact}/100 exact, {truncated} truncated runs, {truncated_ok}/100 commit the "
              "latest tentative selection")


# -- 11: scale ---------------------------------------------------------------------------------

def test_criterion_11_scale(criterion, tmp_path):
    cfg = SynthConfig(n_models=5, n_videos=10_000, segments_per_video=10, ar_coef=0.5)
    big = gen_synthetic(cfg, 11)
    hist = gen_synthetic(SynthConfig(n_models=5, n_videos=300, segments_per_video=10,
                                     ar_coef=0.5, video_prefix="h"), 12)
    write_trace(tmp_path / "trace.csv", big.records)
    write_trace(tmp_path / "hist.csv", hist.records)
    (tmp_path / "cfg.json").write_text(json.dumps({"models": big.models}))
    args = ["run", str(tmp_path / "cfg.json"), "--policy", "planner", "--trace",
            str(tmp_path / "trace.csv"), "--history", str(tmp_path / "hist.csv")]
    start = time.perf_counter()
    code = cli_main(args + ["-o", str(tmp_path / "a.csv"), "--log", str(tmp_path / "a.jsonl")])
    elapsed = time.perf_counter() - start
    code2 = cli_main(args + ["-o", str(tmp_path / "b.csv"), "--log", str(tmp_path / "b.jsonl")])
    same = ((tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
            and (tmp_path / "a.jsonl").read_bytes() == (tmp_path / "b.jsonl").read_bytes())
    ok = code == 0 and code2 == 0 and elapsed < 60 and same
    criterion(11, "planner over 1e5 segments", ok,
              f"{len(big.records)} segments, M=5, {elapsed:.1f} s, deterministic {same}")
