"""Acceptance suite: one test per criterion, each timed against its budget.

Every test records a PASS/FAIL line; the lines are printed as they happen and
again in pytest's terminal summary. Run directly with
``python3 tests/test_acceptance.py`` to get just the lines.
"""

from __future__ import annotations

import math
import time
from datetime import date, timedelta

import numpy as np

from nudgekit import config as cfgmod
from nudgekit.coredata import Stats
from nudgekit.correlate import BestProfile, correlation_table, pearson
from nudgekit.mlkit import ClassifierSpec, compute_metrics, f_value
from nudgekit.nudge import ContextSnapshot, NudgeEngine
from nudgekit.sim import World, make_profiles, run_scenario, simulate_subject, sleep_corpus
from nudgekit.sim.scenario import Settings, SimConfig, sleep_evaluation
from nudgekit.sleep import (
    SLEEPING,
    SleepConfig,
    SleepDetector,
    SleepEpisode,
    SleepWindow,
    learning_curve,
    merge_episodes,
)
from nudgekit.timeutil import analysis_day, anchor_of, day_start
from nudgekit.trajectory import TrajectoryPattern, edit_distance, levenshtein

RESULTS: list[str] = []
SEED = 20240101


def _record(n: int, title: str, ok: bool, detail: str, elapsed: float, budget: float | None) -> bool:
    within = budget is None or elapsed < budget
    passed = bool(ok) and within
    limit = "no budget" if budget is None else f"budget {budget:g}s"
    line = f"{'PASS' if passed else 'FAIL'}  criterion {n:>2}  {title}: {detail} [{elapsed:.2f}s, {limit}]"
    RESULTS.append(line)
    print(line)
    return passed


# ------------------------------------------------------------------- 1


def test_c01_metric_identity():
    t0 = time.perf_counter()
    rows = [((0.902, 0.918), 0.910), ((0.811, 0.934), 0.868), ((0.824, 0.910), 0.865), ((0.907, 0.919), 0.913)]
    errs = [abs(f_value(p, r) - f) for (p, r), f in rows]
    # compute_metrics must report the same F as the formula applied to its own P and R
    rng = np.random.default_rng(SEED)
    consistent = True
    for _ in range(50):
        y = rng.integers(0, 2, 200)
        p = np.clip(y * 0.6 + rng.random(200) * 0.5, 0, 1)
        m = compute_metrics(y, p)
        consistent &= abs(m.f_value - f_value(m.precision, m.recall)) < 1e-12
    ok = max(errs) <= 0.001 and consistent
    detail = f"max |F - reported| = {max(errs):.5f}, compute_metrics consistent={consistent}"
    assert _record(1, "F-value identity", ok, detail, time.perf_counter() - t0, 1.0), detail


# ------------------------------------------------------------------- 2


def _oracle_chunks(labels: list[int], window_s: int, gap_s: int, origin: int) -> list[tuple[int, int]]:
    """Fill interior awake runs shorter than the gap until nothing changes."""
    lab = list(labels)
    changed = True
    while changed:
        changed = False
        i = 0
        while i < len(lab):
            if lab[i] == 0:
                j = i
                while j < len(lab) and lab[j] == 0:
                    j += 1
                interior = i > 0 and j < len(lab)
                if interior and (j - i) * window_s < gap_s:
                    for k in range(i, j):
                        lab[k] = 1
                    changed = True
                i = j
            else:
                i += 1
    out, i = [], 0
    while i < len(lab):
        if lab[i] == 1:
            j = i
            while j < len(lab) and lab[j] == 1:
                j += 1
            out.append((origin + i * window_s, origin + j * window_s))
            i = j
        else:
            i += 1
    return out


def test_c02_merge_oracle():
    t0 = time.perf_counter()
    cfg = SleepConfig()
    day = date(2024, 3, 1)
    origin = anchor_of(day)
    rng = np.random.default_rng(SEED)
    mismatches = 0
    for _ in range(1000):
        # mixture of densities so both sparse and dense days appear
        density = rng.uniform(0.05, 0.95)
        labels = (rng.random(144) < density).astype(int).tolist()
        windows = [SleepWindow(day, origin + i * cfg.window_s, np.zeros(20), lab) for i, lab in enumerate(labels)]
        ep = merge_episodes(windows, cfg)
        got = [] if ep is None else ep.chunks
        want = _oracle_chunks(labels, cfg.window_s, cfg.merge_gap_min * 60, origin)
        mismatches += got != want
    ok = mismatches == 0
    detail = f"{mismatches} mismatches over 1000 sequences"
    assert _record(2, "merge rule vs fixpoint oracle", ok, detail, time.perf_counter() - t0, 5.0), detail


# ------------------------------------------------------------------- 3


def test_c03_sleep_pipeline_corpus():
    t0 = time.perf_counter()
    world = World()
    profiles = make_profiles(20, SEED, world)
    corpus = sleep_corpus(world, profiles, 25, SEED)
    spec = ClassifierSpec()
    per_mod: dict[str, list[float]] = {}
    priors = []
    n_windows = 0
    for sid, days in sorted(corpus.items()):
        windows = [w for d in days for w in d]
        n_windows += len(windows)
        priors.append(float(np.mean([w.label != SLEEPING for w in windows])))
        for name, m in sleep_evaluation(windows, spec, 10, SEED, sid).items():
            per_mod.setdefault(name, []).append(m.accuracy)
    acc = {k: float(np.mean(v)) for k, v in per_mod.items()}
    prior = float(np.mean(priors))
    best_single = max(v for k, v in acc.items() if k != "all")
    ok = acc["all"] >= 0.90 and acc["all"] >= best_single and abs(acc["screen"] - prior) <= 0.05
    detail = (
        f"{n_windows} windows; all={acc['all']:.4f}, best single={best_single:.4f}, "
        + ", ".join(f"{k}={v:.4f}" for k, v in acc.items() if k != "all")
        + f"; negative prior={prior:.4f}"
    )
    assert _record(3, "sleep pipeline on synthetic corpus", ok, detail, time.perf_counter() - t0, 120.0), detail


# ------------------------------------------------------------------- 4


def test_c04_learning_curve():
    t0 = time.perf_counter()
    world = World()
    profiles = make_profiles(3, SEED, world, preset="zero_drift", irregular_fraction=0.0)
    corpus = sleep_corpus(world, profiles, 25, SEED)
    problems, summary = [], []
    for sid, days in sorted(corpus.items()):
        curve = [m.accuracy for m in learning_curve(days, ClassifierSpec(), SEED)]
        after = curve[4:]
        band = max(after) - min(after)
        summary.append(f"{sid}: {len(curve)} days, min={min(curve):.3f}, band after day 5={band:.3f}")
        if len(curve) != 24 or band > 0.05 or min(curve) < 0.88:
            problems.append(sid)
    ok = not problems
    # for reference only: a default subject also sees occasional odd nights
    ref_profile = make_profiles(1, SEED, world)[0]
    ref = sleep_corpus(world, [ref_profile], 25, SEED)[ref_profile.subject_id]
    ref_curve = [m.accuracy for m in learning_curve(ref, ClassifierSpec(), SEED)]
    summary.append(f"(default profile, not scored: min={min(ref_curve):.3f}, mean={np.mean(ref_curve):.3f})")
    detail = "; ".join(summary)
    assert _record(4, "prequential learning curve", ok, detail, time.perf_counter() - t0, 60.0), detail


# ------------------------------------------------------------------- 5


def test_c05_levenshtein_properties():
    t0 = time.perf_counter()
    rng = np.random.default_rng(SEED)
    vocab = [f"S{i}" for i in range(8)]
    bad = 0
    for _ in range(500):
        a, b, c = ([vocab[i] for i in rng.integers(0, 8, rng.integers(0, 9))] for _ in range(3))
        dab, dba = levenshtein(a, b), levenshtein(b, a)
        bad += levenshtein(a, a) != 0
        bad += (dab == 0) != (a == b)
        bad += dab != dba
        bad += levenshtein(a, c) > dab + levenshtein(b, c)
    sanity = edit_distance("kitten", "sitting", level="char")
    ok = bad == 0 and sanity == 3
    detail = f"{bad} property violations over 500 triples; kitten/sitting={sanity}"
    assert _record(5, "Levenshtein properties", ok, detail, time.perf_counter() - t0, 1.0), detail


# ------------------------------------------------------------------- 6


def _pearson_oracle(x, y) -> float:
    n = len(x)
    mx, my = sum(x) / n, sum(y) / n
    sxy = sum((a - mx) * (b - my) for a, b in zip(x, y))
    sxx = sum((a - mx) ** 2 for a in x)
    syy = sum((b - my) ** 2 for b in y)
    return sxy / math.sqrt(sxx * syy)


def test_c06_pearson_oracle():
    t0 = time.perf_counter()
    rng = np.random.default_rng(SEED)
    worst = 0.0
    for _ in range(100):
        n = int(rng.integers(5, 60))
        k = int(rng.integers(2, 6))
        data = rng.normal(size=(n, k)) @ rng.normal(size=(k, k))
        cols = {f"c{j}": data[:, j].tolist() for j in range(k)}
        mat = correlation_table(cols, min_n=5)
        for i in range(k):
            for j in range(k):
                if i != j:
                    want = _pearson_oracle(data[:, i].tolist(), data[:, j].tolist())
                    worst = max(worst, abs(mat.get(f"c{i}", f"c{j}") - want))
    x = np.arange(20.0)
    exact = pearson(x, 3 * x + 2) == 1.0 and pearson(x, -0.5 * x + 7) == -1.0
    ok = worst <= 1e-9 and exact
    detail = f"max deviation {worst:.2e} over 100 datasets; perfect +/-1 exact={exact}"
    assert _record(6, "Pearson oracle equivalence", ok, detail, time.perf_counter() - t0, 1.0), detail


# ------------------------------------------------------------------- 7


class _StubAlternatives:
    def alternatives(self, start, end):
        return [("A|B|C", 900.0), ("A|D|B|C", 1100.0)]


def _stream(i: int):
    """One random tick stream: engine ingredients plus (time, context) ticks."""
    rng = np.random.default_rng([SEED, i])
    first = date(2024, 1, 1) + timedelta(days=int(rng.integers(0, 28)))
    n_days = int(rng.integers(1, 4))
    patterns = [
        TrajectoryPattern(
            pattern_id=k, start_poi=0, end_poi=1, weekdays=frozenset(range(7)),
            start_clock_min=float(rng.uniform(420, 600)), end_clock_min=0.0,
            avg_steps=1000.0, avg_speed=1.3, map_distance=800.0, street_string="A|C", occurrences=3,
            consecutive_rejections=int(rng.integers(0, 5)),
        )
        for k in range(int(rng.integers(1, 3)))
    ]
    best = BestProfile(20000.0, float(rng.uniform(240, 420)), {})
    times = set()
    for d in range(n_days):
        day = first + timedelta(days=d)
        midnight = day_start(day)
        for p in patterns:
            start = midnight + int(p.start_clock_min * 60)
            lo = (start - 40 * 60) // 300 * 300
            times.update(t for t in range(lo, start + 300, 300) if rng.random() < 0.7)
        bed = anchor_of(day + timedelta(days=1)) + int(best.best_bed_time_min * 60)
        lo = (bed - 70 * 60) // 300 * 300
        times.update(t for t in range(lo, bed + 600, 300) if rng.random() < 0.5)
        times.update(midnight + 300 * int(k) for k in rng.integers(0, 288, 4))
    ticks = []
    for t in sorted(times):
        ticks.append(
            ContextSnapshot(
                now=t,
                screen_on=bool(rng.random() < 0.6),
                last_interaction=t - int(rng.integers(0, 600)),
                movement_recent=Stats(0.0, float(rng.uniform(0, 0.5)), 1.0, 0.1),
                current_app="chat",
                light_avg=float(rng.uniform(0, 50)),
                sleep_signal=bool(rng.random() < 0.05),
            )
        )
    answers = rng.random((len(ticks) * 4 + 8, 2))
    score = float(rng.uniform(0.3, 1.0))
    return patterns, best, ticks, answers, score


def _run_stream(i: int):
    patterns, best, ticks, answers, score = _stream(i)
    start_counts = {p.pattern_id: p.consecutive_rejections for p in patterns}

    def episodes(now):
        d = analysis_day(now) - timedelta(days=1)
        a = anchor_of(d) + 6 * 3600
        return [SleepEpisode(d, a, a + 7 * 3600, 420.0, 0, [(a, a + 7 * 3600)])]

    eng = NudgeEngine(
        patterns=patterns, best=best, alternatives=_StubAlternatives(),
        break_scorer=lambda ctx: score, sleep_source=episodes,
    )
    violations = []
    rejections = dict(start_counts)
    k = 0
    for ctx in ticks:
        delivered = eng.tick(ctx.now, ctx)
        for adv in delivered:
            if not ctx.in_use:
                violations.append(f"delivered {adv.kind} while not in use at {ctx.now}")
            if adv.kind == "steps" and rejections[adv.payload["pattern_id"]] > 3:
                violations.append(f"steps advice for suppressed pattern {adv.payload['pattern_id']}")
            u_answer, u_accept = answers[k % len(answers)]
            k += 1
            if u_answer < 0.85:
                accepted = u_accept < 0.3
                eng.record_response(adv.advice_id, "accepted" if accepted else "rejected", ctx.now)
                if adv.kind == "steps":
                    pid = adv.payload["pattern_id"]
                    rejections[pid] = 0 if accepted else rejections[pid] + 1
    log = eng.log
    for adv in log:
        if adv.kind == "steps" and start_counts[int(adv.target)] > 3:
            violations.append(f"pattern {adv.target} suppressed from the start yet advised")
    per_day: dict[str, int] = {}
    for adv in log:
        if adv.kind == "bedtime":
            per_day[adv.day_id] = per_day.get(adv.day_id, 0) + 1
    sessions: dict[str, int] = {}
    for s in eng.state.sessions:
        key = analysis_day(s.trigger_at).isoformat()
        sessions[key] = sessions.get(key, 0) + 1
    if any(v > 1 for v in per_day.values()) or any(v > 1 for v in sessions.values()):
        violations.append("more than one bedtime advice or session in a day")
    return eng.advice_log_jsonl(), violations, len(ticks), len(log)


def test_c07_scheduler_invariants():
    t0 = time.perf_counter()
    n_violations, n_ticks, n_adv, replay_bad = 0, 0, 0, 0
    first = []
    for i in range(10_000):
        text, violations, ticks, advs = _run_stream(i)
        n_violations += len(violations)
        if violations and not first:
            first = violations[:3]
        n_ticks += ticks
        n_adv += advs
        if i % 20 == 0:
            replay_bad += _run_stream(i)[0] != text
    ok = n_violations == 0 and replay_bad == 0
    detail = f"10000 streams, {n_ticks} ticks, {n_adv} advices; {n_violations} violations, {replay_bad} replay mismatches"
    if first:
        detail += f" (e.g. {first})"
    assert _record(7, "scheduler invariants", ok, detail, time.perf_counter() - t0, 30.0), detail


# ------------------------------------------------------------------- 8


def test_c08_timing_matters():
    t0 = time.perf_counter()
    world = World()
    profiles = make_profiles(4, SEED, world)
    settings = Settings(sim=SimConfig(evaluate_sleep=False))
    rep = run_scenario(world, profiles, ("context_gated", "random_timing"), SEED, settings)
    gated = rep.arms["context_gated"].acceptance_rate
    rand = rep.arms["random_timing"].acceptance_rate
    diff = 100 * (gated - rand)
    g, r = rep.arms["context_gated"].funnel(), rep.arms["random_timing"].funnel()
    ok = diff >= 10.0
    detail = f"gated {gated:.3f} ({g.accepted}/{g.generated}) vs random {rand:.3f} ({r.accepted}/{r.generated}): +{diff:.1f} pp"
    assert _record(8, "context-gated vs random acceptance", ok, detail, time.perf_counter() - t0, 120.0), detail


# ------------------------------------------------------------------- 9


def test_c09_step_increase():
    t0 = time.perf_counter()
    world = World()
    profiles = make_profiles(4, SEED, world, preset="compliant")
    settings = Settings(sim=SimConfig(evaluate_sleep=False, act_days=10))
    rep = run_scenario(world, profiles, ("control", "context_gated"), SEED, settings)
    gated, control = rep.arms["context_gated"], rep.arms["control"]
    g_mean, c_mean = gated.steps_during(), control.steps_during()
    series = gated.daily_steps_series(weekdays_only=True)
    monotone = all(b >= a - 1e-9 for a, b in zip(series, series[1:]))
    ok = g_mean > c_mean and monotone
    detail = (
        f"gated {g_mean:.0f} vs control {c_mean:.0f} steps/day (+{100 * (g_mean / c_mean - 1):.2f}%); "
        f"weekday series {[round(x) for x in series]} non-decreasing={monotone}"
    )
    assert _record(9, "step increase under compliance", ok, detail, time.perf_counter() - t0, 120.0), detail


# ------------------------------------------------------------------ 10


def test_c10_zero_noise_recovery():
    t0 = time.perf_counter()
    world = World()
    profiles = make_profiles(4, SEED, world, preset="zero_noise")
    cfg = SleepConfig()
    corpus = sleep_corpus(world, profiles, 20, SEED)
    checked, wrong = 0, []
    for p in profiles:
        days = corpus[p.subject_id]
        sim, _, truth = simulate_subject(world, p, 20, seed=SEED)
        det = SleepDetector(ClassifierSpec(), cfg, p.subject_id)
        for d in days[:5]:
            det.add_training(d)
        det.fit(SEED)
        for d in days[5:]:
            fresh = [SleepWindow(w.day_id, w.window_start, w.features) for w in d]
            ep = det.detect(fresh)
            want = truth.sleep[d[0].day_id]
            checked += 1
            if ep is None or ep.chunks != list(want):
                wrong.append(d[0].day_id.isoformat())
    ok = not wrong and checked > 0
    detail = f"{checked} subject-days checked, {len(wrong)} differ" + (f" ({wrong[:5]})" if wrong else "")
    assert _record(10, "zero-noise ground-truth recovery", ok, detail, time.perf_counter() - t0, 30.0), detail


# ------------------------------------------------------------------ 11


def test_c11_defaults_audit():
    t0 = time.perf_counter()
    dump = cfgmod.dumps(cfgmod.RunConfig())
    lines = set(dump.splitlines())
    want = {
        "window_min = 10": "sleep",
        "merge_gap_min = 30": "sleep",
        "place_radius_m = 100": "sleep",
        "poi_radius_m = 10": "trajectory",
        "jump_filter_m = 150": "trajectory",
        "k = 6": "ml",
        "advice_lead_min = 30": "nudge",
        "bedtime_lead_min = 60": "nudge",
        "max_consecutive_rejections = 3": "nudge",
    }
    missing = [k for k in want if k not in lines]
    ok = not missing and cfgmod.loads(dump) == cfgmod.RunConfig()
    detail = "all nine constants present" if not missing else f"missing {missing}"
    assert _record(11, "defaults audit", ok, detail, time.perf_counter() - t0, None), detail


if __name__ == "__main__":
    import sys

    failed = 0
    for name, fn in sorted(globals().items()):
        if name.startswith("test_c") and callable(fn):
            try:
                fn()
            except AssertionError:
                failed += 1
    sys.exit(1 if failed else 0)
