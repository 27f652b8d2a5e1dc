"""Command-line entry point.

Exit codes: 0 success, 2 usage or configuration error, 3 data error.
Verbosity comes from the NUDGEKIT_LOG environment variable (a logging level
name, default WARNING).
"""

from __future__ import annotations

import argparse
import bisect
import json
import logging
import os
import sys
from datetime import date, timedelta
from pathlib import Path
from typing import Sequence

from . import __version__
from . import config as cfgmod
from .config import ConfigError, RunConfig
from .coredata import EventLog, TraceError, aggregate_records, app_sessions, read_event_file, write_event_file
from .correlate import best_profile, extract_daily_params, pearson_matrix
from .fileio import atomic_write
from .mlkit import cross_validate
from .report import FIGURES, write_figures
from .sim import make_profiles, run_scenario, simulate_subject
from .sim.world import World
from .sleep import (
    NotTrainedError,
    SleepDetector,
    SleepEpisode,
    WindowBuilder,
    label_windows,
    merge_chunks,
    read_day_csv,
    windows_dataset,
    write_day_csv,
)
from .timeutil import DAY_S, analysis_day, anchor_of, format_ts, parse_ts, to_date
from .trajectory import Fix, PoiRegistry, mine_patterns, patterns_to_json, read_gpx, route_string, segment_routes

log = logging.getLogger("nudgekit")

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 2, 3


class DataError(Exception):
    """Input data is missing, malformed or insufficient."""


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # usage text, exit 2
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _setup_logging() -> None:
    level = os.environ.get("NUDGEKIT_LOG", "WARNING").upper()
    logging.basicConfig(
        level=getattr(logging, level, logging.WARNING),
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )


def _config(args) -> RunConfig:
    path = getattr(args, "config", None) or args.global_config
    return cfgmod.load(path) if path else RunConfig()


def _out_dir(args, cfg: RunConfig) -> Path:
    out = getattr(args, "out", None) or cfg.paths.out
    if not out:
        raise ConfigError("no output directory; pass --out or set [paths] out")
    return Path(out)


def _input_path(args, cfg: RunConfig) -> Path:
    p = getattr(args, "input", None) or cfg.paths.input
    if not p:
        raise ConfigError("no input; pass --input or set [paths] input")
    path = Path(p)
    if not path.exists():
        raise DataError(f"input {path} does not exist")
    return path


def _read_events(path: Path, subject: str | None) -> EventLog:
    try:
        return read_event_file(path, subject)
    except (TraceError, OSError, UnicodeDecodeError) as exc:
        raise DataError(f"{path}: {exc}") from None


def _complete_days(log_: EventLog) -> list:
    """Analysis days whose whole 18:00-to-18:00 span lies inside the trace."""
    span = log_.span
    if span is None:
        return []
    first = analysis_day(span[0])
    if anchor_of(first) < span[0]:
        first += timedelta(days=1)
    days = []
    d = first
    while anchor_of(d) + DAY_S <= span[1] + 1:
        days.append(d)
        d += timedelta(days=1)
    return days


def _read_truth(path: Path) -> dict:
    try:
        doc = json.loads(path.read_text())
        return {
            date.fromisoformat(k): [(parse_ts(a), parse_ts(b)) for a, b in v]
            for k, v in doc["sleep"].items()
        }
    except (OSError, KeyError, ValueError, TypeError) as exc:
        raise DataError(f"{path}: cannot read sleep labels ({exc})") from None


def _truth_doc(subject_id: str, sleep: dict) -> str:
    return json.dumps(
        {
            "subject_id": subject_id,
            "sleep": {d.isoformat(): [[format_ts(a), format_ts(b)] for a, b in iv] for d, iv in sorted(sleep.items())},
        },
        indent=1,
    )


def _episode_from_intervals(day, intervals, gap_s: int) -> SleepEpisode | None:
    chunks = merge_chunks(sorted(intervals), gap_s)
    if not chunks:
        return None
    dur = sum(b - a for a, b in chunks) / 60.0
    return SleepEpisode(day, chunks[0][0], chunks[-1][1], dur, len(chunks) - 1, chunks)


# ----------------------------------------------------------------- commands


def cmd_ingest(args, cfg: RunConfig) -> int:
    log_ = _read_events(_input_path(args, cfg), args.subject)
    out = _out_dir(args, cfg)
    truth = _read_truth(Path(args.labels)) if args.labels else {}
    records = aggregate_records(log_, step_threshold=cfg.core.step_threshold, refractory_s=cfg.core.refractory_s)
    builder = WindowBuilder(cfg.sleep)
    gap = cfg.sleep.merge_gap_min * 60
    prev = None
    days = _complete_days(log_)
    starts = [r.slot_start for r in records]
    for d in days:
        lo = anchor_of(d)
        recs = records[bisect.bisect_left(starts, lo) : bisect.bisect_left(starts, lo + DAY_S)]
        windows = builder.build(d, recs, prev)
        if d in truth:
            label_windows(windows, truth[d])
            prev = _episode_from_intervals(d, truth[d], gap)
            builder.observe_episode(prev)
        else:
            prev = None
        buf = out / "corpus" / f"{d.isoformat()}.csv"
        buf.parent.mkdir(parents=True, exist_ok=True)
        tmp = buf.with_suffix(".csv.tmp")
        write_day_csv(windows, tmp)
        os.replace(tmp, buf)
    kinds: dict[str, int] = {}
    for e in log_.events:
        kinds[e.kind] = kinds.get(e.kind, 0) + 1
    span = log_.span
    summary = {
        "subject_id": log_.subject_id,
        "events": len(log_.events),
        "malformed": log_.malformed,
        "by_kind": dict(sorted(kinds.items())),
        "span": None if span is None else [format_ts(span[0]), format_ts(span[1])],
        "records": len(records),
        "days": [d.isoformat() for d in days],
        "labelled_days": [d.isoformat() for d in days if d in truth],
    }
    atomic_write(out / "summary.json", json.dumps(summary, indent=1) + "\n")
    print(f"ingested {len(log_.events)} events, {len(days)} complete days -> {out}")
    return EXIT_OK


def cmd_train_sleep(args, cfg: RunConfig) -> int:
    corpus_dir = Path(args.corpus)
    files = sorted(corpus_dir.glob("*.csv")) if corpus_dir.is_dir() else [corpus_dir]
    if not files or not files[0].exists():
        raise DataError(f"no corpus CSV files under {corpus_dir}")
    windows = []
    for f in files:
        try:
            windows.extend(w for w in read_day_csv(f) if w.label is not None)
        except (OSError, ValueError) as exc:
            raise DataError(f"{f}: {exc}") from None
    if len({w.label for w in windows}) < 2:
        raise DataError("training needs labelled windows of both classes; ingest with --labels first")
    det = SleepDetector(cfg.ml, cfg.sleep, args.subject or "")
    det.add_training(windows)
    det.fit(args.seed)
    out = _out_dir(args, cfg)
    atomic_write(out / "sleep_model.json", det.to_json())
    metrics = cross_validate(windows_dataset(windows), cfg.ml, args.folds, args.seed)
    atomic_write(out / "sleep_cv.json", json.dumps(metrics.as_dict(), indent=1) + "\n")
    print(f"trained on {len(windows)} windows; {args.folds}-fold accuracy {metrics.accuracy:.4f}")
    return EXIT_OK


def cmd_detect_sleep(args, cfg: RunConfig) -> int:
    model_path = Path(args.model)
    if not model_path.exists():
        raise NotTrainedError(f"no sleep model at {model_path}; run `nudgekit train-sleep` first")
    try:
        det = SleepDetector.from_json(model_path.read_text())
    except (ValueError, KeyError) as exc:
        raise DataError(f"{model_path}: {exc}") from None
    log_ = _read_events(_input_path(args, cfg), args.subject)
    records = aggregate_records(log_, step_threshold=cfg.core.step_threshold, refractory_s=cfg.core.refractory_s)
    builder = WindowBuilder(det.config)
    lines, prev = [], None
    for d in _complete_days(log_):
        lo = anchor_of(d)
        windows = builder.build(d, [r for r in records if lo <= r.slot_start < lo + DAY_S], prev)
        prev = det.detect(windows)
        builder.observe_episode(prev)
        if prev is not None:
            lines.append(prev.to_json())
    out = _out_dir(args, cfg)
    atomic_write(out / "episodes.jsonl", "".join(line + "\n" for line in lines))
    print(f"detected {len(lines)} sleep episodes -> {out / 'episodes.jsonl'}")
    return EXIT_OK


def _read_episodes(path: Path) -> dict:
    try:
        eps = [SleepEpisode.from_dict(json.loads(line)) for line in path.read_text().splitlines() if line.strip()]
    except (OSError, ValueError, KeyError) as exc:
        raise DataError(f"{path}: {exc}") from None
    return {e.day_id: e for e in eps}


def cmd_correlate(args, cfg: RunConfig) -> int:
    log_ = _read_events(_input_path(args, cfg), args.subject)
    episodes = _read_episodes(Path(args.episodes))
    records = aggregate_records(log_, step_threshold=cfg.core.step_threshold, refractory_s=cfg.core.refractory_s)
    rows = extract_daily_params(records, app_sessions(log_), episodes, cfg.correlate)
    out = _out_dir(args, cfg)
    try:
        matrix = pearson_matrix(rows, cfg.correlate.min_n, cfg.correlate.top_apps)
    except ValueError as exc:
        raise DataError(str(exc)) from None
    out.mkdir(parents=True, exist_ok=True)
    tmp = out / ".correlation.csv.tmp"
    matrix.to_csv(tmp)
    os.replace(tmp, out / "correlation.csv")
    atomic_write(out / "heatmap.json", matrix.heatmap_json())
    try:
        best = best_profile(rows, cfg.correlate)
        atomic_write(out / "best_profile.json", best.to_json())
    except ValueError as exc:
        log.warning("no best profile: %s", exc)
    print(f"{len(rows)} daily rows -> {out}")
    return EXIT_OK


def cmd_mine_routes(args, cfg: RunConfig) -> int:
    path = _input_path(args, cfg)
    if path.suffix.lower() == ".gpx":
        try:
            fixes = read_gpx(path)
        except Exception as exc:  # ElementTree raises several unrelated types
            raise DataError(f"{path}: {exc}") from None
    else:
        log_ = _read_events(path, args.subject)
        fixes = [Fix(e.t, e.payload["lat"], e.payload["lon"]) for e in log_.of_kind("location")]
    world = World(cfg.world)
    registry = PoiRegistry(cfg.trajectory.poi_merge_radius_m)
    by_day: dict = {}
    for f in fixes:
        by_day.setdefault(to_date(f.t), []).append(f)
    routes = []
    for d in sorted(by_day):
        day_routes, _ = segment_routes(by_day[d], d, cfg.trajectory, registry)
        for r in day_routes:
            try:
                r.street_string = route_string(r, world)
            except LookupError as exc:
                log.info("route on %s skipped: %s", d, exc)
                continue
            routes.append(r)
    patterns = mine_patterns(routes, cfg.trajectory, registry)
    out = _out_dir(args, cfg)
    atomic_write(out / "patterns.json", patterns_to_json(patterns))
    print(f"{len(routes)} routes, {len(patterns)} recurring patterns -> {out / 'patterns.json'}")
    return EXIT_OK


def cmd_simulate(args, cfg: RunConfig) -> int:
    world = World(cfg.world)
    profiles = make_profiles(
        cfg.subjects.n,
        args.seed,
        world,
        preset=cfg.subjects.preset,
        noise_scale=cfg.noise.scale,
        irregular_fraction=cfg.subjects.irregular_fraction,
    )
    out = _out_dir(args, cfg)
    report = run_scenario(world, profiles, cfg.arms.enabled, args.seed, cfg.settings())
    atomic_write(out / "report.json", report.to_json() + "\n")
    atomic_write(out / "config.ini", cfgmod.dumps(cfg))
    for key, advices in sorted(report.advice_logs.items()):
        arm, sid = key.split("/")
        text = "".join(json.dumps(a.log_record(), separators=(",", ":")) + "\n" for a in advices)
        atomic_write(out / "advice" / f"{arm}__{sid}.jsonl", text)
    if args.traces:
        days = cfg.sim.learn_days
        for p in profiles:
            sim, log_, truth = simulate_subject(
                world, p, days, seed=args.seed, start=date.fromisoformat(cfg.sim.start_date), sleep_config=cfg.sleep
            )
            (out / "traces").mkdir(parents=True, exist_ok=True)
            write_event_file(log_, out / "traces" / f"{p.subject_id}.jsonl.gz")
            atomic_write(out / "traces" / f"{p.subject_id}.truth.json", _truth_doc(p.subject_id, truth.sleep))
    for name, arm in sorted(report.arms.items()):
        print(f"{name:>14}: acceptance {arm.acceptance_rate:.3f}, mean steps {arm.steps_during():.0f}")
    print(f"report -> {out / 'report.json'}")
    return EXIT_OK


def cmd_report(args, cfg: RunConfig) -> int:
    run = Path(args.run)
    path = run / "report.json"
    if not path.exists():
        raise DataError(f"{path} not found; run `nudgekit simulate` first")
    try:
        doc = json.loads(path.read_text())
    except ValueError as exc:
        raise DataError(f"{path}: {exc}") from None
    out = Path(args.out) if args.out else run
    try:
        written = write_figures(doc, out, args.figure, png=not args.no_png)
    except KeyError as exc:
        raise ConfigError(str(exc.args[0])) from None
    for p in written:
        print(p)
    return EXIT_OK


# -------------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="nudgekit", description="Sensor-trace pipeline, nudging engine and life simulator.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("--print-config", action="store_true", help="print the effective configuration and exit")
    p.add_argument("--config", dest="global_config", help="sectioned key-value configuration file")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    def add(name: str, help_: str, *, inp: bool = False, subject: bool = False):
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("--config", help="sectioned key-value configuration file")
        sp.add_argument("--out", help="output directory")
        if inp:
            sp.add_argument("--input", help="event trace (JSONL, optionally .gz)")
        if subject:
            sp.add_argument("--subject", help="subject id (default: file name)")
        return sp

    sp = add("ingest", "validate a trace and export per-day window corpora", inp=True, subject=True)
    sp.add_argument("--labels", help="JSON of true sleep intervals per analysis day")
    sp.set_defaults(func=cmd_ingest)

    sp = add("train-sleep", "train a sleep detector from labelled corpus CSVs", subject=True)
    sp.add_argument("--corpus", required=True, help="corpus directory or single day CSV")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--folds", type=int, default=10)
    sp.set_defaults(func=cmd_train_sleep)

    sp = add("detect-sleep", "detect sleep episodes in a trace", inp=True, subject=True)
    sp.add_argument("--model", required=True, help="sleep_model.json from train-sleep")
    sp.set_defaults(func=cmd_detect_sleep)

    sp = add("correlate", "daily parameter correlations and best-day profile", inp=True, subject=True)
    sp.add_argument("--episodes", required=True, help="episodes.jsonl from detect-sleep")
    sp.set_defaults(func=cmd_correlate)

    sp = add("mine-routes", "recurring walking routes from a trace or GPX file", inp=True, subject=True)
    sp.set_defaults(func=cmd_mine_routes)

    sp = add("simulate", "run the A/B scenario on synthetic subjects")
    sp.add_argument("--seed", type=int, required=True)
    sp.add_argument("--traces", action="store_true", help="also write learning-phase traces and true sleep labels")
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("report", help="figure tables and plots from a simulate run")
    sp.add_argument("--config", help=argparse.SUPPRESS)
    sp.add_argument("--run", required=True, help="directory written by simulate")
    sp.add_argument("--figure", action="append", choices=sorted(FIGURES), help="figure to emit (repeatable; default all)")
    sp.add_argument("--out", help="output directory (default: the run directory)")
    sp.add_argument("--no-png", action="store_true", help="skip PNG rendering")
    sp.set_defaults(func=cmd_report)
    return p


def run(argv: Sequence[str] | None = None) -> int:
    _setup_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = _config(args)
        if args.print_config:
            sys.stdout.write(cfgmod.dumps(cfg))
            return EXIT_OK
        if not args.command:
            parser.print_usage(sys.stderr)
            return EXIT_USAGE
        return args.func(args, cfg)
    except ConfigError as exc:
        print(f"nudgekit: configuration error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, NotTrainedError) as exc:
        print(f"nudgekit: {exc}", file=sys.stderr)
        return EXIT_DATA


def main() -> None:
    sys.exit(run())
