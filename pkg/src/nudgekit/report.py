"""Figure tables and plots from a scenario report document.

Every figure is written as a CSV table plus a PNG rendered with matplotlib's
object API (no global pyplot state, no display needed).
"""

from __future__ import annotations

import csv
import io
import math
from pathlib import Path
from typing import Callable

import numpy as np
from matplotlib.figure import Figure

from .fileio import atomic_write

ADVICE_KINDS = ("steps", "break", "bedtime")


def _csv(rows: list[list]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    for row in rows:
        w.writerow(["" if (isinstance(v, float) and math.isnan(v)) else (round(v, 6) if isinstance(v, float) else v) for v in row])
    return buf.getvalue()


def _num(v) -> float:
    return math.nan if v is None else float(v)


def _ratio(a: float, b: float) -> float:
    return a / b if b else math.nan


def _pct_change(before: float, after: float) -> float:
    return 100.0 * (after - before) / before if before else math.nan


def _mean(xs) -> float:
    xs = [x for x in xs if x is not None]
    return float(np.mean(xs)) if xs else math.nan


def _png(fig: Figure) -> bytes:
    buf = io.BytesIO()
    fig.savefig(buf, format="png", dpi=110, metadata={"Software": None})
    return buf.getvalue()


def _arms(doc: dict) -> list[str]:
    return sorted(doc["arms"])


# ---------------------------------------------------------------- tables


def fig6_rows(doc: dict) -> list[list]:
    rows = [["features", "accuracy", "precision", "recall", "f_value", "rrse_percent"]]
    for name, m in doc.get("sleep_metrics", {}).items():
        rows.append([name, *(_num(m.get(k)) for k in ("accuracy", "precision", "recall", "f_value", "rrse_percent"))])
    return rows


def fig7_rows(doc: dict) -> list[list]:
    rows = [["subject_id", "day", "accuracy"]]
    for sid, curve in sorted(doc.get("learning_curves", {}).items()):
        for k, acc in enumerate(curve, start=1):
            rows.append([sid, k, _num(acc)])
    return rows


def fig13_rows(doc: dict) -> list[list]:
    rows = [["arm", "kind", "generated", "seen", "accepted", "seen_rate", "acceptance_rate"]]
    for arm in _arms(doc):
        for kind, f in sorted(doc["arms"][arm]["funnel"].items()):
            g, s, a = f["generated"], f["seen"], f["accepted"]
            rows.append([arm, kind, g, s, a, _ratio(s, g), _ratio(a, g)])
    return rows


def fig15_rows(doc: dict) -> list[list]:
    rows = [[
        "arm", "subject_id", "steps_before", "steps_during", "steps_change_pct",
        "app_minutes_before", "app_minutes_during", "app_change_pct",
    ]]
    for arm in _arms(doc):
        for s in doc["arms"][arm]["subjects"]:
            sb, sd = _mean(s["steps_before"]), _mean(s["steps_during"])
            ab, ad = _mean(s["app_before"]), _mean(s["app_during"])
            rows.append([arm, s["subject_id"], sb, sd, _pct_change(sb, sd), ab, ad, _pct_change(ab, ad)])
    return rows


def fig16_rows(doc: dict) -> list[list]:
    rows = [["arm", "generated", "seen", "accepted", "acceptance_rate"]]
    for arm in _arms(doc):
        funnel = doc["arms"][arm]["funnel"]
        g = sum(funnel[k]["generated"] for k in ADVICE_KINDS if k in funnel)
        s = sum(funnel[k]["seen"] for k in ADVICE_KINDS if k in funnel)
        a = sum(funnel[k]["accepted"] for k in ADVICE_KINDS if k in funnel)
        rows.append([arm, g, s, a, _ratio(a, g)])
    return rows


def fig18_rows(doc: dict) -> list[list]:
    rows = [[
        "arm", "subject_id", "bed_time_var_before", "bed_time_var_after",
        "sleep_hours_before", "sleep_hours_after", "sleep_change_pct",
    ]]
    for arm in _arms(doc):
        for s in doc["arms"][arm]["subjects"]:
            hb, ha = _mean(s["sleep_before"]), _mean(s["sleep_after"])
            rows.append([
                arm, s["subject_id"], float(np.var(s["bed_before"])), float(np.var(s["bed_after"])),
                hb, ha, _pct_change(hb, ha),
            ])
    return rows


# ----------------------------------------------------------------- plots


def _bar_plot(rows: list[list], label_cols: int | tuple[int, ...], value_cols: list[int], title: str, ylabel: str) -> Figure:
    header, body = rows[0], rows[1:]
    fig = Figure(figsize=(7, 4))
    ax = fig.add_subplot()
    x = np.arange(len(body))
    width = 0.8 / max(1, len(value_cols))
    for j, col in enumerate(value_cols):
        vals = [np.nan if v is None or v == "" else float(v) for v in (r[col] for r in body)]
        ax.bar(x + j * width, vals, width, label=header[col])
    ax.set_xticks(x + width * (len(value_cols) - 1) / 2)
    cols = (label_cols,) if isinstance(label_cols, int) else label_cols
    ax.set_xticklabels([" ".join(str(r[c]) for c in cols) for r in body], rotation=30, ha="right")
    ax.set_title(title)
    ax.set_ylabel(ylabel)
    if len(value_cols) > 1:
        ax.legend(frameon=False)
    fig.tight_layout()
    return fig


def fig6_plot(rows):
    return _bar_plot(rows, 0, [1, 4], "Sleep detection, 10-fold CV", "score")


def fig7_plot(rows):
    fig = Figure(figsize=(7, 4))
    ax = fig.add_subplot()
    by_subject: dict[str, list[tuple[int, float]]] = {}
    for sid, day, acc in rows[1:]:
        by_subject.setdefault(sid, []).append((day, acc))
    for sid, pts in by_subject.items():
        ax.plot([p[0] for p in pts], [p[1] for p in pts], marker="o", ms=3, lw=1, label=sid)
    ax.set_xlabel("training days")
    ax.set_ylabel("next-day accuracy")
    ax.set_title("Learning curve")
    if by_subject:
        ax.legend(frameon=False, fontsize="small")
    fig.tight_layout()
    return fig


def fig13_plot(rows):
    fig = Figure(figsize=(7, 4))
    ax = fig.add_subplot()
    body = rows[1:]
    x = np.arange(len(body))
    for j, (col, name) in enumerate(((2, "generated"), (3, "seen"), (4, "accepted"))):
        ax.bar(x + 0.27 * j, [r[col] for r in body], 0.27, label=name)
    ax.set_xticks(x + 0.27)
    ax.set_xticklabels([f"{r[0]}\n{r[1]}" for r in body], fontsize="small")
    ax.set_ylabel("advices")
    ax.set_title("Advice funnel")
    ax.legend(frameon=False)
    fig.tight_layout()
    return fig


def fig15_plot(rows):
    return _bar_plot(rows, (0, 1), [4, 7], "Daily steps and app time, change while nudged", "%")


def fig16_plot(rows):
    return _bar_plot(rows, 0, [4], "Acceptance rate by arm", "accepted / generated")


def fig18_plot(rows):
    return _bar_plot(rows, (0, 1), [2, 3], "Bed-time variance", "min$^2$")


FIGURES: dict[str, tuple[str, Callable, Callable]] = {
    "fig6": ("fig6_metrics", fig6_rows, fig6_plot),
    "fig7": ("fig7_learning", fig7_rows, fig7_plot),
    "fig13": ("fig13_funnel", fig13_rows, fig13_plot),
    "fig15": ("fig15_steps", fig15_rows, fig15_plot),
    "fig16": ("fig16_acceptance", fig16_rows, fig16_plot),
    "fig18": ("fig18_bedding", fig18_rows, fig18_plot),
}


def write_figures(doc: dict, out_dir: str | Path, figures: list[str] | None = None, *, png: bool = True) -> list[Path]:
    """Write each requested figure's CSV (and PNG) into ``out_dir``."""
    out_dir = Path(out_dir)
    names = list(FIGURES) if not figures else figures
    unknown = [n for n in names if n not in FIGURES]
    if unknown:
        raise KeyError(f"unknown figure(s): {', '.join(unknown)}; choose from {', '.join(FIGURES)}")
    written = []
    for name in names:
        stem, table, plot = FIGURES[name]
        rows = table(doc)
        written.append(atomic_write(out_dir / f"{stem}.csv", _csv(rows)))
        if png:
            written.append(atomic_write(out_dir / f"{stem}.png", _png(plot(rows))))
    return written
