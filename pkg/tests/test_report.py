from __future__ import annotations

import csv
import json

import pytest

from nudgekit.report import FIGURES, fig13_rows, fig16_rows, write_figures

DOC = {
    "sleep_metrics": {"all": {"accuracy": 0.99, "precision": 0.98, "recall": 0.97, "f_value": 0.975, "rrse_percent": 12.0}},
    "learning_curves": {"s00": [0.8, 0.9, 0.95]},
    "arms": {
        arm: {
            "funnel": {
                "steps": {"generated": g, "seen": s, "accepted": a},
                "break": {"generated": g, "seen": s, "accepted": a},
                "sleep_confirm": {"generated": 5, "seen": 5, "accepted": 5},
            },
            "subjects": [
                {
                    "subject_id": "s00",
                    "steps_before": [5000, 5200],
                    "steps_during": [5400, 5600],
                    "app_before": [100, 120],
                    "app_during": [90, 100],
                    "bed_before": [300, 330],
                    "bed_after": [310, 315],
                    "sleep_before": [7.0, 7.5],
                    "sleep_after": [7.5, 7.6],
                }
            ],
        }
        for arm, (g, s, a) in {"control": (0, 0, 0), "context_gated": (10, 8, 4), "random_timing": (10, 6, 2)}.items()
    },
}


def test_funnel_rows():
    rows = fig13_rows(DOC)
    assert rows[0][:5] == ["arm", "kind", "generated", "seen", "accepted"]
    gated = [r for r in rows[1:] if r[0] == "context_gated" and r[1] == "steps"][0]
    assert gated[5:] == [0.8, 0.4]


def test_acceptance_ignores_confirmations():
    rows = {r[0]: r for r in fig16_rows(DOC)[1:]}
    assert rows["context_gated"][1:] == [20, 16, 8, 0.4]
    assert rows["control"][4] != rows["control"][4]  # NaN for an empty funnel


def test_write_all_figures(tmp_path):
    written = write_figures(json.loads(json.dumps(DOC)), tmp_path)
    assert len(written) == 2 * len(FIGURES)
    for stem, _, _ in FIGURES.values():
        assert (tmp_path / f"{stem}.png").read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"
        with open(tmp_path / f"{stem}.csv") as fh:
            assert len(list(csv.reader(fh))) >= 2


def test_png_output_is_reproducible(tmp_path):
    a = write_figures(DOC, tmp_path / "a", ["fig13"])
    b = write_figures(DOC, tmp_path / "b", ["fig13"])
    assert [p.read_bytes() for p in a] == [p.read_bytes() for p in b]


def test_unknown_figure():
    with pytest.raises(KeyError):
        write_figures(DOC, "/nonexistent", ["fig99"])
