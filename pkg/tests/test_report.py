"""CSV/JSON/Markdown emission and manifest determinism helpers."""

import json

import pytest

from fireuq.errors import ValidationError
from fireuq.metrics import MetricRecord
from fireuq.report import (
    CSV_COLUMNS,
    digest_inputs,
    format_mean_std,
    manifest_timestamp,
    per_year_mean_std,
    write_diff_csv,
    write_markdown_table,
    write_sweep_csv,
    write_train_log_csv,
)


def _records():
    return [
        MetricRecord("f0", 2018, 4, ap=0.5, asd_m=1130.0, brier=0.1, nll=0.3,
                     auroc=0.75, auprc=0.4, error_prevalence=0.2, n_eval_px=100),
        MetricRecord("f1", 2018, 4, n_eval_px=0),
    ]


def test_sweep_csv_layout(tmp_path):
    p = tmp_path / "records.csv"
    write_sweep_csv(p, _records())
    lines = p.read_text().split("\n")
    assert lines[0] == ",".join(CSV_COLUMNS)
    assert lines[1].split(",")[:4] == ["f0", "2018", "4", "0.5"]
    # undefined metrics become empty cells, not "None"
    assert lines[2] == "f1,2018,4,,,,,,,,0"
    assert lines[-1] == ""  # trailing newline


def test_diff_csv_zero_for_identical_inputs(tmp_path):
    p = tmp_path / "diff.csv"
    write_diff_csv(p, _records(), _records())
    rows = p.read_text().strip().split("\n")[1:]
    first = rows[0].split(",")
    assert first[0] == "f0"
    assert all(v in ("0.0", "0", "") for v in first[3:])


def test_diff_csv_skips_unmatched_rows(tmp_path):
    a = _records()
    b = [a[0]]
    p = tmp_path / "diff.csv"
    write_diff_csv(p, a, b)
    rows = p.read_text().strip().split("\n")[1:]
    assert len(rows) == 1


def test_format_mean_std():
    assert format_mean_std(0.6288, 0.0352, 3) == "0.629±0.035"
    assert format_mean_std(0.5, 0.0, 2) == "0.50±0.00"


def test_per_year_mean_std():
    per_year = {
        2018: {"ap": 0.4, "auroc": 0.6},
        2019: {"ap": 0.6, "auroc": None},
    }
    ms = per_year_mean_std(per_year)
    assert ms["ap"] == pytest.approx((0.5, 0.1))
    assert ms["auroc"] == pytest.approx((0.6, 0.0))
    assert ms["brier"] is None


def test_markdown_table_scales_asd_to_km(tmp_path):
    per_year = {
        2018: {"ap": 0.5, "asd_m": 1130.0, "brier": 0.1, "nll": 0.3,
               "auroc": 0.75, "auprc": 0.4},
        2019: {"ap": 0.7, "asd_m": 1370.0, "brier": 0.2, "nll": 0.5,
               "auroc": 0.85, "auprc": 0.6},
    }
    p = tmp_path / "table.md"
    write_markdown_table(p, per_year, 4, title="demo")
    text = p.read_text()
    assert "# demo" in text
    assert "Anchor radius: 4 px" in text
    assert "| 2018 | 0.50 | 1.13 | 0.100 | 0.300 | 0.750 | 0.400 |" in text
    assert "| Mean | 0.60±0.10 | 1.25±0.12 |" in text


def test_train_log_csv_empty_auroc_cell(tmp_path):
    from fireuq.distill import EpochLog

    p = tmp_path / "log.csv"
    write_train_log_csv(p, [
        EpochLog(0, 0.1, 0.5, 0.6, 0.75),
        EpochLog(1, 0.09, 0.4, 0.5, None),
    ])
    lines = p.read_text().strip().split("\n")
    assert lines[0] == "epoch,lr,train_rmsle,val_rmsle,val_auroc_at_anchor"
    assert lines[1].endswith("0.75")
    assert lines[2].endswith(",")


def test_manifest_timestamp_honors_source_date_epoch(monkeypatch):
    monkeypatch.setenv("SOURCE_DATE_EPOCH", "1700000000")
    assert manifest_timestamp() == "2023-11-14T22:13:20Z"


def test_digest_inputs_walks_directories(tmp_path):
    (tmp_path / "sub").mkdir()
    (tmp_path / "sub" / "b.txt").write_text("bb")
    (tmp_path / "a.txt").write_text("aa")
    digest = digest_inputs([tmp_path])
    assert set(digest) == {str(tmp_path / "a.txt"), str(tmp_path / "sub" / "b.txt")}
    again = digest_inputs([tmp_path])
    assert digest == again
    with pytest.raises(ValidationError):
        digest_inputs([tmp_path / "missing.txt"])
