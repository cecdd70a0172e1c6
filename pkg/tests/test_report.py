import csv
import json
import math

import pytest

from lorentz_lab.report import Experiment, GofReport, Tolerance, append_csv_log, LOG_COLUMNS
from lorentz_lab.rng import RngStreamSpec


def _report(**stats):
    return GofReport(Experiment.LLN_NORM, {"q": "inf", "r": "inf", "n": 10},
                     {"rel_dev": 0.001, **stats},
                     [Tolerance("rel_dev", "<", 0.01), Tolerance("x", "<=", math.inf)],
                     RngStreamSpec(3, 4), wall_time=0.5)


def test_verdict_and_checks():
    rep = _report(x=1.0)
    assert rep.verdict
    assert all(rep.checks.values())
    bad = _report(x=1.0)
    bad.statistics["rel_dev"] = 0.5
    assert not bad.verdict
    with pytest.raises(ValueError):
        Tolerance("a", "!=", 1.0)


def test_json_round_trip():
    rep = _report(x=2.0)
    back = GofReport.from_json(rep.to_json())
    assert back.statistics == rep.statistics
    assert back.params == rep.params
    assert back.tolerances == rep.tolerances
    assert back.rng == rep.rng
    doc = json.loads(rep.to_json())
    assert set(doc) == {"experiment", "params", "seed", "statistics", "tolerances", "verdict",
                        "timestamp"}
    assert doc["tolerances"][1]["threshold"] == "inf"
    assert doc["verdict"] == "pass"


def test_csv_log_appends(tmp_path):
    path = tmp_path / "log.csv"
    append_csv_log([_report(x=1.0)], path)
    append_csv_log([_report(x=2.0), _report(x=3.0)], path)
    rows = list(csv.reader(path.open()))
    assert rows[0] == list(LOG_COLUMNS)
    assert len(rows) == 4
    assert {len(r) for r in rows} == {len(LOG_COLUMNS)}
