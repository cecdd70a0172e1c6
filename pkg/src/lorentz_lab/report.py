"""Goodness-of-fit reports: verdicts, JSON documents and CSV run logs."""

from __future__ import annotations

import csv
import enum
import json
import math
import operator
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

from .rng import RngStreamSpec

_OPS = {"<": operator.lt, "<=": operator.le, ">": operator.gt, ">=": operator.ge}

LOG_COLUMNS = ("timestamp", "experiment", "master_seed", "stream_id", "verdict",
               "wall_time", "params", "statistics")


class Experiment(enum.Enum):
    EMPIRICAL = "empirical"
    PMB = "pmb"
    CLT_MAX = "clt_max"
    LLN_NORM = "lln_norm"
    INTERSECTION = "intersection"
    SERIES_RQ = "series_rq"
    ORDER_PROFILE = "order_profile"


@dataclass(frozen=True)
class Tolerance:
    """A pass condition ``statistics[statistic] <op> threshold``."""

    statistic: str
    op: str
    threshold: float

    def __post_init__(self):
        if self.op not in _OPS:
            raise ValueError(f"unknown comparison {self.op!r}")

    def holds(self, statistics: dict) -> bool:
        value = statistics[self.statistic]
        return bool(_OPS[self.op](value, self.threshold))

    def to_dict(self) -> dict:
        return {"statistic": self.statistic, "op": self.op, "threshold": _jsonable(self.threshold)}

    @classmethod
    def from_dict(cls, d: dict) -> "Tolerance":
        return cls(d["statistic"], d["op"], _from_jsonable(d["threshold"]))


def _jsonable(v):
    if isinstance(v, float) and math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return v


def _from_jsonable(v):
    if v in ("inf", "-inf"):
        return float(v)
    return v


def utc_now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


@dataclass
class GofReport:
    experiment: Experiment
    params: dict
    statistics: dict
    tolerances: list[Tolerance]
    rng: RngStreamSpec
    wall_time: float = 0.0
    timestamp: str = field(default_factory=utc_now)

    @property
    def checks(self) -> dict[str, bool]:
        return {f"{t.statistic} {t.op} {t.threshold:g}": t.holds(self.statistics)
                for t in self.tolerances}

    @property
    def verdict(self) -> bool:
        return all(t.holds(self.statistics) for t in self.tolerances)

    def to_dict(self) -> dict:
        # wall time rides inside the timestamp record: both vary run to run,
        # everything outside "timestamp" is a pure function of the config
        return {
            "experiment": self.experiment.value,
            "params": {k: _jsonable(v) for k, v in self.params.items()},
            "seed": self.rng.to_dict(),
            "statistics": {k: _jsonable(v) for k, v in self.statistics.items()},
            "tolerances": [t.to_dict() for t in self.tolerances],
            "verdict": "pass" if self.verdict else "fail",
            "timestamp": {"utc": self.timestamp, "wall_time": self.wall_time},
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=kw.pop("indent", 2), **kw)

    @classmethod
    def from_dict(cls, d: dict) -> "GofReport":
        return cls(
            experiment=Experiment(d["experiment"]),
            params=dict(d["params"]),
            statistics={k: _from_jsonable(v) for k, v in d["statistics"].items()},
            tolerances=[Tolerance.from_dict(t) for t in d["tolerances"]],
            rng=RngStreamSpec(**d["seed"]),
            wall_time=d["timestamp"]["wall_time"],
            timestamp=d["timestamp"]["utc"],
        )

    @classmethod
    def from_json(cls, text: str) -> "GofReport":
        return cls.from_dict(json.loads(text))

    def log_row(self) -> dict:
        return {
            "timestamp": self.timestamp,
            "experiment": self.experiment.value,
            "master_seed": self.rng.master_seed,
            "stream_id": self.rng.stream_id,
            "verdict": "pass" if self.verdict else "fail",
            "wall_time": f"{self.wall_time:.6f}",
            "params": json.dumps({k: _jsonable(v) for k, v in self.params.items()}, sort_keys=True),
            "statistics": json.dumps({k: _jsonable(v) for k, v in self.statistics.items()},
                                     sort_keys=True),
        }

    def summary(self) -> str:
        status = "PASS" if self.verdict else "FAIL"
        checks = ", ".join(f"{k}: {'ok' if v else 'violated'}" for k, v in self.checks.items())
        return f"[{status}] {self.experiment.value} {self.params} -> {checks}"


def append_csv_log(reports, path) -> None:
    path = Path(path)
    new = not path.exists() or path.stat().st_size == 0
    with path.open("a", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=LOG_COLUMNS)
        if new:
            writer.writeheader()
        for rep in reports:
            writer.writerow(rep.log_row())
