"""The acceptance suite: ten criteria, each at a fixed size and tolerance.

Shared by ``lorentz-lab selftest`` and the test-suite. Every criterion is
a function returning a :class:`CriterionResult` made of named sub-checks,
so a failure names exactly which size or parameter missed its band.
"""

from __future__ import annotations

import math
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .core import (BallParams, ball_volume, intersection_threshold,
                   intersection_threshold_q1_limit, lln_constant, lr_radius_limit)
from .gof import ks_two_sample
from .limit_laws import (order_statistic_profile, run_clt_max, run_empirical_convergence,
                         run_intersection, run_lln_norm, run_pmb)
from .ode import (StepControl, conjecture_density, energy_constraint_residual,
                  find_critical_slope)
from .rng import RngStreamSpec
from .sampler import (expected_acceptance_rate, rejection_acceptance_rate, sample_exact,
                      sample_rejection_oracle)


@dataclass
class Check:
    label: str
    value: float
    bound: str
    ok: bool


@dataclass
class CriterionResult:
    number: int
    title: str
    checks: list[Check] = field(default_factory=list)
    seconds: float = 0.0

    @property
    def passed(self) -> bool:
        return all(c.ok for c in self.checks)

    def add(self, label, value, ok, bound="") -> None:
        self.checks.append(Check(label, float(value), bound, bool(ok)))

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        failed = [c for c in self.checks if not c.ok]
        tail = (f"all {len(self.checks)} checks ok" if not failed else
                "; ".join(f"{c.label}={c.value:.4g} (need {c.bound})" for c in failed))
        return f"[{status}] criterion {self.number:2d} {self.title}: {tail} ({self.seconds:.1f}s)"


SEED = RngStreamSpec(20240601, 0)


def oracle_equivalence() -> CriterionResult:
    res = CriterionResult(1, "exact sampler vs rejection oracle")
    for n, q in [(2, 2), (3, 2), (3, "inf"), (4, 1.5)]:
        params = BallParams(q, n)
        exact = sample_exact(params, 100_000, SEED).data
        oracle = sample_rejection_oracle(params, 100_000, SEED.substream(1)).data
        stats = {
            "x1": (exact[:, 0], oracle[:, 0]),
            "max": (np.abs(exact).max(axis=1), np.abs(oracle).max(axis=1)),
            "l1": (np.abs(exact).sum(axis=1), np.abs(oracle).sum(axis=1)),
        }
        for name, (a, b) in stats.items():
            p = ks_two_sample(a, b).p_value
            res.add(f"p[{name}] n={n} q={q}", p, p > 0.01, "> 0.01")
    return res


def exact_volume() -> CriterionResult:
    res = CriterionResult(2, "exact volume")
    for n in (2, 3, 4):
        for q in (2, 4, "inf"):
            rate = rejection_acceptance_rate(q, n, 1_000_000, SEED.substream(n))
            rel = abs(rate / expected_acceptance_rate(q, n) - 1.0)
            res.add(f"acceptance rel.err n={n} q={q}", rel, rel < 0.01, "< 0.01")
    n = 100_000
    for q in (1.5, 2.0, 4.0):
        lv = ball_volume(q, n).log_volume
        ratio = math.exp(lv / n) * (q / 2) * math.exp(-1 / q) * n ** (1 / q)
        res.add(f"volume radius ratio q={q} n={n}", ratio, 0.95 <= ratio <= 1.05, "in [0.95, 1.05]")
    n = 1_000_000
    ratio = math.exp(ball_volume("inf", n).log_volume / n) * math.log(n) / 2
    res.add(f"volume radius ratio q=inf n={n}", ratio, 0.9 <= ratio <= 1.1, "in [0.9, 1.1]")
    return res


def empirical_limit() -> CriterionResult:
    res = CriterionResult(3, "empirical coordinate law")
    for q in (2, 3, "inf"):
        ks = run_empirical_convergence(q, 100_000, SEED).statistics["ks"]
        res.add(f"KS q={q} n=1e5", ks, ks < 0.01, "< 0.01")
    ks = run_empirical_convergence(1.001, 10_000, SEED, reference="laplace").statistics["ks"]
    res.add("KS vs Laplace q=1.001 n=1e4", ks, ks < 0.05, "< 0.05")
    return res


def pmb() -> CriterionResult:
    res = CriterionResult(4, "fixed coordinate blocks")
    st = run_pmb(2, 10_000, 2, SEED, 10_000).statistics
    res.add("marginal KS", st["ks_max"], st["ks_max"] < 0.02, "< 0.02")
    res.add("|corr(|X1|,|X2|)|", st["abs_abs_corr"], st["abs_abs_corr"] < 0.05, "< 0.05")
    return res


def clt_regimes() -> CriterionResult:
    res = CriterionResult(5, "max-norm fluctuations")
    n, m = 100_000, 2000
    for q, bound in ((3, 0.05), (2, 0.07), (1, 0.05)):
        ks = run_clt_max(q, n, m, SEED).statistics["ks"]
        res.add(f"KS q={q}", ks, ks < bound, f"< {bound}")
    p = run_clt_max(1.5, n, m, SEED).statistics["p_value"]
    res.add("two-sample p q=1.5", p, p > 0.01, "> 0.01")
    return res


def lln() -> CriterionResult:
    res = CriterionResult(6, "l_r norm law of large numbers")
    for q, r in ((2, 2), (2, "inf"), ("inf", 1), ("inf", 2), ("inf", "inf"), (3, 1.5)):
        dev = run_lln_norm(q, r, 100_000, 200, SEED).statistics["rel_dev"]
        res.add(f"rel.dev q={q} r={r}", dev, dev < 0.01, "< 0.01")
    return res


def threshold() -> CriterionResult:
    res = CriterionResult(7, "intersection threshold")
    for q, r in ((2, 2), ("inf", 2), (2, "inf")):
        a = intersection_threshold(q, r)
        hi = run_intersection(q, r, 1.2 / a, 10_000, 10_000, SEED).statistics["estimate"]
        lo = run_intersection(q, r, 0.8 / a, 10_000, 10_000, SEED).statistics["estimate"]
        res.add(f"estimate t=1.2/A q={q} r={r}", hi, hi >= 0.95, ">= 0.95")
        res.add(f"estimate t=0.8/A q={q} r={r}", lo, lo <= 0.05, "<= 0.05")
    worst = 0.0
    for q in (1.1, 1.5, 2, 3, 10, "inf"):
        for r in (1.5, 2, 3, 7, "inf"):
            a = intersection_threshold(q, r)
            worst = max(worst, abs(a - lr_radius_limit(r) / lln_constant(q, r)) / a)
    res.add("max rel.gap A vs c/m", worst, worst < 1e-12, "< 1e-12")
    worst = max(abs(intersection_threshold(1 + 1e-8, r) - intersection_threshold_q1_limit(r))
                for r in (1.5, 2, 3, 7))
    res.add("q->1 limit gap", worst, worst < 1e-6, "< 1e-6")
    return res


def ode() -> CriterionResult:
    from scipy.stats import norm

    from .core import limit_law

    res = CriterionResult(8, "critical slope shooting")
    c12 = find_critical_slope(1, 2)
    res.add("|c_12 - 2|", abs(c12.c_pq - 2), abs(c12.c_pq - 2) < 1e-4, "< 1e-4")
    c22 = find_critical_slope(2, 2)
    gap = abs(c22.c_pq - math.sqrt(2 / math.pi))
    res.add("|c_22 - sqrt(2/pi)|", gap, gap < 1e-4, "< 1e-4")
    r13 = find_critical_slope(1, 3).solution.support_radius
    res.add("|r_13 - 1/2|", abs(r13 - 0.5), abs(r13 - 0.5) < 1e-3, "< 1e-3")
    xs = np.linspace(-8, 8, 32001)
    d = np.abs(conjecture_density(1, 2)(xs) - limit_law(2).density(xs)).max()
    res.add("sup|f_12 - closed form|", d, d < 1e-3, "< 1e-3")
    d = np.abs(conjecture_density(2, 2)(xs) - norm.pdf(xs)).max()
    res.add("sup|f_22 - normal pdf|", d, d < 1e-3, "< 1e-3")
    for name, crit in (("12", c12), ("22", c22)):
        r = abs(energy_constraint_residual(crit.solution))
        res.add(f"|energy residual {name}|", r, r < 1e-3, "< 1e-3")
    for p, q in ((1, 2), (2, 2), (1.5, 3)):
        a = find_critical_slope(p, q).c_pq
        b = find_critical_slope(p, q, step_control=StepControl().refined()).c_pq
        res.add(f"refinement drift p={p} q={q}", abs(a - b), abs(a - b) < 1e-6, "< 1e-6")
    return res


def order_profile() -> CriterionResult:
    res = CriterionResult(9, "order-statistic profile")
    frac = order_statistic_profile(3, 100_000, 100, SEED).statistics["pass_fraction"]
    res.add("pass fraction q=3 n=1e5", frac, frac >= 0.99, ">= 0.99")
    return res


def _strip_timestamp(raw: bytes, fmt: str) -> bytes:
    import json

    if fmt == "json":
        doc = json.loads(raw)
        for rep in doc.get("reports", []):
            rep.pop("timestamp", None)
        doc.pop("timestamp", None)
        return json.dumps(doc, sort_keys=True).encode()
    return raw


def determinism() -> CriterionResult:
    from .cli import main

    res = CriterionResult(10, "determinism")
    runs = [
        (["empirical", "--q", "2", "--n", "20000", "--seed", "7"], "json"),
        (["sample", "--q", "3", "--n", "6", "--count", "500", "--seed", "11",
          "--format", "binary"], "binary"),
        (["sample", "--q", "inf", "--n", "4", "--count", "200", "--seed", "5",
          "--format", "csv"], "csv"),
        (["ode", "--p", "1", "--q", "2", "--slopes", "1,2,3", "--format", "csv"], "csv"),
    ]
    with tempfile.TemporaryDirectory() as tmp:
        for i, (argv, fmt) in enumerate(runs):
            outs = []
            for rep in range(2):
                path = Path(tmp) / f"run{i}_{rep}.{fmt}"
                main([*argv, "--out", str(path), "--workers", str(1 + 3 * rep)])
                outs.append(_strip_timestamp(path.read_bytes(), fmt))
            same = outs[0] == outs[1]
            res.add(f"identical bytes: {' '.join(argv[:3])}", float(same), same, "identical")
    return res


CRITERIA: tuple[Callable[[], CriterionResult], ...] = (
    oracle_equivalence, exact_volume, empirical_limit, pmb, clt_regimes, lln, threshold, ode,
    order_profile, determinism,
)


def run_criterion(fn: Callable[[], CriterionResult]) -> CriterionResult:
    start = time.perf_counter()
    res = fn()
    res.seconds = time.perf_counter() - start
    return res


def run_all(echo: Callable[[str], None] | None = print) -> list[CriterionResult]:
    results = []
    for fn in CRITERIA:
        res = run_criterion(fn)
        if echo:
            echo(res.line())
        results.append(res)
    return results
