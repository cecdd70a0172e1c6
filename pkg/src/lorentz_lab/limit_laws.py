"""Monte Carlo experiments checking the limit theorems for Lorentz balls.

Each driver samples from the exact sampler, reduces the batch to a few
statistics and returns a :class:`GofReport` whose verdict compares those
statistics against declared finite-n tolerance bands. The theorems are
limit statements, so the bands are engineering choices calibrated at the
default sizes; they are recorded verbatim in every report.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.stats import chi2

from .core import (BallParams, CltRegime, Normalization, QLike, as_extended, as_q,
                   clt_constants, g_profile, intersection_threshold, kappa,
                   kappa_tail_inverse_square, lln_constant, lr_ball_volume_radius, lr_norm,
                   max_norm_linearized_variance, profile_error_scale)
from .gof import ComparisonLaw, ks_one_sample, ks_two_sample
from .report import Experiment, GofReport, Tolerance
from .rng import RngStreamSpec, block_layout, exponentials, ordered_map
from .sampler import iter_exact_blocks, iter_weyl_blocks, sample_exact, sample_max_norm


class _Timer:
    def __enter__(self):
        self.start = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.elapsed = time.perf_counter() - self.start


def _token(r: float):
    # params stay JSON-native: infinite indices are spelled "inf"
    return "inf" if math.isinf(r) else r


def _report(experiment, params, stats, tolerances, rng, timer) -> GofReport:
    return GofReport(experiment, params, stats, tolerances, rng, wall_time=timer.elapsed)


# ---------------------------------------------------------------------------
# Empirical distribution of the coordinates of one sample
# ---------------------------------------------------------------------------

def run_empirical_convergence(q: QLike, n: int, rng: RngStreamSpec = RngStreamSpec(), *,
                              reference: str = "nu", tolerance: float | None = None,
                              workers: int | None = None) -> GofReport:
    """KS distance between the n coordinates of one normalized sample and nu_{q,1}.

    ``reference="laplace"`` compares against the two-sided exponential
    instead, which is the q -> 1 limit of nu_{q,1}.
    """
    q = as_q(q)
    if q.is_finite and q.value <= 1.0:
        raise ValueError("empirical convergence needs q > 1")
    if reference == "nu":
        law = ComparisonLaw.nu_q1(q)
        tolerance = 0.01 if tolerance is None else tolerance
    elif reference == "laplace":
        law = ComparisonLaw.laplace()
        tolerance = 0.05 if tolerance is None else tolerance
    else:
        raise ValueError(f"unknown reference law {reference!r}")
    params = BallParams(q, n, normalization=Normalization.TILDE)
    with _Timer() as timer:
        x = sample_exact(params, 1, rng, workers).data[0]
        ks = ks_one_sample(x, law)
        stats = {"ks": ks.statistic, "p_value": ks.p_value,
                 "mean": float(x.mean()), "variance": float(x.var())}
    return _report(Experiment.EMPIRICAL,
                   {**params.to_dict(), "reference": law.kind.value},
                   stats, [Tolerance("ks", "<", tolerance)], rng, timer)


# ---------------------------------------------------------------------------
# Fixed blocks of coordinates
# ---------------------------------------------------------------------------

def grid_chi_square(x1: np.ndarray, x2: np.ndarray, quantile: Callable, cells: int = 5):
    """Chi-square statistic and p-value of (x1, x2) on an equiprobable product grid."""
    edges = quantile(np.arange(1, cells) / cells)
    i = np.searchsorted(edges, x1)
    j = np.searchsorted(edges, x2)
    counts = np.bincount(i * cells + j, minlength=cells * cells)
    expected = len(x1) / cells**2
    stat = float(np.sum((counts - expected) ** 2) / expected)
    return stat, float(chi2.sf(stat, cells * cells - 1))


def run_pmb(q: QLike, n: int, k: int, rng: RngStreamSpec = RngStreamSpec(), m: int = 10_000, *,
            ks_tolerance: float = 0.02, abs_corr_tolerance: float = 0.05,
            workers: int | None = None) -> GofReport:
    """First k coordinates of m independent samples against nu_{q,1}^{(x)k}."""
    q = as_q(q)
    if q.is_finite and q.value <= 1.0:
        raise ValueError("the coordinate limit needs q > 1")
    if not 1 <= k <= n:
        raise ValueError(f"need 1 <= k <= n, got k={k}, n={n}")
    params = BallParams(q, n, normalization=Normalization.TILDE)
    law = ComparisonLaw.nu_q1(q)
    with _Timer() as timer:
        head = np.concatenate([b[:, :k] for b in iter_exact_blocks(params, m, rng, workers)])
        stats: dict = {}
        ks_values = []
        for i in range(k):
            ks = ks_one_sample(head[:, i], law)
            stats[f"ks_{i + 1}"] = ks.statistic
            ks_values.append(ks.statistic)
        stats["ks_max"] = max(ks_values)
        tolerances = [Tolerance("ks_max", "<", ks_tolerance)]
        if k >= 2:
            x1, x2 = head[:, 0], head[:, 1]
            stats["corr"] = float(np.corrcoef(x1, x2)[0, 1])
            stats["abs_corr"] = float(np.corrcoef(np.abs(x1), np.abs(x2))[0, 1])
            stats["abs_signed_corr"] = abs(stats["corr"])
            stats["abs_abs_corr"] = abs(stats["abs_corr"])
            stats["chi2"], stats["chi2_p_value"] = grid_chi_square(x1, x2, law.quantile)
            tolerances += [Tolerance("abs_signed_corr", "<", 4.0 / math.sqrt(m)),
                           Tolerance("abs_abs_corr", "<", abs_corr_tolerance)]
    return _report(Experiment.PMB, {**params.to_dict(), "k": k, "replications": m},
                   stats, tolerances, rng, timer)


# ---------------------------------------------------------------------------
# Fluctuations of the largest coordinate
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RqSample:
    values: np.ndarray
    truncation: int
    tail_variance: float
    gaussian_tail: bool


def _rq_block(inv_k, tail_sd, task, rng):
    block, _, rows = task
    g = rng.generator(block)
    e = exponentials(g, (rows, len(inv_k)))
    out = (e - 1.0) @ inv_k
    if tail_sd > 0:
        out += tail_sd * g.standard_normal(rows)
    return out


def simulate_rq(q: QLike, truncation: int, m: int, rng: RngStreamSpec = RngStreamSpec(), *,
                gaussian_tail: bool = True, workers: int | None = None) -> RqSample:
    """Draws of R_q = sum_j (E_j - 1)/kappa_q(j) for 1 <= q < 2.

    The first ``truncation`` terms are summed exactly. The remainder is a
    sum of many independent, individually negligible terms; with
    ``gaussian_tail`` it is replaced by a centered normal with the exact
    remainder variance sum_{j>truncation} kappa_q(j)^{-2}. Without it the
    remainder is dropped, which is only allowed when that variance is
    below 1e-8.
    """
    q = as_q(q)
    if q.is_infinite or q.value >= 2.0:
        raise ValueError("R_q has infinite variance for q >= 2")
    if truncation < 1 or m < 1:
        raise ValueError("truncation and m must be positive")
    tail = kappa_tail_inverse_square(q, truncation)
    if not gaussian_tail and tail >= 1e-8:
        raise ValueError(
            f"truncation {truncation} leaves tail variance {tail:.3g} >= 1e-8; "
            "increase it or enable the Gaussian tail"
        )
    inv_k = 1.0 / kappa(q, truncation).values
    sd = math.sqrt(tail) if gaussian_tail else 0.0
    layout = block_layout(m, truncation)
    values = np.concatenate(list(ordered_map(lambda t: np.atleast_1d(_rq_block(inv_k, sd, t, rng)),
                                             layout, workers)))
    return RqSample(values, truncation, tail, gaussian_tail)


def run_series_rq(q: QLike, truncation: int, m: int, rng: RngStreamSpec = RngStreamSpec(), *,
                  workers: int | None = None) -> GofReport:
    """Moments of the simulated R_q; at q = 1 also KS against Gumbel(-gamma)."""
    q = as_q(q)
    with _Timer() as timer:
        sample = simulate_rq(q, truncation, m, rng, workers=workers)
        v = sample.values
        total_var = math.fsum(1.0 / kappa(q, truncation).values ** 2) + sample.tail_variance
        stats = {"mean": float(v.mean()), "variance": float(v.var(ddof=1)),
                 "series_variance": total_var, "tail_variance": sample.tail_variance,
                 "abs_mean": abs(float(v.mean())),
                 "mean_band": 4.0 * math.sqrt(total_var / m)}
        tolerances = [Tolerance("abs_mean", "<", stats["mean_band"])]
        if q.value == 1.0:
            ks = ks_one_sample(v, ComparisonLaw.gumbel())
            stats["ks"], stats["p_value"] = ks.statistic, ks.p_value
            tolerances.append(Tolerance("ks", "<", 0.05))
    return _report(Experiment.SERIES_RQ, {"q": str(q), "truncation": truncation,
                                          "replications": m}, stats, tolerances, rng, timer)


def scaled_max_norm(q: QLike, n: int, m: int, rng: RngStreamSpec = RngStreamSpec(),
                    workers: int | None = None) -> np.ndarray:
    """m draws of scaling * (||X~||_inf - mu_{q,n}) for X~ uniform on n^{1/q} B_{q,1}^n."""
    q = as_q(q)
    const = clt_constants(q, n)
    params = BallParams(q, n, normalization=Normalization.TILDE)
    mx = sample_max_norm(params, m, rng, workers)
    return const.scaling(q.value, n) * (mx - const.mu_qn)


def run_clt_max(q: QLike, n: int, m: int = 2000, rng: RngStreamSpec = RngStreamSpec(), *,
                truncation: int = 1_000_000, tolerances: dict | None = None,
                workers: int | None = None) -> GofReport:
    """Scaled, centered max norm against its regime's limit law.

    q = 1: Gumbel shifted by -gamma; 1 < q < 2: a simulated R_q reference
    (two-sample KS, independent substream); q = 2: N(0, 1/4);
    q > 2: N(0, sigma_q^2).
    """
    q = as_q(q)
    if q.is_infinite:
        raise ValueError("no limit theorem for the max norm at q = inf")
    tol = {"ks_gumbel": 0.05, "ks_log_normal": 0.07, "ks_normal": 0.05, "p_series": 0.01}
    tol.update(tolerances or {})
    const = clt_constants(q, n)
    with _Timer() as timer:
        z = scaled_max_norm(q, n, m, rng, workers)
        stats = {"mean": float(z.mean()), "variance": float(z.var(ddof=1)),
                 "mu_qn": const.mu_qn,
                 "linearized_variance": max_norm_linearized_variance(q, n)}
        params = {"q": str(q), "n": n, "replications": m, "regime": const.regime.value}
        if q.value == 1.0:
            law = ComparisonLaw.gumbel()
            checks = [Tolerance("ks", "<", tol["ks_gumbel"])]
        elif const.regime is CltRegime.SERIES:
            ref = simulate_rq(q, truncation, m, rng.substream(1), workers=workers)
            law = ComparisonLaw.empirical(ref.values)
            params["truncation"] = truncation
            stats["reference_tail_variance"] = ref.tail_variance
            checks = [Tolerance("p_value", ">", tol["p_series"])]
        elif const.regime is CltRegime.LOG_NORMAL:
            law = ComparisonLaw.gaussian(0.0, const.sigma_q2)
            checks = [Tolerance("ks", "<", tol["ks_log_normal"])]
        else:
            law = ComparisonLaw.gaussian(0.0, const.sigma_q2)
            stats["sigma_q2"] = const.sigma_q2
            checks = [Tolerance("ks", "<", tol["ks_normal"])]
        ks = ks_one_sample(z, law)
        stats["ks"], stats["p_value"] = ks.statistic, ks.p_value
        params["law"] = law.kind.value
    return _report(Experiment.CLT_MAX, params, stats, checks, rng, timer)


# ---------------------------------------------------------------------------
# l_r norms and intersections with l_r balls
# ---------------------------------------------------------------------------

def _volnorm_lr_norms(q, r: float, n: int, m: int, rng, workers) -> np.ndarray:
    # l_r norms are symmetric, so ordered representatives suffice
    params = BallParams(q, n, normalization=Normalization.VOLNORM)
    return np.concatenate([np.atleast_1d(lr_norm(b, r))
                           for b in iter_weyl_blocks(params, m, rng, workers)])


def run_lln_norm(q: QLike, r: float, n: int, m: int = 200, rng: RngStreamSpec = RngStreamSpec(),
                 *, tolerance: float = 0.01, workers: int | None = None) -> GofReport:
    """n^{-1/r} ||X||_r on the volume-normalized ball against m_{q,r}."""
    q, r = as_q(q), as_extended(r)
    target = lln_constant(q, r)
    with _Timer() as timer:
        norms = _volnorm_lr_norms(q, r, n, m, rng, workers)
        vals = norms if math.isinf(r) else norms * n ** (-1.0 / r)
        mean = float(vals.mean())
        stats = {"mean": mean, "sd": float(vals.std(ddof=1)) if m > 1 else 0.0,
                 "m_qr": target, "rel_dev": abs(mean - target) / target}
    params = {"q": str(q), "r": _token(r), "n": n, "replications": m,
              "normalization": "volnorm"}
    return _report(Experiment.LLN_NORM, params, stats,
                   [Tolerance("rel_dev", "<", tolerance)], rng, timer)


def intersection_estimates(norms: np.ndarray, r: float, n: int, ts: Sequence[float]) -> np.ndarray:
    """Fraction of samples inside t D_r^n for each t, from their l_r norms."""
    radius = lr_ball_volume_radius(r, n)
    caps = np.asarray(ts, dtype=np.float64) / radius
    sorted_norms = np.sort(norms)
    return np.searchsorted(sorted_norms, caps, side="right") / len(norms)


def intersection_curve(q: QLike, r: float, n: int, ts: Sequence[float], m: int = 10_000,
                       rng: RngStreamSpec = RngStreamSpec(),
                       workers: int | None = None) -> np.ndarray:
    """Estimates at every t in ``ts`` from one batch (the batch ``run_intersection`` uses)."""
    q, r = as_q(q), as_extended(r)
    return intersection_estimates(_volnorm_lr_norms(q, r, n, m, rng, workers), r, n, ts)


def run_intersection(q: QLike, r: float, t: float, n: int, m: int = 10_000,
                     rng: RngStreamSpec = RngStreamSpec(), *, tolerance: float = 0.05,
                     sweep: Sequence[float] = (), workers: int | None = None) -> GofReport:
    """Monte Carlo estimate of vol_n(D_{q,1}^n cap t D_r^n).

    The verdict expects an estimate >= 1 - tolerance when A_{q,r} t > 1 and
    <= tolerance when A_{q,r} t < 1. ``sweep`` adds estimates at further
    values of t computed on the same batch (``estimate@<t>`` statistics).
    """
    q, r = as_q(q), as_extended(r)
    if t <= 0:
        raise ValueError("t must be positive")
    threshold = intersection_threshold(q, r)
    with _Timer() as timer:
        norms = _volnorm_lr_norms(q, r, n, m, rng, workers)
        ts = [t, *sweep]
        est = intersection_estimates(norms, r, n, ts)
        stats = {"estimate": float(est[0]), "A_qr": threshold, "A_t": threshold * t}
        for tv, ev in zip(sweep, est[1:]):
            stats[f"estimate@{tv:.6g}"] = float(ev)
    if threshold * t > 1:
        checks = [Tolerance("estimate", ">=", 1.0 - tolerance)]
    elif threshold * t < 1:
        checks = [Tolerance("estimate", "<=", tolerance)]
    else:
        checks = []
    params = {"q": str(q), "r": _token(r), "t": t, "n": n, "replications": m}
    return _report(Experiment.INTERSECTION, params, stats, checks, rng, timer)


# ---------------------------------------------------------------------------
# Order statistics
# ---------------------------------------------------------------------------

def profile_deviation(rows: np.ndarray, q: QLike) -> np.ndarray:
    """sup_i |x_i - G_q((i-1)/n)| for each non-increasing row."""
    n = rows.shape[1]
    profile = g_profile(q, np.arange(n) / n)
    return np.abs(rows - profile).max(axis=1)


def order_statistic_profile(q: QLike, n: int, rows: int = 100,
                            rng: RngStreamSpec = RngStreamSpec(), *,
                            band_factor: float | None = None, min_pass_fraction: float = 0.99,
                            workers: int | None = None) -> GofReport:
    """Fraction of ordered normalized rows within band_factor * delta_n of G_q.

    ``band_factor`` defaults to log n.
    """
    q = as_q(q)
    if q.is_finite and q.value <= 1.0:
        raise ValueError("the order-statistic profile needs q > 1")
    a_n = math.log(n) if band_factor is None else band_factor
    band = a_n * profile_error_scale(q, n)
    params = BallParams(q, n, normalization=Normalization.TILDE)
    with _Timer() as timer:
        dev = np.concatenate([profile_deviation(b, q)
                              for b in iter_weyl_blocks(params, rows, rng, workers)])
        stats = {"band": band, "max_deviation": float(dev.max()),
                 "median_deviation": float(np.median(dev)),
                 "pass_fraction": float(np.mean(dev < band))}
    return _report(Experiment.ORDER_PROFILE,
                   {**params.to_dict(), "rows": rows, "band_factor": a_n},
                   stats, [Tolerance("pass_fraction", ">=", min_pass_fraction)], rng, timer)
