"""Kolmogorov-Smirnov machinery and the comparison laws used by the experiments."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.special import kolmogorov, ndtr

from .core import EULER_GAMMA, QLike, limit_law


class LawKind(enum.Enum):
    NU_Q1 = "nu_q1"
    GAUSSIAN = "gaussian"
    GUMBEL = "gumbel"
    LAPLACE = "laplace"
    UNIFORM = "uniform"
    EMPIRICAL = "empirical"


@dataclass(frozen=True)
class ComparisonLaw:
    kind: LawKind
    params: dict = field(default_factory=dict)
    cdf: Callable[[np.ndarray], np.ndarray] = field(default=None, repr=False, compare=False)
    quantile: Callable[[np.ndarray], np.ndarray] | None = field(default=None, repr=False,
                                                                  compare=False)
    reference: np.ndarray | None = field(default=None, repr=False, compare=False)

    @classmethod
    def nu_q1(cls, q: QLike) -> "ComparisonLaw":
        law = limit_law(q)
        return cls(LawKind.NU_Q1, {"q": str(law.q)}, law.cdf, law.quantile)

    @classmethod
    def gaussian(cls, mean: float = 0.0, variance: float = 1.0) -> "ComparisonLaw":
        sd = math.sqrt(variance)
        from scipy.special import ndtri

        return cls(LawKind.GAUSSIAN, {"mean": mean, "variance": variance},
                   lambda x: ndtr((np.asarray(x) - mean) / sd),
                   lambda u: mean + sd * ndtri(u))

    @classmethod
    def gumbel(cls, shift: float = -EULER_GAMMA) -> "ComparisonLaw":
        """Gumbel law with distribution function exp(-exp(-(x - shift)))."""
        return cls(LawKind.GUMBEL, {"shift": shift},
                   lambda x: np.exp(-np.exp(-(np.asarray(x) - shift))),
                   lambda u: shift - np.log(-np.log(u)))

    @classmethod
    def laplace(cls) -> "ComparisonLaw":
        """Two-sided exponential, density exp(-|x|)/2 (the q -> 1 limit of nu_{q,1})."""
        def cdf(x):
            x = np.asarray(x, dtype=np.float64)
            return np.where(x < 0, 0.5 * np.exp(np.minimum(x, 0.0)),
                            1.0 - 0.5 * np.exp(-np.maximum(x, 0.0)))

        def quantile(u):
            u = np.asarray(u, dtype=np.float64)
            return np.where(u < 0.5, np.log(2.0 * u), -np.log(2.0 * (1.0 - u)))

        return cls(LawKind.LAPLACE, {}, cdf, quantile)

    @classmethod
    def uniform(cls, lo: float = -1.0, hi: float = 1.0) -> "ComparisonLaw":
        return cls(LawKind.UNIFORM, {"lo": lo, "hi": hi},
                   lambda x: np.clip((np.asarray(x) - lo) / (hi - lo), 0.0, 1.0),
                   lambda u: lo + (hi - lo) * np.asarray(u))

    @classmethod
    def empirical(cls, reference) -> "ComparisonLaw":
        ref = np.sort(np.asarray(reference, dtype=np.float64))
        if ref.size == 0:
            raise ValueError("empirical reference must be non-empty")
        return cls(LawKind.EMPIRICAL, {"size": int(ref.size)},
                   lambda x: np.searchsorted(ref, x, side="right") / ref.size,
                   None, ref)

    def describe(self) -> dict:
        return {"kind": self.kind.value, **self.params}


@dataclass(frozen=True)
class KsResult:
    statistic: float
    p_value: float


def _finite_sorted(data) -> np.ndarray:
    x = np.asarray(data, dtype=np.float64).ravel()
    if x.size == 0:
        raise ValueError("KS test needs at least one observation")
    if not np.all(np.isfinite(x)):
        raise ValueError("KS test rejects non-finite data")
    return np.sort(x)


def ks_distance(data, cdf) -> float:
    x = _finite_sorted(data)
    n = x.size
    f = np.asarray(cdf(x), dtype=np.float64)
    upper = np.arange(1, n + 1) / n - f
    lower = f - np.arange(0, n) / n
    return float(max(upper.max(), lower.max(), 0.0))


def ks_one_sample(data, law: ComparisonLaw) -> KsResult:
    """sup |F_n - F| with the asymptotic Kolmogorov p-value.

    For an EMPIRICAL law this is the two-sample test against its reference.
    """
    if law.kind is LawKind.EMPIRICAL:
        return ks_two_sample(data, law.reference)
    x = _finite_sorted(data)
    d = ks_distance(x, law.cdf)
    return KsResult(d, float(kolmogorov(math.sqrt(x.size) * d)))


def ks_two_sample(a, b) -> KsResult:
    x, y = _finite_sorted(a), _finite_sorted(b)
    grid = np.concatenate([x, y])
    fx = np.searchsorted(x, grid, side="right") / x.size
    fy = np.searchsorted(y, grid, side="right") / y.size
    d = float(np.abs(fx - fy).max())
    en = math.sqrt(x.size * y.size / (x.size + y.size))
    return KsResult(d, float(kolmogorov(en * d)))


def kolmogorov_critical(n: int, alpha: float = 0.01) -> float:
    """Asymptotic critical value of sqrt(n) D_n at level alpha, over sqrt(n)."""
    from scipy.special import kolmogi

    return float(kolmogi(alpha)) / math.sqrt(n)
