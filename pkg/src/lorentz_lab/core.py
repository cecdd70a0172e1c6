"""Closed-form quantities for Lorentz balls B_{q,1}^n.

Everything volumetric is carried in log space; the linear volume of
B_{q,1}^n underflows double precision around n ~ 10^3.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Union

import numpy as np
from scipy.special import gammaln

EULER_GAMMA = 0.5772156649015329


class QIndex:
    """The Lorentz exponent q, either a finite value >= 1 or infinity.

    Infinity is a distinct state rather than ``math.inf``: the weights
    (1/i) and the natural scaling (log(n+1)) at q = inf are structurally
    different from the finite formulas evaluated at a large q.
    """

    __slots__ = ("_value",)

    def __init__(self, value: float | None):
        if value is not None:
            value = float(value)
            if math.isnan(value) or value < 1.0:
                raise ValueError(f"q must satisfy q >= 1, got {value}")
            if math.isinf(value):
                value = None
        self._value = value

    @classmethod
    def infinity(cls) -> "QIndex":
        return cls(None)

    @property
    def is_infinite(self) -> bool:
        return self._value is None

    @property
    def is_finite(self) -> bool:
        return self._value is not None

    @property
    def value(self) -> float:
        """Finite value of q; raises for q = inf."""
        if self._value is None:
            raise ValueError("q is infinite")
        return self._value

    @property
    def weight_exponent(self) -> float:
        """The exponent 1/q - 1 of the Lorentz weights i^{1/q-1}."""
        return -1.0 if self._value is None else 1.0 / self._value - 1.0

    def as_float(self) -> float:
        return math.inf if self._value is None else self._value

    def __eq__(self, other: object) -> bool:
        if isinstance(other, QIndex):
            return self._value == other._value
        return NotImplemented

    def __hash__(self) -> int:
        return hash(("QIndex", self._value))

    def __repr__(self) -> str:
        return "QIndex(inf)" if self._value is None else f"QIndex({self._value!r})"

    def __str__(self) -> str:
        return "inf" if self._value is None else format(self._value, "g")


QLike = Union[QIndex, float, int, str]


def as_q(q: QLike) -> QIndex:
    """Coerce a number, the token ``"inf"`` or a QIndex to a QIndex."""
    if isinstance(q, QIndex):
        return q
    if isinstance(q, str):
        token = q.strip().lower()
        if token in ("inf", "infinity", "+inf"):
            return QIndex.infinity()
        return QIndex(float(token))
    return QIndex(q)


def as_extended(r: float | int | str) -> float:
    """Parse an extended real (``"inf"`` allowed) into a float."""
    if isinstance(r, str):
        token = r.strip().lower()
        return math.inf if token in ("inf", "infinity", "+inf") else float(token)
    return float(r)


class Normalization(enum.Enum):
    UNIT = "unit"
    TILDE = "tilde"
    VOLNORM = "volnorm"


@dataclass(frozen=True)
class BallParams:
    """Identifies a (possibly rescaled) Lorentz ball ``scale * B_{q,p}^n``."""

    q: QIndex
    n: int
    p: float = 1.0
    normalization: Normalization = Normalization.UNIT

    def __post_init__(self):
        object.__setattr__(self, "q", as_q(self.q))
        if isinstance(self.normalization, str):
            object.__setattr__(self, "normalization", Normalization(self.normalization.lower()))
        if int(self.n) != self.n or self.n < 1:
            raise ValueError(f"dimension n must be a positive integer, got {self.n}")
        object.__setattr__(self, "n", int(self.n))
        if not self.p >= 1.0:
            raise ValueError(f"p must satisfy p >= 1, got {self.p}")
        if self.q.is_finite and self.p > self.q.value:
            raise ValueError(f"need p <= q, got p={self.p}, q={self.q}")

    @property
    def scale(self) -> float:
        """Factor s such that the ball is s * B_{q,1}^n."""
        return normalization_scale(self.q, self.n, self.normalization)

    def to_dict(self) -> dict:
        return {
            "q": str(self.q),
            "p": self.p,
            "n": self.n,
            "normalization": self.normalization.value,
        }


def normalization_scale(q: QLike, n: int, normalization: Normalization) -> float:
    q = as_q(q)
    if normalization is Normalization.UNIT:
        return 1.0
    if normalization is Normalization.TILDE:
        return math.log(n + 1) if q.is_infinite else n ** (1.0 / q.value)
    return math.exp(-ball_volume(q, n).log_volume / n)


# ---------------------------------------------------------------------------
# kappa_q(j) = sum_{i<=j} i^{1/q-1}
# ---------------------------------------------------------------------------

def compensated_cumsum(terms: np.ndarray) -> np.ndarray:
    """Prefix sums accurate to about twice working precision.

    ``np.cumsum`` accumulates sequentially, so every partial sum is
    ``fl(s_{j-1} + a_j)`` and TwoSum recovers each rounding error exactly.
    Adding the prefix sums of those errors back is the cascaded (Sum2)
    scheme of Ogita, Rump and Oishi, here fully vectorized.
    """
    a = np.asarray(terms, dtype=np.float64)
    s = np.cumsum(a)
    prev = np.concatenate(([0.0], s[:-1]))
    b = s - prev
    err = (prev - (s - b)) + (a - b)
    return s + np.cumsum(err)


@dataclass(frozen=True)
class KappaTable:
    q: QIndex
    values: np.ndarray  # values[j-1] = kappa_q(j)

    @property
    def n(self) -> int:
        return len(self.values)

    def __getitem__(self, j: int) -> float:
        """One-based access, ``table[j] == kappa_q(j)``."""
        if j < 1:
            raise IndexError("kappa is indexed from 1")
        return float(self.values[j - 1])


@lru_cache(maxsize=32)
def _kappa_cached(q: QIndex, n: int) -> np.ndarray:
    i = np.arange(1, n + 1, dtype=np.float64)
    expo = q.weight_exponent
    if expo == 0.0:
        values = i.copy()
    else:
        values = compensated_cumsum(i ** expo)
    values.setflags(write=False)
    return values


def kappa(q: QLike, n: int) -> KappaTable:
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    q = as_q(q)
    return KappaTable(q, _kappa_cached(q, int(n)))


# ---------------------------------------------------------------------------
# norms
# ---------------------------------------------------------------------------

def decreasing_rearrangement(x: np.ndarray) -> np.ndarray:
    """Sorted-descending absolute values along the last axis."""
    a = np.abs(np.asarray(x, dtype=np.float64))
    return -np.sort(-a, axis=-1)


def lorentz_weights(q: QLike, n: int) -> np.ndarray:
    return np.arange(1, n + 1, dtype=np.float64) ** as_q(q).weight_exponent


def lorentz_norm(x, q: QLike) -> float | np.ndarray:
    """||x||_{q,1} = sum_i i^{1/q-1} x*_i, row-wise for 2-D input."""
    x = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(x)):
        raise ValueError("lorentz_norm requires finite input")
    if x.shape[-1] == 0:
        return 0.0
    xs = decreasing_rearrangement(x)
    out = xs @ lorentz_weights(q, x.shape[-1])
    return float(out) if np.ndim(out) == 0 else out


def lr_norm(x, r: float) -> float | np.ndarray:
    """Plain l_r (quasi-)norm for r in (0, inf], row-wise for 2-D input."""
    r = as_extended(r)
    if not r > 0:
        raise ValueError(f"r must be positive, got {r}")
    a = np.abs(np.asarray(x, dtype=np.float64))
    if math.isinf(r):
        out = a.max(axis=-1)
    else:
        # factor out the max to avoid overflow for large r
        m = a.max(axis=-1, keepdims=True)
        safe = np.where(m > 0, m, 1.0)
        out = safe[..., 0] * np.sum((a / safe) ** r, axis=-1) ** (1.0 / r)
    return float(out) if np.ndim(out) == 0 else out


# ---------------------------------------------------------------------------
# volumes
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BallVolume:
    log_volume: float
    volume: float | None  # None when exp(log_volume) is not representable

    @property
    def overflow(self) -> bool:
        return self.volume is None


def _materialize(log_value: float) -> float | None:
    if log_value > 709.0 or log_value < -708.0:
        return None
    return math.exp(log_value)


def ball_volume(q: QLike, n: int) -> BallVolume:
    """vol_n(B_{q,1}^n) = 2^n prod_j kappa_q(j)^{-1}."""
    table = kappa(q, n)
    log_vol = n * math.log(2.0) - math.fsum(np.log(table.values))
    return BallVolume(log_vol, _materialize(log_vol))


def volume_radius_asymptotic(q: QLike, n: int) -> float:
    """Large-n equivalent of vol_n(B_{q,1}^n)^{1/n}."""
    q = as_q(q)
    if n < 1:
        raise ValueError("n must be >= 1")
    if q.is_infinite:
        if n == 1:
            raise ValueError("2/log(n) is undefined at n = 1")
        return 2.0 / math.log(n)
    qv = q.value
    return 2.0 / qv * math.exp(1.0 / qv) * n ** (-1.0 / qv)


def lr_ball_volume_radius(r: float, n: int) -> float:
    """vol_n(B_r^n)^{1/n} = 2 Gamma(1+1/r) / Gamma(1+n/r)^{1/n}."""
    r = as_extended(r)
    if not r > 0:
        raise ValueError("r must be positive")
    if math.isinf(r):
        return 2.0
    return math.exp(math.log(2.0) + gammaln(1.0 + 1.0 / r) - gammaln(1.0 + n / r) / n)


# ---------------------------------------------------------------------------
# limit laws
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LimitLaw:
    """The symmetric limit law nu_{q,1} of a single normalized coordinate."""

    q: QIndex

    @property
    def support(self) -> float:
        return 1.0 if self.q.is_infinite else 1.0 / (self.q.value - 1.0)

    def density(self, x):
        x = np.asarray(x, dtype=np.float64)
        ax = np.abs(x)
        if self.q.is_infinite:
            out = np.where(ax <= 1.0, 0.5, 0.0)
        else:
            qv = self.q.value
            base = np.clip(1.0 - (qv - 1.0) * ax, 0.0, None)
            out = np.where(ax <= self.support, 0.5 * qv * base ** (1.0 / (qv - 1.0)), 0.0)
        return out[()] if out.ndim == 0 else out

    def _upper_tail(self, ax):
        # P(X > |x|) for |x| inside the support
        if self.q.is_infinite:
            return 0.5 * np.clip(1.0 - ax, 0.0, 1.0)
        qv = self.q.value
        base = np.clip(1.0 - (qv - 1.0) * ax, 0.0, 1.0)
        return 0.5 * base ** (qv / (qv - 1.0))

    def cdf(self, x):
        x = np.asarray(x, dtype=np.float64)
        tail = self._upper_tail(np.abs(x))
        out = np.where(x >= 0, 1.0 - tail, tail)
        return out[()] if out.ndim == 0 else out

    def quantile(self, u):
        u = np.asarray(u, dtype=np.float64)
        if np.any((u < 0) | (u > 1)):
            raise ValueError("quantile level must lie in [0, 1]")
        tail = np.minimum(u, 1.0 - u)  # upper tail mass of |x|, in [0, 1/2]
        if self.q.is_infinite:
            ax = 1.0 - 2.0 * tail
        else:
            qv = self.q.value
            ax = (1.0 - (2.0 * tail) ** ((qv - 1.0) / qv)) / (qv - 1.0)
        out = np.where(u >= 0.5, ax, -ax)
        return out[()] if out.ndim == 0 else out


def limit_law(q: QLike) -> LimitLaw:
    q = as_q(q)
    if q.is_finite and q.value <= 1.0:
        raise ValueError("the limit law nu_{q,1} requires q > 1")
    return LimitLaw(q)


def g_profile(q: QLike, t):
    """Limiting profile of the ordered coordinates, G_q(t) for t in [0, 1]."""
    q = as_q(q)
    t = np.asarray(t, dtype=np.float64)
    if np.any((t < 0) | (t > 1)):
        raise ValueError("g_profile is defined on [0, 1]")
    if q.is_infinite:
        out = 1.0 - t
    else:
        qv = q.value
        if qv <= 1.0:
            raise ValueError("g_profile requires q > 1")
        out = (1.0 - t ** (1.0 - 1.0 / qv)) / (qv - 1.0)
    return out[()] if out.ndim == 0 else out


def profile_error_scale(q: QLike, n: int) -> float:
    """The rate delta_n of uniform convergence to the G_q profile."""
    q = as_q(q)
    logn = math.log(n)
    if q.is_infinite:
        return 1.0 / logn
    qv = q.value
    if qv < 2.0:
        return n ** (-(1.0 - 1.0 / qv))
    if qv == 2.0:
        return n ** -0.5 * logn
    return n ** (-1.0 / qv)


# ---------------------------------------------------------------------------
# CLT / LLN / threshold constants
# ---------------------------------------------------------------------------

class CltRegime(enum.Enum):
    SERIES = "series"
    LOG_NORMAL = "log_normal"
    NORMAL = "normal"


@dataclass(frozen=True)
class CltConstants:
    mu_qn: float
    sigma_q2: float | None
    regime: CltRegime

    def scaling(self, q: float, n: int) -> float:
        """Factor multiplying (||X||_inf - mu_{q,n}) in the limit theorem."""
        if self.regime is CltRegime.SERIES:
            return n ** (1.0 - 1.0 / q)
        if self.regime is CltRegime.LOG_NORMAL:
            return math.sqrt(n / math.log(n))
        return math.sqrt(n)


def clt_constants(q: QLike, n: int) -> CltConstants:
    q = as_q(q)
    if q.is_infinite:
        raise ValueError("no central limit theorem for the max norm at q = inf")
    qv = q.value
    table = kappa(q, n)
    mu = n ** (1.0 / qv) * math.fsum(1.0 / table.values) / n
    if qv < 2.0:
        return CltConstants(mu, None, CltRegime.SERIES)
    if qv == 2.0:
        return CltConstants(mu, 0.25, CltRegime.LOG_NORMAL)
    return CltConstants(mu, 1.0 / (qv * (qv - 1.0) ** 2 * (qv - 2.0)), CltRegime.NORMAL)


def max_norm_linearized_variance(q: QLike, n: int) -> float:
    """Finite-n variance of the scaled max norm after linearizing S_1 / T.

    With A = sum_j E_j/kappa_q(j) and T = E_1 + ... + E_{n+1}, the delta
    method gives Var(A/T) ~ (Var A - 2 (EA/n) Cov(A, T) + (EA/n)^2 Var T)/n^2.
    For q > 2 this tends to sigma_q^2 only at rate n^{-(1-2/q)}, which is
    slow enough to matter at desk-scale n.
    """
    q = as_q(q)
    const = clt_constants(q, n)
    inv_k = 1.0 / kappa(q, n).values
    ea = math.fsum(inv_k)
    va = math.fsum(inv_k * inv_k)
    lin = va - 2.0 * ea * ea / n + ea * ea * (n + 1) / n**2
    return const.scaling(q.value, n) ** 2 * n ** (2.0 / q.value - 2.0) * lin


def _check_qr(q: QIndex, r: float, r_min: float = 1.0) -> None:
    if q.is_finite and q.value <= 1.0:
        raise ValueError("need q > 1")
    if not r >= r_min:
        raise ValueError(f"need r >= {r_min}, got {r}")


def lln_constant(q: QLike, r: float) -> float:
    """Limit m_{q,r} of n^{-1/r} ||X||_r for X uniform on the volume-normalized ball.

    Defined for q > 1 and r >= 1; r = 1 is the continuous extension of the
    r > 1 formula.
    """
    q, r = as_q(q), as_extended(r)
    _check_qr(q, r)
    if q.is_infinite:
        return 0.5 if math.isinf(r) else 0.5 * (1.0 / (r + 1.0)) ** (1.0 / r)
    qv = q.value
    lead = q.value / (2.0 * math.exp(1.0 / qv) * (qv - 1.0))
    if math.isinf(r):
        return lead
    b = qv / (qv - 1.0)
    log_beta = gammaln(r + 1.0) + gammaln(1.0 + b) - gammaln(r + 1.0 + b)
    return lead * math.exp(log_beta / r)


def lr_radius_limit(r: float) -> float:
    """c_r = lim 1/(n^{1/r} vol_n(B_r^n)^{1/n})."""
    r = as_extended(r)
    if math.isinf(r):
        return 0.5
    return 1.0 / (2.0 * (math.e * r) ** (1.0 / r) * math.exp(gammaln(1.0 + 1.0 / r)))


def intersection_threshold(q: QLike, r: float) -> float:
    """Threshold A_{q,r} for vol(D_{q,1}^n cap t D_r^n), closed form per branch."""
    q, r = as_q(q), as_extended(r)
    _check_qr(q, r)
    if math.isinf(r):
        if q.is_infinite:
            return 1.0
        qv = q.value
        return math.exp(1.0 / qv) * (qv - 1.0) / qv
    lg1r = gammaln(1.0 + 1.0 / r)
    if q.is_infinite:
        return math.exp(-lg1r + (math.log(r + 1.0) - math.log(r) - 1.0) / r)
    qv = q.value
    b = qv / (qv - 1.0)
    log_ratio = gammaln(r + 1.0 + b) - gammaln(r + 1.0) - gammaln(1.0 + b)
    return math.exp(
        1.0 / qv - 1.0 / r + math.log((qv - 1.0) / qv) - lg1r - math.log(r) / r + log_ratio / r
    )


def intersection_threshold_q1_limit(r: float) -> float:
    """lim_{q->1} A_{q,r} for finite r."""
    r = as_extended(r)
    return math.exp(1.0 - 1.0 / r - gammaln(1.0 + 1.0 / r) - gammaln(r + 1.0) / r - math.log(r) / r)


# ---------------------------------------------------------------------------
# R_q series tail (used by the simulated reference law for q < 2)
# ---------------------------------------------------------------------------

def kappa_tail_inverse_square(q: QLike, n: int, exact_factor: int = 4) -> float:
    """sum_{j>n} kappa_q(j)^{-2} for 1 <= q < 2.

    Exact summation up to ``exact_factor * n`` and an Euler-Maclaurin
    expansion kappa_q(j) ~ q j^{1/q} + zeta(1-1/q) + j^{1/q-1}/2 summed via
    Hurwitz zeta beyond.
    """
    from scipy.special import zeta

    q = as_q(q)
    if q.is_infinite or q.value >= 2.0:
        raise ValueError("sum of kappa^{-2} diverges for q >= 2")
    qv = q.value
    m = exact_factor * n
    table = kappa(q, m).values
    head = math.fsum(table[n:] ** -2.0)
    if qv == 1.0:
        return head + float(zeta(2.0, m + 1))
    c0 = float(zeta(1.0 - 1.0 / qv))
    s = 1.0 / qv
    # 1/(a+b)^2 with a = q j^s, b = c0 + j^{s-1}/2, expanded to second order in b/a
    t1 = zeta(2 * s, m + 1) / qv**2
    t2 = -2.0 / qv**3 * (c0 * zeta(3 * s, m + 1) + 0.5 * zeta(2 * s + 1, m + 1))
    t3 = 3.0 / qv**4 * c0**2 * zeta(4 * s, m + 1)
    return head + float(t1 + t2 + t3)


