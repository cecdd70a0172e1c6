"""Shooting for the conjectured limit density of general Lorentz balls.

For 1 <= p <= q < inf the candidate density is f(x) = G'(|x|)/2 where

    G'' = -G' (1 - G)^alpha x^(p-1),   alpha = p/q - 1,   G(0) = 0,

and the initial slope G'(0) = c_{p,q} is the one value for which G rises
to 1 exactly as G' dies out. Smaller slopes plateau below 1
(subcritical); larger ones hit 1 with positive slope (supercritical). The
critical slope is found by bisection on that dichotomy.

The integrator is an embedded Dormand-Prince 5(4) pair written out in
plain floats: the state is three numbers, and array overhead would
dominate. Near G = 1 the factor (1 - G)^alpha blows up for p < q, so
steps are clamped to a fixed fraction of the distance (1 - G)/G' still to
be covered.
"""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.interpolate import PchipInterpolator

from .core import Normalization, QLike, as_q, decreasing_rearrangement, lorentz_norm
from .rng import ordered_map

EPS_G = 1e-10
EPS_SLOPE = 1e-12
X_MAX = 50.0
ETA = 0.1
CRITICAL_GAP = 1e-6
CRITICAL_SLOPE = 1e-4


class OdeError(RuntimeError):
    pass


class Classification(enum.IntEnum):
    # ordered so that classifications are monotone in the initial slope
    SUBCRITICAL = 0
    CRITICAL = 1
    SUPERCRITICAL = 2

    @property
    def label(self) -> str:
        return self.name.capitalize()


class Termination(enum.Enum):
    REACHED_ONE = "reached_one"
    PLATEAU = "plateau"
    X_MAX = "x_max"


@dataclass(frozen=True)
class StepControl:
    rtol: float = 1e-10
    atol: float = 1e-12
    h_max: float = 0.25
    h_init: float = 1e-4
    max_steps: int = 200_000

    def refined(self, factor: float = 0.5) -> "StepControl":
        return StepControl(self.rtol * factor, self.atol * factor, self.h_max, self.h_init,
                           self.max_steps)


@dataclass
class OdeSolution:
    p: float
    q: float
    initial_slope: float
    grid: np.ndarray  # rows (x, G, G')
    classification: Classification
    termination: Termination
    support_radius: float
    terminal_slope: float  # G' extrapolated to G = 1; only meaningful on REACHED_ONE
    constraint_integral: float
    meta: dict = field(default_factory=dict)

    @property
    def x(self) -> np.ndarray:
        return self.grid[:, 0]

    @property
    def g(self) -> np.ndarray:
        return self.grid[:, 1]

    @property
    def dg(self) -> np.ndarray:
        return self.grid[:, 2]

    @property
    def supercritical(self) -> bool:
        """The bisection predicate: G reached 1 with a positive slope left."""
        return self.termination is Termination.REACHED_ONE and self.terminal_slope > 0.0

    def second_derivative(self) -> np.ndarray:
        alpha = self.p / self.q - 1.0
        gap = np.maximum(1.0 - self.g, 0.0)
        with np.errstate(divide="ignore"):
            weight = gap ** alpha if alpha else np.ones_like(gap)
        return -self.dg * weight * self.x ** (self.p - 1.0)


def _check_pq(p: float, q: float) -> tuple[float, float]:
    qi = as_q(q)
    if qi.is_infinite:
        raise ValueError("the shooting problem needs q < inf")
    q = qi.value
    if p < 1.0 or q < p:
        raise ValueError(f"need 1 <= p <= q, got p={p}, q={q}")
    return float(p), q


# Dormand-Prince 5(4) tableau
_C = (0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0)
_A = (
    (),
    (1 / 5,),
    (3 / 40, 9 / 40),
    (44 / 45, -56 / 15, 32 / 9),
    (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729),
    (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656),
    (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84),
)
_B = (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0)
_E = (71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40)


class _Singular(Exception):
    pass


def _rhs(x, g, dg, p, alpha):
    gap = 1.0 - g
    if alpha:
        if gap <= 0.0:
            raise _Singular
        w = gap ** alpha
    else:
        w = 1.0
    xp1 = x ** (p - 1.0) if p != 1.0 else 1.0
    return dg, -dg * w * xp1, x * xp1 * w * dg


def _dp_step(x, y, h, p, alpha, k1):
    ks = [k1]
    for i in range(1, 7):
        a = _A[i]
        yi = [y[c] + h * sum(a[j] * ks[j][c] for j in range(i)) for c in range(3)]
        ks.append(_rhs(x + _C[i] * h, yi[0], yi[1], p, alpha))
    y_new = tuple(y[c] + h * sum(_B[j] * ks[j][c] for j in range(7)) for c in range(3))
    err = tuple(h * sum(_E[j] * ks[j][c] for j in range(7)) for c in range(3))
    return y_new, err, ks[6]


def integrate_g(p: float, q: QLike, initial_slope: float,
                step_control: StepControl = StepControl()) -> OdeSolution:
    """Integrate from x = 0 until G reaches 1, G' dies out, or x passes X_MAX."""
    p, q = _check_pq(p, q)
    if not initial_slope > 0:
        raise ValueError("initial_slope must be positive")
    sc = step_control
    alpha = p / q - 1.0
    x, y = 0.0, (0.0, float(initial_slope), 0.0)
    k1 = _rhs(x, *y[:2], p, alpha)
    h = sc.h_init
    rows = [(x, y[0], y[1])]
    termination = None
    for _ in range(sc.max_steps):
        g, dg = y[0], y[1]
        h = min(h, sc.h_max, X_MAX - x + 1e-9)
        if dg > 0:
            h = min(h, ETA * (1.0 - g) / dg)
        try:
            y_new, err, k_last = _dp_step(x, y, h, p, alpha, k1)
        except _Singular:
            h *= 0.5
            continue
        if not all(math.isfinite(v) for v in y_new):
            raise OdeError(f"non-finite state at x={x + h:.17g}")
        scale = [sc.atol + sc.rtol * max(abs(a), abs(b)) for a, b in zip(y, y_new)]
        e = max(abs(ei) / si for ei, si in zip(err, scale))
        if e > 1.0 or (alpha and y_new[0] >= 1.0):
            h *= max(0.2, 0.9 * e ** -0.2) if e > 1.0 else 0.5
            continue
        x += h
        y, k1 = y_new, k_last
        rows.append((x, y[0], y[1]))
        h *= min(5.0, 0.9 * e ** -0.2) if e > 0 else 5.0
        if 1.0 - y[0] < EPS_G:
            termination = Termination.REACHED_ONE
            break
        if y[1] < EPS_SLOPE:
            termination = Termination.PLATEAU
            break
        if x > X_MAX:
            termination = Termination.X_MAX
            break
    else:
        raise OdeError(f"step budget exhausted at x={x:.6g} (G={y[0]:.6g}, G'={y[1]:.3g})")
    return _finish(p, q, float(initial_slope), np.array(rows), termination, y[2], sc)


def _finish(p, q, slope, grid, termination, integral, sc) -> OdeSolution:
    alpha = p / q - 1.0
    x_end, g_end, dg_end = grid[-1]
    gap = max(1.0 - g_end, 0.0)
    meta = {"rtol": sc.rtol, "atol": sc.atol, "steps": len(grid) - 1}
    terminal = dg_end
    if termination is Termination.REACHED_ONE:
        # remaining rise: dG'/dG = -(1-G)^alpha x^(p-1) with x frozen
        lift = gap ** (alpha + 1.0) / (alpha + 1.0)
        terminal = dg_end - x_end ** (p - 1.0) * lift
        integral += x_end ** p * lift
    near_one = gap < CRITICAL_GAP
    if near_one and abs(terminal) < CRITICAL_SLOPE:
        cls = Classification.CRITICAL
    elif termination is Termination.REACHED_ONE and terminal > 0:
        cls = Classification.SUPERCRITICAL
    else:
        cls = Classification.SUBCRITICAL
    radius = math.inf
    if near_one and p < q:
        radius = _support_radius(grid)
        meta["radius_fit"] = "power_law"
    elif termination is Termination.REACHED_ONE:
        radius = x_end + gap / dg_end if dg_end > 0 else x_end
    return OdeSolution(p, q, slope, grid, cls, termination, radius, terminal, integral, meta)


def _support_radius(grid: np.ndarray) -> float:
    """Where G hits 1, from a local fit 1 - G ~ C (r - x)^beta.

    Under that model (1 - G)/G' = (r - x)/beta is linear in x, so two grid
    points fix both beta and r. The fit uses the first points with
    1 - G below the critical window, before any plateau tail.
    """
    gap = 1.0 - grid[:, 1]
    idx = int(np.argmax(gap < CRITICAL_GAP))
    idx = max(idx, 2)
    x0, x1 = grid[idx - 1, 0], grid[idx, 0]
    u0, u1 = gap[idx - 1] / grid[idx - 1, 2], gap[idx] / grid[idx, 2]
    k = (u1 - u0) / (x1 - x0)
    if not k < 0:
        return x1
    return float(x1 - u1 / k)


@dataclass
class CriticalSlope:
    c_pq: float
    solution: OdeSolution
    bracket: tuple[float, float]
    iterations: int


def find_critical_slope(p: float, q: QLike, bracket: tuple[float, float] = (0.5, 4.0),
                        tol: float = 1e-8, step_control: StepControl = StepControl(),
                        max_expand: int = 60) -> CriticalSlope:
    """Bisection on the initial slope between a subcritical and a supercritical end."""
    p, q = _check_pq(p, q)
    lo, hi = map(float, bracket)
    if not 0 < lo < hi:
        raise ValueError(f"invalid bracket {bracket}")

    def sup(s):
        return integrate_g(p, q, s, step_control).supercritical

    for _ in range(max_expand):
        if not sup(lo):
            break
        lo *= 0.5
    else:
        raise OdeError(f"no subcritical slope found down to {lo:.3g}")
    for _ in range(max_expand):
        if sup(hi):
            break
        hi *= 2.0
    else:
        raise OdeError(f"no supercritical slope found up to {hi:.3g}")
    it = 0
    while hi - lo >= tol:
        mid = 0.5 * (lo + hi)
        if sup(mid):
            hi = mid
        else:
            lo = mid
        it += 1
    c = 0.5 * (lo + hi)
    return CriticalSlope(c, integrate_g(p, q, c, step_control), (lo, hi), it)


def energy_constraint_residual(solution: OdeSolution, p: float | None = None,
                               q: float | None = None) -> float:
    """int_0^r x^p (1-G)^alpha G' dx - 1.

    The integral is carried as a third state component of the integration,
    so it shares the trajectory's error control; the piece beyond the last
    step is added in closed form.
    """
    if p is not None and p != solution.p or q is not None and q != solution.q:
        raise ValueError("solution was computed for different (p, q)")
    return solution.constraint_integral - 1.0


class ConjectureDensity:
    """x -> G'(|x|)/2 from the critical trajectory, monotone cubic in between."""

    def __init__(self, solution: OdeSolution, c_pq: float):
        self.solution = solution
        self.c_pq = c_pq
        x, dg = solution.x, np.maximum(solution.dg, 0.0)
        self._edge = x[-1] if not math.isfinite(solution.support_radius) else max(
            x[-1], solution.support_radius)
        if self._edge > x[-1]:
            x, dg = np.append(x, self._edge), np.append(dg, 0.0)
        self._interp = PchipInterpolator(x, dg, extrapolate=False)

    @property
    def support(self) -> float:
        return self._edge

    def __call__(self, x):
        ax = np.abs(np.asarray(x, dtype=np.float64))
        out = np.nan_to_num(self._interp(ax), nan=0.0) * 0.5
        return out[()] if out.ndim == 0 else out

    def total_mass(self) -> float:
        """2 * int_0 f, by the endpoint-corrected trapezoid rule on the grid."""
        sol = self.solution
        x, f, df = sol.x, sol.dg, sol.second_derivative()
        h = np.diff(x)
        mass = np.sum(h * (f[:-1] + f[1:]) / 2 + h * h * (df[:-1] - df[1:]) / 12)
        if self._edge > x[-1]:
            mass += 0.5 * (self._edge - x[-1]) * f[-1]
        return float(mass)


def conjecture_density(p: float, q: QLike, *, bracket=(0.5, 4.0), tol: float = 1e-8,
                       h_max: float = 0.01) -> ConjectureDensity:
    """The symmetric density built from the critical solution."""
    sc = StepControl(h_max=h_max)
    crit = find_critical_slope(p, q, bracket, tol, sc)
    return ConjectureDensity(crit.solution, crit.c_pq)


@dataclass
class FamilyMember:
    slope: float
    solution: OdeSolution | None
    error: str | None = None


def figure1_family(p: float, q: QLike, slopes: Sequence[float],
                   step_control: StepControl = StepControl(h_max=0.05),
                   workers: int | None = 1) -> list[FamilyMember]:
    """Trajectories for several initial slopes; failures are recorded, not raised."""
    p, q = _check_pq(p, q)

    def run(s):
        try:
            return FamilyMember(float(s), integrate_g(p, q, s, step_control))
        except (OdeError, ValueError) as exc:
            return FamilyMember(float(s), None, str(exc))

    return list(ordered_map(run, slopes, workers))


TRAJECTORY_COLUMNS = ("slope", "classification", "x", "G", "dG")


def write_trajectories_csv(members: Sequence[FamilyMember], path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TRAJECTORY_COLUMNS)
        for m in members:
            if m.solution is None:
                continue
            label = m.solution.classification.label
            for x, g, dg in m.solution.grid:
                w.writerow([repr(m.slope), label, repr(float(x)), repr(float(g)), repr(float(dg))])


# ---------------------------------------------------------------------------
# discrete quantile form of the norm constraint
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class QuantileCheck:
    values: np.ndarray
    direct: np.ndarray

    @property
    def max_value(self) -> float:
        return float(self.values.max())

    @property
    def max_gap(self) -> float:
        return float(np.abs(self.values - self.direct).max())


def quantile_constraint_check(batch, p: float = 1.0, q: QLike | None = None) -> QuantileCheck:
    """sum_i (i/n)^{p/q-1} (x_i^*)^p / n per row, next to the same value from the norm.

    ``batch`` is a Tilde-normalized SampleBatch or a plain array (then q is
    required and the rows are taken as already scaled). At q = inf the
    weights are 1/i and the sum is divided by log(n+1), the Tilde scale.
    """
    data = getattr(batch, "data", batch)
    if hasattr(batch, "params"):
        if batch.params.normalization is not Normalization.TILDE:
            raise ValueError("quantile constraint needs a Tilde-normalized batch")
        q = batch.params.q if q is None else q
    if q is None:
        raise ValueError("q is required for a plain array")
    q = as_q(q)
    if p != 1.0:
        raise ValueError("only p = 1 batches can be sampled")
    x = np.atleast_2d(np.asarray(data, dtype=np.float64))
    n = x.shape[1]
    xs = decreasing_rearrangement(x)
    i = np.arange(1, n + 1)
    if q.is_infinite:
        vals = (xs * (n / i)).sum(axis=1) / n / math.log(n + 1)
        direct = lorentz_norm(x, q) / math.log(n + 1)
    else:
        vals = (xs ** p * (i / n) ** (p / q.value - 1.0)).sum(axis=1) / n
        direct = lorentz_norm(x, q) / n ** (1.0 / q.value)
    return QuantileCheck(vals, np.atleast_1d(direct))
