import csv
import math

import numpy as np
import pytest
from scipy.stats import norm

from lorentz_lab.core import BallParams, Normalization, limit_law
from lorentz_lab.ode import (Classification, OdeError, StepControl, Termination,
                             conjecture_density, energy_constraint_residual, figure1_family,
                             find_critical_slope, integrate_g, quantile_constraint_check,
                             write_trajectories_csv)
from lorentz_lab.sampler import sample_exact


def _check_invariants(sol):
    assert sol.x[0] == 0.0 and sol.g[0] == 0.0
    assert (np.diff(sol.x) > 0).all()
    assert (np.diff(sol.g) >= -1e-15).all()
    assert (sol.g <= 1 + 1e-9).all()
    assert (sol.dg > 0).all()
    assert (np.diff(sol.dg) <= 1e-15).all()
    inside = (sol.g < 1) & (sol.x > 0)
    assert (sol.second_derivative()[inside] <= 0).all()


@pytest.mark.parametrize("s", [0.3, 0.8, 1.5])
def test_equal_indices_give_gaussian_slope(s):
    sol = integrate_g(2, 2, s, StepControl(h_max=0.05))
    assert np.abs(sol.dg - s * np.exp(-sol.x**2 / 2)).max() < 1e-8
    _check_invariants(sol)


def test_equal_indices_reduction_p3():
    sol = integrate_g(3, 3, 0.5, StepControl(h_max=0.05))
    mask = sol.x <= 10
    assert np.abs(sol.dg[mask] - 0.5 * np.exp(-sol.x[mask] ** 3 / 3)).max() < 1e-8


def test_closed_form_critical_p1_q2():
    sol = integrate_g(1, 2, 2.0)
    assert np.abs(sol.g - (1 - (1 - sol.x) ** 2)).max() < 1e-8
    assert sol.classification is Classification.CRITICAL
    assert sol.support_radius == pytest.approx(1.0, abs=1e-6)
    _check_invariants(sol)


def test_subcritical_plateau():
    sol = integrate_g(1, 2, 1.0)
    assert sol.classification is Classification.SUBCRITICAL
    assert sol.termination is Termination.PLATEAU
    assert sol.g[-1] < 1
    assert math.isinf(sol.support_radius)
    assert energy_constraint_residual(sol) < 0
    _check_invariants(sol)


def test_supercritical_reaches_one():
    sol = integrate_g(1, 2, 3.0)
    assert sol.classification is Classification.SUPERCRITICAL
    assert sol.supercritical
    assert sol.termination is Termination.REACHED_ONE
    # a steeper start reaches 1 before the critical radius 1
    assert 0 < sol.support_radius < 1
    assert sol.terminal_slope > 0
    _check_invariants(sol)


def test_input_validation():
    with pytest.raises(ValueError):
        integrate_g(3, 2, 1.0)
    with pytest.raises(ValueError):
        integrate_g(1, "inf", 1.0)
    with pytest.raises(ValueError):
        integrate_g(1, 2, 0.0)


@pytest.mark.parametrize("p,q,expected", [(1, 2, 2.0), (2, 2, math.sqrt(2 / math.pi)),
                                          (1, 3, 3.0), (1, 5, 5.0)])
def test_critical_slopes(p, q, expected):
    crit = find_critical_slope(p, q)
    assert crit.c_pq == pytest.approx(expected, abs=1e-6)
    assert crit.bracket[1] - crit.bracket[0] < 1e-8
    assert crit.solution.classification is Classification.CRITICAL
    assert abs(energy_constraint_residual(crit.solution, p, q)) < 1e-6


@pytest.mark.parametrize("q", [1.5, 3.0, 4.0])
def test_support_radius_for_p1(q):
    crit = find_critical_slope(1, q)
    assert crit.solution.support_radius == pytest.approx(1 / (q - 1), abs=1e-4)


def test_bracket_expansion_and_failure():
    crit = find_critical_slope(1, 2, bracket=(2.5, 3.0))
    assert crit.c_pq == pytest.approx(2.0, abs=1e-6)
    with pytest.raises(OdeError):
        find_critical_slope(1, 2, bracket=(2.5, 3.0), max_expand=1)
    with pytest.raises(ValueError):
        find_critical_slope(1, 2, bracket=(3.0, 2.0))


def test_refinement_stability():
    for p, q in ((1, 2), (2, 2), (1.5, 3)):
        a = find_critical_slope(p, q).c_pq
        b = find_critical_slope(p, q, step_control=StepControl().refined()).c_pq
        assert abs(a - b) < 1e-6


def test_classification_monotone_on_slope_grid():
    c = find_critical_slope(1.5, 3).c_pq
    fam = figure1_family(1.5, 3, np.linspace(c / 2, 2 * c, 20))
    labels = [int(m.solution.classification) for m in fam]
    assert labels == sorted(labels)
    assert labels[0] == 0 and labels[-1] == 2


def test_family_straddling_critical():
    fam = figure1_family(1, 2, [1.0, 2.0, 3.0])
    assert [m.solution.classification.label for m in fam] == ["Subcritical", "Critical",
                                                               "Supercritical"]
    assert figure1_family(1, 2, []) == []


def test_family_collects_errors():
    fam = figure1_family(1, 2, [1.0, -1.0])
    assert fam[0].solution is not None
    assert fam[1].solution is None and "positive" in fam[1].error


def test_trajectory_csv(tmp_path):
    fam = figure1_family(1, 2, [1.0, 3.0])
    write_trajectories_csv(fam, tmp_path / "t.csv")
    rows = list(csv.reader((tmp_path / "t.csv").open()))
    assert rows[0] == ["slope", "classification", "x", "G", "dG"]
    assert {len(r) for r in rows} == {5}
    assert {r[1] for r in rows[1:]} == {"Subcritical", "Supercritical"}


def test_density_closed_forms():
    xs = np.linspace(-3, 3, 6001)
    d12 = conjecture_density(1, 2)
    assert np.abs(d12(xs) - limit_law(2).density(xs)).max() < 1e-3
    assert d12.total_mass() == pytest.approx(1.0, abs=1e-6)
    d22 = conjecture_density(2, 2)
    assert np.abs(d22(xs) - norm.pdf(xs)).max() < 1e-3
    assert d22.total_mass() == pytest.approx(1.0, abs=1e-6)
    assert d22(40.0) == 0.0


def test_density_for_p1_matches_limit_law_q3():
    xs = np.linspace(-1, 1, 2001)
    assert np.abs(conjecture_density(1, 3)(xs) - limit_law(3).density(xs)).max() < 1e-3


def test_energy_constraint_by_independent_quadrature():
    # p = q = 2: int x^2 G' dx over the grid with G' = c e^{-x^2/2}
    sol = find_critical_slope(2, 2, step_control=StepControl(h_max=0.01)).solution
    x, f = sol.x, sol.x**2 * sol.dg
    trap = float(np.sum(np.diff(x) * (f[:-1] + f[1:]) / 2))
    assert trap == pytest.approx(1.0, abs=1e-4)
    assert energy_constraint_residual(sol) == pytest.approx(trap - 1.0, abs=1e-4)


def test_quantile_constraint_on_batches(rng):
    for q in (2, 3.5, "inf"):
        batch = sample_exact(BallParams(q, 300, normalization=Normalization.TILDE), 200, rng)
        res = quantile_constraint_check(batch)
        assert res.max_value <= 1 + 1e-10
        assert res.max_gap < 1e-12


def test_quantile_constraint_constant_vector():
    n, q = 500, 3.0
    i = np.arange(1, n + 1)
    s = 1 / np.sum((i / n) ** (1 / q - 1) / n)
    res = quantile_constraint_check(np.full(n, s), q=q)
    assert res.max_value == pytest.approx(1.0, abs=1e-12)


def test_quantile_constraint_rejects(rng):
    batch = sample_exact(BallParams(2, 10), 5, rng)
    with pytest.raises(ValueError):
        quantile_constraint_check(batch)
    with pytest.raises(ValueError):
        quantile_constraint_check(np.ones((2, 3)))
