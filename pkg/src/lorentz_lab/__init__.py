"""Exact uniform sampling on Lorentz balls and Monte Carlo checks of their limit theorems."""

from .core import (BallParams, BallVolume, KappaTable, LimitLaw, Normalization, QIndex,
                   as_q, ball_volume, clt_constants, g_profile, intersection_threshold, kappa,
                   limit_law, lln_constant, lorentz_norm, lr_ball_volume_radius, lr_norm,
                   max_norm_linearized_variance)
from .gof import ComparisonLaw, KsResult, ks_one_sample, ks_two_sample
from .limit_laws import (order_statistic_profile, run_clt_max, run_empirical_convergence,
                         run_intersection, run_lln_norm, run_pmb, simulate_rq)
from .ode import (OdeSolution, conjecture_density, energy_constraint_residual,
                  figure1_family, find_critical_slope, integrate_g, quantile_constraint_check)
from .report import GofReport, Tolerance
from .rng import RngStreamSpec
from .sampler import (SampleBatch, sample_exact, sample_rejection_oracle,
                      sample_weyl_chamber)

__version__ = "0.1.0"
