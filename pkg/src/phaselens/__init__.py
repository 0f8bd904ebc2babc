"""Noisy phase retrieval: intensity least squares, Wirtinger Flow and Monte-Carlo checks."""
from .core import (DomainError, FixedNoise, GaussianNoise, IntensityMeasurements, SensingEnsemble,
                   complex_gaussian, derive_seed, make_rng,
                   ZeroNoise, lift_adjoint, lift_apply, measure, realify, sample_ensemble)
from .metrics import ErrorReport, dist_up_to_phase, error_report
from .objective import first_order_report, intensity_loss, wirtinger_gradient
from .solvers import (SolverConfig, SolveResult, power_iteration, project_l1_ball,
                      sparse_spectral_init, truncated_spectral_init, wirtinger_flow)

__version__ = "0.1.0"
