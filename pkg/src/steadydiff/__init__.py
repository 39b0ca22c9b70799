"""Steady-state diffusion models for scaled families of continuous-time Markov chains.

Modules
-------
chain      chain families, scaling, sampled assumption checks
zoo        Erlang-A, M/M/infinity and phase-type many-server families
fluid      fluid ODE, stationary point, fluid-level Lyapunov checks
diffusion  diffusion model with frozen diffusion coefficient
steady     chain and diffusion stationary laws with error budgets
lyapunov   uniform Lyapunov certification and companion constants
poisson    Poisson equation of scalar diffusion models, gradient bounds
simulate   chain / diffusion simulation and steady-state estimation
lab        gap studies, rate fits, ergodicity-decay fits
cli        command-line interface
"""

from .chain import ChainFamily, ScaledChain, derive_avar, derive_drift, scale_chain, validate_assumptions
from .diffusion import DiffusionModel, SmoothFunction, apply_generator, build_dm
from .errors import (AdmissibilityError, BoxTooSmallError, CertificationError, ConvergenceError, DivergenceError,
                     HypothesisCheckError, InsufficientDataError, IrreducibilityError, ModelSpecError,
                     MultipleRootsError, NotDriftZeroError, NotSPDError, SteadyDiffError)
from .fluid import FluidModel, check_fm_lyapunov, integrate_fm, scale_family, stationary_point
from .lab import ExperimentConfig, GapReport, GapRow, ergodicity_decay, fit_rate, run_decay_study, run_gap_study
from .lyapunov import (LyapunovCandidate, ULCertificate, attest_finite_integral, check_dm_to_ctmc,
                       check_subexponential, check_ul, generic_candidate, power_candidate, quadratic_candidate,
                       radial_candidate, recheck, search_quadratic_candidate)
from .modelfile import ModelSpec, load_model
from .poisson import (PoissonSolution, local_lipschitz_profile, mc_poisson_value, solve_poisson_1d,
                      verify_gradient_bounds)
from .simulate import (BatchEstimate, SimPath, compare_paths, ensemble_steady_estimate, simulate_ctmc, simulate_dm,
                       steady_estimate)
from .steady import (ContinuousStationary, DiscreteStationary, Moment, chain_stationary, chain_stationary_bd,
                     chain_stationary_general, dm_stationary_1d, dm_stationary_fd, moment, total_variation)

__version__ = "0.1.0"
