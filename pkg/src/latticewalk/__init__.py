"""Stochastic-gradient Langevin samplers on a lattice, with moment diagnostics."""
from latticewalk.core import ChainConfig, StepSchedule, derive_chain_stream, schedule_step_size
from latticewalk.diagnostics import (
    compare_to_reference,
    empirical_gaussian_fit,
    gaussian_kl,
    histogram_tv_distance,
)
from latticewalk.estimators import BayesianLinearRegressor, BayesianLogisticClassifier
from latticewalk.models import (
    GaussianSummary,
    LinearGaussianModel,
    LogisticModel,
    Mixture1DModel,
    QuadraticTarget,
    linreg_analytic_posterior,
    make_linear_regression,
    make_logistic_blobs,
)
from latticewalk.noise import NoiseSpec, SyntheticNoiseModel
from latticewalk.samplers import (
    SAMPLER_KINDS,
    DivergenceError,
    SamplerState,
    clipped_sgld_step,
    reference_chain,
    run_chain,
    run_parallel_chains,
    sgld_step,
    sglrw_step,
)

__version__ = "0.1.0"
