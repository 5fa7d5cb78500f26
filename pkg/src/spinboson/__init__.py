"""Finite-temperature variational dynamics of the spin-boson model with
multiple Davydov trial states and thermal coherent-state Monte Carlo."""

__version__ = "0.1.0"

from .ansatz import (
    AnsatzVariant,
    MultiDState,
    coherent_overlap,
    expect_energy,
    expect_sigma_z,
    initial_state,
    norm,
)
from .eom import (
    IntegratorConfig,
    TrajectoryResult,
    assemble_eom,
    run_trajectory,
    solve_eom,
    state_derivative,
    step,
)
from .model import (
    DiscretizedBath,
    SpectralDensityParams,
    SystemParams,
    bath_correlation,
    bath_correlation_discrete,
    discretize_bath,
    gamma_norm,
    reorganization_energy,
    spectral_density,
)
from .oracle import FockConfig, analytic_two_level, fock_propagate, thermal_fock_ensemble
from .sampler import (
    EnsembleResult,
    ThermalSampleConfig,
    density,
    log_density,
    run_ensemble,
    sample_alpha,
    sigma_for_mode,
    thermal_sample_config,
)
