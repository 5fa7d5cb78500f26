"""Thermal coherent-state sampling and Monte Carlo ensemble averages.

The bath thermal state is diagonal in coherent states with density
p(alpha; beta) = prod_l (e^{beta w_l} - 1)/pi exp(-|alpha_l|^2 (e^{beta w_l}-1)),
which factorizes into independent Gaussians of width sigma_l per quadrature,
2 sigma_l^2 = 1/(e^{beta w_l} - 1). Trajectories are seeded by a counter-based
split of the master seed so the ensemble mean is independent of scheduling.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .ansatz import AnsatzVariant, initial_state
from .eom import IntegratorConfig, TrajectoryAbortError, run_trajectory
from .model import DiscretizedBath, SystemParams


class ExcessiveAbortError(RuntimeError):
    """Too many trajectories aborted for the ensemble mean to be trusted."""


@dataclass(frozen=True, eq=False)
class ThermalSampleConfig:
    beta: float  # inverse temperature 1/(k_B T); inf for zero temperature
    n_s: int
    sigmas: np.ndarray
    noise_amp: float = 1e-2
    master_seed: int = 0

    def __post_init__(self):
        if not (self.beta > 0):
            raise ValueError(f"beta must be positive (inf for T=0), got {self.beta}")
        if not (isinstance(self.n_s, (int, np.integer)) and self.n_s >= 1):
            raise ValueError(f"n_s must be a positive integer, got {self.n_s}")
        if self.noise_amp < 0:
            raise ValueError(f"noise_amp must be >= 0, got {self.noise_amp}")
        sigmas = np.ascontiguousarray(self.sigmas, dtype=float)
        if sigmas.ndim != 1 or np.any(sigmas < 0):
            raise ValueError("sigmas must be a 1-d array of non-negative widths")
        sigmas.setflags(write=False)
        object.__setattr__(self, "sigmas", sigmas)


def sigma_for_mode(beta: float, omega_l: float) -> float:
    """Gaussian quadrature width: sigma_l = sqrt(1 / (2 (e^{beta w_l} - 1)))."""
    if not (beta > 0):
        raise ValueError(f"beta must be positive (inf for T=0), got {beta}")
    if not (omega_l > 0):
        raise ValueError(f"omega_l must be positive, got {omega_l}")
    if math.isinf(beta):
        return 0.0
    x = beta * omega_l
    if x > 700.0:
        return 0.0
    return math.sqrt(0.5 / math.expm1(x))


def thermal_sample_config(
    beta: float,
    bath: DiscretizedBath,
    n_s: int,
    noise_amp: float = 1e-2,
    master_seed: int = 0,
) -> ThermalSampleConfig:
    sigmas = np.array([sigma_for_mode(beta, w) for w in bath.omegas])
    return ThermalSampleConfig(
        beta=beta, n_s=n_s, sigmas=sigmas, noise_amp=noise_amp, master_seed=master_seed
    )


def trajectory_rng(master_seed: int, index: int) -> np.random.Generator:
    """Independent per-trajectory stream derived from the master seed by the
    trajectory index; invariant under execution order and parallelism."""
    return np.random.default_rng(np.random.SeedSequence(master_seed, spawn_key=(index,)))


def sample_alpha(rng: np.random.Generator, cfg: ThermalSampleConfig) -> np.ndarray:
    """Draw alpha_l = x_l + i p_l with independent N(0, sigma_l) quadratures."""
    x = rng.normal(0.0, 1.0, cfg.sigmas.size) * cfg.sigmas
    p = rng.normal(0.0, 1.0, cfg.sigmas.size) * cfg.sigmas
    return x + 1j * p


def sample_noise(rng: np.random.Generator, cfg: ThermalSampleConfig, m: int) -> np.ndarray:
    """Per-(branch, mode) perturbation, uniform in [-noise_amp, noise_amp]
    independently for the real and imaginary parts."""
    n_b = cfg.sigmas.size
    re = rng.uniform(-cfg.noise_amp, cfg.noise_amp, (m, n_b))
    im = rng.uniform(-cfg.noise_amp, cfg.noise_amp, (m, n_b))
    return re + 1j * im


def log_density(alpha: np.ndarray, omegas: np.ndarray, beta: float) -> float:
    """log p(alpha; beta); overflow-safe for beta*omega up to ~700."""
    if math.isinf(beta):
        raise ValueError("density is defined for finite beta only")
    alpha = np.asarray(alpha, dtype=complex)
    x = beta * np.asarray(omegas, dtype=float)
    # log(e^x - 1) = x + log1p(-e^-x)
    log_em1 = x + np.log1p(-np.exp(-x))
    mag2 = np.abs(alpha) ** 2
    with np.errstate(divide="ignore"):
        quad_term = np.where(mag2 > 0, np.exp(np.log(np.maximum(mag2, 1e-300)) + log_em1), 0.0)
    return float(np.sum(log_em1 - math.log(math.pi) - quad_term))


def density(alpha: np.ndarray, omegas: np.ndarray, beta: float) -> float:
    """p(alpha; beta) = prod_l (e^{beta w_l}-1)/pi exp(-|alpha_l|^2 (e^{beta w_l}-1))."""
    return math.exp(log_density(alpha, omegas, beta))


@dataclass(frozen=True, eq=False)
class EnsembleResult:
    times: np.ndarray
    pz_mean: np.ndarray
    pz_stderr: np.ndarray
    pz_trajectories: np.ndarray  # shape (n_effective, n_times), index order
    norm_drift_max: np.ndarray  # per time point, max over trajectories
    energy_drift_max: np.ndarray
    n_effective: int
    aborted_indices: tuple = ()


def _run_one(args):
    (index, sys, bath, cfg, variant, m, integrator, t_grid) = args
    rng = trajectory_rng(cfg.master_seed, index)
    alpha = sample_alpha(rng, cfg)
    noise = sample_noise(rng, cfg, m)
    state = initial_state(variant, m, alpha, noise)
    try:
        res = run_trajectory(state, sys, bath, integrator, t_grid)
    except TrajectoryAbortError as exc:
        return index, None, str(exc)
    e_scale = max(abs(res.energies[0]), 0.5 * (abs(sys.epsilon) + abs(sys.delta)), 1e-12)
    return (
        index,
        (
            res.pz,
            np.abs(res.norms - res.norms[0]) / res.norms[0],
            np.abs(res.energies - res.energies[0]) / e_scale,
        ),
        None,
    )


def run_ensemble(
    sys: SystemParams,
    bath: DiscretizedBath,
    cfg: ThermalSampleConfig,
    variant: AnsatzVariant,
    m: int,
    integrator: IntegratorConfig,
    t_grid: np.ndarray,
    n_workers: int = 1,
    max_abort_fraction: float = 0.05,
) -> EnsembleResult:
    """Monte Carlo average of P_z(t) over cfg.n_s thermally sampled
    trajectories. Aborted trajectories are excluded; an abort fraction above
    max_abort_fraction raises ExcessiveAbortError."""
    t_grid = np.asarray(t_grid, dtype=float)
    jobs = [
        (i, sys, bath, cfg, variant, m, integrator, t_grid) for i in range(cfg.n_s)
    ]
    results = {}
    if n_workers > 1:
        with ProcessPoolExecutor(max_workers=n_workers) as pool:
            for index, payload, err in pool.map(_run_one, jobs):
                results[index] = (payload, err)
    else:
        for job in jobs:
            index, payload, err = _run_one(job)
            results[index] = (payload, err)

    aborted = tuple(i for i in range(cfg.n_s) if results[i][0] is None)
    if len(aborted) > max_abort_fraction * cfg.n_s:
        raise ExcessiveAbortError(
            f"{len(aborted)}/{cfg.n_s} trajectories aborted "
            f"(threshold {max_abort_fraction:.0%}); first error: {results[aborted[0]][1]}"
        )
    completed = [i for i in range(cfg.n_s) if results[i][0] is not None]
    n_eff = len(completed)
    pz = np.stack([results[i][0][0] for i in completed])  # fixed index order
    nd = np.stack([results[i][0][1] for i in completed])
    ed = np.stack([results[i][0][2] for i in completed])
    mean = pz.sum(axis=0) / n_eff  # fixed reduction order for bit-stable output
    if n_eff > 1:
        stderr = pz.std(axis=0, ddof=1) / math.sqrt(n_eff)
    else:
        stderr = np.zeros_like(mean)
    return EnsembleResult(
        times=t_grid,
        pz_mean=mean,
        pz_stderr=stderr,
        pz_trajectories=pz,
        norm_drift_max=nd.max(axis=0),
        energy_drift_max=ed.max(axis=0),
        n_effective=n_eff,
        aborted_indices=aborted,
    )
