"""Independent ground truth: exact truncated-Fock-basis propagation for small
baths, plus closed-form two-level limits. Test-time machinery; exactness over
speed."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import poisson

from .model import DiscretizedBath, SystemParams
from .sampler import ThermalSampleConfig, sample_alpha, trajectory_rng

MAX_DIMENSION = 200_000


class TruncationError(ValueError):
    """Initial coherent state not representable under the requested truncation."""

    def __init__(self, message, required_n_max=None):
        super().__init__(message)
        self.required_n_max = required_n_max


@dataclass(frozen=True, eq=False)
class FockConfig:
    """Per-mode Fock truncations and output grid for exact propagation."""

    n_max: tuple  # per-mode truncation (highest retained occupation)
    dt: float = 0.25
    t_final: float = 20.0
    tail_mass: float = 1e-10

    def __post_init__(self):
        n_max = tuple(int(n) for n in np.atleast_1d(self.n_max))
        if any(n < 0 for n in n_max):
            raise ValueError("per-mode truncations must be >= 0")
        object.__setattr__(self, "n_max", n_max)
        if not (self.dt > 0 and self.t_final >= 0):
            raise ValueError("dt must be positive and t_final >= 0")
        dim = 2 * int(np.prod([n + 1 for n in n_max]))
        if dim > MAX_DIMENSION:
            raise ValueError(f"Hilbert dimension {dim} exceeds the dense-propagation cap")

    @property
    def times(self) -> np.ndarray:
        n = int(round(self.t_final / self.dt))
        return np.linspace(0.0, n * self.dt, n + 1)


@dataclass(frozen=True, eq=False)
class FockResult:
    times: np.ndarray
    pz: np.ndarray
    norms: np.ndarray
    energies: np.ndarray


def suggest_n_max(abs_alpha: float, tail_mass: float = 1e-10, margin: int = 5) -> int:
    """Smallest truncation with Poisson occupation tail below tail_mass, plus
    a safety margin for coupling-induced excitation."""
    mu = abs_alpha**2
    n = 0
    while poisson.sf(n, mu) >= tail_mass:
        n += 1
        if n > 10_000:
            raise ValueError(f"unreasonable displacement magnitude {abs_alpha}")
    return n + margin


def check_truncation(alpha: np.ndarray, cfg: FockConfig):
    alpha = np.atleast_1d(np.asarray(alpha, dtype=complex))
    if alpha.size != len(cfg.n_max):
        raise ValueError("alpha length must match the number of truncations")
    for l, (al, nm) in enumerate(zip(alpha, cfg.n_max)):
        tail = poisson.sf(nm, abs(al) ** 2)
        if tail >= cfg.tail_mass:
            raise TruncationError(
                f"mode {l}: Poisson tail mass {tail:.2e} beyond n_max={nm} exceeds "
                f"{cfg.tail_mass:.0e} for |alpha|={abs(al):.3f}",
                required_n_max=suggest_n_max(abs(al), cfg.tail_mass),
            )


def _mode_operators(n_max: int):
    n = np.arange(n_max + 1)
    lower = np.diag(np.sqrt(n[1:]), k=1)  # annihilation
    return lower, np.diag(n.astype(float))


def build_hamiltonian(sys: SystemParams, bath: DiscretizedBath, cfg: FockConfig) -> np.ndarray:
    """Dense spin-boson Hamiltonian on {|1>,|2>} x Fock(n_max_1) x ... ."""
    if bath.n_b != len(cfg.n_max):
        raise ValueError("bath size must match the number of truncations")
    dims = [n + 1 for n in cfg.n_max]
    bath_dim = int(np.prod(dims))
    coupling = np.zeros((bath_dim, bath_dim))
    energy = np.zeros((bath_dim, bath_dim))
    for l, (nm, w, lam) in enumerate(zip(cfg.n_max, bath.omegas, bath.lambdas)):
        b_op, num = _mode_operators(nm)
        x_op = b_op + b_op.T
        left = int(np.prod(dims[:l])) if l else 1
        right = int(np.prod(dims[l + 1 :])) if l + 1 < len(dims) else 1
        coupling += np.kron(np.eye(left), np.kron(lam * x_op, np.eye(right)))
        energy += np.kron(np.eye(left), np.kron(w * num, np.eye(right)))
    sz = np.array([[1.0, 0.0], [0.0, -1.0]])
    sx = np.array([[0.0, 1.0], [1.0, 0.0]])
    h = (
        np.kron(0.5 * sys.epsilon * sz - 0.5 * sys.delta * sx, np.eye(bath_dim))
        + np.kron(0.5 * sz, coupling)
        + np.kron(np.eye(2), energy)
    )
    return h


def coherent_vector(alpha: complex, n_max: int) -> np.ndarray:
    n = np.arange(n_max + 1)
    log_fact = np.cumsum(np.concatenate([[0.0], np.log(np.arange(1, n_max + 1))]))
    if alpha == 0:
        vec = np.zeros(n_max + 1, dtype=complex)
        vec[0] = 1.0
        return vec
    log_mag = -0.5 * abs(alpha) ** 2 + n * math.log(abs(alpha)) - 0.5 * log_fact
    phase = np.exp(1j * n * np.angle(alpha))
    return np.exp(log_mag) * phase


def initial_vector(alpha: np.ndarray, cfg: FockConfig) -> np.ndarray:
    """|1> x |alpha_1> x ... x |alpha_Nb> in the truncated basis."""
    alpha = np.atleast_1d(np.asarray(alpha, dtype=complex))
    bath_vec = np.array([1.0 + 0.0j])
    for al, nm in zip(alpha, cfg.n_max):
        bath_vec = np.kron(bath_vec, coherent_vector(al, nm))
    spin = np.array([1.0 + 0.0j, 0.0j])
    return np.kron(spin, bath_vec)


class _Propagator:
    """Eigendecomposition-based exact propagator, reusable across samples."""

    def __init__(self, sys: SystemParams, bath: DiscretizedBath, cfg: FockConfig):
        self.cfg = cfg
        h = build_hamiltonian(sys, bath, cfg)
        self.evals, self.evecs = np.linalg.eigh(h)
        bath_dim = h.shape[0] // 2
        sz_diag = np.concatenate([np.ones(bath_dim), -np.ones(bath_dim)])
        self.sz_eig = self.evecs.conj().T @ (sz_diag[:, None] * self.evecs)

    def propagate(self, psi0: np.ndarray, times: np.ndarray) -> FockResult:
        c0 = self.evecs.conj().T @ psi0
        pz = np.empty(times.size)
        norms = np.empty(times.size)
        e0 = float(np.sum(np.abs(c0) ** 2 * self.evals))
        for k, t in enumerate(times):
            c = c0 * np.exp(-1j * self.evals * t)
            pz[k] = float(np.real(np.vdot(c, self.sz_eig @ c)))
            norms[k] = float(np.vdot(c, c).real)
        pz = pz / norms
        energies = np.full(times.size, e0)
        return FockResult(times=times, pz=pz, norms=norms, energies=energies)


def fock_propagate(
    sys: SystemParams,
    bath: DiscretizedBath,
    alpha: np.ndarray,
    cfg: FockConfig,
) -> FockResult:
    """Exact P_z(t) for the initial product state |1> x |alpha>."""
    check_truncation(alpha, cfg)
    prop = _Propagator(sys, bath, cfg)
    return prop.propagate(initial_vector(alpha, cfg), cfg.times)


def analytic_two_level(sys: SystemParams, t) -> np.ndarray:
    """Closed-form decoupled-bath population difference
    P_z(t) = (eps^2 + delta^2 cos(Omega t)) / Omega^2, Omega = sqrt(eps^2+delta^2)."""
    ts = np.asarray(t, dtype=float)
    omega2 = sys.epsilon**2 + sys.delta**2
    if omega2 == 0.0:
        out = np.ones_like(ts)
    else:
        out = (sys.epsilon**2 + sys.delta**2 * np.cos(math.sqrt(omega2) * ts)) / omega2
    return float(out) if np.isscalar(t) else out


def thermal_fock_ensemble(
    sys: SystemParams,
    bath: DiscretizedBath,
    sampler_cfg: ThermalSampleConfig,
    cfg: FockConfig,
) -> FockResult:
    """Exact finite-T average over the same alpha draws as the variational
    ensemble (shared master seed and per-trajectory streams), isolating
    Ansatz error from sampling error."""
    alphas = [
        sample_alpha(trajectory_rng(sampler_cfg.master_seed, i), sampler_cfg)
        for i in range(sampler_cfg.n_s)
    ]
    for alpha in alphas:
        check_truncation(alpha, cfg)
    prop = _Propagator(sys, bath, cfg)
    times = cfg.times
    pz_sum = np.zeros(times.size)
    norms = np.zeros(times.size)
    energies = np.zeros(times.size)
    for alpha in alphas:  # fixed index order
        res = prop.propagate(initial_vector(alpha, cfg), times)
        pz_sum += res.pz
        norms += res.norms
        energies += res.energies
    n = len(alphas)
    return FockResult(times=times, pz=pz_sum / n, norms=norms / n, energies=energies / n)
