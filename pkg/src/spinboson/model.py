"""Spin-boson model parameters, spectral density, and bath discretization.

Energy and frequency values are expressed in units of the cutoff frequency
omega_c, which is 1 by default. Couplings follow J(w) = 2 alpha omega_c^(1-s)
w^s exp(-w/omega_c); the discrete bath is built so that every mode satisfies
lambda_l^2 = gamma_norm * omega_l exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad
from scipy.optimize import brentq
from scipy.special import gamma as gamma_function


class QuadratureError(RuntimeError):
    """Adaptive quadrature failed to reach the requested tolerance."""


class DiscretizationError(RuntimeError):
    """Frequency solve for the discrete bath failed."""


@dataclass(frozen=True, eq=False)
class SystemParams:
    """Two-level system constants: bias epsilon and tunneling delta."""

    epsilon: float = 0.0
    delta: float = 0.1
    omega_c: float = 1.0

    def __post_init__(self):
        if not (self.omega_c > 0):
            raise ValueError(f"omega_c must be positive, got {self.omega_c}")
        for name in ("epsilon", "delta"):
            v = getattr(self, name)
            if not math.isfinite(v):
                raise ValueError(f"{name} must be finite, got {v}")


@dataclass(frozen=True, eq=False)
class SpectralDensityParams:
    """Parameters of the continuous spectral density and its discretization."""

    s: float = 1.0
    alpha: float = 0.05
    omega_c: float = 1.0
    omega_max: float = 10.0
    n_b: int = 250

    def __post_init__(self):
        if not (self.s > 0):
            raise ValueError(f"spectral exponent s must be > 0, got {self.s}")
        if not (self.alpha >= 0):
            raise ValueError(f"alpha must be >= 0, got {self.alpha}")
        if not (self.omega_c > 0):
            raise ValueError(f"omega_c must be positive, got {self.omega_c}")
        if not (self.omega_max > 0):
            raise ValueError(f"omega_max must be positive, got {self.omega_max}")
        if not (isinstance(self.n_b, (int, np.integer)) and self.n_b >= 1):
            raise ValueError(f"n_b must be a positive integer, got {self.n_b}")

    @property
    def regime(self) -> str:
        if self.s < 1:
            return "sub-ohmic"
        if self.s == 1:
            return "ohmic"
        return "super-ohmic"


@dataclass(frozen=True, eq=False)
class DiscretizedBath:
    """Discrete bath modes: frequencies, couplings, and the normalization
    gamma_norm with lambda_l^2 = gamma_norm * omega_l for every mode."""

    omegas: np.ndarray
    lambdas: np.ndarray
    gamma_norm: float

    def __post_init__(self):
        omegas = np.ascontiguousarray(self.omegas, dtype=float)
        lambdas = np.ascontiguousarray(self.lambdas, dtype=float)
        if omegas.ndim != 1 or lambdas.shape != omegas.shape:
            raise ValueError("omegas and lambdas must be 1-d arrays of equal length")
        if np.any(omegas <= 0) or np.any(np.diff(omegas) <= 0):
            raise ValueError("mode frequencies must be positive and strictly increasing")
        if np.any(lambdas < 0):
            raise ValueError("mode couplings must be non-negative")
        omegas.setflags(write=False)
        lambdas.setflags(write=False)
        object.__setattr__(self, "omegas", omegas)
        object.__setattr__(self, "lambdas", lambdas)

    @property
    def n_b(self) -> int:
        return self.omegas.size


def spectral_density(omega, p: SpectralDensityParams):
    """J(omega) = 2 alpha omega_c^(1-s) omega^s exp(-omega/omega_c).

    Accepts scalars or arrays; omega must be non-negative.
    """
    w = np.asarray(omega, dtype=float)
    if np.any(w < 0):
        raise ValueError("spectral density is defined for omega >= 0")
    with np.errstate(divide="ignore"):
        val = 2.0 * p.alpha * p.omega_c ** (1.0 - p.s) * w**p.s * np.exp(-w / p.omega_c)
    out = np.where(w == 0.0, 0.0, val)
    return float(out) if np.isscalar(omega) else out


def _shape_cumulative(p: SpectralDensityParams, upper: float) -> float:
    """Integral of w^(s-1) exp(-w/omega_c) from 0 to upper (coupling-free
    shape of J(w)/w); used both for gamma_norm and the frequency solve."""
    if upper <= 0:
        return 0.0
    s, wc = p.s, p.omega_c

    def integrand(w):
        return w ** (s - 1.0) * math.exp(-w / wc)

    val, err = quad(integrand, 0.0, upper, epsabs=1e-13, epsrel=1e-13, limit=500)
    if err > 1e-9 * max(abs(val), 1e-30) and err > 1e-12:
        raise QuadratureError(
            f"cumulative spectral integral did not converge: value={val}, "
            f"error estimate={err}, s={s}, upper={upper}"
        )
    return val


def gamma_norm(p: SpectralDensityParams) -> float:
    """Normalization (1/n_b) * integral_0^omega_max J(w)/w dw.

    Closed form for the Ohmic case; adaptive quadrature otherwise.
    """
    if p.alpha == 0.0:
        return 0.0
    if p.s == 1.0:
        return (2.0 * p.alpha * p.omega_c / p.n_b) * (1.0 - math.exp(-p.omega_max / p.omega_c))
    prefactor = 2.0 * p.alpha * p.omega_c ** (1.0 - p.s)
    return prefactor * _shape_cumulative(p, p.omega_max) / p.n_b


def reorganization_energy(p: SpectralDensityParams) -> float:
    """E_r = integral_0^inf J(w)/w dw = 2 alpha omega_c Gamma(s)."""
    return 2.0 * p.alpha * p.omega_c * gamma_function(p.s)


def discretize_bath(p: SpectralDensityParams) -> DiscretizedBath:
    """Place n_b mode frequencies so each carries unit weight of the mode
    density Xi(w) = J(w) / (gamma_norm n_b w), and set lambda_l^2 =
    gamma_norm * omega_l.

    Frequencies depend only on the shape of J (alpha cancels in Xi), so the
    discretization remains defined at alpha = 0 where all couplings vanish.
    """
    gnorm = gamma_norm(p)
    n_b, wc = p.n_b, p.omega_c
    if p.s == 1.0:
        # closed form: the shape cumulative is wc * (1 - exp(-w/wc))
        total = 1.0 - math.exp(-p.omega_max / wc)
        ls = np.arange(1, n_b + 1)
        omegas = -wc * np.log1p(-(ls / n_b) * total)
    else:
        total = _shape_cumulative(p, p.omega_max)
        omegas = np.empty(n_b)
        lo = 0.0
        for l in range(1, n_b + 1):
            target = (l / n_b) * total

            def fun(w, target=target):
                return _shape_cumulative(p, w) - target

            if l == n_b:
                omegas[l - 1] = p.omega_max
                break
            hi = p.omega_max
            try:
                omegas[l - 1] = brentq(fun, lo, hi, xtol=1e-14, rtol=1e-15, maxiter=200)
            except ValueError as exc:
                raise DiscretizationError(
                    f"bracketed frequency solve failed for mode {l}: {exc}"
                ) from exc
            lo = omegas[l - 1]
    omegas[-1] = p.omega_max
    lambdas = np.sqrt(gnorm * omegas)
    return DiscretizedBath(omegas=omegas, lambdas=lambdas, gamma_norm=gnorm)


def bath_correlation(t: float, p: SpectralDensityParams, beta: float) -> complex:
    """Continuum bath correlation
    C(t) = integral_0^inf J(w) [coth(beta w / 2) cos(wt) - i sin(wt)] dw.

    beta = inf is accepted for zero temperature (coth -> 1).
    """
    if t < 0:
        raise ValueError("bath correlation is defined for t >= 0")
    if not (beta > 0):
        raise ValueError("beta must be positive (use beta=inf for T=0)")
    if p.alpha == 0.0:
        return 0.0 + 0.0j
    # e^{-w/wc} decay makes [0, 60 wc] numerically exhaustive
    upper = 60.0 * p.omega_c

    if math.isinf(beta):
        def real_integrand(w):
            return spectral_density(w, p)
    else:
        def real_integrand(w):
            if w == 0.0:
                # J(w)/tanh(beta w/2) -> (4 alpha / beta) w^{s-1} as w -> 0;
                # integrable endpoint, value only matters to the quadrature rule
                return 4.0 * p.alpha / beta if p.s == 1.0 else 0.0
            return spectral_density(w, p) / math.tanh(beta * w / 2.0)

    def imag_integrand(w):
        return spectral_density(w, p)

    if t == 0.0:
        re, re_err = quad(real_integrand, 0.0, upper, epsabs=1e-12, epsrel=1e-12, limit=500)
        im = 0.0
    else:
        re, re_err = quad(real_integrand, 0.0, upper, weight="cos", wvar=t,
                          epsabs=1e-12, epsrel=1e-12, limit=500)
        im, _ = quad(imag_integrand, 0.0, upper, weight="sin", wvar=t,
                     epsabs=1e-12, epsrel=1e-12, limit=500)
    return complex(re, -im)


def bath_correlation_discrete(t, bath: DiscretizedBath, beta: float):
    """Discrete-bath counterpart sum_l lambda_l^2 [coth(beta w_l/2) cos(w_l t)
    - i sin(w_l t)]; diagnostic for discretization quality."""
    if not (beta > 0):
        raise ValueError("beta must be positive (use beta=inf for T=0)")
    ts = np.atleast_1d(np.asarray(t, dtype=float))
    w = bath.omegas
    lam2 = bath.lambdas**2
    if math.isinf(beta):
        coth = np.ones_like(w)
    else:
        coth = 1.0 / np.tanh(beta * w / 2.0)
    phase = np.outer(ts, w)
    vals = (lam2 * coth * np.cos(phase)).sum(axis=1) - 1j * (lam2 * np.sin(phase)).sum(axis=1)
    return complex(vals[0]) if np.isscalar(t) else vals
