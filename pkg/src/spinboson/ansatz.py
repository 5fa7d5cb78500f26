"""Multi-D1 / multi-D2 trial states and coherent-state expectation values.

A state is |D> = |1> sum_n A_n |f_n> + |2> sum_n B_n |g_n> with normalized
coherent states |f_n>; the D2 variant shares one displacement set (g == f).
All observables are evaluated with the closed-form coherent-state algebra
  <f|b_l|g> = g_l S,   <f|b_l^+|g> = f_l^* S,   <f|b_l^+ b_l|g> = f_l^* g_l S,
where S is the pairwise overlap.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .model import DiscretizedBath, SystemParams


class DegenerateStateError(RuntimeError):
    """State norm vanished; expectation values are undefined."""


class AnsatzVariant(enum.Enum):
    D1 = "D1"
    D2 = "D2"


@dataclass(frozen=True, eq=False)
class MultiDState:
    """Variational parameters of a multi-Davydov trial state.

    a, b: complex amplitudes, shape (M,).
    f: displacements attached to |1>, shape (M, n_b).
    g: displacements attached to |2> (D1 only); None for D2, where the
       |2> sector reuses f.
    """

    variant: AnsatzVariant
    a: np.ndarray
    b: np.ndarray
    f: np.ndarray
    g: np.ndarray | None = None

    def __post_init__(self):
        a = np.ascontiguousarray(self.a, dtype=complex)
        b = np.ascontiguousarray(self.b, dtype=complex)
        f = np.ascontiguousarray(self.f, dtype=complex)
        if a.ndim != 1 or b.shape != a.shape:
            raise ValueError("amplitude arrays must be 1-d with equal length")
        if f.ndim != 2 or f.shape[0] != a.size:
            raise ValueError("f must have shape (M, n_b)")
        if self.variant is AnsatzVariant.D2:
            if self.g is not None:
                raise ValueError("D2 states carry no separate g displacements")
            g = None
        else:
            if self.g is None:
                raise ValueError("D1 states require g displacements")
            g = np.ascontiguousarray(self.g, dtype=complex)
            if g.shape != f.shape:
                raise ValueError("g must match the shape of f")
        for arr in (a, b, f) + (() if g is None else (g,)):
            arr.setflags(write=False)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "f", f)
        object.__setattr__(self, "g", g)

    @property
    def m(self) -> int:
        return self.a.size

    @property
    def n_b(self) -> int:
        return self.f.shape[1]

    @property
    def g_eff(self) -> np.ndarray:
        """Displacements of the |2> sector (f itself for D2)."""
        return self.f if self.variant is AnsatzVariant.D2 else self.g


def coherent_overlap(fn: np.ndarray, fm: np.ndarray) -> complex:
    """<f_n|f_m> = exp(sum_l f_nl^* f_ml - |f_nl|^2/2 - |f_ml|^2/2)."""
    fn = np.asarray(fn, dtype=complex)
    fm = np.asarray(fm, dtype=complex)
    if fn.shape != fm.shape or fn.ndim != 1:
        raise ValueError("displacement vectors must be 1-d and of equal length")
    ex = np.vdot(fn, fm) - 0.5 * np.vdot(fn, fn).real - 0.5 * np.vdot(fm, fm).real
    return complex(np.exp(ex))


def overlap_matrix(F: np.ndarray, G: np.ndarray) -> np.ndarray:
    """Pairwise overlaps S[n, m] = <F_n|G_m> for rows of F and G."""
    cross = F.conj() @ G.T
    nf = 0.5 * np.einsum("nl,nl->n", F.conj(), F).real
    ng = 0.5 * np.einsum("ml,ml->m", G.conj(), G).real
    return np.exp(cross - nf[:, None] - ng[None, :])


def norm(state: MultiDState) -> float:
    """<D|D> = A^+ S_ff A + B^+ S_gg B (real and non-negative)."""
    sff = overlap_matrix(state.f, state.f)
    sgg = overlap_matrix(state.g_eff, state.g_eff)
    val = np.vdot(state.a, sff @ state.a) + np.vdot(state.b, sgg @ state.b)
    return float(val.real)


def expect_sigma_z(state: MultiDState) -> float:
    """Normalized population difference <sigma_z>; lies in [-1, 1]."""
    sff = overlap_matrix(state.f, state.f)
    sgg = overlap_matrix(state.g_eff, state.g_eff)
    pop1 = np.vdot(state.a, sff @ state.a).real
    pop2 = np.vdot(state.b, sgg @ state.b).real
    total = pop1 + pop2
    if total <= 0.0 or not np.isfinite(total):
        raise DegenerateStateError(f"state norm is {total}; <sigma_z> undefined")
    return float((pop1 - pop2) / total)


def expect_energy(state: MultiDState, sys: SystemParams, bath: DiscretizedBath) -> float:
    """Normalized energy expectation <D|H|D> / <D|D>."""
    a, b = state.a, state.b
    F, G = state.f, state.g_eff
    w, lam = bath.omegas, bath.lambdas
    sff = overlap_matrix(F, F)
    sgg = overlap_matrix(G, G)
    sfg = overlap_matrix(F, G)

    nrm = (np.vdot(a, sff @ a) + np.vdot(b, sgg @ b)).real
    if nrm <= 0.0 or not np.isfinite(nrm):
        raise DegenerateStateError(f"state norm is {nrm}; energy undefined")

    # per-pair bath energy and coupling sums
    th_ff = (F.conj() * w) @ F.T
    th_gg = (G.conj() * w) @ G.T
    lam_ff = (F.conj() @ lam)[:, None] + (F @ lam)[None, :]
    lam_gg = (G.conj() @ lam)[:, None] + (G @ lam)[None, :]

    e_sector1 = np.vdot(a, (sff * (0.5 * sys.epsilon + th_ff + 0.5 * lam_ff)) @ a)
    e_sector2 = np.vdot(b, (sgg * (-0.5 * sys.epsilon + th_gg - 0.5 * lam_gg)) @ b)
    e_tunnel = -0.5 * sys.delta * (np.vdot(a, sfg @ b) + np.vdot(b, sfg.conj().T @ a))
    return float((e_sector1 + e_sector2 + e_tunnel).real / nrm)


def initial_state(
    variant: AnsatzVariant,
    m: int,
    alpha: np.ndarray,
    noise: np.ndarray | None = None,
) -> MultiDState:
    """Initial trial state |1> x |alpha>: A_1 = 1, all other amplitudes zero,
    every branch displaced to alpha plus an optional per-(branch, mode)
    perturbation that lifts the exact rank deficiency of identical branches.
    """
    if m < 1:
        raise ValueError("multiplicity must be >= 1")
    alpha = np.asarray(alpha, dtype=complex)
    if alpha.ndim != 1:
        raise ValueError("alpha must be a 1-d displacement vector")
    n_b = alpha.size
    disp = np.tile(alpha, (m, 1))
    if noise is not None:
        noise = np.asarray(noise, dtype=complex)
        if noise.shape != (m, n_b):
            raise ValueError(f"noise must have shape ({m}, {n_b}), got {noise.shape}")
        disp = disp + noise
    a = np.zeros(m, dtype=complex)
    a[0] = 1.0
    b = np.zeros(m, dtype=complex)
    if variant is AnsatzVariant.D2:
        return MultiDState(variant=variant, a=a, b=b, f=disp)
    return MultiDState(variant=variant, a=a, b=b, f=disp, g=disp.copy())
