"""Dirac-Frenkel equations of motion for multi-Davydov trial states.

The variational parameters u = (A, B, f, g) obey metric * du/dt = -i * rhs,
where the metric is the Gram matrix of tangent vectors of the trial manifold
and rhs collects the Hamiltonian projections onto the same tangent vectors.
Both are assembled in a symmetrically rescaled tangent basis so that every
entry is expressed through normalized coherent-state overlaps (|S| <= 1) and
stays finite for arbitrarily large thermal displacements.

Parameter ordering in all flat vectors and matrices: amplitudes first
(A_1..A_M, B_1..B_M), then displacements row-major by branch (f_1*, f_2*, ...,
then g_1*, ... for D1).

After the linear solve, amplitude derivatives are mapped back from the
rescaled basis with dA_n = v_n + A_n Re(sum_l df_nl f_nl^*); displacement
derivatives are unchanged.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
from scipy.integrate import solve_ivp

from .ansatz import AnsatzVariant, MultiDState, expect_energy, expect_sigma_z, norm, overlap_matrix
from .model import DiscretizedBath, SystemParams


class TrajectoryAbortError(RuntimeError):
    """EOM solve became unrecoverably ill-conditioned."""

    def __init__(self, message, residual=None, condition=None, t=None):
        super().__init__(message)
        self.residual = residual
        self.condition = condition
        self.t = t


@dataclass(frozen=True, eq=False)
class IntegratorConfig:
    dt: float = 0.05
    t_final: float = 100.0
    # "adaptive": embedded RK45 on the rotating-frame variables;
    # "rk4": fixed-step classical RK4;
    # "etdrk4": fixed-step exponential RK4 with the bare mode rotation
    #           -i w_l f_nl treated exactly (large steps for stiff baths)
    scheme: str = "adaptive"
    tol_rel: float = 1e-8
    tol_abs: float = 1e-10
    reg_eps: float = 1e-10
    pinv_cutoff: float = 1e-12
    fallback_tol: float = 1e-8
    abort_residual: float = 1e-3
    rotating_frame: bool = True

    def __post_init__(self):
        if not (self.dt > 0):
            raise ValueError(f"dt must be positive, got {self.dt}")
        if self.t_final < 0:
            raise ValueError(f"t_final must be >= 0, got {self.t_final}")
        if self.reg_eps < 0:
            raise ValueError(f"reg_eps must be >= 0, got {self.reg_eps}")
        if self.scheme not in ("adaptive", "rk4", "etdrk4"):
            raise ValueError(f"unknown scheme {self.scheme!r}")


@dataclass(frozen=True, eq=False)
class VariationalDerivative:
    da: np.ndarray
    db: np.ndarray
    df: np.ndarray
    dg: np.ndarray | None = None


@dataclass
class SolveInfo:
    used_pinv: bool = False
    residual: float = 0.0
    condition: float = math.nan
    min_eigenvalue: float = math.nan
    shift: float = 0.0


@dataclass
class TrajectoryDiagnostics:
    n_rhs_evals: int = 0
    n_pinv_solves: int = 0
    max_residual: float = 0.0
    max_condition: float = math.nan
    aborted: bool = False


@dataclass(frozen=True, eq=False)
class TrajectoryResult:
    times: np.ndarray
    pz: np.ndarray
    norms: np.ndarray
    energies: np.ndarray
    norm_drift: float
    energy_drift: float
    diagnostics: TrajectoryDiagnostics = field(default_factory=TrajectoryDiagnostics)
    final_state: MultiDState | None = None


def param_count(m: int, n_b: int, variant: AnsatzVariant) -> int:
    return 2 * m + (2 if variant is AnsatzVariant.D1 else 1) * m * n_b


def _sector_metric(amp, disp, s):
    """Gram block over [amplitudes, displacements] of one electronic sector."""
    m, n_b = disp.shape
    t = amp.conj()[:, None] * amp[None, :] * s
    a_f = (s[:, :, None] * amp[None, :, None] * disp.conj()[:, None, :]).reshape(m, m * n_b)
    ff = np.kron(t, np.eye(n_b)) + np.einsum("nm,nk,ml->nlmk", t, disp.conj(), disp).reshape(
        m * n_b, m * n_b
    )
    top = np.hstack([s, a_f])
    bottom = np.hstack([a_f.conj().T, ff])
    return np.vstack([top, bottom])


def _pair_sums(F, G, w, lam):
    """Per-pair bath energy Theta[n,m] = sum_k w_k F_nk^* G_mk and coupling
    Lambda[n,m] = sum_k lam_k (F_nk^* + G_mk)."""
    theta = (F.conj() * w) @ G.T
    lam_sum = (F.conj() @ lam)[:, None] + (G @ lam)[None, :]
    return theta, lam_sum


def _assemble_d1(state, sys, bath):
    a, b = state.a, state.b
    F, G = state.f, state.g
    w, lam = bath.omegas, bath.lambdas
    eps, delta = sys.epsilon, sys.delta

    sff = overlap_matrix(F, F)
    sgg = overlap_matrix(G, G)
    sfg = overlap_matrix(F, G)

    th_ff, lam_ff = _pair_sums(F, F, w, lam)
    th_gg, lam_gg = _pair_sums(G, G, w, lam)
    h_ff = 0.5 * eps + th_ff + 0.5 * lam_ff
    h_gg = -0.5 * eps + th_gg - 0.5 * lam_gg

    metric1 = _sector_metric(a, F, sff)
    metric2 = _sector_metric(b, G, sgg)

    p = sff * a[None, :]
    rhs_a = (sff * h_ff) @ a - 0.5 * delta * (sfg @ b)
    rhs_f = a.conj()[:, None] * (
        (p * h_ff) @ F
        + (p @ F) * w[None, :]
        + p.sum(axis=1)[:, None] * (0.5 * lam)[None, :]
        - 0.5 * delta * (sfg @ (b[:, None] * G))
    )
    q = sgg * b[None, :]
    rhs_b = (sgg * h_gg) @ b - 0.5 * delta * (sfg.conj().T @ a)
    rhs_g = b.conj()[:, None] * (
        (q * h_gg) @ G
        + (q @ G) * w[None, :]
        - q.sum(axis=1)[:, None] * (0.5 * lam)[None, :]
        - 0.5 * delta * (sfg.conj().T @ (a[:, None] * F))
    )
    rhs1 = np.concatenate([rhs_a, rhs_f.ravel()])
    rhs2 = np.concatenate([rhs_b, rhs_g.ravel()])
    return metric1, rhs1, metric2, rhs2


def _assemble_d2(state, sys, bath):
    a, b = state.a, state.b
    F = state.f
    w, lam = bath.omegas, bath.lambdas
    eps, delta = sys.epsilon, sys.delta
    m, n_b = F.shape

    s = overlap_matrix(F, F)
    theta, lam_s = _pair_sums(F, F, w, lam)
    h_p = 0.5 * eps + theta + 0.5 * lam_s
    h_m = -0.5 * eps + theta - 0.5 * lam_s

    a_f = (s[:, :, None] * a[None, :, None] * F.conj()[:, None, :]).reshape(m, m * n_b)
    b_f = (s[:, :, None] * b[None, :, None] * F.conj()[:, None, :]).reshape(m, m * n_b)
    t = (a.conj()[:, None] * a[None, :] + b.conj()[:, None] * b[None, :]) * s
    ff = np.kron(t, np.eye(n_b)) + np.einsum("nm,nk,ml->nlmk", t, F.conj(), F).reshape(
        m * n_b, m * n_b
    )
    zero = np.zeros((m, m), dtype=complex)
    metric = np.vstack(
        [
            np.hstack([s, zero, a_f]),
            np.hstack([zero, s, b_f]),
            np.hstack([a_f.conj().T, b_f.conj().T, ff]),
        ]
    )

    pa = s * a.conj()[:, None] * a[None, :]
    pb = s * b.conj()[:, None] * b[None, :]
    pab = s * (a.conj()[:, None] * b[None, :] + b.conj()[:, None] * a[None, :])
    rhs_a = (s * h_p) @ a - 0.5 * delta * (s @ b)
    rhs_b = (s * h_m) @ b - 0.5 * delta * (s @ a)
    rhs_f = (
        (pa * h_p) @ F
        + (pa @ F) * w[None, :]
        + pa.sum(axis=1)[:, None] * (0.5 * lam)[None, :]
        + (pb * h_m) @ F
        + (pb @ F) * w[None, :]
        - pb.sum(axis=1)[:, None] * (0.5 * lam)[None, :]
        - 0.5 * delta * (pab @ F)
    )
    rhs = np.concatenate([rhs_a, rhs_b, rhs_f.ravel()])
    return metric, rhs


def assemble_eom(state: MultiDState, sys: SystemParams, bath: DiscretizedBath):
    """Full variational metric (Hermitian PSD) and rhs for the state, in the
    documented parameter ordering; metric * du/dt = -i * rhs."""
    if state.n_b != bath.n_b:
        raise ValueError(f"state has {state.n_b} modes but bath has {bath.n_b}")
    m, n_b = state.m, state.n_b
    if state.variant is AnsatzVariant.D2:
        return _assemble_d2(state, sys, bath)
    metric1, rhs1, metric2, rhs2 = _assemble_d1(state, sys, bath)
    k = param_count(m, n_b, state.variant)
    metric = np.zeros((k, k), dtype=complex)
    rhs = np.zeros(k, dtype=complex)
    # interleave the two decoupled sector blocks into the documented ordering
    idx1 = np.concatenate([np.arange(m), 2 * m + np.arange(m * n_b)])
    idx2 = np.concatenate([m + np.arange(m), 2 * m + m * n_b + np.arange(m * n_b)])
    metric[np.ix_(idx1, idx1)] = metric1
    metric[np.ix_(idx2, idx2)] = metric2
    rhs[idx1] = rhs1
    rhs[idx2] = rhs2
    return metric, rhs


def solve_eom(
    metric: np.ndarray,
    rhs: np.ndarray,
    reg_eps: float = 1e-10,
    pinv_cutoff: float = 1e-12,
    fallback_tol: float = 1e-8,
    abort_residual: float = 1e-3,
):
    """Solve (metric + reg_eps tr(metric)/K I) du = -i rhs; fall back to an
    eigenvalue-thresholded pseudo-inverse when the regularized residual is
    too large. Returns (du, SolveInfo)."""
    k = metric.shape[0]
    info = SolveInfo()
    rhs_scale = float(np.linalg.norm(rhs))
    target = -1j * rhs
    trace = float(np.trace(metric).real)
    info.shift = reg_eps * trace / k if k else 0.0

    udot = None
    if info.shift >= 0:
        try:
            shifted = metric + info.shift * np.eye(k)
            udot = scipy.linalg.solve(shifted, target, assume_a="her")
        except (np.linalg.LinAlgError, scipy.linalg.LinAlgError, ValueError):
            udot = None
    if udot is not None and not np.all(np.isfinite(udot)):
        udot = None
    if udot is not None:
        info.residual = float(np.linalg.norm(metric @ udot - target)) / max(rhs_scale, 1e-300)
        if info.residual <= fallback_tol:
            return udot, info

    # pseudo-inverse path: drop eigenvalues below pinv_cutoff * max eigenvalue
    info.used_pinv = True
    evals, evecs = np.linalg.eigh(metric)
    info.min_eigenvalue = float(evals[0])
    top = float(evals[-1]) if evals.size else 0.0
    keep = evals > pinv_cutoff * max(top, 0.0)
    if not np.any(keep):
        raise TrajectoryAbortError(
            "variational metric is numerically zero", residual=math.inf, condition=math.inf
        )
    info.condition = top / float(evals[keep][0])
    inv = np.zeros_like(evals)
    inv[keep] = 1.0 / evals[keep]
    udot = evecs @ (inv * (evecs.conj().T @ target))
    info.residual = float(np.linalg.norm(metric @ udot - target)) / max(rhs_scale, 1e-300)
    if info.residual > abort_residual:
        raise TrajectoryAbortError(
            f"EOM solve residual {info.residual:.3e} above hard cap {abort_residual:.1e}",
            residual=info.residual,
            condition=info.condition,
        )
    return udot, info


def _merge_info(acc: SolveInfo, new: SolveInfo) -> SolveInfo:
    acc.used_pinv = acc.used_pinv or new.used_pinv
    acc.residual = max(acc.residual, new.residual)
    if not math.isnan(new.condition):
        acc.condition = new.condition if math.isnan(acc.condition) else max(acc.condition, new.condition)
    if not math.isnan(new.min_eigenvalue):
        acc.min_eigenvalue = (
            new.min_eigenvalue
            if math.isnan(acc.min_eigenvalue)
            else min(acc.min_eigenvalue, new.min_eigenvalue)
        )
    return acc


def state_derivative(
    state: MultiDState, sys: SystemParams, bath: DiscretizedBath, cfg: IntegratorConfig
):
    """Time derivative of the conventional parameters (A, B, f, g).

    D1 metrics are block diagonal across the two electronic sectors, so the
    two blocks are solved independently.
    """
    m, n_b = state.m, state.n_b
    kwargs = dict(
        reg_eps=cfg.reg_eps,
        pinv_cutoff=cfg.pinv_cutoff,
        fallback_tol=cfg.fallback_tol,
        abort_residual=cfg.abort_residual,
    )
    if state.variant is AnsatzVariant.D2:
        metric, rhs = _assemble_d2(state, sys, bath)
        udot, info = solve_eom(metric, rhs, **kwargs)
        va = udot[:m]
        vb = udot[m : 2 * m]
        df = udot[2 * m :].reshape(m, n_b)
        gauge = np.einsum("nl,nl->n", df, state.f.conj()).real
        da = va + state.a * gauge
        db = vb + state.b * gauge
        return VariationalDerivative(da=da, db=db, df=df), info
    metric1, rhs1, metric2, rhs2 = _assemble_d1(state, sys, bath)
    u1, info1 = solve_eom(metric1, rhs1, **kwargs)
    u2, info2 = solve_eom(metric2, rhs2, **kwargs)
    info = _merge_info(info1, info2)
    va = u1[:m]
    df = u1[m:].reshape(m, n_b)
    vb = u2[:m]
    dg = u2[m:].reshape(m, n_b)
    da = va + state.a * np.einsum("nl,nl->n", df, state.f.conj()).real
    db = vb + state.b * np.einsum("nl,nl->n", dg, state.g.conj()).real
    return VariationalDerivative(da=da, db=db, df=df, dg=dg), info


def state_to_vector(state: MultiDState) -> np.ndarray:
    parts = [state.a, state.b, state.f.ravel()]
    if state.variant is AnsatzVariant.D1:
        parts.append(state.g.ravel())
    return np.concatenate(parts)


def vector_to_state(y: np.ndarray, m: int, n_b: int, variant: AnsatzVariant) -> MultiDState:
    a = y[:m]
    b = y[m : 2 * m]
    f = y[2 * m : 2 * m + m * n_b].reshape(m, n_b)
    if variant is AnsatzVariant.D2:
        return MultiDState(variant=variant, a=a, b=b, f=f)
    g = y[2 * m + m * n_b :].reshape(m, n_b)
    return MultiDState(variant=variant, a=a, b=b, f=f, g=g)


def _derivative_vector(state, sys, bath, cfg):
    deriv, info = state_derivative(state, sys, bath, cfg)
    parts = [deriv.da, deriv.db, deriv.df.ravel()]
    if state.variant is AnsatzVariant.D1:
        parts.append(deriv.dg.ravel())
    return np.concatenate(parts), info


def step(state: MultiDState, sys: SystemParams, bath: DiscretizedBath, cfg: IntegratorConfig):
    """One classical RK4 step of size cfg.dt in the lab frame."""
    m, n_b, variant = state.m, state.n_b, state.variant
    dt = cfg.dt
    acc = SolveInfo()
    y0 = state_to_vector(state)

    def rhs(y):
        st = vector_to_state(y, m, n_b, variant)
        dy, info = _derivative_vector(st, sys, bath, cfg)
        _merge_info(acc, info)
        return dy

    k1 = rhs(y0)
    k2 = rhs(y0 + 0.5 * dt * k1)
    k3 = rhs(y0 + 0.5 * dt * k2)
    k4 = rhs(y0 + dt * k3)
    y1 = y0 + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
    new_state = vector_to_state(y1, m, n_b, variant)
    diagnostics = {
        "norm_drift": abs(norm(new_state) - norm(state)),
        "energy_drift": abs(expect_energy(new_state, sys, bath) - expect_energy(state, sys, bath)),
        "solve": acc,
    }
    return new_state, diagnostics


def _phi_functions(z: np.ndarray):
    """phi_1..phi_3 for the exponential RK scheme, series-stabilized near 0."""
    z = np.asarray(z, dtype=complex)
    small = np.abs(z) < 0.25
    zs = np.where(small, 0.0, z)
    with np.errstate(invalid="ignore", divide="ignore"):
        ez = np.exp(zs)
        phi1 = np.where(small, 0.0j, (ez - 1.0) / zs)
        phi2 = np.where(small, 0.0j, (ez - 1.0 - zs) / zs**2)
        phi3 = np.where(small, 0.0j, (ez - 1.0 - zs - 0.5 * zs**2) / zs**3)
    # Taylor fallback: phi_k(z) = sum_j z^j / (j + k)!
    zt = np.where(small, z, 0.0)
    t1 = t2 = t3 = 0.0
    for j in range(9, -1, -1):
        t1 = t1 * zt + 1.0 / math.factorial(j + 1)
        t2 = t2 * zt + 1.0 / math.factorial(j + 2)
        t3 = t3 * zt + 1.0 / math.factorial(j + 3)
    return (
        np.where(small, t1, phi1),
        np.where(small, t2, phi2),
        np.where(small, t3, phi3),
    )


class _EtdRk4Stepper:
    """Cox-Matthews exponential RK4 with diagonal linear part L."""

    def __init__(self, lin: np.ndarray, h: float):
        z = lin * h
        p1, p2, p3 = _phi_functions(z)
        p1h, _, _ = _phi_functions(0.5 * z)
        self.h = h
        self.e_full = np.exp(z)
        self.e_half = np.exp(0.5 * z)
        self.stage = 0.5 * h * p1h
        self.w1 = h * (p1 - 3.0 * p2 + 4.0 * p3)
        self.w23 = h * (2.0 * p2 - 4.0 * p3)
        self.w4 = h * (4.0 * p3 - p2)
        self.lin = lin

    def step(self, t, y, nonlinear):
        h = self.h
        n1 = nonlinear(t, y)
        a = self.e_half * y + self.stage * n1
        n2 = nonlinear(t + 0.5 * h, a)
        b = self.e_half * y + self.stage * n2
        n3 = nonlinear(t + 0.5 * h, b)
        c = self.e_half * a + self.stage * (2.0 * n3 - n1)
        n4 = nonlinear(t + h, c)
        return self.e_full * y + self.w1 * n1 + self.w23 * (n2 + n3) + self.w4 * n4


def _energy_scale(e0: float, sys: SystemParams, bath: DiscretizedBath) -> float:
    # near-zero total energy is common (unbiased, weakly displaced starts);
    # normalize drift by the larger of |E(0)| and the bare dynamical scales
    return max(abs(e0), 0.5 * (abs(sys.epsilon) + abs(sys.delta)), 1e-12)


def run_trajectory(
    initial: MultiDState,
    sys: SystemParams,
    bath: DiscretizedBath,
    cfg: IntegratorConfig,
    t_grid: np.ndarray,
) -> TrajectoryResult:
    """Integrate one trajectory and record P_z, norm, and energy on t_grid."""
    t_grid = np.asarray(t_grid, dtype=float)
    if t_grid.ndim != 1 or t_grid.size == 0:
        raise ValueError("t_grid must be a non-empty 1-d array")
    if np.any(np.diff(t_grid) <= 0) or t_grid[0] < 0 or t_grid[-1] > cfg.t_final + 1e-12:
        raise ValueError("t_grid must be strictly increasing within [0, t_final]")
    m, n_b, variant = initial.m, initial.n_b, initial.variant
    w = bath.omegas
    diag = TrajectoryDiagnostics()
    acc = SolveInfo()

    n_f = m * n_b

    def to_rotating(y, t):
        # displacements are stored as f * exp(i w t) so the fast bare phase
        # rotation is removed from the integrated variables
        out = y.copy()
        phase = np.exp(1j * w * t)
        out[2 * m : 2 * m + n_f] = (y[2 * m : 2 * m + n_f].reshape(m, n_b) * phase).ravel()
        if variant is AnsatzVariant.D1:
            out[2 * m + n_f :] = (y[2 * m + n_f :].reshape(m, n_b) * phase).ravel()
        return out

    def to_lab(y, t):
        out = y.copy()
        phase = np.exp(-1j * w * t)
        out[2 * m : 2 * m + n_f] = (y[2 * m : 2 * m + n_f].reshape(m, n_b) * phase).ravel()
        if variant is AnsatzVariant.D1:
            out[2 * m + n_f :] = (y[2 * m + n_f :].reshape(m, n_b) * phase).ravel()
        return out

    rotating = cfg.rotating_frame

    def fun(t, y_real):
        y = y_real.view(complex)
        y_lab = to_lab(y, t) if rotating else y
        st = vector_to_state(y_lab, m, n_b, variant)
        try:
            dy, info = _derivative_vector(st, sys, bath, cfg)
        except TrajectoryAbortError as exc:
            exc.t = t
            diag.aborted = True
            raise
        diag.n_rhs_evals += 1
        if info.used_pinv:
            diag.n_pinv_solves += 1
        _merge_info(acc, info)
        if rotating:
            # d/dt (f e^{iwt}) = (df + i w f) e^{iwt}
            out = dy.copy()
            phase = np.exp(1j * w * t)
            fl = y_lab[2 * m : 2 * m + n_f].reshape(m, n_b)
            dfl = dy[2 * m : 2 * m + n_f].reshape(m, n_b)
            out[2 * m : 2 * m + n_f] = ((dfl + 1j * w * fl) * phase).ravel()
            if variant is AnsatzVariant.D1:
                gl = y_lab[2 * m + n_f :].reshape(m, n_b)
                dgl = dy[2 * m + n_f :].reshape(m, n_b)
                out[2 * m + n_f :] = ((dgl + 1j * w * gl) * phase).ravel()
            dy = out
        return dy.view(float)

    y0 = state_to_vector(initial).astype(complex)
    if rotating and t_grid[0] != 0.0:
        # the integration always starts at t=0 with the supplied state
        pass
    t_end = float(t_grid[-1])

    states = []
    if cfg.scheme == "adaptive":
        eval_times = t_grid
        if eval_times[0] > 0.0:
            eval_times = np.concatenate([[0.0], eval_times])
        sol = solve_ivp(
            fun,
            (0.0, t_end) if t_end > 0 else (0.0, 0.0),
            y0.view(float).copy(),
            method="RK45",
            t_eval=eval_times,
            rtol=cfg.tol_rel,
            atol=cfg.tol_abs,
            max_step=np.inf,
        )
        if not sol.success:
            raise TrajectoryAbortError(f"adaptive integrator failed: {sol.message}")
        keep = np.isin(sol.t, t_grid)
        for t, col in zip(sol.t[keep], sol.y[:, keep].T):
            y = col.view(complex)
            y_lab = to_lab(y, t) if rotating else y
            states.append((t, vector_to_state(y_lab, m, n_b, variant)))
    elif cfg.scheme == "etdrk4":
        lin = np.zeros(y0.size, dtype=complex)
        rot = np.tile(-1j * w, m)
        lin[2 * m : 2 * m + n_f] = rot
        if variant is AnsatzVariant.D1:
            lin[2 * m + n_f :] = rot

        def nonlinear(t, y):
            st = vector_to_state(y, m, n_b, variant)
            try:
                dy, info = _derivative_vector(st, sys, bath, cfg)
            except TrajectoryAbortError as exc:
                exc.t = t
                diag.aborted = True
                raise
            diag.n_rhs_evals += 1
            if info.used_pinv:
                diag.n_pinv_solves += 1
            _merge_info(acc, info)
            return dy - lin * y

        steppers = {}
        t_now = 0.0
        y = y0.copy()
        for t_target in t_grid:
            span = t_target - t_now
            if span > 0:
                n_sub = max(1, int(math.ceil(span / cfg.dt - 1e-12)))
                h = span / n_sub
                if h not in steppers:
                    steppers[h] = _EtdRk4Stepper(lin, h)
                stepper = steppers[h]
                for _ in range(n_sub):
                    y = stepper.step(t_now, y, nonlinear)
                    t_now += h
                t_now = t_target
            states.append((t_now, vector_to_state(y, m, n_b, variant)))
    else:
        t_now = 0.0
        y = y0.view(float).copy()
        for t_target in t_grid:
            span = t_target - t_now
            if span > 0:
                n_sub = max(1, int(math.ceil(span / cfg.dt - 1e-12)))
                h = span / n_sub
                for _ in range(n_sub):
                    k1 = fun(t_now, y)
                    k2 = fun(t_now + 0.5 * h, y + 0.5 * h * k1)
                    k3 = fun(t_now + 0.5 * h, y + 0.5 * h * k2)
                    k4 = fun(t_now + h, y + h * k3)
                    y = y + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
                    t_now += h
                t_now = t_target
            yc = y.view(complex)
            y_lab = to_lab(yc, t_now) if rotating else yc
            states.append((t_now, vector_to_state(y_lab, m, n_b, variant)))

    times = np.array([t for t, _ in states])
    pz = np.array([expect_sigma_z(st) for _, st in states])
    norms = np.array([norm(st) for _, st in states])
    energies = np.array([expect_energy(st, sys, bath) for _, st in states])
    n0 = norm(initial)
    e0 = expect_energy(initial, sys, bath)
    diag.max_residual = acc.residual
    diag.max_condition = acc.condition
    norm_drift = float(np.max(np.abs(norms - n0)) / n0)
    energy_drift = float(np.max(np.abs(energies - e0)) / _energy_scale(e0, sys, bath))
    return TrajectoryResult(
        times=times,
        pz=pz,
        norms=norms,
        energies=energies,
        norm_drift=norm_drift,
        energy_drift=energy_drift,
        diagnostics=diag,
        final_state=states[-1][1],
    )
