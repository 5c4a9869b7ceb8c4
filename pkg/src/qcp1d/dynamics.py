"""Master-equation time evolution and direct steady states for open chains.

The integrator is a fixed-step classic 4th-order scheme acting on the full
density matrix.  The right-hand side is applied with sparse Hamiltonian
products and per-site jump updates; the 4^L superoperator matrix is never
materialized here.  An optional boundary drive omega*F*(sx_1 + sx_L) models
the coupling of a cluster to its neighbours; in self-consistent mode F is
re-evaluated from the instantaneous boundary population at every stage, which
is the time-dependent cluster mean-field dynamics.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import linalg
from .model import (
    IntegrationError,
    ModelParams,
    SolverError,
    boundary_x_operator,
    build_hamiltonian,
    hermiticity_defect,
    number_diagonal,
    site_population_mask,
)

TRACE_DRIFT_ABORT = 1e-6
DIAG_FLOOR_ABORT = -1e-5
SYMMETRIZE_EVERY = 1000


@dataclass(frozen=True)
class IntegratorConfig:
    """Fixed-step integrator settings; rates in units of gamma."""

    dt: float = 5e-3
    t_max: float = 100.0
    convergence_window: float = 10.0
    convergence_tol: float = 1e-9
    record_dt: float = 0.1

    def validate(self, gamma: float) -> None:
        if self.dt <= 0 or self.t_max <= 0:
            raise ValueError("dt and t_max must be positive")
        if self.dt > 0.1 / gamma:
            raise ValueError(f"dt={self.dt} exceeds stability cap 0.1/gamma")


@dataclass
class TimeSeries:
    times: np.ndarray
    n_bar: np.ndarray
    site_populations: np.ndarray | None = None
    field: np.ndarray | None = None
    trace_drift_max: float = 0.0
    hermiticity_drift_max: float = 0.0
    converged_at: float | None = None


@dataclass
class _Rhs:
    """Cached operators for one evolution run."""

    K: sp.csr_matrix
    boundary: sp.csr_matrix | None
    omega: float
    gamma: float
    L: int
    mask1: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        self.mask1 = site_population_mask(1, self.L)

    def boundary_population(self, rho: np.ndarray) -> float:
        return float(np.real(rho.diagonal()[self.mask1].sum()))

    def __call__(self, rho: np.ndarray, f_n: float | None) -> np.ndarray:
        A = self.K @ rho
        if self.boundary is not None and f_n is not None and f_n != 0.0:
            A = A + (self.omega * f_n) * (self.boundary @ rho)
        out = -1j * (A - A.conj().T)
        from .model import jump_gather  # local import keeps module load light

        out += self.gamma * jump_gather(rho, self.L)
        return out


def _make_rhs(p: ModelParams, with_boundary: bool) -> _Rhs:
    H = build_hamiltonian(p)
    K = (H - 0.5j * p.gamma * sp.diags(number_diagonal(p.L))).tocsr()
    B = boundary_x_operator(p.L).tocsr() if with_boundary else None
    return _Rhs(K=K, boundary=B, omega=p.omega, gamma=p.gamma, L=p.L)


def evolve(p: ModelParams, rho0: np.ndarray, cfg: IntegratorConfig,
           effective_field: float | None = None, self_consistent: bool = False,
           record_sites: bool = False):
    """Integrate the master equation; returns (TimeSeries, final rho).

    effective_field freezes the boundary drive at a constant F; with
    self_consistent=True the drive follows the boundary population of the
    instantaneous state (the frozen value is then ignored).  The stepper
    keeps the trace renormalized, logs the drift, and aborts on invariant
    violations.  Integration stops early once the state stops moving (max
    change below convergence_tol over one convergence_window).
    """
    cfg.validate(p.gamma)
    if rho0.shape != (p.dim, p.dim):
        raise IntegrationError(f"rho0 shape {rho0.shape} does not match 2^L={p.dim}")
    rhs = _make_rhs(p, with_boundary=self_consistent or effective_field is not None)
    rho = rho0.astype(complex, copy=True)
    dt = cfg.dt
    n_steps = int(round(cfg.t_max / dt))
    record_every = max(1, int(round(cfg.record_dt / dt)))
    window_steps = max(1, int(round(cfg.convergence_window / dt)))

    def field_of(state):
        if self_consistent:
            return rhs.boundary_population(state)
        return effective_field

    times = [0.0]
    nbars = [_n_bar(rho, p.L)]
    sites = [_site_populations(rho, p.L)] if record_sites else None
    fields = [field_of(rho)] if (self_consistent or effective_field is not None) else None
    trace_drift_max = 0.0
    herm_drift_max = 0.0
    converged_at = None
    rho_window = rho.copy()

    for step in range(1, n_steps + 1):
        k1 = rhs(rho, field_of(rho))
        r2 = rho + (0.5 * dt) * k1
        k2 = rhs(r2, field_of(r2))
        r3 = rho + (0.5 * dt) * k2
        k3 = rhs(r3, field_of(r3))
        r4 = rho + dt * k3
        k4 = rhs(r4, field_of(r4))
        rho = rho + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)

        tr = float(np.real(np.trace(rho)))
        drift = abs(tr - 1.0)
        trace_drift_max = max(trace_drift_max, drift)
        if drift > TRACE_DRIFT_ABORT:
            raise IntegrationError(
                f"trace drift {drift:.3e} at t={step * dt:.3f} (dt too large?)"
            )
        rho /= tr
        if step % SYMMETRIZE_EVERY == 0:
            herm_drift_max = max(herm_drift_max, hermiticity_defect(rho))
            rho = 0.5 * (rho + rho.conj().T)
            dmin = float(rho.diagonal().real.min())
            if dmin < DIAG_FLOOR_ABORT:
                raise IntegrationError(f"negative population {dmin:.3e}")
        if step % record_every == 0 or step == n_steps:
            times.append(step * dt)
            nbars.append(_n_bar(rho, p.L))
            if record_sites:
                sites.append(_site_populations(rho, p.L))
            if fields is not None:
                fields.append(field_of(rho))
        if step % window_steps == 0:
            if np.max(np.abs(rho - rho_window)) < cfg.convergence_tol:
                converged_at = step * dt
                break
            rho_window = rho.copy()

    ts = TimeSeries(
        times=np.array(times),
        n_bar=np.array(nbars),
        site_populations=np.array(sites) if sites is not None else None,
        field=np.array(fields) if fields is not None else None,
        trace_drift_max=trace_drift_max,
        hermiticity_drift_max=herm_drift_max,
        converged_at=converged_at,
    )
    return ts, rho


def _n_bar(rho: np.ndarray, L: int) -> float:
    return float(np.real(rho.diagonal() @ number_diagonal(L)) / L)


def _site_populations(rho: np.ndarray, L: int) -> np.ndarray:
    diag = rho.diagonal().real
    return np.array([diag[site_population_mask(j, L)].sum() for j in range(1, L + 1)])


DENSE_STEADY_MAX_SITES = 5
DIRECT_STEADY_MAX_SITES = 10


def steady_state_from_h(H: sp.csr_matrix, L: int, gamma: float, x0=None):
    """Unit-trace null state of the generator built from an explicit H.

    Dense solve for small chains, preconditioned iterative solve otherwise;
    the generator residual must come out below 1e-10.
    """
    if L <= DENSE_STEADY_MAX_SITES:
        x = linalg.steady_state_dense(H, L, gamma)
        act = linalg.LindbladAction(H, L, gamma)
        res = float(np.linalg.norm(act.apply_vec(x)))
    else:
        x, res = linalg.steady_state_vec(H, L, gamma, x0=x0)
    if res > 1e-10:
        raise SolverError(f"steady-state residual {res:.2e} above 1e-10")
    rho = x.reshape((2**L, 2**L), order="F")
    rho = 0.5 * (rho + rho.conj().T)
    return rho


def steady_state_direct(p: ModelParams) -> np.ndarray:
    """Steady state of the bare chain (with probe, if set) by direct solve."""
    if p.L > DIRECT_STEADY_MAX_SITES:
        raise SolverError(f"direct steady state limited to L <= {DIRECT_STEADY_MAX_SITES}")
    return steady_state_from_h(build_hamiltonian(p), p.L, p.gamma)


def detect_plateau(ts: TimeSeries, slope_tol: float = 1e-3, floor: float = 1e-2,
                   min_duration: float = 10.0):
    """Longest stretch with |d n_bar/dt| < slope_tol and n_bar > floor.

    Returns (t_enter, t_exit, mean level) or None if no qualifying stretch
    lasts longer than min_duration (in 1/gamma).
    """
    t = ts.times
    n = ts.n_bar
    if t.size < 10:
        raise ValueError("series too short for plateau detection")
    slope = np.gradient(n, t)
    ok = (np.abs(slope) < slope_tol) & (n > floor)
    best = None
    start = None
    for i, flag in enumerate(np.append(ok, False)):
        if flag and start is None:
            start = i
        elif not flag and start is not None:
            dur = t[i - 1] - t[start]
            if dur > min_duration and (best is None or dur > best[1] - best[0]):
                best = (t[start], t[i - 1], float(n[start:i].mean()))
            start = None
    return best
