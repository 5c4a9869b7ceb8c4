"""Liouvillian spectra: dense diagonalization, shift-invert extraction of the
slow end, the pinned coherence family, and 1/L extrapolation of the gap.

Two eigenvalue families organize the slow spectrum.  A two-fold family sits
exactly at -gamma/2 for every branching rate: it lives in the invariant
subspace of coherences against the absorbing state, where the generator
reduces to the non-Hermitian matrix i*H - (gamma/2)*N of Hilbert-space
dimension (verified against dense spectra in the tests).  The other slow
branch is a real, non-degenerate eigenvalue that starts at -gamma for a
non-interacting chain and bends toward zero as the branching rate grows; it
is identified by continuation in omega (steps of at most 0.1*gamma), here
implemented as a Newton eigenpair tracker warm-started from the previous
grid point.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import linalg
from .fitting import linfit
from .model import (
    DimensionError,
    ModelParams,
    SolverError,
    build_hamiltonian,
    build_liouvillian_matrix,
    dark_state_index,
    matricize,
    number_diagonal,
    trace_vector,
)

DENSE_MAX_SITES = 6
KRYLOV_MAX_SITES = 10
KRYLOV_MAX_EIGS = 40
ZERO_MODE_TOL = 1e-9
DEGENERACY_TOL = 1e-8
TRACK_MAX_STEP = 0.1


@dataclass
class SpectrumResult:
    eigenvalues: np.ndarray  # sorted by descending real part
    gap: float
    mu_half: float | None
    mu_one: float | None
    steady_vec: np.ndarray | None


@dataclass
class GapExtrapolation:
    sizes: list[int]
    gap_values: list[float]
    slope: float
    intercept: float
    residual_rms: float
    gap_tdl: float


def _sorted_eigs(vals: np.ndarray) -> np.ndarray:
    order = np.lexsort((vals.imag, -vals.real))
    return vals[order]


def _real_clusters(vals: np.ndarray, tol: float = DEGENERACY_TOL):
    """Cluster the real eigenvalues; returns list of (center, multiplicity)."""
    reals = np.sort(vals[np.abs(vals.imag) < tol].real)
    clusters = []
    i = 0
    while i < reals.size:
        j = i
        while j + 1 < reals.size and reals[j + 1] - reals[j] <= tol:
            j += 1
        clusters.append((float(reals[i : j + 1].mean()), j - i + 1))
        i = j + 1
    return clusters


def _classify(vals: np.ndarray, omega: float, gamma: float):
    nonzero = vals[np.abs(vals) > ZERO_MODE_TOL]
    gap = float(-np.max(nonzero.real)) if nonzero.size else 0.0
    clusters = _real_clusters(nonzero)
    mu_half = None
    half_candidates = [c for c, m in clusters if m >= 2]
    if half_candidates:
        mu_half = min(half_candidates, key=lambda c: abs(c + 0.5 * gamma))
    if omega == 0.0:
        mu_one = -gamma
    else:
        simple = [c for c, m in clusters if m == 1]
        mu_one = max(simple) if simple else None
    return gap, mu_half, mu_one


def full_spectrum(p: ModelParams) -> SpectrumResult:
    """All 4^L eigenvalues by dense diagonalization (L <= 6).

    The steady eigenvector is rescaled to unit trace and checked to be a
    Hermitian positive state; a missing or non-unique null mode is an error.
    """
    if p.L > DENSE_MAX_SITES:
        raise DimensionError(f"dense spectrum limited to L <= {DENSE_MAX_SITES}")
    lv = build_liouvillian_matrix(p).toarray()
    vals, vecs = np.linalg.eig(lv)
    null_idx = np.flatnonzero(np.abs(vals) <= ZERO_MODE_TOL)
    if null_idx.size != 1:
        raise SolverError(f"expected one null mode, found {null_idx.size}")
    v = vecs[:, null_idx[0]]
    tr = trace_vector(2**p.L) @ v
    if abs(tr) < 1e-12:
        raise SolverError("null mode has vanishing trace")
    v = v / tr
    rho = matricize(v)
    if np.max(np.abs(rho - rho.conj().T)) > 1e-7:
        raise SolverError("steady eigenvector is not Hermitian within 1e-7")
    if np.linalg.eigvalsh(0.5 * (rho + rho.conj().T)).min() < -1e-7:
        raise SolverError("steady eigenvector is not positive within 1e-7")
    svals = _sorted_eigs(vals)
    gap, mu_half, mu_one = _classify(svals, p.omega, p.gamma)
    return SpectrumResult(svals, gap, mu_half, mu_one, v)


def coherence_sector_eigenvalues(p: ModelParams) -> np.ndarray:
    """Exact Liouvillian eigenvalues from the dark-coherence sector.

    Operators |down...down><psi| span an invariant subspace on which the
    generator acts as psi -> (i H - gamma/2 N) psi; its 2^L eigenvalues (and
    their conjugates, from the mirrored sector) are Liouvillian eigenvalues.
    The pinned real eigenvalue at -gamma/2 lives here.
    """
    H = build_hamiltonian(p).toarray()
    K2 = 1j * H - 0.5 * p.gamma * np.diag(number_diagonal(p.L))
    return np.linalg.eigvals(K2)


def pinned_half_eigenvalue(p: ModelParams, tol: float = 1e-6) -> float:
    """The real sector eigenvalue nearest -gamma/2; error if further than tol."""
    sec = coherence_sector_eigenvalues(p)
    reals = sec[np.abs(sec.imag) < 1e-9].real
    if reals.size == 0:
        raise SolverError("no real eigenvalue in the coherence sector")
    best = float(reals[np.argmin(np.abs(reals + 0.5 * p.gamma))])
    if abs(best + 0.5 * p.gamma) > tol:
        raise SolverError(f"pinned family off -gamma/2 by {best + 0.5 * p.gamma:.2e}")
    return best


def _mu1_seed(L: int) -> np.ndarray:
    """Population-decay mode of the non-interacting chain, as vec.

    Diagonal matrix with +1 on each single-excitation state and -L on the
    absorbing state: the symmetric combination of per-site decay modes that
    continues into the slow non-degenerate branch.
    """
    N = 2**L
    w = np.zeros(N * N, dtype=complex)
    dark = dark_state_index(L)
    for j in range(1, L + 1):
        idx = dark - 2 ** (L - j)
        w[idx * (N + 1)] = 1.0
    w[dark * (N + 1)] = -float(L)
    return w / np.linalg.norm(w)


class Mu1Tracker:
    """Continuation of the slow non-degenerate real eigenvalue from omega=0.

    Marches omega upward in fixed steps, Newton-refining the eigenpair with
    the previous point (linearly extrapolated) as the starting guess.  At
    omega=0 the value is exactly -gamma by construction.
    """

    def __init__(self, L: int, gamma: float = 1.0, step: float = TRACK_MAX_STEP):
        if step > TRACK_MAX_STEP + 1e-12:
            raise ValueError(f"continuation step must be <= {TRACK_MAX_STEP}")
        self.L = L
        self.gamma = gamma
        self.step = step
        self.lu = linalg.decay_preconditioner(L, gamma)
        seed = _mu1_seed(L)
        self.c = seed.conj() / np.linalg.norm(seed)
        self.omegas: list[float] = [0.0]
        self.mus: list[float] = [-gamma]
        self._w_prev = None
        self._w = seed

    def _newton_at(self, omega: float, mu_guess: complex, w_guess: np.ndarray):
        p = ModelParams(L=self.L, omega=omega, gamma=self.gamma)
        act = linalg.LindbladAction(build_hamiltonian(p), self.L, self.gamma)
        mu, w, _ = linalg.eigenpair_newton(
            act, self.lu, mu_guess, w_guess, self.c,
            newton_tol=1e-10, solve_rtol=1e-8,
        )
        if abs(mu.imag) > 1e-7:
            raise SolverError(f"tracked eigenvalue left the real axis at omega={omega}")
        return float(mu.real), w

    def advance_to(self, omega: float) -> None:
        while self.omegas[-1] + self.step < omega + 1e-12:
            self._advance_one(round(self.omegas[-1] + self.step, 12))

    def _advance_one(self, omega: float) -> None:
        mu_guess, w_guess = self._extrapolate()
        mu, w = self._newton_at(omega, mu_guess, w_guess)
        jump = abs(mu - np.real(mu_guess))
        allowed = max(0.06, 4.0 * abs(self.mus[-1] - (self.mus[-2] if len(self.mus) > 1 else self.mus[-1])) + 0.02)
        if jump > allowed:
            raise SolverError(
                f"continuation jumped by {jump:.3f} at omega={omega}; step too coarse"
            )
        self.omegas.append(omega)
        self.mus.append(mu)
        self._w_prev = self._w
        self._w = w

    def _extrapolate(self):
        if self._w_prev is None or len(self.mus) < 2:
            return complex(self.mus[-1]), self._w
        mu_g = 2.0 * self.mus[-1] - self.mus[-2]
        w_g = 2.0 * self._w - self._w_prev
        return complex(mu_g), w_g

    def value_at(self, omega: float) -> float:
        """mu1 at an arbitrary omega (one off-grid refinement if needed)."""
        if omega == 0.0:
            return -self.gamma
        self.advance_to(omega)
        base = min(range(len(self.omegas)), key=lambda i: abs(self.omegas[i] - omega))
        if abs(self.omegas[base] - omega) < 1e-12:
            return self.mus[base]
        mu, _ = self._newton_at(omega, complex(self.mus[base]),
                                self._w if base == len(self.omegas) - 1 else self._w)
        return mu

    def path(self) -> dict[float, float]:
        return dict(zip(self.omegas, self.mus))


_tracker_cache: dict[tuple[int, float, float], Mu1Tracker] = {}


def mu1_tracker(L: int, gamma: float = 1.0, step: float = TRACK_MAX_STEP) -> Mu1Tracker:
    key = (L, float(gamma), float(step))
    tr = _tracker_cache.get(key)
    if tr is None:
        tr = Mu1Tracker(L, gamma, step)
        _tracker_cache[key] = tr
    return tr


def track_mu1(L: int, omega: float, gamma: float = 1.0,
              step: float = TRACK_MAX_STEP) -> float:
    """|mu1| continuation value at a single omega (cached path)."""
    return mu1_tracker(L, gamma, step).value_at(omega)


def leading_spectrum(p: ModelParams, k: int = 8) -> SpectrumResult:
    """The k eigenvalues closest to zero via shift-invert Arnoldi.

    The inverse is applied iteratively (no sparse factorization survives the
    superoperator's fill); with no probe field the known absorbing null mode
    is deflated exactly, so the shift can sit at zero.
    """
    if p.L > KRYLOV_MAX_SITES:
        raise DimensionError(f"shift-invert path limited to L <= {KRYLOV_MAX_SITES}")
    if k > KRYLOV_MAX_EIGS:
        raise ValueError(f"k limited to {KRYLOV_MAX_EIGS}")
    N = 2**p.L
    act = linalg.LindbladAction(build_hamiltonian(p), p.L, p.gamma)
    lu = linalg.decay_preconditioner(p.L, p.gamma)
    tvec = trace_vector(N)
    deflate = p.h_x == 0.0
    if deflate:
        dark_vec_idx = dark_state_index(p.L) * (N + 1)
        shift_c = 10.0 * p.gamma * max(1, p.L)
        sigma = 0.0
    else:
        sigma = -1e-3 * p.gamma
        shift_c = 0.0

    def apply_a(x):
        y = act.apply_vec(x) - sigma * x
        if deflate:
            y[dark_vec_idx] -= shift_c * (tvec @ x)
        return y

    def op_inv(x):
        z, _, _ = linalg.fgmres(apply_a, lu.solve, x.astype(complex),
                                rtol=1e-10, atol=1e-13, max_applications=60000)
        return z

    k_arn = k - 1 if deflate else k
    lin = spla.LinearOperator((N * N, N * N), matvec=op_inv, dtype=complex)
    v0 = np.ones(N * N) / np.sqrt(N * N)
    try:
        lam = spla.eigs(lin, k=k_arn, which="LM", v0=v0, maxiter=8000,
                        tol=1e-10, return_eigenvectors=False)
    except spla.ArpackNoConvergence as exc:
        raise SolverError(f"Arnoldi did not converge: {exc}") from exc
    mus = sigma + 1.0 / lam
    if deflate:
        mus = np.append(mus, 0.0)
        zero_res = float(np.linalg.norm(act.apply_vec(_dark_vec(N))))
        if zero_res > ZERO_MODE_TOL:
            raise SolverError(f"dark-state residual {zero_res:.2e}")
        steady = _dark_vec(N)
    else:
        steady = None
    svals = _sorted_eigs(mus)
    gap, mu_half, mu_one = _classify(svals, p.omega, p.gamma)
    return SpectrumResult(svals, gap, mu_half, mu_one, steady)


def _dark_vec(N: int) -> np.ndarray:
    v = np.zeros(N * N, dtype=complex)
    v[N * N - 1] = 1.0
    return v


def extrapolate_gap(results: dict[int, float], gamma: float = 1.0) -> GapExtrapolation:
    """Linear fit of |mu1| against 1/L; the infinite-size gap is the fit
    intercept clamped to [0, gamma/2]."""
    if len(results) < 3:
        raise ValueError("need at least three sizes")
    sizes = sorted(results)
    gaps = [abs(results[L]) for L in sizes]
    fit = linfit([1.0 / L for L in sizes], gaps)
    gap_tdl = min(0.5 * gamma, max(0.0, fit.intercept))
    return GapExtrapolation(sizes=sizes, gap_values=gaps, slope=fit.slope,
                            intercept=fit.intercept, residual_rms=fit.residual_rms,
                            gap_tdl=gap_tdl)
