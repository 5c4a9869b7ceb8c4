"""Steady-state and spectral linear algebra for vectorized Lindblad generators.

Sparse direct factorization of the superoperator is hopeless beyond a few
sites (its adjacency graph is hypercube-like, so LU fill is near-dense), so
the workhorses here are:

* a dense row-replaced solve for small chains,
* flexible GMRES for larger chains, preconditioned by a short inner GMRES
  cycle built on an exactly-invertible triangular factor: the decay-only
  superoperator is lower triangular in the column-stacked basis (jumps only
  move weight toward the absorbing index, which sits last), and its one zero
  diagonal entry is exactly the row overwritten by the trace constraint.
* a Newton continuation for tracking one isolated generator eigenvalue
  through a parameter sweep, using the same solver core.

Everything is deterministic: fixed cycle lengths, fixed tolerances, no
random starting data.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .model import (
    SolverError,
    build_liouvillian_from_parts,
    jump_gather,
    number_diagonal,
    trace_vector,
)


class LindbladAction:
    """Apply the Lindblad generator in matrix form,
    rho -> -i(K rho - rho K+) + gamma * sum_j sm_j rho sp_j,
    with K = H - (i gamma / 2) N.

    Much cheaper than a sparse matvec on the 4^L stacked form, and exact for
    arbitrary (not necessarily Hermitian) rho.
    """

    def __init__(self, H: sp.csr_matrix, L: int, gamma: float):
        self.N = H.shape[0]
        self.L = L
        self.gamma = gamma
        self.K = (H - 0.5j * gamma * sp.diags(number_diagonal(L))).tocsr()
        self.napply = 0

    def apply_matrix(self, rho: np.ndarray) -> np.ndarray:
        self.napply += 1
        out = -1j * (self.K @ rho - (self.K @ rho.conj().T).conj().T)
        out += self.gamma * jump_gather(rho, self.L)
        return out

    def apply_vec(self, x: np.ndarray) -> np.ndarray:
        rho = x.reshape((self.N, self.N), order="F")
        return self.apply_matrix(rho).flatten(order="F")


_tri_lu_cache: dict[tuple[int, float], object] = {}


def decay_preconditioner(L: int, gamma: float):
    """SuperLU factors of the triangular decay superoperator with the last
    row replaced by the trace row.  Independent of H, so cached per (L, gamma).
    """
    key = (L, float(gamma))
    lu = _tri_lu_cache.get(key)
    if lu is None:
        N = 2**L
        M0 = build_liouvillian_from_parts(sp.csr_matrix((N, N), dtype=complex), L, gamma)
        t = trace_vector(N).conj()
        M = sp.vstack([M0.tocsr()[: N * N - 1, :], sp.csr_matrix(t.reshape(1, -1))], format="csc")
        lu = spla.splu(M, permc_spec="NATURAL", diag_pivot_thresh=0.0)
        _tri_lu_cache[key] = lu
    return lu


def _gmres_cycle(apply_a, apply_mr, v, m):
    """One right-preconditioned GMRES cycle of m steps for A z = v, from zero.

    Returns (z, n_applications).  Used as the inner smoother of fgmres.
    """
    n = v.shape[0]
    beta = np.linalg.norm(v)
    if beta == 0.0:
        return np.zeros_like(v), 0
    Q = np.empty((m + 1, n), dtype=complex)
    Hh = np.zeros((m + 1, m), dtype=complex)
    Q[0] = v / beta
    j = 0
    while j < m:
        w = apply_a(apply_mr(Q[j]))
        h = Q[: j + 1].conj() @ w
        w -= Q[: j + 1].T @ h
        h2 = Q[: j + 1].conj() @ w
        w -= Q[: j + 1].T @ h2
        Hh[: j + 1, j] = h + h2
        hj = np.linalg.norm(w)
        Hh[j + 1, j] = hj
        j += 1
        if hj <= 1e-14 * beta:
            break
        Q[j] = w / hj
    g = np.zeros(j + 1, dtype=complex)
    g[0] = beta
    y, *_ = np.linalg.lstsq(Hh[: j + 1, :j], g, rcond=None)
    return apply_mr(Q[:j].T @ y), j


def fgmres(apply_a, apply_mr, b, x0=None, rtol=1e-11, atol=1e-13,
           inner_m=15, outer_m=40, max_applications=30000):
    """Flexible GMRES with an inner GMRES(inner_m) cycle as preconditioner.

    apply_mr is the stationary right preconditioner used inside the inner
    cycles.  Convergence is measured on the true residual.  Returns
    (x, residual_norm, n_applications); raises SolverError on stall.
    """
    n = b.shape[0]
    target = max(rtol * np.linalg.norm(b), atol)
    x = np.zeros(n, dtype=complex) if x0 is None else x0.astype(complex, copy=True)
    napp = 0
    V = np.empty((outer_m + 1, n), dtype=complex)
    Z = np.empty((outer_m, n), dtype=complex)
    Hh = np.zeros((outer_m + 1, outer_m), dtype=complex)
    while True:
        r = b - apply_a(x)
        napp += 1
        rnorm = np.linalg.norm(r)
        if rnorm <= target:
            return x, float(rnorm), napp
        if napp >= max_applications:
            raise SolverError(
                f"FGMRES stalled: residual {rnorm:.3e} after {napp} applications"
            )
        V[0] = r / rnorm
        Hh[:] = 0.0
        g = np.zeros(outer_m + 1, dtype=complex)
        g[0] = rnorm
        j = 0
        while j < outer_m and napp < max_applications:
            z, used = _gmres_cycle(apply_a, apply_mr, V[j], inner_m)
            napp += used
            Z[j] = z
            w = apply_a(z)
            napp += 1
            h = V[: j + 1].conj() @ w
            w -= V[: j + 1].T @ h
            h2 = V[: j + 1].conj() @ w
            w -= V[: j + 1].T @ h2
            Hh[: j + 1, j] = h + h2
            hj = np.linalg.norm(w)
            Hh[j + 1, j] = hj
            j += 1
            if hj <= 1e-14 * rnorm:
                break
            V[j] = w / hj
            y, *_ = np.linalg.lstsq(Hh[: j + 1, :j], g[: j + 1], rcond=None)
            est = np.linalg.norm(Hh[: j + 1, :j] @ y - g[: j + 1])
            if est <= 0.5 * target:
                break
        y, *_ = np.linalg.lstsq(Hh[: j + 1, :j], g[: j + 1], rcond=None)
        x = x + Z[:j].T @ y


def steady_state_vec(H: sp.csr_matrix, L: int, gamma: float, x0=None,
                     rtol=3e-11, max_applications=30000):
    """Null vector of the Lindblad generator with unit trace, as vec(rho).

    Row-replaced formulation: the generator row at the absorbing index is
    overwritten with the trace row, giving a nonsingular system solved by
    fgmres.  Returns (x, norm of generator residual).
    """
    N = 2**L
    act = LindbladAction(H, L, gamma)
    last = N * N - 1
    tvec = trace_vector(N)

    def apply_a(x):
        y = act.apply_vec(x)
        y[last] = tvec @ x
        return y

    lu = decay_preconditioner(L, gamma)
    b = np.zeros(N * N, dtype=complex)
    b[last] = 1.0
    x, _, _ = fgmres(apply_a, lu.solve, b, x0=x0, rtol=rtol,
                     max_applications=max_applications)
    x = x / (tvec @ x)
    gen_res = act.apply_vec(x)
    return x, float(np.linalg.norm(gen_res))


def steady_state_dense(H: sp.csr_matrix, L: int, gamma: float):
    """Dense row-replaced solve; practical up to L = 6 (4^L <= 4096)."""
    N = 2**L
    lv = build_liouvillian_from_parts(H, L, gamma).toarray()
    lv[-1, :] = trace_vector(N).conj()
    b = np.zeros(N * N, dtype=complex)
    b[-1] = 1.0
    try:
        x = np.linalg.solve(lv, b)
    except np.linalg.LinAlgError as exc:
        raise SolverError(f"singular steady-state system: {exc}") from exc
    x = x / (trace_vector(N) @ x)
    return x


def eigenpair_newton(act: LindbladAction, lu, mu0: complex, w0: np.ndarray,
                     c: np.ndarray, newton_tol=1e-10, max_newton=12,
                     solve_rtol=1e-9, max_applications=20000):
    """Refine an eigenpair of the generator by Newton on (A w - mu w, c.w - 1).

    Each step solves the bordered linearization with fgmres; `c` fixes the
    eigenvector normalization and must not be orthogonal to the target
    eigenvector.  Returns (mu, w, relative_residual).
    """
    w = w0 / (c @ w0)
    mu = complex(mu0)
    n = w.shape[0]
    for _ in range(max_newton):
        Aw = act.apply_vec(w)
        res = Aw - mu * w
        rn = float(np.linalg.norm(res)) / max(1.0, float(np.linalg.norm(w)))
        if rn <= newton_tol:
            return mu, w, rn

        def apply_aug(z):
            dw, dmu = z[:n], z[n]
            top = act.apply_vec(dw) - mu * dw - dmu * w
            bot = np.array([c @ dw])
            return np.concatenate([top, bot])

        def apply_maug(z):
            return np.concatenate([lu.solve(z[:n]), z[n:]])

        rhs = np.concatenate([-res, np.zeros(1, dtype=complex)])
        z, _, _ = fgmres(apply_aug, apply_maug, rhs, rtol=solve_rtol,
                         atol=1e-13, max_applications=max_applications)
        w = w + z[:n]
        mu = mu + z[n]
        w = w / (c @ w)
    res = act.apply_vec(w) - mu * w
    rn = float(np.linalg.norm(res))
    if rn > 1e-6:
        raise SolverError(f"eigenpair Newton did not converge (residual {rn:.2e})")
    return mu, w, rn
