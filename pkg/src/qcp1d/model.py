"""Operators for the dissipative quantum contact process on an open chain.

A chain of L spin-1/2 sites is encoded on the 2^L product basis with site 1
as the most significant bit and the single-site ordering (|up>, |down>), so
the number operator is diag(1, 0) and the all-down (absorbing) state is the
last basis vector.  Coherent branching/coagulation couples each bond through
sigma^x n and n sigma^x terms; every site decays down at rate gamma.

The Liouvillian acts on column-stacked density matrices: vec(X rho Y) =
(Y^T kron X) vec(rho), so vec(rho) = rho.flatten(order="F").
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

MAX_CHAIN_SITES = 14  # hard cap on 2^L Hilbert-space construction
MAX_SUPEROP_SITES = 10  # cap on 4^L Liouvillian matrices

SIGMA_X = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)
SIGMA_Y = np.array([[0.0, -1.0j], [1.0j, 0.0]], dtype=complex)
SIGMA_Z = np.array([[1.0, 0.0], [0.0, -1.0]], dtype=complex)
SIGMA_PLUS = np.array([[0.0, 1.0], [0.0, 0.0]], dtype=complex)  # |up><down|
SIGMA_MINUS = np.array([[0.0, 0.0], [1.0, 0.0]], dtype=complex)  # |down><up|
NUMBER_OP = np.array([[1.0, 0.0], [0.0, 0.0]], dtype=complex)


class QcpError(Exception):
    """Base class for failures raised by this package."""


class DimensionError(QcpError):
    """Requested construction exceeds the configured size limits."""


class SolverError(QcpError):
    """A linear or eigenvalue solver failed or returned unusable output."""


class IntegrationError(QcpError):
    """Time integration violated a density-matrix invariant."""


@dataclass(frozen=True)
class ModelParams:
    """Chain size and rates; gamma sets the unit of time.

    h_x is an optional uniform transverse probe field used for linear-response
    susceptibility runs.
    """

    L: int
    omega: float
    gamma: float = 1.0
    h_x: float = 0.0

    def __post_init__(self):
        if self.L < 1:
            raise ValueError(f"L must be >= 1, got {self.L}")
        if self.gamma <= 0:
            raise ValueError(f"gamma must be > 0, got {self.gamma}")
        if self.omega < 0:
            raise ValueError(f"omega must be >= 0, got {self.omega}")
        if self.h_x < 0:
            raise ValueError(f"h_x must be >= 0, got {self.h_x}")

    @property
    def dim(self) -> int:
        return 2**self.L


def site_operator(op: np.ndarray, j: int, L: int) -> sp.csr_matrix:
    """Embed a single-site operator at site j (1-based) in the L-site chain."""
    if not 1 <= j <= L:
        raise ValueError(f"site index {j} outside 1..{L}")
    left = sp.identity(2 ** (j - 1), dtype=complex, format="csr")
    right = sp.identity(2 ** (L - j), dtype=complex, format="csr")
    out = sp.kron(sp.kron(left, sp.csr_matrix(op)), right, format="csr")
    out.sort_indices()
    return out


def two_site_operator(op_a: np.ndarray, j: int, op_b: np.ndarray, L: int) -> sp.csr_matrix:
    """Embed op_a at site j and op_b at site j+1."""
    if not 1 <= j <= L - 1:
        raise ValueError(f"bond index {j} outside 1..{L - 1}")
    left = sp.identity(2 ** (j - 1), dtype=complex, format="csr")
    right = sp.identity(2 ** (L - j - 1), dtype=complex, format="csr")
    pair = sp.kron(sp.csr_matrix(op_a), sp.csr_matrix(op_b), format="csr")
    out = sp.kron(sp.kron(left, pair), right, format="csr")
    out.sort_indices()
    return out


def number_diagonal(L: int) -> np.ndarray:
    """Diagonal of the total number operator: up-spin count of each basis state.

    Bit value 0 at a site means up (occupied), 1 means down (empty).
    """
    idx = np.arange(2**L, dtype=np.int64)
    counts = np.zeros(2**L, dtype=np.int64)
    for j in range(L):
        counts += 1 - ((idx >> j) & 1)
    return counts.astype(float)


def site_population_mask(j: int, L: int) -> np.ndarray:
    """Boolean mask selecting basis states where site j (1-based) is up."""
    idx = np.arange(2**L, dtype=np.int64)
    return ((idx >> (L - j)) & 1) == 0


def dark_state_index(L: int) -> int:
    """Basis index of the all-down product state."""
    return 2**L - 1


def build_hamiltonian(p: ModelParams) -> sp.csr_matrix:
    """Branching/coagulation Hamiltonian on the open chain, plus the probe.

    H = omega * sum_j (sx_j n_{j+1} + n_j sx_{j+1}) + h_x * sum_j sx_j.
    Hermitian by construction; zero operator for L = 1 with h_x = 0.
    """
    if p.L > MAX_CHAIN_SITES:
        raise DimensionError(f"L={p.L} exceeds chain cap {MAX_CHAIN_SITES}")
    dim = p.dim
    H = sp.csr_matrix((dim, dim), dtype=complex)
    for j in range(1, p.L):
        H = H + p.omega * (
            two_site_operator(SIGMA_X, j, NUMBER_OP, p.L)
            + two_site_operator(NUMBER_OP, j, SIGMA_X, p.L)
        )
    if p.h_x != 0.0:
        for j in range(1, p.L + 1):
            H = H + p.h_x * site_operator(SIGMA_X, j, p.L)
    H = H.tocsr()
    H.sum_duplicates()
    H.sort_indices()
    return H


def boundary_x_operator(L: int) -> sp.csr_matrix:
    """sx_1 + sx_L; the operator driven by the cluster effective field.

    For L = 1 the two boundary terms land on the same site, giving 2 sx.
    """
    op = site_operator(SIGMA_X, 1, L) + site_operator(SIGMA_X, L, L)
    op = op.tocsr()
    op.sum_duplicates()
    return op


def dissipator_apply(rho: np.ndarray, L: int, gamma: float) -> np.ndarray:
    """Local-decay dissipator gamma * sum_j (sm_j rho sp_j - {n_j, rho}/2)."""
    out = jump_gather(rho, L)
    d = number_diagonal(L)
    out -= 0.5 * (d[:, None] + d[None, :]) * rho
    return gamma * out


def jump_gather(rho: np.ndarray, L: int) -> np.ndarray:
    """sum_j sm_j rho sp_j via bit-reshaped views (no operator products)."""
    dim = rho.shape[0]
    out = np.zeros_like(rho)
    for j in range(1, L + 1):
        pre = 2 ** (j - 1)
        post = 2 ** (L - j)
        r6 = rho.reshape(pre, 2, post, pre, 2, post)
        o6 = out.reshape(pre, 2, post, pre, 2, post)
        o6[:, 1, :, :, 1, :] += r6[:, 0, :, :, 0, :]
    return out.reshape(dim, dim)


def apply_lindblad_rhs(p: ModelParams, H: sp.csr_matrix, rho: np.ndarray) -> np.ndarray:
    """d(rho)/dt = -i[H, rho] + dissipator; valid for arbitrary rho."""
    if H.shape[0] != rho.shape[0] or rho.shape[0] != p.dim:
        raise DimensionError(
            f"dimension mismatch: H {H.shape[0]}, rho {rho.shape[0]}, 2^L {p.dim}"
        )
    comm = H @ rho - (H.T @ rho.T).T
    return -1j * comm + dissipator_apply(rho, p.L, p.gamma)


def vectorize(rho: np.ndarray) -> np.ndarray:
    """Column-stack a matrix into a vector."""
    return rho.flatten(order="F")


def matricize(v: np.ndarray) -> np.ndarray:
    dim = int(round(np.sqrt(v.size)))
    if dim * dim != v.size:
        raise ValueError(f"vector of length {v.size} is not a stacked square matrix")
    return v.reshape((dim, dim), order="F")


def build_liouvillian_from_parts(
    H: sp.csr_matrix, L: int, gamma: float
) -> sp.csr_matrix:
    """Column-stacking matrix of -i[H, .] plus the local-decay dissipator."""
    dim = H.shape[0]
    eye = sp.identity(dim, dtype=complex, format="csr")
    lv = -1j * (sp.kron(eye, H, format="csr") - sp.kron(H.T, eye, format="csr"))
    for j in range(1, L + 1):
        sm = site_operator(SIGMA_MINUS, j, L)
        lv = lv + gamma * sp.kron(sm, sm, format="csr")
    d = number_diagonal(L)
    # vec index v = a + dim*b; anticommutator part is diagonal in (a, b)
    diag = -0.5 * gamma * (np.add.outer(d, d)).flatten(order="F")
    lv = lv + sp.diags(diag.astype(complex), format="csr")
    lv = lv.tocsr()
    lv.sum_duplicates()
    lv.sort_indices()
    return lv


def build_liouvillian_matrix(p: ModelParams, max_sites: int = MAX_SUPEROP_SITES) -> sp.csr_matrix:
    """Sparse 4^L x 4^L generator with vec(d rho/dt) = Lmat vec(rho)."""
    if p.L > max_sites:
        raise DimensionError(f"L={p.L} exceeds superoperator cap {max_sites}")
    return build_liouvillian_from_parts(build_hamiltonian(p), p.L, p.gamma)


def trace_vector(dim: int) -> np.ndarray:
    """Vector t with t . vec(rho) = tr(rho) under column stacking."""
    t = np.zeros(dim * dim, dtype=complex)
    t[np.arange(dim) * (dim + 1)] = 1.0
    return t


def reflection_permutation(L: int) -> np.ndarray:
    """Index permutation implementing the spatial flip j <-> L+1-j."""
    idx = np.arange(2**L, dtype=np.int64)
    out = np.zeros_like(idx)
    for j in range(L):
        bit = (idx >> j) & 1
        out |= bit << (L - 1 - j)
    return out


def hermiticity_defect(A) -> float:
    """Max-norm of A - A^dagger (works for sparse and dense)."""
    if sp.issparse(A):
        diff = (A - A.conj().T).tocoo()
        return float(np.max(np.abs(diff.data))) if diff.nnz else 0.0
    return float(np.max(np.abs(A - A.conj().T))) if A.size else 0.0


def check_density_matrix(rho: np.ndarray, trace_tol: float = 1e-8,
                         herm_tol: float = 1e-8, eig_floor: float = -1e-7) -> None:
    """Raise IntegrationError if rho is not a valid state within tolerance."""
    tr = complex(np.trace(rho))
    if abs(tr - 1.0) > trace_tol:
        raise IntegrationError(f"trace deviates from 1 by {abs(tr - 1.0):.3e}")
    defect = hermiticity_defect(rho)
    if defect > herm_tol:
        raise IntegrationError(f"hermiticity defect {defect:.3e}")
    evals = np.linalg.eigvalsh(0.5 * (rho + rho.conj().T))
    if evals.min() < eig_floor:
        raise IntegrationError(f"negative population {evals.min():.3e}")


def random_density_matrix(dim: int, rng: np.random.Generator) -> np.ndarray:
    """Random full-rank state, for tests and perturbed initial conditions."""
    A = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    rho = A @ A.conj().T
    return rho / np.trace(rho).real


def all_down_state(L: int) -> np.ndarray:
    dim = 2**L
    rho = np.zeros((dim, dim), dtype=complex)
    rho[dim - 1, dim - 1] = 1.0
    return rho


def all_up_state(L: int) -> np.ndarray:
    dim = 2**L
    rho = np.zeros((dim, dim), dtype=complex)
    rho[0, 0] = 1.0
    return rho


def export_operator(A, path) -> None:
    """Dump a sparse operator as 'row col re im' lines (debug format)."""
    coo = sp.coo_matrix(A)
    order = np.lexsort((coo.col, coo.row))
    with open(path, "w") as fh:
        for k in order:
            v = coo.data[k]
            fh.write(f"{coo.row[k]} {coo.col[k]} {v.real:.17g} {v.imag:.17g}\n")
