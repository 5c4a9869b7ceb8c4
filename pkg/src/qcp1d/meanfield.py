"""Single-site mean-field analysis of the contact-process chain.

Factorizing the chain state site-by-site closes the dynamics on one Bloch
vector s = (<sx>, <sy>, <sz>).  With branching rate omega, decay gamma and
two neighbours per site, the flow is

    dx/dt = -2*omega*x*y - gamma/2 * x
    dy/dt =  2*omega*x*x - 2*omega*z*(1+z) - gamma/2 * y
    dz/dt =  2*omega*y*(1+z) - gamma*(1+z)

The population n = (1+z)/2 is the order parameter.  Besides the absorbing
point (0, 0, -1) an active pair of steady states exists for
omega/gamma >= 1/sqrt(2); the lower branch is a saddle, producing the
characteristic saddle-node (hysteresis) structure of a discontinuous
transition.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

ACTIVE_THRESHOLD = 1.0 / np.sqrt(2.0)  # omega/gamma where the active pair appears

BRANCH_ABSORBING = "absorbing"
BRANCH_ACTIVE_PLUS = "active_plus"
BRANCH_ACTIVE_MINUS = "active_minus"

# Jacobian eigenvalues within this band of zero are treated as marginal and
# conservatively labelled unstable.
MARGINAL_TOL = 1e-10


@dataclass(frozen=True)
class MfFixedPoint:
    state: np.ndarray  # (sx, sy, sz)
    branch_label: str
    max_re_lambda: float
    stable: bool

    @property
    def population(self) -> float:
        return 0.5 * (1.0 + float(self.state[2]))


def mf_rhs(s, omega: float, gamma: float) -> np.ndarray:
    """Time derivative of the Bloch vector under the mean-field flow."""
    x, y, z = s
    return np.array(
        [
            -2.0 * omega * x * y - 0.5 * gamma * x,
            2.0 * omega * x * x - 2.0 * omega * z * (1.0 + z) - 0.5 * gamma * y,
            2.0 * omega * y * (1.0 + z) - gamma * (1.0 + z),
        ]
    )


def mf_jacobian(s, omega: float, gamma: float) -> np.ndarray:
    x, y, z = s
    return np.array(
        [
            [-2.0 * omega * y - 0.5 * gamma, -2.0 * omega * x, 0.0],
            [4.0 * omega * x, -0.5 * gamma, -2.0 * omega * (2.0 * z + 1.0)],
            [0.0, 2.0 * omega * (z + 1.0), 2.0 * omega * y - gamma],
        ]
    )


def _classify(state: np.ndarray, branch: str, omega: float, gamma: float) -> MfFixedPoint:
    lam = np.linalg.eigvals(mf_jacobian(state, omega, gamma))
    max_re = float(np.max(lam.real))
    stable = max_re < -MARGINAL_TOL
    return MfFixedPoint(state=state, branch_label=branch, max_re_lambda=max_re, stable=stable)


def mf_steady_states(omega: float, gamma: float) -> list[MfFixedPoint]:
    """All physical fixed points of the mean-field flow, with stability.

    The absorbing point is always present.  The active pair
    (0, gamma/2omega, -1/2 +- (gamma/2) sqrt(1/gamma^2 - 1/(2 omega^2)))
    is appended once omega/gamma reaches 1/sqrt(2); exactly at threshold the
    two coincide at n = 1/4.
    """
    if omega < 0 or gamma <= 0:
        raise ValueError("omega must be >= 0 and gamma > 0")
    points = [_classify(np.array([0.0, 0.0, -1.0]), BRANCH_ABSORBING, omega, gamma)]
    if omega > 0 and omega / gamma >= ACTIVE_THRESHOLD:
        root = np.sqrt(max(0.0, 1.0 / gamma**2 - 1.0 / (2.0 * omega**2)))
        y = gamma / (2.0 * omega)
        for sign, branch in ((+1.0, BRANCH_ACTIVE_PLUS), (-1.0, BRANCH_ACTIVE_MINUS)):
            z = -0.5 + sign * 0.5 * gamma * root
            points.append(_classify(np.array([0.0, y, z]), branch, omega, gamma))
    return points


def mf_branch_scan(omega_grid, gamma: float):
    """Rows (omega, branch, sx, sy, sz, n, max_re_lambda, stable) per branch.

    The grid must be sorted ascending; every branch present at a grid point
    produces one row, so the row count switches from 1 to 3 at threshold.
    """
    grid = np.asarray(omega_grid, dtype=float)
    if grid.size and np.any(np.diff(grid) < 0):
        raise ValueError("omega grid must be sorted ascending")
    rows = []
    for omega in grid:
        for fp in mf_steady_states(float(omega), gamma):
            sx, sy, sz = fp.state
            rows.append(
                (
                    float(omega),
                    fp.branch_label,
                    float(sx),
                    float(sy),
                    float(sz),
                    fp.population,
                    fp.max_re_lambda,
                    fp.stable,
                )
            )
    return rows
