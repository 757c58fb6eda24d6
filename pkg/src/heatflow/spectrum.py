"""Weighted Laplacian spectra in one dimension and eigenvalue comparison.

For d(mu)/dx = e^{-V}, the operator L_mu = Laplacian - <grad V, grad> is
self-adjoint in L^2(mu) with Dirichlet form integral of g' h' d(mu).  We
discretize with piecewise-linear finite elements on a uniform grid over the
support (or [-8, 8] for full-support targets), which realizes the natural
weighted-Neumann boundary condition and keeps constants exactly in the
kernel.  The comparison check divides the Gaussian reference eigenvalues
(0, 1, 2, ...) by the squared Lipschitz constant of the transport map and
requires the target eigenvalues to dominate.
"""

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse
import scipy.sparse.linalg

from .errors import NumericsError, RegimeError
from .measures import BoundedDensity1D, LogConvexDensity1D, Measure, MixtureSpec
from .quadrature import gauss_legendre

FULL_SUPPORT_BOX = 8.0
ELEMENT_QUAD_NODES = 6


@dataclass(frozen=True)
class SpectrumReport:
    eigenvalues_mu: np.ndarray
    eigenvalues_gauss: np.ndarray   # exact reference 0, 1, ..., k-1
    bound_factor: float
    margins: np.ndarray             # lambda_i(mu) - lambda_i(gauss) / factor
    grid_size: int

    def __post_init__(self):
        ev = np.asarray(self.eigenvalues_mu, dtype=float)
        if np.any(np.diff(ev) < -1e-9):
            raise ValueError("eigenvalues must be ascending")
        if abs(ev[0]) > 1e-6:
            raise ValueError("lambda_0 must vanish (constants in the kernel)")

    def passed(self, rel_tol: float = 1e-6) -> bool:
        tol = rel_tol * (1.0 + np.abs(self.eigenvalues_mu))
        return bool(np.all(self.margins >= -tol))

    def to_json_dict(self) -> dict:
        return {
            "eigenvalues_mu": self.eigenvalues_mu.tolist(),
            "eigenvalues_gauss": self.eigenvalues_gauss.tolist(),
            "bound_factor": self.bound_factor,
            "margins": self.margins.tolist(),
            "grid_size": self.grid_size,
        }


def _fem_domain(m: Measure) -> tuple[float, float]:
    if isinstance(m, BoundedDensity1D):
        return m.support
    return -FULL_SUPPORT_BOX, FULL_SUPPORT_BOX


def _density_on(m: Measure, x: np.ndarray) -> np.ndarray:
    if isinstance(m, MixtureSpec):
        if m.dim != 1:
            raise ValueError("spectrum assembly is one-dimensional only")
        return m.density(x)
    if isinstance(m, LogConvexDensity1D):
        # the potential extends smoothly beyond the quadrature window
        return np.exp(-m.potential(x) - m.log_norm)
    return m.density(x)


def weighted_laplacian_1d(m: Measure, grid_n: int):
    """Assemble the P1 stiffness/mass pair (A, B) against d(mu).

    A_ij = integral g_i' g_j' d(mu),  B_ij = integral g_i g_j d(mu) on a
    uniform grid with ``grid_n`` elements; returns sparse tridiagonal
    matrices of size (grid_n + 1).
    """
    if grid_n < 64:
        raise ValueError("grid_n must be at least 64")
    lo, hi = _fem_domain(m)
    nodes = np.linspace(lo, hi, grid_n + 1)
    h = (hi - lo) / grid_n
    u, w = gauss_legendre(0.0, 1.0, ELEMENT_QUAD_NODES)
    # quadrature points per element, shape (grid_n, q)
    z = nodes[:-1, None] + h * u[None, :]
    rho = _density_on(m, z.ravel()).reshape(grid_n, -1)
    wq = h * w[None, :]

    mass0 = np.sum(rho * wq, axis=1)                      # integral rho over element
    left = np.sum(rho * wq * (1.0 - u) ** 2, axis=1)      # hat at left node, squared
    right = np.sum(rho * wq * u ** 2, axis=1)
    cross = np.sum(rho * wq * u * (1.0 - u), axis=1)

    n = grid_n + 1
    a_diag = np.zeros(n)
    a_diag[:-1] += mass0 / (h * h)
    a_diag[1:] += mass0 / (h * h)
    a_off = -mass0 / (h * h)

    b_diag = np.zeros(n)
    b_diag[:-1] += left
    b_diag[1:] += right
    b_off = cross

    A = scipy.sparse.diags([a_off, a_diag, a_off], [-1, 0, 1], format="csc")
    B = scipy.sparse.diags([b_off, b_diag, b_off], [-1, 0, 1], format="csc")
    return A, B


def _solve_smallest(A, B, k: int) -> np.ndarray:
    n = A.shape[0]
    v0 = np.full(n, 1.0 / math.sqrt(n))
    vals = scipy.sparse.linalg.eigsh(A, k=k, M=B, sigma=-0.5, which="LM",
                                     v0=v0, return_eigenvectors=False)
    return np.sort(vals)


def dense_spectrum_oracle(m: Measure, grid_n: int, k: int) -> np.ndarray:
    """Direct dense generalized eigensolve; independent check of the sparse path."""
    A, B = weighted_laplacian_1d(m, grid_n)
    vals = scipy.linalg.eigh(A.toarray(), B.toarray(), eigvals_only=True)
    return vals[:k]


def spectrum_1d(m: Measure, k: int, grid_n: int,
                cauchy_check: bool = True) -> np.ndarray:
    """First k eigenvalues of L_mu, with a grid-refinement Cauchy guard."""
    A, B = weighted_laplacian_1d(m, grid_n)
    vals = _solve_smallest(A, B, k)
    if cauchy_check:
        Ac, Bc = weighted_laplacian_1d(m, grid_n // 2)
        coarse = _solve_smallest(Ac, Bc, k)
        rel = np.abs(vals - coarse) / np.maximum(1.0, np.abs(vals))
        if np.any(rel > 0.01):
            raise NumericsError(
                f"grid too coarse: eigenvalue moved {rel.max():.3%} under refinement")
    return vals


def comparison_factor(m: Measure) -> float:
    """Squared Lipschitz constant entering the eigenvalue comparison."""
    if isinstance(m, MixtureSpec):
        R = m.chebyshev_radius
        return math.exp(R * R)
    if isinstance(m, BoundedDensity1D):
        kappa, sigma = m.curvature_lower, m.sigma
        if kappa * sigma * sigma >= 1.0:
            raise RegimeError("eigenvalue comparison needs kappa * sigma^2 < 1")
        return math.exp(1.0 - kappa * sigma * sigma) * sigma * sigma
    raise RegimeError("eigenvalue comparison covers mixtures and bounded "
                      "log-concave targets only")


def eigen_compare(m: Measure, k: int, grid_n: int = 2048) -> SpectrumReport:
    """Check lambda_i(gauss) / factor <= lambda_i(mu) for i < k."""
    factor = comparison_factor(m)
    vals = spectrum_1d(m, k, grid_n)
    gauss = np.arange(k, dtype=float)
    margins = vals - gauss / factor
    return SpectrumReport(eigenvalues_mu=vals, eigenvalues_gauss=gauss,
                          bound_factor=factor, margins=margins, grid_size=grid_n)
