"""Gauss-Legendre quadrature helpers with node caching and adaptive doubling."""

from functools import lru_cache

import numpy as np

from .errors import NumericsError


@lru_cache(maxsize=64)
def _gl_reference(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights on the reference interval [0, 1]."""
    x, w = np.polynomial.legendre.leggauss(n)
    x = 0.5 * (x + 1.0)
    w = 0.5 * w
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def gauss_legendre(a: float, b: float, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes and weights on [a, b]."""
    u, w = _gl_reference(n)
    return a + (b - a) * u, (b - a) * w


def adaptive_log_integral(log_f, a: float, b: float, n0: int = 64,
                          rel_tol: float = 1e-12, max_doublings: int = 10) -> float:
    """log of integral_a^b exp(log_f(x)) dx, doubling nodes until stable.

    ``log_f`` must accept a vector of nodes.  Doubling stops when the value
    changes by less than ``rel_tol`` in log space.
    """
    n = n0
    prev = None
    for _ in range(max_doublings + 1):
        x, w = gauss_legendre(a, b, n)
        lf = np.asarray(log_f(x), dtype=float)
        terms = lf + np.log(w)
        hi = np.max(terms)
        val = hi + np.log(np.sum(np.exp(terms - hi)))
        if prev is not None and abs(val - prev) <= rel_tol * max(1.0, abs(val)):
            return val
        prev = val
        n *= 2
    raise NumericsError(
        f"log-integral on [{a}, {b}] did not stabilize after {max_doublings} doublings"
    )
