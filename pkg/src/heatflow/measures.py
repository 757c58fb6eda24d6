"""Measure families covered by the transport-map construction.

Three families are supported, each carrying the structural parameters that
the Lipschitz bounds consume:

* :class:`MixtureSpec` -- finite Gaussian mixtures ``gamma_d * nu`` with
  ``nu`` a discrete measure on at most a ball of radius ``R``;
* :class:`BoundedDensity1D` -- one-dimensional densities ``exp(-W)`` on a
  bounded interval, with a curvature lower bound ``W'' >= kappa``;
* :class:`LogConvexDensity1D` -- full-support one-dimensional densities
  ``exp(-U)`` with a curvature upper bound ``U'' <= beta``.
"""

import json
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.optimize import minimize
from scipy.special import ndtr

from .errors import NumericsError
from .quadrature import adaptive_log_integral, gauss_legendre

WEIGHT_TOL = 1e-12
RADIUS_SLACK = 1e-12
MASS_TOL = 1e-8
CURVATURE_SLACK = 1e-6
MAX_DIM = 16


# ---------------------------------------------------------------------------
# Chebyshev (minimal enclosing ball) radius
# ---------------------------------------------------------------------------

def chebyshev_radius(centers) -> tuple[float, np.ndarray]:
    """Radius and center of the smallest ball enclosing ``centers``.

    Exact for one point or one dimension.  In higher dimensions the
    minimax problem is solved as the convex program

        minimize_{c, s}  s + |c|^2   subject to  |x_i|^2 - 2<x_i, c> <= s,

    whose optimum satisfies ``s + |c|^2 = R^2``, followed by an active-set
    polish (the center is equidistant from the support points), giving
    ~1e-10 accuracy.

    Returns
    -------
    (R, c) : float and ndarray of shape (d,)
    """
    pts = np.atleast_2d(np.asarray(centers, dtype=float))
    if pts.size == 0:
        raise ValueError("need at least one center")
    k, d = pts.shape
    if k == 1:
        return 0.0, pts[0].copy()
    if d == 1:
        lo, hi = float(pts.min()), float(pts.max())
        return 0.5 * (hi - lo), np.array([0.5 * (hi + lo)])

    sq = np.sum(pts * pts, axis=1)

    def objective(z):
        c, s = z[:d], z[d]
        return s + c @ c, np.concatenate([2.0 * c, [1.0]])

    cons = [{
        "type": "ineq",
        "fun": lambda z, i=i: z[d] - sq[i] + 2.0 * pts[i] @ z[:d],
        "jac": lambda z, i=i: np.concatenate([2.0 * pts[i], [1.0]]),
    } for i in range(k)]
    z0 = np.concatenate([pts.mean(axis=0), [sq.max()]])
    res = minimize(objective, z0, jac=True, method="SLSQP", constraints=cons,
                   options={"maxiter": 500, "ftol": 1e-16})
    c = res.x[:d]

    # Polish: solve the equidistance system on the active support set.
    for _ in range(3):
        dist = np.linalg.norm(pts - c, axis=1)
        r = dist.max()
        active = pts[dist >= r - 1e-7 * (1.0 + r)]
        if len(active) >= 2:
            base = active[0]
            rows = active[1:] - base
            rhs = 0.5 * (np.sum(active[1:] ** 2, axis=1) - base @ base)
            c_new, *_ = np.linalg.lstsq(rows, rhs, rcond=None)
            # Stay in the affine hull of the active set.
            shift = c_new - c
            if np.linalg.norm(pts - c_new, axis=1).max() < r + 1e-12:
                c = c_new
            if np.linalg.norm(shift) < 1e-13:
                break
    r = float(np.linalg.norm(pts - c, axis=1).max())
    return r, c


# ---------------------------------------------------------------------------
# Gaussian mixtures
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MixtureSpec:
    """Finite Gaussian mixture: standard Gaussian convolved with ``sum w_i delta_{x_i}``."""

    dim: int
    centers: np.ndarray        # (k, dim)
    weights: np.ndarray        # (k,)
    chebyshev_radius: float    # radius R of the smallest ball enclosing the centers
    chebyshev_center: np.ndarray

    def __post_init__(self):
        c = np.atleast_2d(np.asarray(self.centers, dtype=float))
        w = np.asarray(self.weights, dtype=float)
        object.__setattr__(self, "centers", c)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "chebyshev_center",
                           np.asarray(self.chebyshev_center, dtype=float))
        if c.ndim != 2 or c.shape[1] != self.dim:
            raise ValueError("centers must have shape (k, dim)")
        if self.dim < 1 or self.dim > MAX_DIM:
            raise ValueError(f"dim must be in [1, {MAX_DIM}]")
        if len(c) == 0:
            raise ValueError("need at least one center")
        if len(w) != len(c):
            raise ValueError("weights and centers length mismatch")
        if np.any(w <= 0):
            raise ValueError("weights must be strictly positive")
        if abs(w.sum() - 1.0) > WEIGHT_TOL:
            raise ValueError("weights must sum to 1")
        dev = np.linalg.norm(c - self.chebyshev_center, axis=1)
        if np.any(dev > self.chebyshev_radius + RADIUS_SLACK):
            raise ValueError("a center lies outside the stated enclosing ball")
        self.centers.setflags(write=False)
        self.weights.setflags(write=False)
        self.chebyshev_center.setflags(write=False)

    @classmethod
    def from_centers(cls, centers, weights=None) -> "MixtureSpec":
        pts = np.atleast_2d(np.asarray(centers, dtype=float))
        if weights is None:
            weights = np.full(len(pts), 1.0 / len(pts))
        radius, center = chebyshev_radius(pts)
        return cls(dim=pts.shape[1], centers=pts, weights=np.asarray(weights, float),
                   chebyshev_radius=radius, chebyshev_center=center)

    @property
    def is_symmetric(self) -> bool:
        """Centers closed under negation with matching weights."""
        for c, w in zip(self.centers, self.weights):
            d = np.linalg.norm(self.centers + c, axis=1)
            j = int(np.argmin(d))
            if d[j] > 1e-12 or abs(self.weights[j] - w) > 1e-12:
                return False
        return True

    def log_relative_density(self, x) -> np.ndarray:
        """log of d(mixture)/d(gamma_d) at points ``x`` of shape (..., dim)."""
        x = np.asarray(x, dtype=float)
        expo = x @ self.centers.T - 0.5 * np.sum(self.centers**2, axis=1)
        a = np.log(self.weights) + expo
        hi = np.max(a, axis=-1, keepdims=True)
        return np.squeeze(hi, -1) + np.log(np.sum(np.exp(a - hi), axis=-1))

    def relative_density(self, x) -> np.ndarray:
        return np.exp(self.log_relative_density(x))

    def relative_density_grad(self, x) -> np.ndarray:
        """Gradient of the relative density: f(x) * sum_i p_i(x) x_i."""
        x = np.asarray(x, dtype=float)
        expo = x @ self.centers.T - 0.5 * np.sum(self.centers**2, axis=1)
        a = np.log(self.weights) + expo
        hi = np.max(a, axis=-1, keepdims=True)
        p = np.exp(a - hi)
        p /= np.sum(p, axis=-1, keepdims=True)
        f = np.exp(np.squeeze(hi, -1) + np.log(np.sum(np.exp(a - hi), axis=-1)))
        return f[..., None] * (p @ self.centers)

    def density(self, x) -> np.ndarray:
        """Lebesgue density: mixture of unit Gaussians at the centers."""
        x = np.asarray(x, dtype=float)
        if self.dim == 1 and (x.ndim == 0 or x.shape[-1] != 1):
            x = x[..., None]
        log_gauss = -0.5 * np.sum(x * x, axis=-1) - 0.5 * self.dim * math.log(2 * math.pi)
        return np.exp(self.log_relative_density(x) + log_gauss)

    def cdf(self, x) -> np.ndarray:
        if self.dim != 1:
            raise ValueError("cdf is one-dimensional only")
        x = np.asarray(x, dtype=float)
        return np.sum(self.weights * ndtr(x[..., None] - self.centers[:, 0]), axis=-1)

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        idx = rng.choice(len(self.weights), size=n, p=self.weights)
        return self.centers[idx] + rng.standard_normal((n, self.dim))

    def to_json_dict(self) -> dict:
        return {"family": "mixture",
                "centers": self.centers.tolist(),
                "weights": self.weights.tolist()}


# ---------------------------------------------------------------------------
# One-dimensional bounded-support densities
# ---------------------------------------------------------------------------

def _log_norm_1d(potential, lo, hi) -> float:
    return adaptive_log_integral(lambda z: -potential(z), lo, hi,
                                 n0=200, rel_tol=1e-12)


def _second_difference(f, grid: np.ndarray, h: float) -> np.ndarray:
    return (f(grid + h) - 2.0 * f(grid) + f(grid - h)) / (h * h)


@dataclass(frozen=True)
class BoundedDensity1D:
    """Density proportional to ``exp(-W)`` on [a, b], with ``W'' >= kappa``."""

    support: tuple[float, float]
    potential: Callable[[np.ndarray], np.ndarray]
    curvature_lower: float     # kappa
    sigma: float               # radius of the enclosing ball: (b - a) / 2
    log_norm: float

    @classmethod
    def from_potential(cls, a: float, b: float, potential, kappa: float) -> "BoundedDensity1D":
        if not (np.isfinite(a) and np.isfinite(b) and a < b):
            raise ValueError("support must be a bounded interval with a < b")
        log_norm = _log_norm_1d(potential, a, b)
        m = cls(support=(float(a), float(b)), potential=potential,
                curvature_lower=float(kappa), sigma=0.5 * (b - a),
                log_norm=log_norm)
        m._validate()
        return m

    def _validate(self):
        a, b = self.support
        x, w = gauss_legendre(a, b, 800)
        mass = float(np.sum(w * self.density(x)))
        if abs(mass - 1.0) > MASS_TOL:
            raise NumericsError(f"normalized density integrates to {mass}, not 1")
        h = 1e-4 * (b - a)
        grid = np.linspace(a + 2 * h, b - 2 * h, 64)
        curv = _second_difference(self.potential, grid, h)
        if np.any(curv < self.curvature_lower - CURVATURE_SLACK):
            raise ValueError("potential violates the stated curvature lower bound")

    @property
    def is_symmetric(self) -> bool:
        a, b = self.support
        if abs(a + b) > 1e-12:
            return False
        g = np.linspace(0.0, b, 33)[1:]
        return bool(np.max(np.abs(self.potential(g) - self.potential(-g))) < 1e-10)

    def log_density(self, x) -> np.ndarray:
        return -self.potential(np.asarray(x, dtype=float)) - self.log_norm

    def density(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        a, b = self.support
        inside = (x >= a) & (x <= b)
        out = np.zeros(np.shape(x))
        xin = np.clip(x, a, b)
        out = np.where(inside, np.exp(self.log_density(xin)), 0.0)
        return out

    def to_json_dict(self) -> dict:
        raise ValueError("only builtin families serialize; construct via build_builtin")


@dataclass(frozen=True)
class LogConvexDensity1D:
    """Full-support density ``exp(-U)`` with ``U'' <= beta``; quadrature on [-L, L]."""

    potential: Callable[[np.ndarray], np.ndarray]
    curvature_upper: float     # beta
    window: tuple[float, float]
    log_norm: float

    @classmethod
    def from_potential(cls, potential, beta: float, window_halfwidth: float) -> "LogConvexDensity1D":
        if beta <= 0:
            raise ValueError("beta must be positive")
        L = float(window_halfwidth)
        log_norm = _log_norm_1d(potential, -L, L)
        m = cls(potential=potential, curvature_upper=float(beta),
                window=(-L, L), log_norm=log_norm)
        m._validate()
        return m

    def _validate(self):
        lo, hi = self.window
        h = 1e-4 * (hi - lo)
        grid = np.linspace(lo + 2 * h, hi - 2 * h, 64)
        curv = _second_difference(self.potential, grid, h)
        if np.any(curv > self.curvature_upper + CURVATURE_SLACK):
            raise ValueError("potential violates the stated curvature upper bound")
        # Discarded tail mass, bounded by an exponential envelope at the window edge.
        for edge, sign in ((hi, 1.0), (lo, -1.0)):
            d = 1e-6 * (hi - lo)
            # outward slope of the potential at the edge
            slope = (self.potential(np.array([edge])) -
                     self.potential(np.array([edge - sign * d])))[0] / d
            if slope <= 0:
                raise NumericsError("potential not increasing at the window edge")
            tail = math.exp(-float(self.potential(np.array([edge]))[0]) - self.log_norm) / slope
            if tail > 1e-10:
                raise NumericsError(f"window discards tail mass ~{tail:.2e} > 1e-10")

    @property
    def is_symmetric(self) -> bool:
        g = np.linspace(0.0, self.window[1], 33)[1:]
        return bool(np.max(np.abs(self.potential(g) - self.potential(-g))) < 1e-10)

    def log_density(self, x) -> np.ndarray:
        return -self.potential(np.asarray(x, dtype=float)) - self.log_norm

    def density(self, x) -> np.ndarray:
        return np.exp(self.log_density(x))

    def to_json_dict(self) -> dict:
        raise ValueError("only builtin families serialize; construct via build_builtin")


Measure = MixtureSpec | BoundedDensity1D | LogConvexDensity1D


# ---------------------------------------------------------------------------
# Builtin families and serialization
# ---------------------------------------------------------------------------

def build_builtin(family: str, **params) -> Measure:
    """Construct a validated builtin measure.

    Families: ``uniform_interval(a, b)``, ``truncated_gaussian(a, b)``,
    ``inflated(a, b, c)``, ``gaussian_variance(beta)``,
    ``mixture(centers, weights=None)``.
    """
    if family == "uniform_interval":
        a, b = params["a"], params["b"]
        m = BoundedDensity1D.from_potential(a, b, lambda x: np.zeros(np.shape(x)), kappa=0.0)
    elif family == "truncated_gaussian":
        a, b = params["a"], params["b"]
        m = BoundedDensity1D.from_potential(a, b, lambda x: 0.5 * x * x, kappa=1.0)
    elif family == "inflated":
        a, b, c = params["a"], params["b"], params["c"]
        if c <= 0:
            raise ValueError("inflated family needs c > 0")
        m = BoundedDensity1D.from_potential(a, b, lambda x, c=c: -0.5 * c * x * x, kappa=-c)
    elif family == "gaussian_variance":
        beta = params["beta"]
        if beta <= 0:
            raise ValueError("gaussian_variance family needs beta > 0")
        L = 7.0 / math.sqrt(beta)
        m = LogConvexDensity1D.from_potential(
            lambda x, b=beta: 0.5 * b * x * x, beta=beta, window_halfwidth=L)
    elif family == "mixture":
        m = MixtureSpec.from_centers(params["centers"], params.get("weights"))
    else:
        raise ValueError(f"unknown family {family!r}")
    object.__setattr__(m, "_builtin", {"family": family, "params": dict(params)})
    return m


def to_json(m: Measure) -> str:
    builtin = getattr(m, "_builtin", None)
    if builtin is not None and builtin["family"] != "mixture":
        doc = {"family": builtin["family"], "params": builtin["params"]}
    elif isinstance(m, MixtureSpec):
        doc = m.to_json_dict()
    else:
        doc = m.to_json_dict()  # raises: non-builtin 1D measures do not serialize
    return json.dumps(doc, sort_keys=True)


def from_json(text: str) -> Measure:
    doc = json.loads(text)
    family = doc["family"]
    if family == "mixture":
        return build_builtin("mixture", centers=doc["centers"],
                             weights=doc.get("weights"))
    return build_builtin(family, **doc.get("params", {}))


def relative_density(m: MixtureSpec, x) -> np.ndarray:
    """Density of the mixture relative to the standard Gaussian."""
    return m.relative_density(x)


# ---------------------------------------------------------------------------
# Structural parameters, sampling, CDFs
# ---------------------------------------------------------------------------

def support_interval(m: Measure) -> tuple[float, float]:
    """Interval carrying (essentially) all mass, for 1D quadrature and grids."""
    if isinstance(m, BoundedDensity1D):
        return m.support
    if isinstance(m, LogConvexDensity1D):
        return m.window
    if m.dim != 1:
        raise ValueError("support_interval is one-dimensional only")
    c = m.centers[:, 0]
    return float(c.min() - 9.0), float(c.max() + 9.0)


def density_grid(m: Measure, n: int = 4097) -> tuple[np.ndarray, np.ndarray]:
    lo, hi = support_interval(m)
    xs = np.linspace(lo, hi, n)
    return xs, np.asarray(m.density(xs if not isinstance(m, MixtureSpec) else xs), float)


def cdf_1d(m: Measure, x) -> np.ndarray:
    """Target CDF by closed form (mixtures) or cumulative quadrature."""
    if isinstance(m, MixtureSpec):
        return m.cdf(x)
    xs, ps = density_grid(m)
    cum = np.concatenate([[0.0], np.cumsum((ps[1:] + ps[:-1]) * 0.5 * np.diff(xs))])
    cum /= cum[-1]
    return np.interp(np.asarray(x, dtype=float), xs, cum)


def sample(m: Measure, n: int, rng: np.random.Generator) -> np.ndarray:
    """Draw n samples; shape (n, d) for mixtures, (n,) for 1D densities."""
    if isinstance(m, MixtureSpec):
        return m.sample(n, rng)
    xs, ps = density_grid(m, n=8193)
    cum = np.concatenate([[0.0], np.cumsum((ps[1:] + ps[:-1]) * 0.5 * np.diff(xs))])
    cum /= cum[-1]
    u = rng.uniform(size=n)
    return np.interp(u, cum, xs)
