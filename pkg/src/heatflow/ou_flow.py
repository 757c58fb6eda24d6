"""Ornstein-Uhlenbeck semigroup, flow velocity field, and its Jacobian.

For a target measure mu with relative density f = d(mu)/d(gamma_d), the
smoothing operator is

    Q_t f(x) = E[ f(e^{-t} x + sqrt(1 - e^{-2t}) Z) ],   Z ~ N(0, Id).

The flow velocity is V_t = -grad log Q_t f.  Gaussian mixtures admit closed
forms (softmax posteriors over the centers); one-dimensional densities are
handled through the Mehler kernel

    M_t(x, z) = (1 - e^{-2t})^{-1/2}
                exp(-(e^{-2t}(x^2 + z^2) - 2 e^{-t} x z) / (2 (1 - e^{-2t}))),

which satisfies Q_t f(x) = integral of M_t(x, z) d(mu)(z).  All posterior
statistics are computed in the log domain; variances come from posterior
moments rather than differentiated quadratures.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import NumericsError
from .measures import BoundedDensity1D, LogConvexDensity1D, Measure, MixtureSpec
from .quadrature import gauss_legendre

# Smallest admissible flow time for quadrature-based (non-mixture) measures.
T_FLOOR = 1e-9
# Half-width of the kernel-mass bracket, in units of the kernel scale.
CLIP_SIGMAS = 14.0
BASE_NODES = 200
MAX_DOUBLINGS = 6
QUAD_REL_TOL = 1e-10


@dataclass(frozen=True)
class SemigroupEval:
    """Bundle of Q_t f and the first two derivatives of its logarithm."""

    t: float
    x: np.ndarray
    q_value: float
    score: np.ndarray            # grad log Q_t f(x)
    score_jacobian: np.ndarray   # hess log Q_t f(x)

    def __post_init__(self):
        if self.q_value <= 0:
            raise ValueError("q_value must be positive")
        h = np.atleast_2d(self.score_jacobian)
        if np.max(np.abs(h - h.T)) > 1e-10:
            raise ValueError("score_jacobian must be symmetric")


# ---------------------------------------------------------------------------
# Gaussian mixtures: closed forms
# ---------------------------------------------------------------------------

def _mixture_posterior(m: MixtureSpec, t: float, x: np.ndarray):
    """Softmax posterior over centers at time t for points x of shape (B, d).

    Returns (log_q, p, mean) with p of shape (B, k), mean of shape (B, d).
    """
    et = math.exp(-t)
    a = np.log(m.weights) + et * (x @ m.centers.T) \
        - 0.5 * et * et * np.sum(m.centers**2, axis=1)
    hi = np.max(a, axis=-1, keepdims=True)
    ea = np.exp(a - hi)
    z = np.sum(ea, axis=-1)
    log_q = hi[..., 0] + np.log(z)
    p = ea / z[..., None]
    return log_q, p, p @ m.centers


def _mixture_field(m: MixtureSpec, t: float, x: np.ndarray):
    """Velocity and its Jacobian for a batch x of shape (B, d)."""
    et = math.exp(-t)
    _, p, mean = _mixture_posterior(m, t, x)
    second = np.einsum("bk,ki,kj->bij", p, m.centers, m.centers)
    cov = second - mean[:, :, None] * mean[:, None, :]
    return -et * mean, -(et * et) * cov


# ---------------------------------------------------------------------------
# 1D densities: Mehler-kernel quadrature
# ---------------------------------------------------------------------------

def mehler_kernel(t: float, x, z) -> np.ndarray:
    """Kernel of Q_t against the target measure; symmetric in (x, z); t > 0."""
    if t <= 0:
        raise ValueError("mehler_kernel requires t > 0")
    x = np.asarray(x, dtype=float)
    z = np.asarray(z, dtype=float)
    e2 = math.exp(-2.0 * t)
    et = math.exp(-t)
    expo = -(e2 * (x * x + z * z) - 2.0 * et * x * z) / (2.0 * (1.0 - e2))
    return np.exp(expo) / math.sqrt(1.0 - e2)


def _quad_window(m, t: float, x: np.ndarray):
    """Bracket of the Mehler-kernel mass inside the support, per point.

    As a function of z the kernel is a Gaussian with mean e^t x and standard
    deviation sqrt(e^{2t} - 1); the bracket is that mean clamped to the
    support, widened by CLIP_SIGMAS kernel scales.
    """
    a, b = m.support if isinstance(m, BoundedDensity1D) else m.window
    mean = np.exp(t) * x
    s = math.sqrt(math.expm1(2.0 * t))
    z0 = np.clip(mean, a, b)
    half = CLIP_SIGMAS * s
    if half >= 0.5 * (b - a):
        lo = np.full_like(z0, a)
        hi = np.full_like(z0, b)
    else:
        lo = np.maximum(a, z0 - half)
        hi = np.minimum(b, z0 + half)
    return lo, hi


def _posterior_stats_1d(m, t: float, x: np.ndarray, n_nodes: int):
    """(log_q, posterior mean, posterior variance) for a batch x of shape (B,)."""
    lo, hi = _quad_window(m, t, x)
    u, w = gauss_legendre(0.0, 1.0, n_nodes)
    z = lo[:, None] + (hi - lo)[:, None] * u[None, :]
    e2 = math.exp(-2.0 * t)
    et = math.exp(-t)
    log_kernel = -(e2 * (x[:, None] ** 2 + z * z) - 2.0 * et * x[:, None] * z) \
        / (2.0 * (1.0 - e2)) - 0.5 * math.log1p(-e2)
    ell = log_kernel + m.log_density(z) + np.log(w)[None, :] + np.log(hi - lo)[:, None]
    peak = np.max(ell, axis=1, keepdims=True)
    p = np.exp(ell - peak)
    total = np.sum(p, axis=1)
    log_q = peak[:, 0] + np.log(total)
    p /= total[:, None]
    mean = np.sum(p * z, axis=1)
    var = np.sum(p * (z - mean[:, None]) ** 2, axis=1)
    return log_q, mean, var


def _converged_stats_1d(m, t: float, x: np.ndarray, n0: int = BASE_NODES):
    """Double the node count until velocity and its Jacobian stabilize."""
    n = n0
    prev = None
    for _ in range(MAX_DOUBLINGS + 1):
        stats = _posterior_stats_1d(m, t, x, n)
        if prev is not None:
            dv = _field_from_stats(t, x, *prev[1:])
            dv2 = _field_from_stats(t, x, *stats[1:])
            err = max(np.max(np.abs(dv[0] - dv2[0]) / np.maximum(1.0, np.abs(dv2[0]))),
                      np.max(np.abs(dv[1] - dv2[1]) / np.maximum(1.0, np.abs(dv2[1]))))
            if err < QUAD_REL_TOL:
                return stats
        prev = stats
        n *= 2
    raise NumericsError(
        f"Mehler quadrature did not converge at t={t} after {MAX_DOUBLINGS} doublings")


def _field_from_stats(t: float, x: np.ndarray, mean: np.ndarray, var: np.ndarray):
    """Velocity and Jacobian from posterior moments: the stable route."""
    e2 = math.exp(-2.0 * t)
    et = math.exp(-t)
    om = -math.expm1(-2.0 * t)          # 1 - e^{-2t}
    v = (e2 * x - et * mean) / om
    dv = e2 / om - e2 * var / (om * om)
    return v, dv


def _check_time(m, t: float) -> None:
    if isinstance(m, MixtureSpec):
        if t < 0:
            raise ValueError("t must be nonnegative")
    elif t < T_FLOOR:
        raise ValueError(f"quadrature-based measures need t >= {T_FLOOR}")


def _as_batch(m, x):
    x = np.asarray(x, dtype=float)
    if isinstance(m, MixtureSpec):
        pts = np.atleast_2d(x)
        return pts, (x.ndim <= 1)
    return np.atleast_1d(x), (x.ndim == 0)


# ---------------------------------------------------------------------------
# Public operations
# ---------------------------------------------------------------------------

def q_smooth(m: Measure, t: float, x) -> float | np.ndarray:
    """Q_t f at x: closed form for mixtures, Mehler quadrature otherwise."""
    _check_time(m, t)
    pts, squeeze = _as_batch(m, x)
    if isinstance(m, MixtureSpec):
        log_q, _, _ = _mixture_posterior(m, t, pts)
    else:
        if t == 0:
            raise ValueError("q_smooth needs t > 0 for quadrature-based measures")
        log_q, _, _ = _converged_stats_1d(m, t, pts)
    out = np.exp(log_q)
    return float(out[0]) if squeeze else out


def velocity(m: Measure, t: float, x) -> np.ndarray:
    """Flow velocity V_t(x) = -grad log Q_t f(x)."""
    v, _ = velocity_and_jacobian(m, t, x)
    return v


def velocity_jacobian(m: Measure, t: float, x) -> np.ndarray:
    """Spatial Jacobian dV_t(x); symmetric, shape (d, d) per point."""
    _, dv = velocity_and_jacobian(m, t, x)
    return dv


def velocity_and_jacobian(m: Measure, t: float, x):
    """Velocity and Jacobian in one pass (shared posterior computation)."""
    _check_time(m, t)
    pts, squeeze = _as_batch(m, x)
    if isinstance(m, MixtureSpec):
        v, dv = _mixture_field(m, t, pts)
        if squeeze:
            return v[0], dv[0]
        return v, dv
    _, mean, var = _converged_stats_1d(m, t, pts)
    v, dv = _field_from_stats(t, pts, mean, var)
    if squeeze:
        return float(v[0]), float(dv[0])
    return v, dv


def semigroup_eval(m: Measure, t: float, x) -> SemigroupEval:
    """Full evaluation bundle at a single point."""
    _check_time(m, t)
    pts, _ = _as_batch(m, x)
    if isinstance(m, MixtureSpec):
        log_q, _, _ = _mixture_posterior(m, t, pts[:1])
        v, dv = _mixture_field(m, t, pts[:1])
        return SemigroupEval(t=t, x=pts[0], q_value=float(np.exp(log_q[0])),
                             score=-v[0], score_jacobian=-dv[0])
    log_q, mean, var = _converged_stats_1d(m, t, pts[:1])
    v, dv = _field_from_stats(t, pts[:1], mean, var)
    return SemigroupEval(t=t, x=pts[:1], q_value=float(np.exp(log_q[0])),
                         score=np.array([-v[0]]),
                         score_jacobian=np.array([[-dv[0]]]))


def field_with_nodes(m, t: float, x: np.ndarray, n_nodes: int):
    """Velocity and Jacobian for a 1D-density batch at a fixed node count.

    Fast path for flow integration after the node count has been calibrated
    with :func:`calibrate_nodes`; skips the per-call doubling loop.
    """
    _, mean, var = _posterior_stats_1d(m, t, x, n_nodes)
    return _field_from_stats(t, x, mean, var)


def calibrate_nodes(m, t_values, probe_x, n0: int = BASE_NODES) -> int:
    """Smallest node count whose field agrees with its doubling everywhere probed."""
    n = n0
    for _ in range(MAX_DOUBLINGS + 1):
        ok = True
        for t in t_values:
            v1, dv1 = field_with_nodes(m, t, probe_x, n)
            v2, dv2 = field_with_nodes(m, t, probe_x, 2 * n)
            err = max(np.max(np.abs(v1 - v2) / np.maximum(1.0, np.abs(v2))),
                      np.max(np.abs(dv1 - dv2) / np.maximum(1.0, np.abs(dv2))))
            if err >= QUAD_REL_TOL:
                ok = False
                break
        if ok:
            return n
        n *= 2
    raise NumericsError("node calibration did not converge")


def _hessian_stencil(logq, x: np.ndarray, d: int, h: float) -> np.ndarray:
    H = np.empty((d, d))
    base = logq(x)
    for i in range(d):
        ei = np.zeros(d)
        ei[i] = h
        H[i, i] = (logq(x + ei) - 2.0 * base + logq(x - ei)) / (h * h)
        for j in range(i + 1, d):
            ej = np.zeros(d)
            ej[j] = h
            H[i, j] = H[j, i] = (logq(x + ei + ej) - logq(x + ei - ej)
                                 - logq(x - ei + ej) + logq(x - ei - ej)) / (4 * h * h)
    return H


def hessian_log_q_numeric(m: Measure, t: float, x, h: float | None = None) -> np.ndarray:
    """Central second differences of log Q_t f; finite-difference oracle.

    Cancellation is detected by comparing the stencil at steps h and 2h
    (a too-small h leaves rounding noise of order eps/h^2 that the doubled
    step does not reproduce); such a step raises NumericsError.
    """
    _check_time(m, t)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if isinstance(m, MixtureSpec):
        d = m.dim

        def logq(p):
            return float(m.log_relative_density(p)) if t == 0 else \
                float(np.log(q_smooth(m, t, p)))
    else:
        d = 1

        def logq(p):
            return float(np.log(q_smooth(m, t, float(p[0]))))

    if h is None:
        h = 1e-4 * (1.0 + float(np.linalg.norm(x)))
    H = _hessian_stencil(logq, x, d, h)
    H2 = _hessian_stencil(logq, x, d, 2.0 * h)
    scale = max(1.0, float(np.max(np.abs(H))))
    if np.max(np.abs(H - H2)) > 1e-3 * scale:
        raise NumericsError("finite-difference Hessian is step-inconsistent; "
                            "cancellation suspected, increase h")
    return H
