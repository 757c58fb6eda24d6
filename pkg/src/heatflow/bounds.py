"""Closed-form Lipschitz constants and eigenvalue profiles for the flow Jacobian.

Within each measure family the eigenvalues of -dV_t admit uniform bounds:

* every relative density:  -dV_t >= -e^{-2t} / (1 - e^{-2t});
* support in a ball of radius sigma:
      -dV_t <= e^{-2t} (sigma^2 / (1 - e^{-2t})^2 - 1 / (1 - e^{-2t}));
* kappa-log-concave:
      -dV_t <= e^{-2t} (1 - kappa) / (kappa (1 - e^{-2t}) + e^{-2t}),
  valid for all t when kappa >= 0 and for t <= log((kappa-1)/kappa)/2 otherwise;
* Gaussian mixture with mixing support radius R:  -dV_t <= e^{-2t} R^2;
* beta-semi-log-convex:
      -dV_t >= e^{-2t} (1 - beta) / ((1 - e^{-2t}) (beta - 1) + 1).

Integrating the relevant profile and exponentiating (Gronwall) yields the
Lipschitz constants exp((1 - kappa sigma^2)/2) sigma, exp(R^2 / 2) and, for
the inverse map of a semi-log-convex target, sqrt(beta).
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad

from .errors import NumericsError, RegimeError
from .measures import BoundedDensity1D, LogConvexDensity1D, Measure, MixtureSpec


def universal_lower(t) -> np.ndarray:
    """Lower bound on every eigenvalue of -dV_t, any target measure."""
    u = np.exp(-2.0 * np.asarray(t, dtype=float))
    return -u / (1.0 - u)


def _item_support(t, sigma: float) -> np.ndarray:
    u = np.exp(-2.0 * np.asarray(t, dtype=float))
    om = 1.0 - u
    return u * (sigma * sigma / (om * om) - 1.0 / om)


def _item_concave(t, kappa: float) -> np.ndarray:
    u = np.exp(-2.0 * np.asarray(t, dtype=float))
    return u * (1.0 - kappa) / (kappa * (1.0 - u) + u)


def crossover_time(kappa: float, sigma: float) -> float:
    """Time at which the support-based and concavity-based profiles cross."""
    if kappa * sigma * sigma >= 1.0:
        raise RegimeError("crossover defined only for kappa * sigma^2 < 1")
    return 0.5 * math.log((sigma * sigma * (kappa - 1.0) - 1.0)
                          / (kappa * sigma * sigma - 1.0))


def concave_validity_cap(kappa: float) -> float:
    """Largest t at which the concavity profile is valid (infinite for kappa >= 0)."""
    if kappa >= 0:
        return math.inf
    return 0.5 * math.log((kappa - 1.0) / kappa)


@dataclass(frozen=True)
class ThetaProfile:
    """Scalar profile t -> theta(t) bounding eigenvalues of -dV_t.

    ``kind`` is one of ``logconcave`` (upper profile, parameters kappa and
    sigma), ``mixture`` (upper profile, parameter R) or ``logconvex``
    (lower profile, parameter beta).  ``closed_form_integral`` is the signed
    value of the integral over (0, infinity).
    """

    kind: str
    params: dict
    t0: float | None
    closed_form_integral: float

    def __call__(self, t):
        return theta_max(self, t) if self.kind != "logconvex" \
            else theta_min_logconvex(self.params["beta"], t)

    def __post_init__(self):
        if self.kind == "logconcave" and self.t0 is not None:
            lo = self(self.t0 - 1e-12)
            hi = self(self.t0 + 1e-12)
            if abs(lo - hi) > 1e-9 * max(1.0, abs(lo)):
                raise NumericsError("profile discontinuous at the crossover time")


def logconcave_profile(kappa: float, sigma: float) -> ThetaProfile:
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    if kappa * sigma * sigma >= 1.0:
        raise RegimeError("profile requires kappa * sigma^2 < 1")
    t0 = crossover_time(kappa, sigma)
    if kappa < 0 and not t0 < concave_validity_cap(kappa):
        raise NumericsError("crossover exceeds the concavity-profile validity window")
    integral = 0.5 * (1.0 - kappa * sigma * sigma) + math.log(sigma)
    return ThetaProfile(kind="logconcave", params={"kappa": kappa, "sigma": sigma},
                        t0=t0, closed_form_integral=integral)


def mixture_profile(R: float) -> ThetaProfile:
    if R < 0:
        raise ValueError("R must be nonnegative")
    return ThetaProfile(kind="mixture", params={"R": R}, t0=None,
                        closed_form_integral=0.5 * R * R)


def logconvex_profile(beta: float) -> ThetaProfile:
    if beta <= 0:
        raise RegimeError("beta must be positive")
    return ThetaProfile(kind="logconvex", params={"beta": beta}, t0=None,
                        closed_form_integral=-0.5 * math.log(beta))


def theta_max(profile: ThetaProfile, t):
    """Upper eigenvalue profile at time(s) t."""
    t = np.asarray(t, dtype=float)
    if profile.kind == "mixture":
        R = profile.params["R"]
        return np.exp(-2.0 * t) * R * R
    if profile.kind == "logconcave":
        kappa, sigma = profile.params["kappa"], profile.params["sigma"]
        return np.where(t <= profile.t0,
                        _item_concave(np.minimum(t, profile.t0), kappa),
                        _item_support(np.maximum(t, profile.t0), sigma))
    raise RegimeError("logconvex profiles bound eigenvalues from below; "
                      "use theta_min_logconvex")


def theta_min_logconvex(beta: float, t):
    """Lower eigenvalue profile for a beta-semi-log-convex target."""
    if beta <= 0:
        raise RegimeError("beta must be positive")
    u = np.exp(-2.0 * np.asarray(t, dtype=float))
    return u * (1.0 - beta) / ((1.0 - u) * (beta - 1.0) + 1.0)


# ---------------------------------------------------------------------------
# Lipschitz constants
# ---------------------------------------------------------------------------

def bound_logconcave(kappa: float, sigma: float) -> float:
    """Lipschitz constant of the map pushing the Gaussian onto a
    kappa-log-concave target supported in a ball of radius sigma."""
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    u = kappa * sigma * sigma
    if u < 1.0:
        val = math.exp(0.5 * (1.0 - u)) * sigma
        if kappa > 0:
            val = min(val, 1.0 / math.sqrt(kappa))
        return val
    if kappa > 0:
        return 1.0 / math.sqrt(kappa)
    raise RegimeError("no bound available for kappa <= 0 with kappa * sigma^2 >= 1")


def bound_mixture(R: float) -> float:
    """Lipschitz constant for a Gaussian mixture with mixing radius R."""
    if R < 0:
        raise ValueError("R must be nonnegative")
    return math.exp(0.5 * R * R)


def bound_inverse_logconvex(beta: float) -> float:
    """Lipschitz constant of the inverse map for a beta-semi-log-convex target."""
    if beta <= 0:
        raise RegimeError("beta must be positive")
    return math.sqrt(beta)


# ---------------------------------------------------------------------------
# Profile integration (quadrature side of the dual route)
# ---------------------------------------------------------------------------

def _tail_integral(profile: ThetaProfile, T: float) -> float:
    """Analytic integral of the profile over [T, infinity)."""
    u = math.exp(-2.0 * T)
    if profile.kind == "mixture":
        R = profile.params["R"]
        return 0.5 * R * R * u
    if profile.kind == "logconvex":
        beta = profile.params["beta"]
        # antiderivative: -log((1 - e^{-2t})(beta - 1) + 1) / 2
        return 0.5 * (math.log((1.0 - u) * (beta - 1.0) + 1.0) - math.log(beta))
    kappa, sigma = profile.params["kappa"], profile.params["sigma"]
    T_eff = max(T, profile.t0)
    u = math.exp(-2.0 * T_eff)
    om = 1.0 - u
    # antiderivative of the support profile: (-sigma^2/(1-e^{-2t}) - log(1-e^{-2t}))/2
    tail = 0.5 * (-sigma * sigma - (-sigma * sigma / om - math.log(om)))
    if T < profile.t0:
        # remaining stretch of the concavity branch on [T, t0]
        uT = math.exp(-2.0 * T)
        u0 = math.exp(-2.0 * profile.t0)

        def anti(u):
            return -0.5 * math.log(kappa * (1.0 - u) + u)
        tail += anti(u0) - anti(uT)
    return tail


def integrate_profile(profile: ThetaProfile, t_max: float = 30.0) -> float:
    """Adaptive quadrature of the profile over [0, t_max] plus the analytic tail.

    Agrees with ``profile.closed_form_integral`` to ~1e-10; the quadrature
    route is kept independent so the closed forms can be cross-checked.
    """
    pieces = sorted({0.0, t_max} | ({profile.t0} if profile.t0 and profile.t0 < t_max else set()))
    total = 0.0
    for lo, hi in zip(pieces[:-1], pieces[1:]):
        val, err = quad(lambda s: float(profile(s)), lo, hi, limit=400,
                        epsabs=1e-12, epsrel=1e-12)
        if err > 1e-8:
            raise NumericsError(f"profile quadrature error estimate {err:.2e} too large")
        total += val
    return total + _tail_integral(profile, t_max)


# ---------------------------------------------------------------------------
# Per-measure dispatch
# ---------------------------------------------------------------------------

def profile_for(m: Measure) -> ThetaProfile:
    """Profile of the direction certified for the measure's family."""
    if isinstance(m, MixtureSpec):
        return mixture_profile(m.chebyshev_radius)
    if isinstance(m, BoundedDensity1D):
        return logconcave_profile(m.curvature_lower, m.sigma)
    return logconvex_profile(m.curvature_upper)


def lipschitz_bound(m: Measure) -> float:
    """Certified Lipschitz constant: forward map onto mixtures/log-concave
    targets, inverse map for semi-log-convex targets."""
    if isinstance(m, MixtureSpec):
        return bound_mixture(m.chebyshev_radius)
    if isinstance(m, BoundedDensity1D):
        return bound_logconcave(m.curvature_lower, m.sigma)
    return bound_inverse_logconvex(m.curvature_upper)
