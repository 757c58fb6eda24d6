"""Property harness: every inequality the bounds certify, checked at desk scale.

Checks cover the eigenvalue bounds on -dV_t, empirical Lipschitz constants
of the integrated maps, pushforward correctness (Kolmogorov-Smirnov),
transfer of Poincare / dimensional log-Sobolev / weighted Poincare
inequalities, majorization of distribution functions, and Renyi entropies.
Each check returns a :class:`VerificationReport` that is reproducible
bit-for-bit from its seed and configuration digest.
"""

import hashlib
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtr

from . import bounds as bounds_mod
from . import ou_flow, transport
from .errors import RegimeError
from .measures import (BoundedDensity1D, LogConvexDensity1D, Measure,
                       MixtureSpec, build_builtin, density_grid, sample,
                       support_interval, to_json)
from .quadrature import gauss_legendre

Z_99 = 2.5758293035489004  # two-sided 99% normal quantile


@dataclass(frozen=True)
class VerificationReport:
    check_name: str
    trials: int
    worst_margin: float
    tolerance: float
    passed: bool
    seed: int
    config_digest: str
    info: dict = field(default_factory=dict)
    trial_margins: tuple = field(default=(), repr=False)

    def __post_init__(self):
        if self.passed != (self.worst_margin >= -self.tolerance):
            raise ValueError("passed must mirror worst_margin >= -tolerance")

    def to_json_dict(self) -> dict:
        return {
            "check_name": self.check_name,
            "trials": self.trials,
            "worst_margin": self.worst_margin,
            "tolerance": self.tolerance,
            "passed": self.passed,
            "seed": self.seed,
            "config_digest": self.config_digest,
            "info": self.info,
        }


def _digest(check: str, m: Measure | None, **params) -> str:
    try:
        mdesc = to_json(m) if m is not None else None
    except Exception:
        mdesc = repr(type(m).__name__)
    blob = json.dumps({"check": check, "measure": mdesc, "params": params},
                      sort_keys=True, default=str)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _report(check, m, seed, margins, tolerance, info=None, **params) -> VerificationReport:
    margins = np.asarray(margins, dtype=float)
    worst = float(np.min(margins)) if margins.size else 0.0
    return VerificationReport(
        check_name=check, trials=int(margins.size), worst_margin=worst,
        tolerance=tolerance, passed=bool(worst >= -tolerance), seed=seed,
        config_digest=_digest(check, m, **params), info=info or {},
        trial_margins=tuple(float(v) for v in margins))


# ---------------------------------------------------------------------------
# Builtin measure suite
# ---------------------------------------------------------------------------

def builtin_suite() -> dict[str, Measure]:
    """The fixed desk-scale measure set used by the acceptance battery."""
    return {
        "delta0": build_builtin("mixture", centers=[[0.0]]),
        "delta2": build_builtin("mixture", centers=[[2.0]]),
        "two_center_pm1": build_builtin("mixture", centers=[[-1.0], [1.0]]),
        "uniform": build_builtin("uniform_interval", a=-0.5, b=0.5),
        "truncated_gaussian": build_builtin("truncated_gaussian", a=-0.4, b=0.4),
        "inflated": build_builtin("inflated", a=-0.4, b=0.4, c=0.5),
        "gaussian_variance4": build_builtin("gaussian_variance", beta=4.0),
    }


def is_symmetric(m: Measure) -> bool:
    return m.is_symmetric


# ---------------------------------------------------------------------------
# Test-function registry (fixed so golden reports stay stable)
# ---------------------------------------------------------------------------

def _fn_linear(x):
    return x[..., 0], _unit_e1(x)


def _fn_quadratic(x):
    return np.sum(x * x, axis=-1), 2.0 * x


def _fn_bump(x):
    g = np.exp(-0.5 * np.sum(x * x, axis=-1))
    return g, -x * g[..., None]


def _fn_tilt(x):
    g = np.exp(0.3 * x[..., 0])
    return g, 0.3 * g[..., None] * _unit_e1(x)


def _fn_one(x):
    return np.ones(x.shape[:-1]), np.zeros_like(x)


def _fn_one_plus_quadratic(x):
    return 1.0 + np.sum(x * x, axis=-1), 2.0 * x


def _unit_e1(x):
    e = np.zeros_like(x)
    e[..., 0] = 1.0
    return e


TEST_FNS = {"linear": _fn_linear, "quadratic": _fn_quadratic,
            "bump": _fn_bump, "tilt": _fn_tilt}
POSITIVE_TEST_FNS = {"one": _fn_one, "tilt": _fn_tilt,
                     "one_plus_quadratic": _fn_one_plus_quadratic}


# ---------------------------------------------------------------------------
# Hessian eigenvalue bounds
# ---------------------------------------------------------------------------

def _default_x_grid(m: Measure, n: int, seed: int) -> np.ndarray:
    if isinstance(m, BoundedDensity1D):
        a, b = m.support
        inset = 1e-6 * (b - a)
        return np.linspace(a + inset, b - inset, n)[:, None]
    if isinstance(m, LogConvexDensity1D):
        lo, hi = m.window
        return np.linspace(0.9 * lo, 0.9 * hi, n)[:, None]
    if m.dim == 1:
        c = m.centers[:, 0]
        return np.linspace(c.min() - 4.0, c.max() + 4.0, n)[:, None]
    rng = np.random.default_rng(seed)
    return m.sample(n, rng)


def _profile_bounds_at(m: Measure, t: float):
    """(lower, upper) admissible range for eigenvalues of -dV_t; upper may be inf."""
    lower = float(bounds_mod.universal_lower(t))
    upper = math.inf
    if isinstance(m, MixtureSpec):
        R = m.chebyshev_radius
        upper = math.exp(-2.0 * t) * R * R
    elif isinstance(m, BoundedDensity1D):
        upper = float(bounds_mod._item_support(t, m.sigma))
        if m.curvature_lower >= 0 or t <= bounds_mod.concave_validity_cap(m.curvature_lower):
            upper = min(upper, float(bounds_mod._item_concave(t, m.curvature_lower)))
    else:
        lower = max(lower, float(bounds_mod.theta_min_logconvex(m.curvature_upper, t)))
    return lower, upper


def check_hessian_bounds(m: Measure, t_grid=None, n_x: int = 200, seed: int = 0,
                         x_sampler=None, fd_checks: int = 4) -> VerificationReport:
    """Eigenvalues of -dV_t against the family profiles on a (t, x) grid.

    Also cross-checks the analytic Jacobian against the finite-difference
    Hessian of log Q_t f at a few well-conditioned (t, x) pairs; a mismatch
    is folded into the margin so the report fails.
    """
    if t_grid is None:
        t_grid = np.geomspace(0.01, 8.0, 20)
    xs = x_sampler(n_x) if x_sampler is not None else _default_x_grid(m, n_x, seed)
    margins = []
    for t in t_grid:
        if isinstance(m, MixtureSpec):
            _, dv = ou_flow._mixture_field(m, float(t), xs)
            lam = np.linalg.eigvalsh(-dv)
            lam_min, lam_max = lam[:, 0], lam[:, -1]
        else:
            _, dv = ou_flow.velocity_and_jacobian(m, float(t), xs[:, 0])
            lam_min = lam_max = -dv
        lo, hi = _profile_bounds_at(m, float(t))
        margins.append(lam_min - lo)
        if np.isfinite(hi):
            margins.append(hi - lam_max)
    margins = np.concatenate(margins)

    # finite-difference cross-check on a well-conditioned subsample
    fd_tol = 1e-4 if isinstance(m, MixtureSpec) else 2e-3
    fd_err = 0.0
    t_fd = [t for t in t_grid if t >= 0.05][:fd_checks]
    for t, x in zip(t_fd, xs[:: max(1, len(xs) // max(1, len(t_fd)))]):
        if isinstance(m, MixtureSpec):
            dv = ou_flow._mixture_field(m, float(t), x[None, :])[1][0]
        else:
            dv = np.atleast_2d(ou_flow.velocity_and_jacobian(m, float(t), x[0])[1])
        H = ou_flow.hessian_log_q_numeric(m, float(t), x if isinstance(m, MixtureSpec) else x[0])
        scale = max(1.0, float(np.max(np.abs(dv))))
        fd_err = max(fd_err, float(np.max(np.abs(H - (-dv)))) / scale)
    tolerance = 1e-6
    if fd_err > fd_tol:
        margins = np.append(margins, -(fd_err - fd_tol) - tolerance)
    return _report("hessian_bounds", m, seed, margins, tolerance,
                   info={"fd_err": fd_err, "t_grid": [float(t) for t in t_grid]},
                   n_x=n_x, fd_checks=fd_checks)


# ---------------------------------------------------------------------------
# Lipschitz certificates
# ---------------------------------------------------------------------------

def empirical_lipschitz(m: Measure, n_samples: int, cfg=None, seed: int = 0,
                        chunk: int = 2000) -> VerificationReport:
    """Max operator norm of the propagated Jacobian over sampled trajectories.

    For mixtures and bounded log-concave targets the map is T (Gaussian
    samples, backward flow); for semi-log-convex targets it is the inverse
    map S (target samples, forward flow).  Passes iff the sampled maximum
    stays below the certified bound within relative 1e-3.
    """
    if cfg is None:
        cfg = transport.default_config(m)
    rng = np.random.default_rng(seed)
    bound = bounds_mod.lipschitz_bound(m)
    inverse = isinstance(m, LogConvexDensity1D)
    ops = []
    for start in range(0, n_samples, chunk):
        b = min(chunk, n_samples - start)
        if inverse:
            x = sample(m, b, rng)[:, None]
            _, _, op = transport.flow_forward(m, x, cfg)
        else:
            dim = m.dim if isinstance(m, MixtureSpec) else 1
            x = rng.standard_normal((b, dim))
            _, _, op = transport.transport_from_gaussian(m, x, cfg)
        ops.append(op)
    ops = np.concatenate(ops)
    margins = bound * (1.0 + 1e-3) - ops
    return _report("empirical_lipschitz", m, seed, margins, 0.0,
                   info={"bound": bound, "max_op_norm": float(ops.max()),
                         "direction": "inverse" if inverse else "forward"},
                   n_samples=n_samples, t_max=cfg.t_max, steps=cfg.steps,
                   t_min=cfg.t_min)


# ---------------------------------------------------------------------------
# Pushforward correctness (1D Kolmogorov-Smirnov)
# ---------------------------------------------------------------------------

def pushforward_ks_1d(m: Measure, n_samples: int, cfg=None, seed: int = 0,
                      n_knots: int = 257) -> VerificationReport:
    """KS distance between T(Gaussian samples) and the target CDF.

    The map is evaluated through a monotone interpolant of batched knot
    trajectories; in one dimension T is monotone, so the interpolation error
    is far below the 0.003 integration slack in the pass threshold.
    """
    if isinstance(m, MixtureSpec) and m.dim != 1:
        raise ValueError("KS check is one-dimensional only")
    if cfg is None:
        cfg = transport.default_config(m, steps=512)
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(n_samples)
    T = transport.transport_map_1d(m, cfg, x_lo=float(x.min()) - 0.05,
                                   x_hi=float(x.max()) + 0.05, n_knots=n_knots)
    y = np.sort(T(x))
    F = np.asarray(measures_cdf(m, y))
    i = np.arange(1, n_samples + 1)
    ks = float(max(np.max(F - (i - 1) / n_samples), np.max(i / n_samples - F)))
    threshold = 1.63 / math.sqrt(n_samples) + 0.003
    return _report("pushforward_ks", m, seed, [threshold - ks], 0.0,
                   info={"ks": ks, "threshold": threshold},
                   n_samples=n_samples, steps=cfg.steps, n_knots=n_knots)


def measures_cdf(m: Measure, x):
    from .measures import cdf_1d
    return cdf_1d(m, x)


# ---------------------------------------------------------------------------
# Moment helpers (quadrature in 1D, Monte Carlo beyond)
# ---------------------------------------------------------------------------

def _quad_nodes_1d(m: Measure, n: int = 4000):
    lo, hi = support_interval(m)
    z, w = gauss_legendre(lo, hi, n)
    if isinstance(m, MixtureSpec):
        rho = m.density(z)
    else:
        rho = m.density(z)
    return z[:, None], w * rho


def _expectations_1d(m: Measure, fns):
    """E[g], E[g^2], E[|grad g|^2], E[|grad g|^2 / g], E[g log g] per function."""
    z, w = _quad_nodes_1d(m)
    out = {}
    for name, fn in fns.items():
        g, grad = fn(z)
        gg = np.sum(grad * grad, axis=-1)
        with np.errstate(divide="ignore", invalid="ignore"):
            glg = np.where(g > 0, g * np.log(np.maximum(g, 1e-300)), 0.0)
        out[name] = {
            "mean": float(np.sum(w * g)),
            "sq": float(np.sum(w * g * g)),
            "grad_sq": float(np.sum(w * gg)),
            "grad_sq_over_g": float(np.sum(w * gg / np.maximum(g, 1e-300))),
            "g_log_g": float(np.sum(w * glg)),
        }
    return out


# ---------------------------------------------------------------------------
# Functional-inequality transfer
# ---------------------------------------------------------------------------

def _transfer_bound_sq(m: Measure) -> float:
    L = bounds_mod.lipschitz_bound(m)
    if isinstance(m, LogConvexDensity1D):
        raise RegimeError("forward transfer bounds cover mixtures and bounded "
                          "log-concave targets only")
    return L * L

def poincare_transfer(m: Measure, test_fns=None, n: int = 200_000,
                      seed: int = 0) -> VerificationReport:
    """Var_mu(g) <= L^2 * integral |grad g|^2 d(mu) for the registry functions."""
    L2 = _transfer_bound_sq(m)
    fns = test_fns or TEST_FNS
    margins, info = [], {}
    if not isinstance(m, MixtureSpec) or m.dim == 1:
        stats = _expectations_1d(m, fns)
        for name, s in stats.items():
            var = s["sq"] - s["mean"] ** 2
            rhs = L2 * s["grad_sq"]
            margins.append(rhs - var)
            info[name] = {"var": var, "rhs": rhs}
        tolerance = 1e-7
    else:
        rng = np.random.default_rng(seed)
        x = m.sample(n, rng)
        for name, fn in fns.items():
            g, grad = fn(x)
            gg = np.sum(grad * grad, axis=-1)
            var = float(np.var(g))
            rhs = L2 * float(np.mean(gg))
            se = math.sqrt(float(np.var(g * g)) / n) + 2.0 * abs(g.mean()) * math.sqrt(float(np.var(g)) / n) \
                + L2 * math.sqrt(float(np.var(gg)) / n)
            margins.append(rhs - var + Z_99 * se)
            info[name] = {"var": var, "rhs": rhs, "mc_se": se}
        tolerance = 0.0
    return _report("poincare_transfer", m, seed, margins, tolerance, info=info,
                   n=n, fns=sorted(fns))


def dimensional_entropy_check(m: Measure, test_fns=None, n: int = 200_000,
                              seed: int = 0) -> VerificationReport:
    """Ent_mu(g) <= (d/2) log(1 + (L^2/d) * integral |grad g|^2 / g d(mu))."""
    L2 = _transfer_bound_sq(m)
    fns = test_fns or POSITIVE_TEST_FNS
    d = m.dim if isinstance(m, MixtureSpec) else 1
    margins, info = [], {}
    if not isinstance(m, MixtureSpec) or m.dim == 1:
        stats = _expectations_1d(m, fns)
        for name, s in stats.items():
            if s["mean"] <= 0:
                raise ValueError(f"test function {name} not positive in the mean")
            ent = s["g_log_g"] - s["mean"] * math.log(s["mean"])
            rhs = 0.5 * d * math.log1p((L2 / d) * s["grad_sq_over_g"])
            margins.append(rhs - ent)
            info[name] = {"entropy": ent, "rhs": rhs}
        tolerance = 1e-7
    else:
        rng = np.random.default_rng(seed)
        x = m.sample(n, rng)
        for name, fn in fns.items():
            g, grad = fn(x)
            if np.any(g <= 0):
                raise ValueError(f"test function {name} nonpositive at a sample")
            gg = np.sum(grad * grad, axis=-1) / g
            mg = float(np.mean(g))
            ent = float(np.mean(g * np.log(g))) - mg * math.log(mg)
            rhs = 0.5 * d * math.log1p((L2 / d) * float(np.mean(gg)))
            se = math.sqrt(float(np.var(g * np.log(g))) / n) \
                + (abs(math.log(mg)) + 1.0) * math.sqrt(float(np.var(g)) / n) \
                + 0.5 * L2 * math.sqrt(float(np.var(gg)) / n)
            margins.append(rhs - ent + Z_99 * se)
            info[name] = {"entropy": ent, "rhs": rhs, "mc_se": se}
        tolerance = 0.0
    return _report("dimensional_entropy", m, seed, margins, tolerance, info=info,
                   n=n, fns=sorted(fns))


def weighted_poincare_check(m: MixtureSpec, g_set=None, n: int = 200_000,
                            seed: int = 0) -> VerificationReport:
    """Symmetric targets in d >= 2: variance against the weighted Dirichlet form.

    Uses Var_mu(g) <= (d(d+3)/(d-1)) L^2 * integral |grad g|^2 /
    (1 + L^{-2} |x|^2) d(mu), by Monte Carlo with 99% confidence slack.
    Also asserts that the transported origin stays at the origin.
    """
    if not isinstance(m, MixtureSpec) or m.dim < 2:
        raise RegimeError("weighted Poincare check needs a mixture with d >= 2")
    if not m.is_symmetric:
        raise RegimeError("weighted Poincare check needs a symmetric measure")
    L2 = _transfer_bound_sq(m)
    d = m.dim
    cfg = transport.default_config(m, steps=256)
    t0 = transport.transport_from_gaussian(m, np.zeros(d), cfg)
    origin_drift = float(np.linalg.norm(t0.endpoint))
    if origin_drift >= 1e-6:
        raise RegimeError(f"transported origin moved by {origin_drift:.2e}")

    rng = np.random.default_rng(seed)
    x = m.sample(n, rng)
    fns = g_set or TEST_FNS
    factor = d * (d + 3) / (d - 1) * L2
    margins, info = [], {"origin_drift": origin_drift}
    for name, fn in fns.items():
        g, grad = fn(x)
        weight = 1.0 / (1.0 + np.sum(x * x, axis=-1) / L2)
        h = np.sum(grad * grad, axis=-1) * weight
        var = float(np.var(g))
        rhs = factor * float(np.mean(h))
        se = math.sqrt(float(np.var(g * g)) / n) + 2.0 * abs(g.mean()) * math.sqrt(float(np.var(g)) / n) \
            + factor * math.sqrt(float(np.var(h)) / n)
        margins.append(rhs - var + Z_99 * se)
        info[name] = {"var": var, "rhs": rhs, "mc_se": se}
    return _report("weighted_poincare", m, seed, margins, 0.0, info=info,
                   n=n, fns=sorted(fns))


# ---------------------------------------------------------------------------
# Majorization and Renyi entropy
# ---------------------------------------------------------------------------

def gaussian_upper_integral(t: np.ndarray) -> np.ndarray:
    """integral over x of (phi(x) - t)_+ for the standard normal density."""
    t = np.asarray(t, dtype=float)
    phimax = 1.0 / math.sqrt(2.0 * math.pi)
    out = np.zeros_like(t)
    ok = (t > 0) & (t < phimax)
    xt = np.sqrt(-2.0 * np.log(t[ok] * math.sqrt(2.0 * math.pi)))
    out[ok] = 2.0 * ndtr(xt) - 1.0 - 2.0 * t[ok] * xt
    out[t <= 0] = 1.0
    return out


def majorization_premise(m: Measure) -> bool:
    """One-Lipschitz regime: bounded targets need exp((1-k s^2)/2) s <= 1;
    unit-variance mixtures need exp(R^2/2) <= 1, i.e. R = 0."""
    if isinstance(m, BoundedDensity1D):
        k, s = m.curvature_lower, m.sigma
        return k * s * s < 1.0 and math.exp(0.5 * (1.0 - k * s * s)) * s <= 1.0
    if isinstance(m, MixtureSpec):
        return m.dim == 1 and math.exp(0.5 * m.chebyshev_radius ** 2) <= 1.0
    return False


def majorization_check(m: Measure, n_grid: int = 200, seed: int = 0) -> VerificationReport:
    """Domination of integrated distribution functions by the Gaussian's.

    Verifies integral_t^inf F_gauss <= integral_t^inf F_mu on a level grid,
    where F(s) is the Lebesgue measure of the super-level set of the density
    (so the integral equals integral of (density - t)_+).  Out-of-regime
    parameters raise RegimeError rather than failing.  The report also
    carries the Renyi entropies h_q for q in {0.5, 2} next to the Gaussian
    values; the observed ordering is informational.
    """
    if not majorization_premise(m):
        raise RegimeError("measure outside the 1-Lipschitz majorization regime")
    xs, rho = density_grid(m, n=1 << 17)
    rho_max = float(rho.max())
    t_grid = np.linspace(0.0, max(rho_max, 1.0 / math.sqrt(2 * math.pi)) * 1.02,
                         n_grid + 1)[1:]
    dx = np.diff(xs)
    trap = lambda v: float(np.sum(0.5 * (v[1:] + v[:-1]) * dx))
    g_mu = np.array([trap(np.maximum(rho - t, 0.0)) for t in t_grid])
    g_gauss = gaussian_upper_integral(t_grid)
    margins = g_mu - g_gauss

    # super-level-set sizes themselves, for the report
    lam_grid = np.linspace(0.0, rho_max, 9)[1:]
    F_mu = [float(np.sum(0.5 * (np.asarray(rho[1:] >= lam, float)
                                + np.asarray(rho[:-1] >= lam, float)) * dx))
            for lam in lam_grid]
    hq = {f"h_{q}": renyi_entropy_1d(m, q) for q in (0.5, 2.0)}
    hq_gauss = {f"h_{q}_gauss": gaussian_renyi(q) for q in (0.5, 2.0)}
    return _report("majorization", m, seed, margins, 1e-7,
                   info={"levels": [float(v) for v in lam_grid],
                         "F_mu": F_mu, **hq, **hq_gauss},
                   n_grid=n_grid)


def gaussian_renyi(q: float) -> float:
    """h_q of the standard 1D Gaussian, closed form."""
    if q <= 0 or q == 1.0:
        raise ValueError("need q > 0, q != 1")
    return 0.5 * math.log(2.0 * math.pi) + 0.5 * math.log(q) / (q - 1.0)


def renyi_entropy_1d(m: Measure, q: float) -> float:
    """h_q(mu) = log(integral density^q) / (1 - q), by quadrature."""
    if q <= 0 or q == 1.0:
        raise ValueError("need q > 0, q != 1")
    lo, hi = support_interval(m)
    z, w = gauss_legendre(lo, hi, 4000)
    rho = m.density(z)
    val = float(np.sum(w * np.power(rho, q)))
    return math.log(val) / (1.0 - q)


# ---------------------------------------------------------------------------
# Symmetry of the transported origin
# ---------------------------------------------------------------------------

def symmetry_check(m: Measure, cfg=None, seed: int = 0) -> VerificationReport:
    """|T(0)| < 1e-6 for symmetric targets (odd velocity field)."""
    if not m.is_symmetric:
        raise RegimeError("symmetry check needs a symmetric measure")
    if cfg is None:
        cfg = transport.default_config(m, steps=512)
    d = m.dim if isinstance(m, MixtureSpec) else 1
    res = transport.transport_from_gaussian(m, np.zeros(d), cfg)
    drift = float(np.linalg.norm(res.endpoint))
    return _report("symmetry", m, seed, [1e-6 - drift], 0.0,
                   info={"origin_drift": drift}, steps=cfg.steps)
