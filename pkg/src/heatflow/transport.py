"""Flow integration: forward map S, inverse map T, and Jacobian propagation.

The forward flow solves dy/dt = V_t(y) from t_min to t_max together with
the variational equation dJ/dt = dV_t(y) J, J(t_min) = Id.  Run on the
target measure it carries mu to (approximately) the standard Gaussian; the
backward flow dy/ds = -V_{t_max - s}(y) carries Gaussian samples onto the
target.  The largest singular value of the propagated Jacobian certifies a
pointwise Lipschitz constant, which the profile integral from
:mod:`heatflow.bounds` must dominate (Gronwall).

Integration uses a classical 4th-order scheme on a fixed mesh: uniform when
t_min = 0, geometrically graded towards t_min otherwise.  The grading keeps
h proportional to t near the cutoff, where the velocity field of
bounded-support targets is stiff; the mesh is deterministic either way.
"""

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.interpolate import PchipInterpolator

from .bounds import _tail_integral, profile_for
from .errors import FlowDivergenceError, NumericsError
from .measures import BoundedDensity1D, LogConvexDensity1D, Measure, MixtureSpec
from .ou_flow import (BASE_NODES, T_FLOOR, _mixture_field, calibrate_nodes,
                      field_with_nodes)

MAX_FLOW_DIM = 16


@dataclass(frozen=True)
class IntegratorConfig:
    t_max: float
    steps: int = 2048
    richardson: bool = False
    t_min: float = 0.0

    def __post_init__(self):
        if not self.t_max > self.t_min >= 0:
            raise ValueError("need t_max > t_min >= 0")
        if self.steps < 16:
            raise ValueError("need at least 16 steps")

    def mesh(self) -> np.ndarray:
        """Time nodes from t_min to t_max (uniform, or graded when t_min > 0)."""
        if self.t_min > 0 and self.t_max / self.t_min > 100.0:
            return np.geomspace(self.t_min, self.t_max, self.steps + 1)
        return np.linspace(self.t_min, self.t_max, self.steps + 1)


@dataclass(frozen=True)
class FlowResult:
    endpoint: np.ndarray
    trajectory: list | None
    jacobian: np.ndarray
    op_norm: float
    log_lipschitz_accum: float

    def __post_init__(self):
        if self.op_norm < 0:
            raise ValueError("op_norm must be nonnegative")
        if self.trajectory is not None:
            ts = [t for t, _ in self.trajectory]
            if any(b <= a for a, b in zip(ts, ts[1:])):
                raise ValueError("trajectory times must be strictly increasing")


def default_config(m: Measure, steps: int = 2048, richardson: bool = False) -> IntegratorConfig:
    """Default integration window: tails of both the certified profile and the
    velocity field (|V_t| <= e^{-t} max|x_i| for mixtures) below 1e-8."""
    if isinstance(m, MixtureSpec):
        R = m.chebyshev_radius
        t_max = 6.0 if R == 0 else max(6.0, 0.5 * math.log(R * R * 1e8))
        cmax = float(np.max(np.linalg.norm(m.centers, axis=1)))
        if cmax > 0:
            t_max = max(t_max, math.log(cmax * 1e8))
        t_min = 0.0
    else:
        profile = profile_for(m)
        t_max = 6.0
        while abs(_tail_integral(profile, t_max)) > 1e-8 and t_max < 64.0:
            t_max += 0.5
        t_min = 1e-6 if isinstance(m, BoundedDensity1D) else 1e-8
    return IntegratorConfig(t_max=t_max, steps=steps, richardson=richardson, t_min=t_min)


# ---------------------------------------------------------------------------
# Field evaluation shared by both flow directions
# ---------------------------------------------------------------------------

class _Field:
    """Velocity/Jacobian evaluator over batches, with calibrated quadrature."""

    def __init__(self, m: Measure, cfg: IntegratorConfig):
        self.m = m
        self.dim = m.dim if isinstance(m, MixtureSpec) else 1
        if self.dim > MAX_FLOW_DIM:
            raise ValueError(f"flow integration supports dim <= {MAX_FLOW_DIM}")
        if isinstance(m, MixtureSpec):
            scale = m.chebyshev_radius + float(np.linalg.norm(m.chebyshev_center))
            self.nodes = None
        else:
            lo, hi = m.support if isinstance(m, BoundedDensity1D) else m.window
            scale = 0.5 * (hi - lo)
            probe_t = np.geomspace(max(cfg.t_min, T_FLOOR), cfg.t_max, 7)
            probe_x = np.linspace(-abs(lo) - 5.0, abs(hi) + 5.0, 17)
            self.nodes = calibrate_nodes(m, probe_t, probe_x, BASE_NODES)
        self.safety = 10.0 * scale + 20.0

    def __call__(self, t: float, y: np.ndarray):
        """y of shape (B, d) -> (V, dV) of shapes (B, d), (B, d, d)."""
        if isinstance(self.m, MixtureSpec):
            return _mixture_field(self.m, t, y)
        v, dv = field_with_nodes(self.m, max(t, T_FLOOR), y[:, 0], self.nodes)
        return v[:, None], dv[:, None, None]

    def check(self, y: np.ndarray):
        if not np.all(np.isfinite(y)):
            raise NumericsError("flow state became non-finite")
        r = np.linalg.norm(y, axis=-1)
        if np.any(r > self.safety):
            raise FlowDivergenceError(
                f"trajectory escaped the safety ball (|y| = {r.max():.3g})")


def _rk4(field, times: np.ndarray, signs: float, y0: np.ndarray,
         record: list | None = None):
    """March (y, J) across ``times``; ``signs=+1`` forward in t, ``-1`` backward.

    For the backward direction ``times`` is traversed from the end, and the
    integration variable is s = t_max - t, so dy/ds = -V_t(y).
    """
    B, d = y0.shape
    y = y0.copy()
    J = np.broadcast_to(np.eye(d), (B, d, d)).copy()
    order = range(len(times) - 1) if signs > 0 else range(len(times) - 1, 0, -1)

    def f(t, y, J):
        v, dv = field(t, y)
        return signs * v, signs * np.einsum("bij,bjk->bik", dv, J)

    for k in order:
        t_a, t_b = (times[k], times[k + 1]) if signs > 0 else (times[k], times[k - 1])
        h = abs(t_b - t_a)
        tm = 0.5 * (t_a + t_b)
        k1v, k1j = f(t_a, y, J)
        k2v, k2j = f(tm, y + 0.5 * h * k1v, J + 0.5 * h * k1j)
        k3v, k3j = f(tm, y + 0.5 * h * k2v, J + 0.5 * h * k2j)
        k4v, k4j = f(t_b, y + h * k3v, J + h * k3j)
        y = y + (h / 6.0) * (k1v + 2.0 * k2v + 2.0 * k3v + k4v)
        J = J + (h / 6.0) * (k1j + 2.0 * k2j + 2.0 * k3j + k4j)
        field.check(y)
        if record is not None:
            record.append((float(t_b), y.copy()))
    return y, J


def _normalize_points(pts: np.ndarray, dim: int) -> tuple[np.ndarray, bool]:
    """Shape (B, dim) batch plus a flag for single-point inputs.

    Single points: a scalar (dim 1), a (dim,) vector, or a (1,) array.
    Batches: (B, dim) arrays; for dim = 1 a flat (B,) array also works.
    """
    if pts.ndim == 0:
        return pts.reshape(1, 1), True
    if pts.ndim == 1:
        if dim == 1:
            return pts.reshape(-1, 1), pts.shape[0] == 1
        if pts.shape[0] != dim:
            raise ValueError(f"point has {pts.shape[0]} components, expected {dim}")
        return pts.reshape(1, dim), True
    if pts.ndim != 2 or pts.shape[1] != dim:
        raise ValueError(f"batch must have shape (B, {dim})")
    return pts, False


def _integrate(m, x, cfg, direction: str, store_trajectory: bool):
    field = _Field(m, cfg)
    pts, squeeze = _normalize_points(np.asarray(x, dtype=float), field.dim)
    field.check(pts)
    signs = +1.0 if direction == "forward" else -1.0
    times = cfg.mesh()

    record = [] if store_trajectory else None
    if record is not None:
        t0 = times[0] if signs > 0 else times[-1]
        record.append((float(t0), pts.copy()))
    y, J = _rk4(field, times, signs, pts, record)
    if cfg.richardson:
        fine = replace(cfg, steps=2 * cfg.steps, richardson=False)
        y2, J2 = _rk4(field, fine.mesh(), signs, pts)
        y = y2 + (y2 - y) / 15.0
        J = J2 + (J2 - J) / 15.0
    return y, J, record, squeeze, field


def _accum(m, cfg, direction: str) -> float:
    """Signed Gronwall exponent of the certified profile over [t_min, t_max]."""
    try:
        profile = profile_for(m)
    except Exception:
        return math.nan
    if isinstance(m, LogConvexDensity1D):
        if direction != "forward":
            return math.nan
        return -(_tail_integral(profile, cfg.t_min) - _tail_integral(profile, cfg.t_max))
    if direction != "backward":
        return math.nan
    return _tail_integral(profile, cfg.t_min) - _tail_integral(profile, cfg.t_max)


def _pack(m, cfg, direction, y, J, record, squeeze):
    accum = _accum(m, cfg, direction)
    if squeeze:
        traj = None if record is None else [(t, v[0].copy()) for t, v in record]
        if direction == "backward" and traj is not None:
            # report in the integration variable s = t_max - t, increasing
            traj = [(float(cfg.t_max - t), v) for t, v in traj]
            traj.sort(key=lambda p: p[0])
        return FlowResult(endpoint=y[0], trajectory=traj, jacobian=J[0],
                          op_norm=operator_norm(J[0]), log_lipschitz_accum=accum)
    return y, J, np.array([operator_norm(Ji) for Ji in J])


def flow_forward(m: Measure, x, cfg: IntegratorConfig, store_trajectory: bool = False):
    """Integrate the forward flow from t_min to t_max; approximates S(x).

    ``x`` may be a single point (returns FlowResult) or a batch of shape
    (B, d) (returns (endpoints, jacobians, op_norms)).
    """
    y, J, record, squeeze, _ = _integrate(m, x, cfg, "forward", store_trajectory)
    return _pack(m, cfg, "forward", y, J, record, squeeze)


def transport_from_gaussian(m: Measure, x, cfg: IntegratorConfig,
                            store_trajectory: bool = False):
    """Integrate the backward flow; approximates T(x), with T_* gamma_d = mu."""
    y, J, record, squeeze, _ = _integrate(m, x, cfg, "backward", store_trajectory)
    return _pack(m, cfg, "backward", y, J, record, squeeze)


def roundtrip_error(m: Measure, x, cfg: IntegratorConfig) -> float:
    """|S(T(x)) - x| with matched configurations."""
    t = transport_from_gaussian(m, x, cfg)
    s = flow_forward(m, t.endpoint, cfg)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    return float(np.linalg.norm(s.endpoint - x))


def operator_norm(J: np.ndarray) -> float:
    """Largest singular value via power iteration on J^T J (rel. tol 1e-12)."""
    J = np.atleast_2d(np.asarray(J, dtype=float))
    if not np.all(np.isfinite(J)):
        raise ValueError("operator_norm requires finite entries")
    if J.shape == (1, 1):
        return abs(float(J[0, 0]))
    G = J.T @ J
    d = G.shape[0]
    v = np.ones(d) + 1e-3 * np.arange(d)
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(10_000):
        w = G @ v
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return 0.0
        v_new = w / nw
        lam_new = float(v_new @ (G @ v_new))
        if abs(lam_new - lam) <= 1e-12 * max(lam_new, 1e-300):
            return math.sqrt(lam_new)
        v, lam = v_new, lam_new
    return math.sqrt(lam)


def transport_map_1d(m: Measure, cfg: IntegratorConfig, x_lo: float = -5.0,
                     x_hi: float = 5.0, n_knots: int = 257):
    """Monotone interpolant of x -> T(x) on [x_lo, x_hi] for 1D targets.

    Integrates the backward flow through ``n_knots`` knots and returns a
    PCHIP interpolant; the map is monotone in one dimension, so dense
    evaluation (e.g. 1e5 pushforward samples) costs one batched flow.
    """
    if isinstance(m, MixtureSpec) and m.dim != 1:
        raise ValueError("transport_map_1d is one-dimensional only")
    knots = np.linspace(x_lo, x_hi, n_knots)
    y, _, _ = transport_from_gaussian(m, knots[:, None], cfg)
    vals = y[:, 0]
    if np.any(np.diff(vals) <= 0):
        raise NumericsError("integrated transport map lost monotonicity")
    interp = PchipInterpolator(knots, vals, extrapolate=False)

    def T(x):
        x = np.asarray(x, dtype=float)
        out = interp(np.clip(x, x_lo, x_hi))
        return out

    return T
