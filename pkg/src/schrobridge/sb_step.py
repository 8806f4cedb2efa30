"""One step of a gradient-type Wasserstein flow ``dx/dt = grad u`` by three schemes.

* explicit Euler: ``x -> x + eps grad u(x)``
* bridge step: ``x -> (1 - 1/theta) x + b(x) / theta`` with ``b`` the
  barycentric map of the same-marginal bridge on the surrogate
  ``sigma ~ exp(2 theta u)``
* Langevin step: the same map with ``b`` replaced by ``E[Y_eps | Y_0 = x]``
  for the Langevin diffusion stationary for ``sigma``

Pushforwards are particle sets: the nodes of ``rho`` move, their masses stay.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.special import logsumexp

from .analysis import RateReport, rate_fit
from .errors import (BlowUpError, ExtrapolationWarning, InputDomainError,
                     NonNormalizableError)
from .langevin import block_rng
from .measures import DiscreteMeasure, GridSpec, Particles, PotentialModel, discretize, gaussian_model
from .metrics import w2_1d
from .sinkhorn import barycentric_projection, solve_symmetric

__all__ = [
    "VelocityField",
    "StepResult",
    "GapReport",
    "Scenario",
    "BOUNDARY_RATIO",
    "surrogate_measure",
    "surrogate_model",
    "density_ratio_bound",
    "euler_step",
    "sb_step",
    "ld_step",
    "step_gap_report",
    "scenario",
    "SCENARIOS",
]

log = logging.getLogger(__name__)

BOUNDARY_RATIO = 1e-6
_LD_TAG = 3
Field = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class VelocityField:
    """``v = grad u`` together with the sign ``theta`` of the surrogate exponent."""

    u: Field
    grad_u: Field
    theta: float
    lap_u: Optional[Field] = None
    name: str = "custom"

    def __post_init__(self):
        if self.theta == 0 or not math.isfinite(self.theta):
            raise InputDomainError("theta must be finite and nonzero")

    def laplacian(self, x, step: float = 1e-4):
        x = np.asarray(x, dtype=float)
        if self.lap_u is not None:
            return self.lap_u(x)
        h = step * np.maximum(1.0, np.abs(x))
        return (self.grad_u(x + h) - self.grad_u(x - h)) / (2 * h)

    def gradient_gap(self, grid: GridSpec, step: float = 1e-5) -> float:
        """Largest scaled gap between ``grad_u`` and central differences of ``u``."""
        x = grid.nodes
        h = step * np.maximum(1.0, np.abs(x))
        fd = (self.u(x + h) - self.u(x - h)) / (2 * h)
        g = self.grad_u(x)
        return float(np.max(np.abs(g - fd) / np.maximum(1.0, np.abs(g))))


@dataclass(frozen=True, eq=False)
class StepResult:
    pushforward: Particles
    method: str
    epsilon: float

    def __post_init__(self):
        if self.method not in ("euler", "sb", "ld"):
            raise InputDomainError(f"unknown step method {self.method!r}")
        if not self.epsilon > 0:
            raise InputDomainError("epsilon must be positive")


def _as_grid_measure(rho):
    if getattr(rho, "grid", None) is None:
        raise InputDomainError("rho must be a grid measure; pass grid= explicitly otherwise")
    return rho.grid


def _surrogate_log_mass(fld: VelocityField, grid: GridSpec):
    x = grid.nodes
    expo = 2.0 * fld.theta * np.asarray(fld.u(x), dtype=float) * np.ones_like(x)
    if not np.all(np.isfinite(expo)):
        raise NonNormalizableError("surrogate exponent is not finite on the grid")
    peak = float(expo.max())
    edge = max(expo[0], expo[-1])
    if edge - peak >= math.log(BOUNDARY_RATIO):
        raise NonNormalizableError(
            f"surrogate density at the grid boundary is {math.exp(edge - peak):.2e} of its peak"
        )
    return expo


def surrogate_measure(fld: VelocityField, grid: GridSpec) -> DiscreteMeasure:
    """``sigma_i ~ tau_i exp(2 theta u(x_i))`` normalized by the trapezoid rule."""
    expo = _surrogate_log_mass(fld, grid)
    log_mass = expo + np.log(grid.trapezoid_weights)
    log_w = log_mass - logsumexp(log_mass)
    w = np.exp(log_w)
    return DiscreteMeasure.from_grid(grid, w / w.sum(), log_w)


def surrogate_model(fld: VelocityField, grid: GridSpec) -> PotentialModel:
    """``sigma = exp(-g)`` with ``g = -2 theta u + Lambda``; ``Lambda`` by quadrature on ``grid``."""
    expo = _surrogate_log_mass(fld, grid)
    lam = float(logsumexp(expo + np.log(grid.trapezoid_weights)))
    th = fld.theta

    def g(x):
        return -2.0 * th * np.asarray(fld.u(x), dtype=float) + lam

    def grad_g(x):
        return -2.0 * th * np.asarray(fld.grad_u(x), dtype=float)

    def lap_g(x):
        return -2.0 * th * np.asarray(fld.laplacian(x), dtype=float)

    return PotentialModel(g, grad_g, lap_g, lap_g, f"surrogate({fld.name})", (grid.lower, grid.upper))


def density_ratio_bound(rho: DiscreteMeasure, sigma: DiscreteMeasure) -> float:
    """``max rho / sigma`` over the nodes of ``rho`` carrying mass; both on one grid."""
    if rho.points.shape != sigma.points.shape or not np.allclose(rho.points, sigma.points):
        raise InputDomainError("rho and sigma must share their nodes")
    live = rho.weights > 0
    return float(np.exp(np.max(rho.log_density[live] - sigma.log_density[live])))


def _combine(x, target, theta):
    return (1.0 - 1.0 / theta) * x + target / theta


def euler_step(rho: DiscreteMeasure, fld: VelocityField, epsilon: float) -> StepResult:
    x = rho.points
    return StepResult(Particles(x + epsilon * fld.grad_u(x), rho.weights), "euler", float(epsilon))


def _extend_linear(xs, ys, x):
    """Piecewise-linear interpolation, continued linearly past both ends."""
    out = np.interp(x, xs, ys)
    lo, hi = x < xs[0], x > xs[-1]
    if lo.any() or hi.any():
        warnings.warn(f"{int(lo.sum() + hi.sum())} particle(s) outside the surrogate grid; "
                      "extending the map linearly", ExtrapolationWarning, stacklevel=3)
        out[lo] = ys[0] + (x[lo] - xs[0]) * (ys[1] - ys[0]) / (xs[1] - xs[0])
        out[hi] = ys[-1] + (x[hi] - xs[-1]) * (ys[-1] - ys[-2]) / (xs[-1] - xs[-2])
    return out


def sb_step(rho: DiscreteMeasure, fld: VelocityField, epsilon: float,
            grid: Optional[GridSpec] = None, tol: float = 1e-10,
            max_iter: int = 100_000) -> StepResult:
    """Bridge step with the surrogate discretized on ``grid`` (default: the grid of ``rho``)."""
    grid = grid or _as_grid_measure(rho)
    sigma = surrogate_measure(fld, grid)
    if sigma.points.shape == rho.points.shape and np.allclose(sigma.points, rho.points):
        log.info("sup rho/sigma on the grid: %.6g", density_ratio_bound(rho, sigma))
    plan = solve_symmetric(sigma, epsilon, tol=tol, max_iter=max_iter)
    b = barycentric_projection(plan)
    ok = np.isfinite(b)
    xs, bs = sigma.points[ok], b[ok]
    if np.any(np.diff(bs) < 0):
        log.debug("barycentric map not monotone on the surrogate grid; using its running maximum")
        bs = np.maximum.accumulate(bs)
    target = _extend_linear(xs, bs, rho.points)
    return StepResult(Particles(_combine(rho.points, target, fld.theta), rho.weights), "sb", float(epsilon))


def _ld_conditional_mean(model, x, epsilon, n_mc, n_steps, seed):
    half = n_mc // 2
    z = np.stack([block_rng(seed, _LD_TAG, i).standard_normal((half, n_steps)) for i in range(x.size)])
    z = np.concatenate([z, -z], axis=1)  # antithetic pairs
    h = epsilon / n_steps
    sq = math.sqrt(h)
    y = np.repeat(x[:, None], 2 * half, axis=1)
    for k in range(n_steps):
        y = y - 0.5 * h * model.grad_g(y) + sq * z[:, :, k]
        if not np.all(np.isfinite(y)):
            raise BlowUpError("Langevin step produced a non-finite state", k + 1)
    return y.mean(axis=1)


def ld_step(rho: DiscreteMeasure, fld: VelocityField, epsilon: float,
            grid: Optional[GridSpec] = None, n_mc: int = 256, n_steps: int = 64,
            seed: int = 0) -> StepResult:
    """Langevin step with ``E[Y_eps | Y_0 = x]`` from ``n_mc`` Euler-Maruyama paths per node.

    Node ``i`` draws from its own substream, which does not depend on
    ``epsilon``; with a fixed ``n_steps`` every epsilon of a sweep sees the
    same normals.  Replicas come in antithetic pairs, so ``n_mc`` must be even.
    """
    if n_mc < 2 or n_mc % 2:
        raise InputDomainError("n_mc must be an even integer >= 2")
    if not epsilon > 0:
        raise InputDomainError("epsilon must be positive")
    grid = grid or _as_grid_measure(rho)
    model = surrogate_model(fld, grid)
    mean = _ld_conditional_mean(model, np.asarray(rho.points, dtype=float), float(epsilon),
                                int(n_mc), int(n_steps), seed)
    return StepResult(Particles(_combine(rho.points, mean, fld.theta), rho.weights), "ld", float(epsilon))


@dataclass(frozen=True, eq=False)
class GapReport:
    """Per-epsilon W2 gaps (columns ``epsilon, sb_euler, ld_euler, sb_ld``) and their rate fits."""

    rows: np.ndarray
    sb_euler: RateReport
    ld_euler: RateReport
    sb_ld: RateReport

    @property
    def reports(self):
        return self.sb_euler, self.ld_euler, self.sb_ld


def step_gap_report(rho: DiscreteMeasure, fld: VelocityField, epsilons: Sequence[float],
                    grid: Optional[GridSpec] = None, n_mc: int = 256, n_steps: int = 64,
                    seed: int = 0, tol: float = 1e-10) -> GapReport:
    eps = sorted((float(e) for e in epsilons), reverse=True)
    rows = []
    for e in eps:
        eu = euler_step(rho, fld, e).pushforward
        sb = sb_step(rho, fld, e, grid=grid, tol=tol).pushforward
        ld = ld_step(rho, fld, e, grid=grid, n_mc=n_mc, n_steps=n_steps, seed=seed).pushforward
        rows.append((e, w2_1d(sb, eu), w2_1d(ld, eu), w2_1d(sb, ld)))
    rows = np.array(rows)
    fits = [rate_fit(rows[:, 0], rows[:, k]) for k in (1, 2, 3)]
    return GapReport(rows, *fits)


@dataclass(frozen=True)
class Scenario:
    name: str
    rho: DiscreteMeasure
    field: VelocityField


def _quadratic_field(a: float, theta: float, name: str) -> VelocityField:
    """``u = a x^2``."""
    return VelocityField(lambda x: a * np.asarray(x, dtype=float) ** 2,
                         lambda x: 2 * a * np.asarray(x, dtype=float),
                         theta,
                         lambda x: np.full_like(np.asarray(x, dtype=float), 2 * a),
                         name)


SCENARIOS = {
    # u = x^2/4 with theta = -1: the surrogate is rho itself and v = -grad log(rho)/2
    "heat_flow": (0.25, -1.0),
    # u = -x^2/2 with theta = 1: linear contraction, surrogate N(0, 1/2)
    "ou_contraction": (-0.5, 1.0),
}


def scenario(name: str, n_points: int = 321, width: float = 8.0) -> Scenario:
    """Preset with ``rho = N(0, 1)`` discretized on ``[-width, width]``."""
    if name not in SCENARIOS:
        raise InputDomainError(f"unknown scenario {name!r}; known: {sorted(SCENARIOS)}")
    a, theta = SCENARIOS[name]
    grid = GridSpec(-width, width, n_points)
    return Scenario(name, discretize(gaussian_model(0.0, 1.0), grid), _quadratic_field(a, theta, name))
