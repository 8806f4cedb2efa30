"""Small-temperature limit objects of the bridge and log-log rate fits."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import RateFitError
from .measures import PotentialModel
from .sinkhorn import EntropicPlan, barycentric_projection, conditional_expectation

__all__ = [
    "DEFAULT_EPSILONS",
    "NODE_MASS_FLOOR",
    "RateReport",
    "Observable",
    "identity_observable",
    "constant_observable",
    "square_observable",
    "gaussian_observable",
    "l2_norm",
    "rate_fit",
    "score_estimate",
    "generator_apply",
    "generator_residual",
    "score_residual",
    "fisher_limit_check",
    "potential_residual",
]

# 0.4 * 2^(-k/2), k = 0..6
DEFAULT_EPSILONS = tuple(0.4 * 2.0 ** (-k / 2) for k in range(7))
NODE_MASS_FLOOR = 1e-12


@dataclass(frozen=True, eq=False)
class RateReport:
    """Least-squares fit ``log error = slope * log eps + intercept``."""

    epsilons: np.ndarray
    errors: np.ndarray
    slope: float
    intercept: float
    r_squared: float

    def predict(self, eps):
        return np.exp(self.intercept) * np.asarray(eps) ** self.slope


def rate_fit(epsilons: Sequence[float], errors: Sequence[float]) -> RateReport:
    eps = np.asarray(epsilons, dtype=float)
    err = np.asarray(errors, dtype=float)
    if eps.shape != err.shape:
        raise RateFitError("epsilons and errors must have equal length")
    good = np.isfinite(err) & (err > 0) & (eps > 0)
    if not good.all():
        warnings.warn(f"dropping {int((~good).sum())} non-positive or non-finite error(s) from the fit",
                      RuntimeWarning, stacklevel=2)
    order = np.argsort(-eps[good], kind="stable")
    eps, err = eps[good][order], err[good][order]
    if eps.size < 3:
        raise RateFitError(f"need at least 3 positive errors, have {eps.size}")
    lx, ly = np.log(eps), np.log(err)
    slope, intercept = np.polyfit(lx, ly, 1)
    resid = ly - (slope * lx + intercept)
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / ss_tot if ss_tot > 0 else 1.0
    return RateReport(eps, err, float(slope), float(intercept), r2)


@dataclass(frozen=True)
class Observable:
    """Test function with its first and second derivatives."""

    value: Callable
    grad: Callable
    lap: Callable
    name: str = "xi"


def identity_observable() -> Observable:
    return Observable(lambda x: np.asarray(x, dtype=float),
                      lambda x: np.ones_like(np.asarray(x, dtype=float)),
                      lambda x: np.zeros_like(np.asarray(x, dtype=float)), "identity")


def constant_observable(c: float = 1.0) -> Observable:
    return Observable(lambda x: np.full_like(np.asarray(x, dtype=float), c),
                      lambda x: np.zeros_like(np.asarray(x, dtype=float)),
                      lambda x: np.zeros_like(np.asarray(x, dtype=float)), f"const({c:g})")


def square_observable() -> Observable:
    return Observable(lambda x: np.asarray(x, dtype=float) ** 2,
                      lambda x: 2.0 * np.asarray(x, dtype=float),
                      lambda x: np.full_like(np.asarray(x, dtype=float), 2.0), "square")


def gaussian_observable() -> Observable:
    """``exp(-x^2)``: smooth, bounded and Lipschitz."""

    def value(x):
        return np.exp(-np.asarray(x, dtype=float) ** 2)

    def grad(x):
        x = np.asarray(x, dtype=float)
        return -2.0 * x * np.exp(-x * x)

    def lap(x):
        x = np.asarray(x, dtype=float)
        return (4.0 * x * x - 2.0) * np.exp(-x * x)

    return Observable(value, grad, lap, "exp(-x^2)")


def l2_norm(values, plan: EntropicPlan) -> float:
    """``L^2(rho)`` norm over nodes with mass above ``NODE_MASS_FLOOR``."""
    w = plan.marginal.weights
    v = np.asarray(values, dtype=float)
    keep = (w >= NODE_MASS_FLOOR) & np.isfinite(v)
    return float(math.sqrt(np.sum(w[keep] * v[keep] ** 2)))


def score_estimate(plan: EntropicPlan) -> np.ndarray:
    """``2 (b(x) - x) / eps``, the bridge estimate of ``grad log rho``."""
    return 2.0 * (barycentric_projection(plan) - plan.points) / plan.epsilon


def generator_apply(model: PotentialModel, xi: Observable, x):
    """Langevin generator ``L xi = xi''/2 - g' xi'/2``."""
    x = np.asarray(x, dtype=float)
    return 0.5 * xi.lap(x) - 0.5 * model.grad_g(x) * xi.grad(x)


def generator_residual(plan: EntropicPlan, model: PotentialModel, xi: Observable) -> float:
    """``|| (E[xi(Y) | X] - xi) / eps - L xi ||`` in ``L^2(rho)``."""
    x = plan.points
    fx = xi.value(x)
    diff = (conditional_expectation(plan, fx) - fx) / plan.epsilon - generator_apply(model, xi, x)
    return l2_norm(diff, plan)


def score_residual(plan: EntropicPlan, model: PotentialModel) -> float:
    """``|| (b - Id) / eps - grad log rho / 2 ||`` in ``L^2(rho)``."""
    x = plan.points
    diff = (barycentric_projection(plan) - x) / plan.epsilon - 0.5 * model.score(x)
    return l2_norm(diff, plan)


def fisher_limit_check(plan: EntropicPlan, model: PotentialModel | None = None) -> float:
    """``eps^-2 || b - Id ||^2``; tends to a quarter of the Fisher information."""
    return (l2_norm(barycentric_projection(plan) - plan.points, plan) / plan.epsilon) ** 2


def potential_residual(plan: EntropicPlan, model: PotentialModel) -> float:
    """``|| f'/eps + (log rho)'/2 ||`` with ``f'`` by central differences on interior nodes."""
    x = plan.points
    f = plan.potential
    df = np.full_like(x, np.nan)
    df[1:-1] = (f[2:] - f[:-2]) / (x[2:] - x[:-2])
    return l2_norm(df / plan.epsilon + 0.5 * model.score(x), plan)
