"""Same-marginal entropic OT by symmetric, damped, log-domain Sinkhorn.

The coupling is parametrised by one shared potential ``f``::

    pi_ij = w_i w_j exp((f_i + f_j - |x_i - x_j|^2 / 2) / eps) / sqrt(2 pi eps)

and ``f`` is the fixed point of ``f <- (1 - eta) f + eta T f`` where ``T`` is
the soft-min map that makes every row of ``pi`` sum to ``w_i``.  A single
potential makes the plan symmetric by construction and removes the additive
gauge freedom of the two-potential formulation.

Linearised at the fixed point, ``T`` acts as ``-P`` with ``P`` the
conditional kernel of the plan; ``P`` is similar to a positive semi-definite
matrix, so with ``eta = 1/2`` the iteration contracts by at least a factor two
per sweep on every non-constant mode.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Optional, Union

import numpy as np
from scipy.special import logsumexp, softmax

from .errors import ConvergenceError, InputDomainError
from .measures import DiscreteMeasure

__all__ = [
    "EntropicPlan",
    "solve_symmetric",
    "barycentric_projection",
    "conditional_expectation",
    "entropic_cost",
    "base_measure",
]

log = logging.getLogger(__name__)


def _half_sq_dist(x):
    d = x[:, None] - x[None, :]
    return 0.5 * d * d


@dataclass(frozen=True, eq=False)
class EntropicPlan:
    """Converged symmetric coupling of ``marginal`` with itself at temperature ``epsilon``."""

    marginal: DiscreteMeasure
    epsilon: float
    potential: np.ndarray
    log_plan: np.ndarray
    n_iter: int
    residual: float
    residual_history: tuple = ()

    def __post_init__(self):
        for name in ("potential", "log_plan"):
            a = np.array(getattr(self, name), dtype=float)
            a.setflags(write=False)
            object.__setattr__(self, name, a)

    @cached_property
    def plan(self) -> np.ndarray:
        p = np.exp(self.log_plan)
        p.setflags(write=False)
        return p

    @property
    def points(self) -> np.ndarray:
        return self.marginal.points

    @cached_property
    def conditional(self) -> np.ndarray:
        """Row-stochastic ``P(Y = x_j | X = x_i)``; rows of absent nodes are NaN.

        Computed from the potential rather than from ``plan`` so that rows
        whose marginal mass underflows in linear scale remain well defined.
        """
        x = self.points
        a = self.marginal.log_weights[None, :] + (self.potential[None, :] - _half_sq_dist(x)) / self.epsilon
        q = softmax(a, axis=1)
        q[~self.present] = np.nan
        q.setflags(write=False)
        return q

    @property
    def present(self) -> np.ndarray:
        """Nodes carrying mass (finite log-weight)."""
        return np.isfinite(self.marginal.log_weights)

    def row_sums(self) -> np.ndarray:
        return self.plan.sum(axis=1)

    def col_sums(self) -> np.ndarray:
        return self.plan.sum(axis=0)


def _soft_min(f, log_w, neg_cost, epsilon, log_norm):
    return -epsilon * logsumexp(log_w[None, :] + f[None, :] / epsilon + neg_cost, axis=1) + epsilon * log_norm


def solve_symmetric(
    marginal: DiscreteMeasure,
    epsilon: float,
    tol: float = 1e-10,
    max_iter: int = 100_000,
    damping: float = 0.5,
) -> EntropicPlan:
    """Solve for the same-marginal Schrodinger bridge of ``marginal``.

    Parameters
    ----------
    marginal : DiscreteMeasure
        Both marginals of the coupling.
    epsilon : float
        Temperature (variance of the Gaussian reference kernel).
    tol : float
        Stop once the sup-norm change of ``f`` over one damped sweep is below ``tol``.
    max_iter : int
        Raise :class:`ConvergenceError` past this many sweeps.
    damping : float
        Weight ``eta`` on the new iterate, in ``(0, 1]``.

    Returns
    -------
    EntropicPlan
    """
    if not (math.isfinite(epsilon) and epsilon > 0):
        raise InputDomainError(f"epsilon must be positive, got {epsilon}")
    if not tol > 0:
        raise InputDomainError("tol must be positive")
    if not 0 < damping <= 1:
        raise InputDomainError("damping must lie in (0, 1]")
    x = marginal.points
    log_w = marginal.log_weights
    neg_cost = -_half_sq_dist(x) / epsilon
    log_norm = 0.5 * math.log(2 * math.pi * epsilon)

    f = np.zeros_like(x)
    history = []
    residual = math.inf
    for it in range(1, max_iter + 1):
        f_new = (1 - damping) * f + damping * _soft_min(f, log_w, neg_cost, epsilon, log_norm)
        residual = float(np.max(np.abs(f_new - f)))
        f = f_new
        history.append(residual)
        if residual < tol:
            break
    else:
        raise ConvergenceError("symmetric Sinkhorn did not converge", residual, max_iter)

    if len(history) > 6 and np.any(np.diff(history[5:]) > 0):
        log.debug("potential residual not monotone after 5 sweeps (eps=%g)", epsilon)

    s = log_w + f / epsilon
    log_plan = s[:, None] + s[None, :] + neg_cost - log_norm
    live = np.isfinite(log_plan)
    log_plan = log_plan - logsumexp(log_plan[live])
    return EntropicPlan(marginal, float(epsilon), f, log_plan, it, residual, tuple(history))


def conditional_expectation(plan: EntropicPlan, xi: Union[Callable, np.ndarray]) -> np.ndarray:
    """``E[xi(Y) | X = x_i]`` at every node; NaN at nodes without mass."""
    vals = xi(plan.points) if callable(xi) else np.asarray(xi, dtype=float)
    vals = np.broadcast_to(np.asarray(vals, dtype=float), plan.points.shape)
    q = plan.conditional
    out = np.full(plan.points.shape, np.nan)
    ok = plan.present
    out[ok] = q[ok] @ vals
    return out


def barycentric_projection(plan: EntropicPlan) -> np.ndarray:
    """Entropic Brenier map ``b(x_i) = E[Y | X = x_i]``."""
    return conditional_expectation(plan, plan.points)


def base_measure(marginal: DiscreteMeasure, epsilon: float) -> np.ndarray:
    """Log-masses of the reference ``rho(x) N(y; x, eps)`` with quadrature weights on ``y``."""
    x = marginal.points
    return (marginal.log_weights[:, None] + np.log(marginal.cell_widths)[None, :]
            - _half_sq_dist(x) / epsilon - 0.5 * math.log(2 * math.pi * epsilon))


def entropic_cost(plan: EntropicPlan, coupling: Optional[np.ndarray] = None) -> float:
    """Discrete ``H(pi | R_eps)`` against the quadrature-weighted reference.

    ``coupling`` replaces the plan's own masses (diagnostic use).  Returns
    ``inf`` when the coupling charges a cell the reference does not.
    """
    log_r = base_measure(plan.marginal, plan.epsilon)
    if coupling is None:
        log_p = plan.log_plan
        p = plan.plan
    else:
        p = np.asarray(coupling, dtype=float)
        if p.shape != log_r.shape:
            raise InputDomainError("coupling shape does not match the plan")
        with np.errstate(divide="ignore"):
            log_p = np.log(p)
    live = p > 0
    if np.any(live & ~np.isfinite(log_r)):
        return math.inf
    return float(np.sum(p[live] * (log_p[live] - log_r[live])))
