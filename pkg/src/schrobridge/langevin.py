"""Stationary Langevin diffusion ``dX = -grad g(X)/2 dt + dB`` and its bridge correction.

Random streams: paths are grouped in fixed blocks of ``BLOCK`` consecutive
indices and block ``k`` draws from ``SeedSequence(seed, spawn_key=(tag, k))``.
Path ``i`` therefore sees the same numbers whatever the total path count or
the order in which blocks are evaluated.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.special import logsumexp

from .errors import BlowUpError, EstimationError, InputDomainError
from .measures import GridSpec, PotentialModel, discretize, sample_measure

__all__ = [
    "PathSample",
    "BridgeEstimate",
    "BLOCK",
    "block_rng",
    "default_n_steps",
    "harmonic_characteristic",
    "harmonic_characteristic_grad",
    "simulate_paths",
    "simulate_path",
    "sample_pair",
    "bridge_feynman_kac",
    "pair_log_density",
]

BLOCK = 4096
_EM, _BRIDGE, _INIT = 0, 1, 2


def block_rng(seed: int, tag: int, block: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(tag, block)))


def default_n_steps(t: float) -> int:
    return max(64, math.ceil(t / 0.005 - 1e-9))


def harmonic_characteristic(model: PotentialModel, x):
    """``U = |g'|^2 / 8 - g'' / 4``."""
    x = np.asarray(x, dtype=float)
    return model.grad_g(x) ** 2 / 8.0 - model.lap_g(x) / 4.0


def harmonic_characteristic_grad(model: PotentialModel, x, step: float = 1e-4):
    """``U' = g'' g' / 4 - g''' / 4`` with ``g'''`` from central differences of ``lap_g``."""
    x = np.asarray(x, dtype=float)
    h = step * np.maximum(1.0, np.abs(x))
    third = (model.lap_g(x + h) - model.lap_g(x - h)) / (2 * h)
    return model.hess_g(x) * model.grad_g(x) / 4.0 - third / 4.0


@dataclass(frozen=True, eq=False)
class PathSample:
    times: np.ndarray
    states: np.ndarray
    seed: int

    def __post_init__(self):
        if self.times.shape != self.states.shape:
            raise InputDomainError("times and states must have equal length")
        if self.times[0] != 0 or np.any(np.diff(self.times) <= 0):
            raise InputDomainError("times must start at 0 and increase strictly")


@dataclass(frozen=True)
class BridgeEstimate:
    value: float
    std_error: float
    n_paths: int


def _check_steps(t, n_steps):
    if not t > 0:
        raise InputDomainError(f"time horizon must be positive, got {t}")
    if n_steps is None:
        n_steps = default_n_steps(t)
    if int(n_steps) != n_steps or n_steps < 1:
        raise InputDomainError("n_steps must be a positive integer")
    return int(n_steps)


def _euler_block(model, x, h, noise, keep):
    path = [x.copy()] if keep else None
    sq = math.sqrt(h)
    for k in range(noise.shape[1]):
        x = x - 0.5 * h * model.grad_g(x) + sq * noise[:, k]
        if not np.all(np.isfinite(x)):
            raise BlowUpError("Euler-Maruyama produced a non-finite state", k + 1)
        if keep:
            path.append(x.copy())
    return np.stack(path, axis=1) if keep else x


def simulate_paths(model: PotentialModel, x0, t: float, n_steps: Optional[int] = None,
                   seed: int = 0, n_paths: Optional[int] = None, keep_path: bool = False,
                   tag: int = _EM) -> np.ndarray:
    """Euler-Maruyama paths on ``[0, t]``.

    ``x0`` is a scalar shared by all paths or one start per path.  Returns the
    terminal states, or the full ``(n_paths, n_steps + 1)`` array when
    ``keep_path`` is set.
    """
    n_steps = _check_steps(t, n_steps)
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    if n_paths is None:
        n_paths = x0.size
    if x0.size not in (1, n_paths):
        raise InputDomainError("x0 must be scalar or have one entry per path")
    x0 = np.broadcast_to(x0, (n_paths,))
    h = t / n_steps
    out = []
    for k, start in enumerate(range(0, n_paths, BLOCK)):
        stop = min(start + BLOCK, n_paths)
        noise = block_rng(seed, tag, k).standard_normal((BLOCK, n_steps))[: stop - start]
        out.append(_euler_block(model, x0[start:stop].copy(), h, noise, keep_path))
    return np.concatenate(out, axis=0)


def simulate_path(model: PotentialModel, x0: float, t: float,
                  n_steps: Optional[int] = None, seed: int = 0) -> PathSample:
    n_steps = _check_steps(t, n_steps)
    states = simulate_paths(model, x0, t, n_steps, seed, n_paths=1, keep_path=True)[0]
    return PathSample(np.linspace(0.0, t, n_steps + 1), states, int(seed))


def sample_pair(model: PotentialModel, epsilon: float, n_pairs: int,
                n_steps: Optional[int] = None, seed: int = 0,
                grid: Optional[GridSpec] = None) -> np.ndarray:
    """``(X_0, X_eps)`` pairs with ``X_0 ~ rho`` by inverse CDF; shape ``(n_pairs, 2)``.

    The stationary draw uses the model density discretized on ``grid``
    (default: the model's domain with 4001 nodes).
    """
    n_steps = _check_steps(epsilon, n_steps)
    if grid is None:
        grid = model.default_grid(4001)
    rho = discretize(model, grid)
    x0 = np.empty(n_pairs)
    for k, start in enumerate(range(0, n_pairs, BLOCK)):
        stop = min(start + BLOCK, n_pairs)
        x0[start:stop] = sample_measure(rho, BLOCK, block_rng(seed, _INIT, k))[: stop - start]
    x1 = simulate_paths(model, x0, epsilon, n_steps, seed)
    return np.column_stack([x0, x1])


def bridge_feynman_kac(model: PotentialModel, x: float, y: float, epsilon: float,
                       n_paths: int = 10_000, n_steps: int = 64, seed: int = 0) -> BridgeEstimate:
    """Monte Carlo estimate of ``c(x, y, eps) = -log E[exp(-int_0^eps U(w_s) ds)]``.

    The expectation is over the Brownian bridge from ``x`` to ``y`` on
    ``[0, eps]``, sampled exactly on the uniform grid as
    ``x + (y - x) s/eps + W_s - (s/eps) W_eps``.  The time integral is the
    left-point sum with the endpoint correction ``h (U(y) - U(x)) / 2``, i.e.
    the trapezoid rule: this removes the ``O(h)`` bias, so the estimate is
    symmetric in ``(x, y)`` and stable under step doubling.  The standard
    error is the delta-method error of the log.
    """
    n_steps = _check_steps(epsilon, n_steps)
    if n_paths < 1:
        raise InputDomainError("n_paths must be positive")
    h = epsilon / n_steps
    s = np.arange(n_steps) * h
    drift = x + (y - x) * s / epsilon
    integrals = np.empty(n_paths)
    u_ends = harmonic_characteristic(model, np.array([x, y], dtype=float))
    end_fix = 0.5 * h * (u_ends[1] - u_ends[0])
    for k, start in enumerate(range(0, n_paths, BLOCK)):
        stop = min(start + BLOCK, n_paths)
        z = block_rng(seed, _BRIDGE, k).standard_normal((BLOCK, n_steps))[: stop - start]
        w = np.cumsum(z, axis=1) * math.sqrt(h)
        w_left = np.concatenate([np.zeros((stop - start, 1)), w[:, :-1]], axis=1)
        bridge = drift + w_left - (s / epsilon) * w[:, -1:]
        integrals[start:stop] = harmonic_characteristic(model, bridge).sum(axis=1) * h + end_fix
    if not np.all(np.isfinite(integrals)):
        raise EstimationError("non-finite U along bridge paths")
    log_mean = float(logsumexp(-integrals) - math.log(n_paths))
    if not math.isfinite(log_mean):
        raise EstimationError("bridge expectation is not positive")
    ratio = np.exp(-integrals - log_mean)  # samples divided by their mean
    se = float(np.std(ratio, ddof=1) / math.sqrt(n_paths)) if n_paths > 1 else 0.0
    return BridgeEstimate(-log_mean, se, int(n_paths))


def pair_log_density(model: PotentialModel, x: float, y: float, epsilon: float,
                     bridge: BridgeEstimate) -> float:
    """``log pi_LD(x, y) = (log rho(x) + log rho(y))/2 + log p_eps(x, y) - c(x, y, eps)``."""
    if not epsilon > 0:
        raise InputDomainError("epsilon must be positive")
    return float(0.5 * (model.log_density(x) + model.log_density(y))
                 - 0.5 * math.log(2 * math.pi * epsilon)
                 - (x - y) ** 2 / (2 * epsilon) - bridge.value)
