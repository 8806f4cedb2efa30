"""Grids, discrete measures, analytic potentials and trapezoid quadrature.

A density is always written as ``rho = exp(-g)``.  A :class:`PotentialModel`
bundles ``g`` with its first three derivatives (1-D), a :class:`DiscreteMeasure`
is the trapezoid discretization of such a density on a uniform grid, or a
finite set of weighted atoms.
"""

from __future__ import annotations

import math
import re
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.special import logsumexp

from .errors import DegenerateMeasureError, InputDomainError, TruncationWarning

__all__ = [
    "GridSpec",
    "DiscreteMeasure",
    "Particles",
    "PotentialModel",
    "PotentialReport",
    "GaussianSpec",
    "discretize",
    "check_potential",
    "quadrature",
    "sample_measure",
    "gaussian_model",
    "quartic_model",
    "gaussian_bump_model",
    "linear_model",
    "model_from_name",
    "MASS_TOL",
]

MASS_TOL = 1e-12
TRUNCATION_RATIO = 1e-10

Field = Callable[[np.ndarray], np.ndarray]


def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class GridSpec:
    """Uniform grid ``lower = x_0 < ... < x_{n-1} = upper``."""

    lower: float
    upper: float
    n_points: int
    dimension: int = 1

    def __post_init__(self):
        if not (math.isfinite(self.lower) and math.isfinite(self.upper)):
            raise InputDomainError("grid edges must be finite")
        if not self.lower < self.upper:
            raise InputDomainError(f"need lower < upper, got [{self.lower}, {self.upper}]")
        if int(self.n_points) != self.n_points or self.n_points < 2:
            raise InputDomainError(f"n_points must be an integer >= 2, got {self.n_points}")
        if self.dimension != 1:
            raise InputDomainError("only 1-D grids are supported")

    @property
    def spacing(self) -> float:
        return (self.upper - self.lower) / (self.n_points - 1)

    @property
    def nodes(self) -> np.ndarray:
        return np.linspace(self.lower, self.upper, self.n_points)

    @property
    def trapezoid_weights(self) -> np.ndarray:
        w = np.full(self.n_points, self.spacing)
        w[0] *= 0.5
        w[-1] *= 0.5
        return w

    def refined(self, factor: int = 2) -> "GridSpec":
        """Same interval with ``factor`` times as many cells."""
        return GridSpec(self.lower, self.upper, factor * (self.n_points - 1) + 1)


@dataclass(frozen=True, eq=False)
class Particles:
    """Weighted point cloud; the representation of pushforward measures."""

    points: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "points", _frozen(self.points))
        object.__setattr__(self, "weights", _frozen(self.weights))
        if self.points.ndim != 1 or self.points.shape != self.weights.shape:
            raise InputDomainError("points and weights must be 1-D arrays of equal length")
        if self.points.size == 0:
            raise InputDomainError("empty particle set")
        if np.any(self.weights < 0) or abs(self.weights.sum() - 1.0) > MASS_TOL:
            raise InputDomainError("particle weights must be non-negative and sum to 1")

    def mean(self) -> float:
        return float(self.weights @ self.points)

    def variance(self) -> float:
        m = self.mean()
        return float(self.weights @ (self.points - m) ** 2)


@dataclass(frozen=True, eq=False)
class DiscreteMeasure:
    """Probability masses on nodes, with the quadrature weight of every node.

    ``cell_widths`` is the reference measure used to turn masses back into a
    density: the trapezoid weights for grid measures, ones for bare atoms.
    ``log_weights`` is carried alongside ``weights`` so that far tails that
    underflow in linear scale stay usable in log-domain computations.
    """

    points: np.ndarray
    weights: np.ndarray
    cell_widths: np.ndarray
    grid: Optional[GridSpec] = None
    log_weights: Optional[np.ndarray] = field(default=None)

    def __post_init__(self):
        for name in ("points", "weights", "cell_widths"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))
        n = self.points.size
        if self.points.ndim != 1 or self.weights.shape != (n,) or self.cell_widths.shape != (n,):
            raise InputDomainError("points, weights and cell_widths must have equal length")
        if self.grid is not None and self.grid.n_points != n:
            raise InputDomainError("weights length must equal grid.n_points")
        if not np.all(np.isfinite(self.weights)) or np.any(self.weights < 0):
            raise InputDomainError("weights must be finite and non-negative")
        if abs(self.weights.sum() - 1.0) > MASS_TOL:
            raise InputDomainError(f"weights sum to {self.weights.sum()!r}, not 1")
        if self.log_weights is None:
            with np.errstate(divide="ignore"):
                lw = np.log(self.weights)
        else:
            lw = self.log_weights
        object.__setattr__(self, "log_weights", _frozen(lw))

    @classmethod
    def from_grid(cls, grid: GridSpec, weights, log_weights=None) -> "DiscreteMeasure":
        return cls(grid.nodes, weights, grid.trapezoid_weights, grid, log_weights)

    @classmethod
    def atoms(cls, points, weights=None) -> "DiscreteMeasure":
        """Finitely many atoms; weights default to uniform and are renormalized."""
        points = np.atleast_1d(np.asarray(points, dtype=float))
        if weights is None:
            weights = np.ones_like(points)
        weights = np.asarray(weights, dtype=float)
        total = weights.sum()
        if not total > 0:
            raise DegenerateMeasureError("atoms carry no mass")
        return cls(points, weights / total, np.ones_like(points))

    @property
    def n(self) -> int:
        return self.points.size

    @property
    def density(self) -> np.ndarray:
        """Nodal density values ``w_i / tau_i``."""
        return self.weights / self.cell_widths

    @property
    def log_density(self) -> np.ndarray:
        return self.log_weights - np.log(self.cell_widths)

    def mean(self) -> float:
        return float(self.weights @ self.points)

    def variance(self) -> float:
        m = self.mean()
        return float(self.weights @ (self.points - m) ** 2)

    def particles(self) -> Particles:
        return Particles(self.points, self.weights)


@dataclass(frozen=True)
class PotentialModel:
    """``rho = exp(-g)`` with analytic derivatives of ``g``.

    All evaluators act elementwise on float arrays.  In one dimension the
    Hessian field ``hess_g`` is the scalar ``g''`` and coincides with
    ``lap_g``; it is kept as a separate evaluator so validation can check both.
    ``domain`` is an interval holding all but a negligible part of the mass,
    used when an operation needs a grid and none was given.
    """

    g: Field
    grad_g: Field
    lap_g: Field
    hess_g: Field
    name: str = "custom"
    domain: Optional[tuple] = None

    def log_density(self, x):
        return -self.g(x)

    def density(self, x):
        return np.exp(-self.g(x))

    def score(self, x):
        """``grad log rho = -grad g``."""
        return -self.grad_g(x)

    def default_grid(self, n_points: int = 321) -> GridSpec:
        if self.domain is None:
            raise InputDomainError(f"model {self.name!r} has no default domain; pass a grid")
        return GridSpec(self.domain[0], self.domain[1], n_points)


@dataclass(frozen=True)
class GaussianSpec:
    mean: float
    variance: float

    def __post_init__(self):
        if not (math.isfinite(self.variance) and self.variance > 0):
            raise InputDomainError(f"variance must be positive, got {self.variance}")
        if not math.isfinite(self.mean):
            raise InputDomainError("mean must be finite")

    @property
    def std(self) -> float:
        return math.sqrt(self.variance)

    def model(self) -> PotentialModel:
        return gaussian_model(self.mean, self.variance)

    def grid(self, n_points: int = 321, width: float = 8.0) -> GridSpec:
        """``[mean - width*std, mean + width*std]``."""
        return GridSpec(self.mean - width * self.std, self.mean + width * self.std, n_points)


def quadrature(values, grid: GridSpec) -> float:
    """Trapezoid rule on ``grid``."""
    values = np.asarray(values, dtype=float)
    if values.shape != (grid.n_points,):
        raise InputDomainError(f"expected {grid.n_points} values, got shape {values.shape}")
    return float(values @ grid.trapezoid_weights)


def discretize(model: PotentialModel, grid: GridSpec) -> DiscreteMeasure:
    """Trapezoid-normalized masses ``w_i ~ tau_i exp(-g(x_i))``.

    ``g = +inf`` is read as zero density.  Emits :class:`TruncationWarning`
    when the boundary density exceeds ``1e-10`` of the peak.
    """
    x = grid.nodes
    with np.errstate(all="ignore"):
        gx = np.asarray(model.g(x), dtype=float) * np.ones_like(x)
    if np.any(np.isnan(gx)) or np.any(gx == -np.inf):
        bad = x[np.isnan(gx) | (gx == -np.inf)][0]
        raise InputDomainError(f"g is not finite at x={bad}")
    if np.all(gx == np.inf):
        raise DegenerateMeasureError("density vanishes on the whole grid")
    log_mass = -gx + np.log(grid.trapezoid_weights)
    log_w = log_mass - logsumexp(log_mass)
    w = np.exp(log_w)
    w = w / w.sum()
    peak = np.max(-gx)
    edge = max(-gx[0], -gx[-1])
    if edge - peak > math.log(TRUNCATION_RATIO):
        warnings.warn(
            f"boundary density of {model.name} is {math.exp(edge - peak):.2e} of the peak; "
            "mass outside the grid may not be negligible",
            TruncationWarning,
            stacklevel=2,
        )
    return DiscreteMeasure.from_grid(grid, w, log_w)


@dataclass(frozen=True)
class PotentialReport:
    passed: bool
    grad_discrepancy: float
    lap_discrepancy: float
    hess_discrepancy: float
    growth_exponent: float
    u_min: float
    tol: float
    notes: tuple = ()

    @property
    def max_discrepancy(self) -> float:
        return max(self.grad_discrepancy, self.lap_discrepancy, self.hess_discrepancy)


def _scaled_gap(analytic, numeric):
    return float(np.max(np.abs(analytic - numeric) / np.maximum(1.0, np.abs(numeric))))


def check_potential(model: PotentialModel, grid: GridSpec, tol: float = 1e-5) -> PotentialReport:
    """Validate the derivative evaluators and measure the growth of |grad U|^2.

    ``grad_g`` is compared with central differences of ``g``; ``lap_g`` and
    ``hess_g`` with central differences of ``grad_g``.  Discrepancies are
    absolute, scaled by ``max(1, |reference|)``.  The growth exponent is the
    least-squares slope of ``log |grad U|^2`` against ``log |x|`` over the
    outer quarter of the grid.  Boundedness of ``U`` below can only be
    observed on the grid, so ``u_min`` is reported but not enforced.
    """
    from .langevin import harmonic_characteristic, harmonic_characteristic_grad

    x = grid.nodes
    step = 1e-5 * np.maximum(1.0, np.abs(x))
    with np.errstate(all="ignore"):
        vals = [np.asarray(f(x), dtype=float) * np.ones_like(x)
                for f in (model.g, model.grad_g, model.lap_g, model.hess_g)]
        fd_grad = (model.g(x + step) - model.g(x - step)) / (2 * step)
        fd_second = (model.grad_g(x + step) - model.grad_g(x - step)) / (2 * step)
        u = harmonic_characteristic(model, x)
        du = harmonic_characteristic_grad(model, x)
    for arr in vals + [fd_grad, fd_second, u, du]:
        if not np.all(np.isfinite(arr)):
            raise InputDomainError(f"model {model.name!r} is not finite on the grid")
    _, grad, lap, hess = vals
    grad_gap = _scaled_gap(grad, fd_grad)
    lap_gap = _scaled_gap(lap, fd_second)
    hess_gap = _scaled_gap(hess, fd_second)

    r = np.abs(x)
    sq = du**2
    outer = (r >= 0.75 * r.max()) & (sq > 0) & (r > 0)
    notes = ["U bounded below is checked on the grid only"]
    if outer.sum() >= 2:
        growth = float(np.polyfit(np.log(r[outer]), np.log(sq[outer]), 1)[0])
    else:
        growth = float("nan")
        notes.append("too few outer nodes to estimate growth")
    passed = max(grad_gap, lap_gap, hess_gap) < tol
    return PotentialReport(passed, grad_gap, lap_gap, hess_gap, growth, float(u.min()), tol, tuple(notes))


def sample_measure(measure: DiscreteMeasure, n: int, rng: np.random.Generator) -> np.ndarray:
    """Draw ``n`` samples by inverse CDF.

    Grid measures are treated as the piecewise-linear interpolant of their
    nodal density (each cell's quadratic CDF is inverted exactly); atoms are
    sampled categorically.
    """
    u = rng.random(n)
    if measure.grid is None:
        cdf = np.cumsum(measure.weights)
        idx = np.minimum(np.searchsorted(cdf, u * cdf[-1], side="right"), measure.n - 1)
        return measure.points[idx]
    d = measure.density
    h = measure.grid.spacing
    cell = 0.5 * h * (d[:-1] + d[1:])
    cdf = np.concatenate([[0.0], np.cumsum(cell)])
    target = u * cdf[-1]
    i = np.clip(np.searchsorted(cdf, target, side="right") - 1, 0, cell.size - 1)
    r = target - cdf[i]
    d0 = d[i]
    slope = (d[i + 1] - d0) / h
    disc = np.sqrt(np.maximum(d0 * d0 + 2.0 * slope * r, 0.0))
    denom = d0 + disc
    with np.errstate(divide="ignore", invalid="ignore"):
        s = np.where(denom > 0, 2.0 * r / denom, 0.0)
    return measure.points[i] + np.clip(s, 0.0, h)


# ---------------------------------------------------------------- presets


def gaussian_model(mean: float = 0.0, var: float = 1.0) -> PotentialModel:
    if not var > 0:
        raise InputDomainError("variance must be positive")
    std = math.sqrt(var)
    const = 0.5 * math.log(2 * math.pi * var)

    def g(x):
        return (np.asarray(x) - mean) ** 2 / (2 * var) + const

    def grad_g(x):
        return (np.asarray(x) - mean) / var

    def lap_g(x):
        return np.full_like(np.asarray(x, dtype=float), 1.0 / var)

    return PotentialModel(g, grad_g, lap_g, lap_g, f"gaussian({mean:g},{var:g})",
                          (mean - 8 * std, mean + 8 * std))


# int exp(-x^4) dx = 2 Gamma(5/4)
_QUARTIC_LOGZ = math.log(2.0 * math.gamma(1.25))


def quartic_model() -> PotentialModel:
    def g(x):
        return np.asarray(x) ** 4 + _QUARTIC_LOGZ

    def grad_g(x):
        return 4.0 * np.asarray(x) ** 3

    def lap_g(x):
        return 12.0 * np.asarray(x) ** 2

    return PotentialModel(g, grad_g, lap_g, lap_g, "quartic", (-3.0, 3.0))


def gaussian_bump_model(a: float = 1.0, w: float = 0.5) -> PotentialModel:
    """``g = x^2/2 + a exp(-x^2 / (2 w^2)) + log Z``: a bounded perturbation of N(0,1)."""
    if not w > 0:
        raise InputDomainError("bump width must be positive")

    def bump(x):
        return a * np.exp(-np.asarray(x) ** 2 / (2 * w * w))

    nodes = np.linspace(-12.0, 12.0, 4801)
    vals = -(nodes**2) / 2 - bump(nodes)
    logz = float(logsumexp(vals) + math.log(nodes[1] - nodes[0]))

    def g(x):
        x = np.asarray(x)
        return x**2 / 2 + bump(x) + logz

    def grad_g(x):
        x = np.asarray(x)
        return x - x / (w * w) * bump(x)

    def lap_g(x):
        x = np.asarray(x)
        return 1.0 + (x * x / w**4 - 1.0 / (w * w)) * bump(x)

    return PotentialModel(g, grad_g, lap_g, lap_g, f"gaussian_bump({a:g},{w:g})", (-8.0, 8.0))


def linear_model(slope: float = 1.0) -> PotentialModel:
    """``g = slope * x``; not normalizable, but ``U = slope^2 / 8`` is constant."""

    def g(x):
        return slope * np.asarray(x, dtype=float)

    def grad_g(x):
        return np.full_like(np.asarray(x, dtype=float), slope)

    def zero(x):
        return np.zeros_like(np.asarray(x, dtype=float))

    return PotentialModel(g, grad_g, zero, zero, f"linear({slope:g})")


_PRESETS = {
    "gaussian": (gaussian_model, 2),
    "quartic": (quartic_model, 0),
    "gaussian_bump": (gaussian_bump_model, 2),
    "linear": (linear_model, 1),
}


def model_from_name(text: str) -> PotentialModel:
    """Parse a preset such as ``"gaussian(0,1)"``, ``"quartic"`` or ``"gaussian_bump(1,0.5)"``."""
    m = re.fullmatch(r"\s*([a-z_]+)\s*(?:\((.*)\))?\s*", text)
    if not m or m.group(1) not in _PRESETS:
        raise InputDomainError(f"unknown model preset {text!r}; known: {sorted(_PRESETS)}")
    factory, arity = _PRESETS[m.group(1)]
    try:
        args = [] if not (m.group(2) or "").strip() else [float(s) for s in m.group(2).split(",")]
    except ValueError as exc:
        raise InputDomainError(f"bad preset arguments in {text!r}") from exc
    if args and len(args) != arity:
        raise InputDomainError(f"preset {m.group(1)} takes {arity} arguments, got {len(args)}")
    return factory(*args)
