"""Same-marginal Schrodinger bridges, their small-temperature limits and Langevin comparisons."""

from .errors import (BlowUpError, ConvergenceError, DegenerateMeasureError, EstimationError,
                     ExtrapolationWarning, InputDomainError, NonNormalizableError,
                     NumericalDomainError, RateFitError, TruncationWarning)
from .measures import (DiscreteMeasure, GaussianSpec, GridSpec, Particles, PotentialModel,
                       check_potential, discretize, model_from_name)
from .sinkhorn import (EntropicPlan, barycentric_projection, conditional_expectation,
                       entropic_cost, solve_symmetric)
from .analysis import RateReport, rate_fit

__version__ = "0.1.0"
