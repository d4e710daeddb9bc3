"""Matrix completion under exponential-family noise channels.

The public surface:

* :mod:`expmc.families` -- noise channels (Gaussian, Bernoulli, Binomial,
  Poisson, Exponential) with log-partitions, means, variances, Bregman
  divergences, and sampling;
* :mod:`expmc.regularizers` -- nuclear, rowwise-group, and
  sparse-plus-low-rank penalties with dual norms and proximal maps, plus
  low-rank subspace projections;
* :mod:`expmc.sampling` -- uniform with-replacement observation multisets
  and the masking operator;
* :mod:`expmc.solver` -- the constrained proximal-gradient solver;
* :mod:`expmc.calibration` / :mod:`expmc.verify` -- penalty calibration
  and empirical checks of the recovery conditions;
* :mod:`expmc.harness` -- the simulation sweep;
* :class:`expmc.estimator.MatrixCompleter` -- scikit-learn facade.
"""

from .families import (
    Bernoulli,
    Binomial,
    DomainError,
    Exponential,
    Family,
    Gaussian,
    Poisson,
    family_from_config,
)
from .regularizers import (
    LowRankModel,
    NuclearNorm,
    PowerIterationError,
    RowGroupNorm,
    SparsePlusLowRank,
    regularizer_from_config,
    subspace_compatibility,
)
from .sampling import ObservationSet, full_indices, observe, sample_indices
from .solver import Problem, SolveResult, composite_prox, solve
from .estimator import MatrixCompleter

__version__ = "0.1.0"

__all__ = [
    "Bernoulli",
    "Binomial",
    "DomainError",
    "Exponential",
    "Family",
    "Gaussian",
    "Poisson",
    "family_from_config",
    "LowRankModel",
    "NuclearNorm",
    "PowerIterationError",
    "RowGroupNorm",
    "SparsePlusLowRank",
    "regularizer_from_config",
    "subspace_compatibility",
    "ObservationSet",
    "full_indices",
    "observe",
    "sample_indices",
    "Problem",
    "SolveResult",
    "composite_prox",
    "solve",
    "MatrixCompleter",
    "__version__",
]
