"""Scikit-learn style estimator facade.

``MatrixCompleter`` wraps the solver behind the familiar
``fit``/``transform``/``predict`` surface so the method composes with
pipelines and model-selection tooling.  The input to ``fit`` is the
partially observed matrix itself, with ``NaN`` marking missing cells
(the standard imputer convention); each observed cell enters the loss
once.  Multiset observations with repeated cells are available through
the lower-level :mod:`expmc.solver` interface.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .families import Family, family_from_config
from .regularizers import regularizer_from_config
from .sampling import ObservationSet
from .solver import Problem, solve
from .calibration import closed_form_penalty, estimate_noise_scale

__all__ = ["MatrixCompleter"]


class MatrixCompleter(BaseEstimator, TransformerMixin):
    """Impute a partially observed matrix through a noise-channel model.

    Parameters
    ----------
    family : str or dict or Family, default="gaussian"
        Noise channel; strings name a channel with default parameters,
        dicts use the config form (e.g. ``{"kind": "binomial", "N": 10}``).
    regularizer : str or dict or object, default="nuclear"
        Structural penalty, same conventions.
    lam : float or "auto", default="auto"
        Penalty weight.  ``"auto"`` uses the closed-form rate rule with
        ``c_beta``.
    alpha_star : float or "auto", default="auto"
        Entrywise box: natural parameters are constrained to magnitude
        at most ``alpha_star / sqrt(mn)``.  ``"auto"`` derives a radius
        from the observed values (see ``_auto_box_radius``).
    c_beta : float, default=0.5
        Constant of the automatic penalty rule.
    tol, max_iters, dykstra_iters :
        Solver controls, as in :class:`expmc.solver.Problem`.

    Attributes
    ----------
    theta_hat_ : (m, n) ndarray
        Estimated natural-parameter matrix.
    means_ : (m, n) ndarray
        Channel means at the estimate (the imputation values).
    result_ : SolveResult
        Full solver diagnostics.

    Examples
    --------
    >>> import numpy as np
    >>> from expmc.estimator import MatrixCompleter
    >>> X = np.outer(np.arange(1, 5.0), np.ones(4))
    >>> X[0, 0] = np.nan
    >>> filled = MatrixCompleter(lam=0.01).fit_transform(X)
    >>> bool(np.isfinite(filled).all())
    True
    """

    def __init__(self, family="gaussian", regularizer="nuclear", lam="auto",
                 alpha_star="auto", c_beta=0.5, tol=1e-9, max_iters=50_000,
                 dykstra_iters=30):
        self.family = family
        self.regularizer = regularizer
        self.lam = lam
        self.alpha_star = alpha_star
        self.c_beta = c_beta
        self.tol = tol
        self.max_iters = max_iters
        self.dykstra_iters = dykstra_iters

    # -- fitting ------------------------------------------------------------

    def fit(self, X, y=None):
        """Fit the natural-parameter matrix from the observed cells of ``X``."""
        X = self._validate_matrix(X)
        family = self._resolve_family()
        reg = self._resolve_regularizer()
        rows, cols = np.nonzero(~np.isnan(X))
        if rows.size == 0:
            raise ValueError("X contains no observed entries")
        observations = ObservationSet(
            m=X.shape[0], n=X.shape[1], rows=rows, cols=cols,
            values=X[rows, cols],
        )
        alpha_star = self._resolve_box(X, family)
        lam = self._resolve_penalty(observations, family, alpha_star)
        problem = Problem(
            family, reg, observations, lam=lam, alpha_star=alpha_star,
            tol_obj=self.tol, max_iters=self.max_iters,
            dykstra_iters=self.dykstra_iters,
        )
        self.result_ = solve(problem)
        self.theta_hat_ = self.result_.theta_hat
        self.means_ = np.asarray(family.mean(self.theta_hat_), dtype=float)
        self.lam_ = lam
        self.alpha_star_ = alpha_star
        self.n_iter_ = self.result_.iterations
        self.converged_ = self.result_.converged
        self.n_features_in_ = X.shape[1]
        self._shape = X.shape
        return self

    def transform(self, X):
        """Copy of ``X`` with missing cells filled by predicted means."""
        check_is_fitted(self, "means_")
        X = self._validate_matrix(X)
        if X.shape != self._shape:
            raise ValueError(f"expected shape {self._shape}, got {X.shape}")
        out = X.copy()
        missing = np.isnan(out)
        out[missing] = self.means_[missing]
        return out

    def predict(self, indices):
        """Predicted means at integer index pairs of shape (k, 2)."""
        check_is_fitted(self, "means_")
        indices = np.asarray(indices)
        if indices.ndim != 2 or indices.shape[1] != 2:
            raise ValueError("indices must be a (k, 2) array of cell positions")
        if not np.issubdtype(indices.dtype, np.integer):
            cast = indices.astype(int)
            if not np.array_equal(cast, indices):
                raise ValueError("indices must be integers")
            indices = cast
        m, n = self._shape
        if (indices < 0).any() or (indices[:, 0] >= m).any() or (indices[:, 1] >= n).any():
            raise ValueError("index out of range")
        return self.means_[indices[:, 0], indices[:, 1]]

    # -- helpers --------------------------------------------------------------

    def _validate_matrix(self, X):
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or min(X.shape) < 1:
            raise ValueError("X must be a 2-d matrix")
        observed = X[~np.isnan(X)]
        if observed.size and not np.all(np.isfinite(observed)):
            raise ValueError("observed entries must be finite (use NaN for missing)")
        return X

    def _resolve_family(self) -> Family:
        if isinstance(self.family, Family):
            return self.family
        if isinstance(self.family, str):
            return family_from_config({"kind": self.family})
        return family_from_config(dict(self.family))

    def _resolve_regularizer(self):
        if isinstance(self.regularizer, str):
            return regularizer_from_config({"kind": self.regularizer})
        if isinstance(self.regularizer, dict):
            return regularizer_from_config(dict(self.regularizer))
        return self.regularizer

    def _auto_box_radius(self, X, family: Family) -> float:
        """Heuristic entrywise bound on the natural parameters.

        Continuous channels map the observed value range through the
        canonical link; saturating channels use a fixed moderate radius.
        """
        observed = X[~np.isnan(X)]
        if family.name == "gaussian":
            return 1.2 * max(np.abs(observed).max(), 1.0) / family.sigma**2
        if family.name == "poisson":
            return float(np.log(max(observed.max(), 1.0) + 1.0) + 1.0)
        if family.name == "exponential":
            positive = observed[observed > 0]
            if positive.size == 0:
                raise ValueError("exponential channel needs positive observations")
            return float(1.2 / positive.min())
        return 3.0  # logistic channels saturate; +-3 covers [0.05, 0.95]

    def _resolve_box(self, X, family: Family) -> float:
        if self.alpha_star == "auto":
            radius = self._auto_box_radius(X, family)
            return float(radius * np.sqrt(X.size))
        alpha_star = float(self.alpha_star)
        if alpha_star <= 0:
            raise ValueError("alpha_star must be positive")
        return alpha_star

    def _resolve_penalty(self, observations, family, alpha_star) -> float:
        if self.lam == "auto":
            radius = alpha_star / np.sqrt(observations.m * observations.n)
            noise = estimate_noise_scale(family, radius)
            return closed_form_penalty(
                observations.m, observations.n, observations.size,
                noise.value, self.c_beta,
            )
        lam = float(self.lam)
        if lam < 0:
            raise ValueError("lam must be nonnegative")
        return lam
