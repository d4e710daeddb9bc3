"""Empirical post-solve checks of the recovery analysis.

The guarantees behind the estimator rest on a handful of deterministic
consequences of optimality plus concentration statements.  This module
turns each into a measurable report:

* cone membership: with an adequate penalty, the error matrix projects
  mostly onto the model perturbation subspace -- the complement part of
  the penalty is at most three times the subspace part;
* divergence bound: the sampled Bregman gap between estimate and truth is
  at most ``(3/2) * lam * Psi * ||error||_F`` with ``Psi`` the subspace
  compatibility constant;
* restricted curvature: over random unit-Frobenius directions in the
  cone with capped spikiness, the sampled Bregman gap per squared norm
  stays bounded away from zero;
* sampling identity: for the same directions, the scaled sampled square
  sum concentrates around the full squared norm;
* spectral noise tail: the scaled spectral norm of the masked residual
  concentrates at the rate ``b * sqrt(n log n / |O|)``.

Directions are drawn by projecting a Gaussian matrix onto the model
subspace, blending in a controlled complement component, clipping to the
spikiness cap, and renormalizing; generation fails loudly when the
requested cap is below 1 (no matrix is that flat).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .families import Family
from .regularizers import LowRankModel, subspace_compatibility
from .sampling import sample_indices, observe, residual_matrix
from .calibration import estimate_noise_scale

__all__ = [
    "VerificationConfig",
    "InfeasibleDirectionError",
    "ConeCheck",
    "cone_ratio",
    "DivergenceCheck",
    "sampled_divergence_bound",
    "sample_restricted_direction",
    "CurvatureReport",
    "restricted_curvature",
    "SamplingIdentityReport",
    "sampling_identity_deviation",
    "SpectralTailReport",
    "spectral_noise_tail",
]


class InfeasibleDirectionError(RuntimeError):
    """The requested cone/spikiness test set is empty or unreachable."""


@dataclass(frozen=True)
class VerificationConfig:
    """Knobs for the empirical checks.

    ``c0`` is the sampling-constant knob of the analysis (existential in
    theory, a dial here); ``beta`` only enters reporting.
    """

    c0: float = 4.0
    beta: float = 1.0
    trials: int = 100
    tolerance: float = 1e-6

    def __post_init__(self):
        if self.trials < 10:
            raise ValueError("trials must be at least 10")
        if self.tolerance <= 0:
            raise ValueError("tolerance must be positive")


# -- cone membership ---------------------------------------------------------


@dataclass(frozen=True)
class ConeCheck:
    complement_part: float
    subspace_part: float
    ratio: float
    passed: bool


def cone_ratio(delta, model: LowRankModel, reg, tolerance=1e-3) -> ConeCheck:
    """Penalty ratio of the complement projection to the subspace projection.

    Passes when the ratio is at most ``3 + tolerance``.  A nonzero error
    entirely in the complement reports an infinite ratio and fails.
    """
    delta = np.asarray(delta, dtype=float)
    num = reg.value(model.project_complement(delta))
    den = reg.value(model.project(delta))
    floor = 1e-12 * max(1.0, num)  # rounding residue counts as zero
    if den <= floor:
        ratio = 0.0 if num <= floor else np.inf
    else:
        ratio = num / den
    return ConeCheck(
        complement_part=float(num),
        subspace_part=float(den),
        ratio=float(ratio),
        passed=bool(ratio <= 3.0 + tolerance),
    )


# -- sampled divergence bound -------------------------------------------------


@dataclass(frozen=True)
class DivergenceCheck:
    lhs: float
    rhs: float
    passed: bool


def sampled_divergence_bound(problem, theta_hat, theta_star,
                             model: LowRankModel, tolerance=1e-6) -> DivergenceCheck:
    """Sampled Bregman gap against ``(3/2) lam Psi ||error||_F``.

    Holds whenever the penalty satisfies the oracle premise and the
    solver returned an optimum; a violation indicates solver
    non-optimality (or a penalty below the premise).
    """
    theta_hat = np.asarray(theta_hat, dtype=float)
    theta_star = np.asarray(theta_star, dtype=float)
    rows, cols = problem.observations.rows, problem.observations.cols
    gaps = problem.family.bregman(theta_hat[rows, cols], theta_star[rows, cols])
    lhs = problem.scale * float(gaps.sum())
    psi_max, _ = subspace_compatibility(model, problem.regularizer)
    rhs = 1.5 * problem.lam * psi_max * float(np.linalg.norm(theta_hat - theta_star))
    return DivergenceCheck(
        lhs=lhs, rhs=rhs, passed=bool(lhs <= rhs * (1.0 + tolerance) + 1e-12)
    )


# -- restricted directions ----------------------------------------------------


def spikiness_cap_rule(vconfig: VerificationConfig, psi_max, n, omega_size) -> float:
    """Cap from the analysis: ``sqrt(|O| / (n log n)) / (c0 * Psi)``.

    At practical scales this often falls below 1, in which case no matrix
    qualifies and direction sampling must be given an explicit cap.
    """
    return float(np.sqrt(omega_size / (n * np.log(n))) / (vconfig.c0 * psi_max))


def sample_restricted_direction(model: LowRankModel, reg, spikiness_cap, rng,
                                max_blend=2.9, max_tries=50):
    """Random unit-Frobenius member of the cone with capped spikiness.

    A Gaussian matrix is projected onto the perturbation subspace, a
    complement component is blended in at a penalty ratio below 3, then
    entries are clipped to the spikiness cap and the matrix renormalized
    (a few rounds).  Raises ``InfeasibleDirectionError`` when the cap is
    below 1 or the sampler cannot satisfy both constraints.
    """
    if spikiness_cap < 1.0:
        raise InfeasibleDirectionError(
            f"spikiness cap {spikiness_cap:.4g} < 1: the constraint set is empty"
        )
    m, n = model.shape
    root_mn = np.sqrt(m * n)
    for _ in range(max_tries):
        main = model.project(rng.standard_normal((m, n)))
        main_norm = np.linalg.norm(main)
        if main_norm < 1e-12:
            continue
        main /= main_norm
        side = model.project_complement(rng.standard_normal((m, n)))
        side_value = reg.value(side)
        if side_value > 1e-12:
            target = rng.uniform(0.0, max_blend) * reg.value(main)
            side *= target / side_value
        delta = main + side
        delta /= np.linalg.norm(delta)
        for _ in range(8):
            cap_entry = spikiness_cap / root_mn
            clipped = np.clip(delta, -cap_entry, cap_entry)
            norm = np.linalg.norm(clipped)
            if norm < 1e-12:
                break
            delta = clipped / norm
            if np.abs(delta).max() * root_mn <= spikiness_cap * (1 + 1e-9):
                break
        comp = reg.value(model.project_complement(delta))
        sub = reg.value(model.project(delta))
        if (
            np.abs(delta).max() * root_mn <= spikiness_cap * (1 + 1e-9)
            and sub > 0
            and comp <= 3.0 * sub
        ):
            return delta
    raise InfeasibleDirectionError(
        f"no direction found with cap {spikiness_cap:.4g} after {max_tries} tries"
    )


# -- restricted curvature -----------------------------------------------------


@dataclass
class CurvatureReport:
    ratios: np.ndarray
    min_ratio: float
    threshold: float
    violations: int
    spikiness_cap: float


def restricted_curvature(theta_star, family: Family, model: LowRankModel, reg,
                         omega_size, vconfig: VerificationConfig, seed=0,
                         alpha_star=None, spikiness_cap=None, kappa=None) -> CurvatureReport:
    """Sampled Bregman gap per squared norm over random cone directions.

    Each trial resamples the index multiset and a fresh restricted
    direction, then measures the scaled sampled Bregman divergence
    between the perturbed and unperturbed truth.  The threshold combines
    the certified curvature floor over the box with the sampling-penalty
    correction; trials falling below it are counted as violations.
    """
    theta_star = np.asarray(theta_star, dtype=float)
    m, n = theta_star.shape
    big = max(m, n)
    psi_max, _ = subspace_compatibility(model, reg)
    if spikiness_cap is None:
        spikiness_cap = spikiness_cap_rule(vconfig, psi_max, big, omega_size)
    if alpha_star is None:
        alpha_star = np.sqrt(m * n) * np.abs(theta_star).max()
    if kappa is None:
        kappa = 10.0 * np.sqrt(big * np.log(big) / omega_size)
    rng = np.random.default_rng(seed)
    scale = m * n / omega_size
    ratios = np.empty(vconfig.trials)
    for t in range(vconfig.trials):
        delta = sample_restricted_direction(model, reg, spikiness_cap, rng)
        omega = sample_indices(m, n, omega_size, seed=rng.integers(2**63))
        perturbed = theta_star + delta
        family.check_domain(perturbed)
        gaps = family.bregman(
            perturbed[omega.rows, omega.cols], theta_star[omega.rows, omega.cols]
        )
        ratios[t] = scale * gaps.sum()  # ||delta||_F = 1
    floor = np.exp(-2.0 * family.curvature_decay * alpha_star / np.sqrt(m * n))
    correction = 1.0 - (64.0 / vconfig.c0) * np.sqrt(
        omega_size * kappa**2 / (big * np.log(big))
    )
    threshold = floor * correction * (1.0 - vconfig.tolerance)
    return CurvatureReport(
        ratios=ratios,
        min_ratio=float(ratios.min()),
        threshold=float(threshold),
        violations=int((ratios < threshold).sum()),
        spikiness_cap=float(spikiness_cap),
    )


# -- sampling identity ---------------------------------------------------------


@dataclass
class SamplingIdentityReport:
    deviations: np.ndarray
    bound_shapes: np.ndarray
    quantiles: dict
    fitted_constant: float


def sampling_identity_deviation(model: LowRankModel, reg, vconfig: VerificationConfig,
                                n, omega_size, trials=None, seed=0,
                                spikiness_cap=None, kappa=None,
                                omega=None) -> SamplingIdentityReport:
    """Deviation of the scaled sampled square sum from one.

    For unit-Frobenius directions the expectation of the scaled sampled
    square sum over a uniform multiset is exactly one; each trial reports
    the absolute deviation together with the analysis' bound shape.  The
    smallest constant making the bound hold across all trials is fitted
    and reported.  Passing a fixed ``omega`` (e.g. every cell once) makes
    the statistic deterministic.
    """
    trials = vconfig.trials if trials is None else trials
    psi_max, _ = subspace_compatibility(model, reg)
    if spikiness_cap is None:
        spikiness_cap = spikiness_cap_rule(vconfig, psi_max, n, omega_size)
    if kappa is None:
        kappa = 10.0 * np.sqrt(n * np.log(n) / omega_size)
    rng = np.random.default_rng(seed)
    m_dim, n_dim = model.shape
    deviations = np.empty(trials)
    bound_shapes = np.empty(trials)
    for t in range(trials):
        delta = sample_restricted_direction(model, reg, spikiness_cap, rng)
        om = omega if omega is not None else sample_indices(
            m_dim, n_dim, omega_size, seed=rng.integers(2**63)
        )
        scale = m_dim * n_dim / om.size
        sampled = scale * float((delta[om.rows, om.cols] ** 2).sum())
        deviations[t] = abs(sampled - 1.0)
        penalty_value = reg.value(delta)
        first = (16.0 * penalty_value / (vconfig.c0 * psi_max)) * np.sqrt(
            om.size * kappa**2 / (n * np.log(n))
        )
        slack_per_unit = penalty_value / (vconfig.c0**2 * psi_max)
        # smallest additive constant making this trial's bound hold
        bound_shapes[t] = (deviations[t] - first) / slack_per_unit
    fitted = float(max(0.0, bound_shapes.max()))
    qs = {q: float(np.quantile(deviations, q)) for q in (0.5, 0.9, 0.99)}
    return SamplingIdentityReport(
        deviations=deviations,
        bound_shapes=bound_shapes,
        quantiles=qs,
        fitted_constant=fitted,
    )


# -- spectral tail of the masked noise -----------------------------------------


@dataclass
class SpectralTailReport:
    statistics: np.ndarray
    quantiles: dict
    rate: float
    fitted_constant: float
    noise_scale: float
    sub_gaussian: bool


def spectral_noise_tail(family: Family, theta_star, omega_size, trials=100,
                        seed=0) -> SpectralTailReport:
    """Distribution of the scaled spectral norm of the masked residual.

    Each trial draws a fresh multiset and fresh observations at the
    ground truth.  The 99th percentile is expressed as a multiple of
    ``b * sqrt(n log n / |O|)`` and that multiple is reported.
    """
    theta_star = np.asarray(theta_star, dtype=float)
    m, n = theta_star.shape
    big = max(m, n)
    rng = np.random.default_rng(seed)
    front = np.sqrt(m * n) / omega_size
    stats = np.empty(trials)
    for t in range(trials):
        omega = sample_indices(m, n, omega_size, seed=rng.integers(2**63))
        omega = observe(omega, theta_star, family, seed=rng.integers(2**63))
        residual = residual_matrix(omega, family.mean(theta_star))
        stats[t] = front * np.linalg.norm(residual, ord=2)
    noise = estimate_noise_scale(family, max(np.abs(theta_star).max(), 1e-12))
    rate = noise.value * np.sqrt(big * np.log(big) / omega_size)
    q99 = float(np.quantile(stats, 0.99))
    qs = {q: float(np.quantile(stats, q)) for q in (0.5, 0.9, 0.99)}
    return SpectralTailReport(
        statistics=stats,
        quantiles=qs,
        rate=float(rate),
        fitted_constant=float(q99 / rate) if rate > 0 else 0.0,
        noise_scale=noise.value,
        sub_gaussian=noise.sub_gaussian,
    )
