"""Theory-facing calibration quantities.

Everything here is measurable from data or simulation; constants that the
underlying analysis leaves existential (the large-sample prefactors) are
exposed as user knobs rather than computed.

* spikiness ratio of a matrix: ``sqrt(mn) * max-norm / Frobenius``,
  always in ``[1, sqrt(mn)]``;
* the oracle penalty: twice the scaled dual norm of the masked residual
  at the ground truth (the smallest penalty satisfying the recovery
  premise with equality);
* the closed-form penalty rule ``2 c * sqrt(mn) * b * sqrt(n log n / |O|)``
  with natural logarithm throughout;
* a Monte-Carlo estimate of the expected scaled dual norm of a
  Rademacher-signed sampling matrix, which couples the sampling scheme to
  the penalty;
* a noise-scale proxy ``b``: the square root of the largest channel
  variance over the feasible box.  For channels that are not
  sub-Gaussian (Poisson, Exponential) the proxy is still returned but
  flagged, since the closed-form penalty rule loses its formal footing.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, asdict

import numpy as np

from .families import Family
from .sampling import ObservationSet, sample_indices, residual_matrix

__all__ = [
    "spikiness",
    "oracle_penalty",
    "closed_form_penalty",
    "estimate_sampling_dual_norm",
    "NoiseScale",
    "estimate_noise_scale",
    "CalibrationReport",
]

SUB_GAUSSIAN_FAMILIES = ("gaussian", "bernoulli", "binomial")


def spikiness(M) -> float:
    """``sqrt(mn) * ||M||_max / ||M||_F``; 1 for flat, sqrt(mn) for a spike."""
    M = np.asarray(M, dtype=float)
    fro = np.linalg.norm(M)
    if fro == 0.0:
        raise ValueError("spikiness is undefined for the zero matrix")
    return float(np.sqrt(M.size) * np.abs(M).max() / fro)


def oracle_penalty(omega: ObservationSet, theta_star, family: Family, reg) -> float:
    """Smallest penalty satisfying the recovery premise, with equality.

    Twice the scaled dual norm of the masked residual between the
    observations and their channel means at the ground truth.  Duplicate
    instances accumulate, so the value depends on the multiset only.
    """
    residual = residual_matrix(omega, family.mean(theta_star))
    return 2.0 * (omega.m * omega.n / omega.size) * reg.dual(residual)


def closed_form_penalty(m, n, omega_size, noise_scale, c_beta=1.0) -> float:
    """``2 c * sqrt(mn) * b * sqrt(n log n / |O|)``, natural log."""
    if min(m, n, omega_size) <= 0:
        raise ValueError("dimensions and sample size must be positive")
    big = max(m, n)
    return float(
        2.0 * c_beta * np.sqrt(m * n) * noise_scale
        * np.sqrt(big * np.log(big) / omega_size)
    )


def estimate_sampling_dual_norm(reg, m, n, omega_size, trials=100, seed=0):
    """Monte-Carlo mean of the scaled dual norm of a signed sampling matrix.

    Each trial draws a fresh uniform index multiset and one Rademacher
    sign per instance, accumulates the signs cellwise, and evaluates
    ``sqrt(mn)/|O|`` times the dual norm.  Returns ``(mean, stderr)``.
    """
    if trials < 2:
        raise ValueError("need at least two trials for a standard error")
    rng = np.random.default_rng(seed)
    stats = np.empty(trials)
    front = np.sqrt(m * n) / omega_size
    for t in range(trials):
        omega = sample_indices(m, n, omega_size, seed=rng.integers(2**63))
        signs = rng.choice([-1.0, 1.0], size=omega_size)
        signed = np.zeros((m, n))
        np.add.at(signed, (omega.rows, omega.cols), signs)
        stats[t] = front * reg.dual(signed)
    return float(stats.mean()), float(stats.std(ddof=1) / np.sqrt(trials))


@dataclass(frozen=True)
class NoiseScale:
    """Noise proxy ``b`` with a flag for the sub-Gaussian premise."""

    value: float
    sub_gaussian: bool


def estimate_noise_scale(family: Family, box_radius, grid_points=4097) -> NoiseScale:
    """Square root of the peak channel variance over the feasible box.

    Exact for channels with monotone or single-peak variance (all of the
    built-in ones).  The flag is False for heavy-tailed channels, where
    the closed-form penalty rule is exploratory rather than justified.
    """
    if box_radius <= 0:
        raise ValueError("box radius must be positive")
    lo_dom, hi_dom = family.natural_domain
    margin = 1e-6
    lo = -box_radius if np.isinf(lo_dom) else max(-box_radius, lo_dom + margin)
    hi = box_radius if np.isinf(hi_dom) else min(box_radius, hi_dom - margin)
    if lo > hi:
        raise ValueError("box does not meet the channel domain")
    peak = family.max_variance(lo, hi)
    # grid backstop in case a subclass's closed form is ever wrong
    grid = np.linspace(lo, hi, grid_points)
    peak = max(peak, float(family.variance(grid).max()))
    return NoiseScale(
        value=float(np.sqrt(peak)),
        sub_gaussian=family.name in SUB_GAUSSIAN_FAMILIES,
    )


@dataclass
class CalibrationReport:
    """Bundle of calibration quantities; serializes to JSON for the CLI."""

    m: int
    n: int
    omega_size: int
    spikiness: float | None
    penalty_oracle: float | None
    penalty_closed_form: float
    c_beta: float
    noise_scale: float
    noise_scale_sub_gaussian: bool
    sampling_dual_norm_mean: float
    sampling_dual_norm_stderr: float

    def to_json(self, indent=2) -> str:
        return json.dumps(asdict(self), indent=indent)


def build_report(family, reg, m, n, omega_size, box_radius, c_beta=1.0,
                 trials=100, seed=0, omega=None, theta_star=None) -> CalibrationReport:
    """Assemble the full report; ground-truth fields are None without it."""
    noise = estimate_noise_scale(family, box_radius)
    kappa_mean, kappa_err = estimate_sampling_dual_norm(
        reg, m, n, omega_size, trials=trials, seed=seed
    )
    alpha_sp = None
    lam_oracle = None
    if theta_star is not None:
        alpha_sp = spikiness(theta_star)
        if omega is not None and omega.values is not None:
            lam_oracle = oracle_penalty(omega, theta_star, family, reg)
    return CalibrationReport(
        m=m,
        n=n,
        omega_size=omega_size,
        spikiness=alpha_sp,
        penalty_oracle=lam_oracle,
        penalty_closed_form=closed_form_penalty(m, n, omega_size, noise.value, c_beta),
        c_beta=c_beta,
        noise_scale=noise.value,
        noise_scale_sub_gaussian=noise.sub_gaussian,
        sampling_dual_norm_mean=kappa_mean,
        sampling_dual_norm_stderr=kappa_err,
    )
