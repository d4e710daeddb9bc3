"""Simulation harness: ground truth, sample-size sweeps, plot data.

A sweep runs over square sizes and normalized sample sizes
``|O| / (r n ln n)`` with the rank rule ``r = round(2 ln n)``.  Each cell
generates a fresh low-rank ground truth, samples a uniform multiset,
observes it through the configured channel, calibrates the penalty,
solves, and records parameter- and observation-space errors.  Cells are
seeded independently from (master seed, size index, sweep index, trial),
so results are reproducible and order-independent.

Error conventions (recorded in the output metadata): predictions are the
channel means at the estimate; observation error is RMSE against a fresh
full observation draw, except MAE for the Bernoulli channel.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field, asdict

import numpy as np

from .families import Family, Gaussian, family_from_config
from .regularizers import NuclearNorm, regularizer_from_config
from .sampling import sample_indices, observe
from .solver import Problem, solve
from .calibration import (
    spikiness,
    oracle_penalty,
    closed_form_penalty,
    estimate_noise_scale,
)

__all__ = [
    "ExperimentConfig",
    "SweepRow",
    "rank_rule",
    "default_max_entry",
    "generate_ground_truth",
    "mean_prediction",
    "observation_error",
    "run_cell",
    "run_sweep",
    "write_rows",
    "read_rows",
    "aggregate",
    "emit_plot_data",
]

LAMBDA_MODES = ("oracle", "corollary", "grid_cv")
ALPHA_STAR_MODES = ("oracle", "fixed")

DEFAULT_SWEEP = tuple(round(0.25 * k, 2) for k in range(1, 13))  # 0.25 .. 3.0


def rank_rule(n: int) -> int:
    """Ground-truth rank for size ``n``: round(2 ln n), at least 1."""
    return max(1, int(round(2.0 * np.log(n))))


def default_max_entry(family: Family) -> float:
    """Per-channel ground-truth scale (largest natural-parameter magnitude).

    Chosen by pilot runs so that recovery transitions inside the default
    sweep: strong signal for the continuous channels, saturation-limited
    values for the logistic ones, and a domain-safe value for the
    exponential channel.
    """
    return {
        "gaussian": 40.0,
        "bernoulli": 20.0,
        "binomial": 4.0,
        "poisson": 2.0,
        "exponential": 4.0,
    }[family.name]


@dataclass
class ExperimentConfig:
    """Sweep layout and calibration choices."""

    family: Family = field(default_factory=Gaussian)
    regularizer: object = field(default_factory=NuclearNorm)
    sizes: tuple = (50, 100, 150, 200)
    sweep: tuple = DEFAULT_SWEEP
    trials: int = 10
    lambda_mode: str = "oracle"
    alpha_star_mode: str = "oracle"
    alpha_star_fixed: float | None = None
    c_beta: float = 1.0
    max_entry: float | None = None  # None: per-channel default
    tol_obj: float = 1e-7
    max_iters: int = 20_000
    dykstra_iters: int = 30
    tol_fixed_point: float = np.inf  # sweeps stop on objective change alone
    value_mode: str = "independent"

    def __post_init__(self):
        if self.lambda_mode not in LAMBDA_MODES:
            raise ValueError(f"lambda_mode must be one of {LAMBDA_MODES}")
        if self.alpha_star_mode not in ALPHA_STAR_MODES:
            raise ValueError(f"alpha_star_mode must be one of {ALPHA_STAR_MODES}")
        if self.alpha_star_mode == "fixed" and not self.alpha_star_fixed:
            raise ValueError("alpha_star_mode 'fixed' needs alpha_star_fixed")
        if any(s <= 0 for s in self.sweep) or not self.sweep:
            raise ValueError("sweep values must be positive")
        if self.trials < 1:
            raise ValueError("trials must be at least 1")

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        if "family" in d:
            d["family"] = family_from_config(d["family"])
        if "regularizer" in d:
            d["regularizer"] = regularizer_from_config(d["regularizer"])
        for key in ("sizes", "sweep"):
            if key in d:
                d[key] = tuple(d[key])
        return cls(**d)


@dataclass
class SweepRow:
    """One solved cell of the sweep."""

    family: str
    n: int
    rank: int
    normalized_size: float
    omega_size: int
    trial: int
    param_rel_err: float
    obs_err: float
    obs_metric: str
    lambda_used: float
    alpha_star: float
    iterations: int
    converged: bool
    runtime_s: float


def generate_ground_truth(n, r, family: Family, max_entry, seed) -> np.ndarray:
    """Random rank-``r`` matrix with largest entry magnitude ``max_entry``.

    Orthonormal factors come from QR of Gaussian matrices with positive
    spectrum.  For channels on a negative half-line the matrix is built
    from a rank-(r-1) part plus a constant negative shift, keeping every
    entry strictly inside the domain while the rank stays exactly ``r``.
    """
    if r < 1 or r > n:
        raise ValueError(f"rank {r} out of range for size {n}")
    if max_entry <= 0:
        raise ValueError("max_entry must be positive")
    rng = np.random.default_rng(seed)
    negative_domain = np.isfinite(family.natural_domain[1])
    r_free = r - 1 if negative_domain else r
    if negative_domain and r_free < 1:
        raise ValueError("negative-domain channels need rank at least 2")
    U, _ = np.linalg.qr(rng.standard_normal((n, r_free)))
    V, _ = np.linalg.qr(rng.standard_normal((n, r_free)))
    spectrum = np.sort(rng.uniform(0.5, 1.5, r_free))[::-1]
    theta = (U * spectrum) @ V.T
    if negative_domain:
        shift = np.abs(theta).max() * 1.25
        theta = theta - shift  # rank r-1 plus rank-one all-ones shift
        hi = family.natural_domain[1]
        if theta.max() >= hi:
            raise ValueError("shift failed to land inside the channel domain")
    theta *= max_entry / np.abs(theta).max()
    sv = np.linalg.svd(theta, compute_uv=False)
    if sv[r - 1] <= 1e-10 * sv[0] or (r < n and sv[r] > 1e-10 * sv[0]):
        raise RuntimeError("ground-truth construction missed the target rank")
    family.check_domain(theta)
    return theta


def mean_prediction(family: Family, theta_hat) -> np.ndarray:
    """Predicted observations: channel means at the estimate."""
    return np.asarray(family.mean(theta_hat), dtype=float)


def observation_error(family: Family, theta_hat, x_heldout):
    """RMSE (MAE for Bernoulli) between mean predictions and held draws."""
    pred = mean_prediction(family, theta_hat)
    diff = pred - np.asarray(x_heldout, dtype=float)
    if family.name == "bernoulli":
        return float(np.abs(diff).mean()), "mae"
    return float(np.sqrt((diff**2).mean())), "rmse"


def _grid_cv_penalty(family, reg, omega, alpha_star, config, rng):
    """Pick the penalty on a 5-point log grid by an 80/20 instance split."""
    noise = estimate_noise_scale(family, alpha_star / np.sqrt(omega.m * omega.n))
    center = closed_form_penalty(
        omega.m, omega.n, omega.size, noise.value, config.c_beta
    )
    grid = center * np.logspace(-2.0, 0.0, 5)
    perm = rng.permutation(omega.size)
    cut = max(1, int(0.8 * omega.size))
    train_mask = np.zeros(omega.size, dtype=bool)
    train_mask[perm[:cut]] = True
    train, held = omega.subset(train_mask), omega.subset(~train_mask)
    best_lam, best_score = grid[0], np.inf
    for lam in grid:
        prob = Problem(
            family, reg, train, lam=lam, alpha_star=alpha_star,
            tol_obj=config.tol_obj, max_iters=config.max_iters,
            dykstra_iters=config.dykstra_iters,
            tol_fixed_point=config.tol_fixed_point,
        )
        theta = solve(prob).theta_hat
        t_held = theta[held.rows, held.cols]
        score = float(
            (family.log_partition(t_held) - held.values * t_held).sum()
        )
        if score < best_score:
            best_lam, best_score = lam, score
    return float(best_lam)


def run_cell(config: ExperimentConfig, n, normalized_size, trial, seed) -> SweepRow:
    """Generate, observe, calibrate, and solve one sweep cell."""
    family, reg = config.family, config.regularizer
    r = rank_rule(n)
    max_entry = config.max_entry or default_max_entry(family)
    rng = np.random.default_rng(seed)
    theta_star = generate_ground_truth(n, r, family, max_entry, rng.integers(2**63))
    omega_size = max(1, int(round(normalized_size * r * n * np.log(n))))
    omega = sample_indices(n, n, omega_size, seed=rng.integers(2**63))
    omega = observe(omega, theta_star, family, seed=rng.integers(2**63),
                    value_mode=config.value_mode)
    if config.alpha_star_mode == "oracle":
        # tightest admissible box: radius equal to the largest truth entry
        alpha_star = spikiness(theta_star) * np.linalg.norm(theta_star)
    else:
        alpha_star = float(config.alpha_star_fixed)
    if config.lambda_mode == "oracle":
        lam = oracle_penalty(omega, theta_star, family, reg)
    elif config.lambda_mode == "corollary":
        noise = estimate_noise_scale(family, alpha_star / n)
        lam = closed_form_penalty(n, n, omega_size, noise.value, config.c_beta)
    else:
        lam = _grid_cv_penalty(family, reg, omega, alpha_star, config, rng)
    problem = Problem(
        family, reg, omega, lam=lam, alpha_star=alpha_star,
        tol_obj=config.tol_obj, max_iters=config.max_iters,
        dykstra_iters=config.dykstra_iters,
        tol_fixed_point=config.tol_fixed_point,
    )
    start = time.perf_counter()
    result = solve(problem)
    runtime = time.perf_counter() - start
    rel = float(
        np.linalg.norm(result.theta_hat - theta_star) ** 2
        / np.linalg.norm(theta_star) ** 2
    )
    x_heldout = family.sample(theta_star, np.random.default_rng(rng.integers(2**63)))
    obs_err, metric = observation_error(family, result.theta_hat, x_heldout)
    return SweepRow(
        family=family.name,
        n=n,
        rank=r,
        normalized_size=float(normalized_size),
        omega_size=omega_size,
        trial=trial,
        param_rel_err=rel,
        obs_err=obs_err,
        obs_metric=metric,
        lambda_used=float(lam),
        alpha_star=float(alpha_star),
        iterations=result.iterations,
        converged=result.converged,
        runtime_s=runtime,
    )


def run_sweep(config: ExperimentConfig, seed=0, on_error="record"):
    """All sweep cells, deterministically seeded.

    Returns ``(rows, failures)``; with ``on_error="raise"`` the first
    failing cell propagates instead of being recorded.
    """
    rows, failures = [], []
    for i_n, n in enumerate(config.sizes):
        for i_s, s in enumerate(config.sweep):
            for trial in range(config.trials):
                cell_seed = np.random.SeedSequence(
                    [int(seed), i_n, i_s, trial]
                ).generate_state(1)[0]
                try:
                    rows.append(run_cell(config, n, s, trial, cell_seed))
                except Exception as exc:  # noqa: BLE001 - cell isolation
                    if on_error == "raise":
                        raise
                    failures.append((n, s, trial, repr(exc)))
    return rows, failures


_ROW_FIELDS = list(SweepRow.__dataclass_fields__)


def write_rows(rows, path):
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=_ROW_FIELDS)
        writer.writeheader()
        for row in sorted(
            rows, key=lambda r: (r.family, r.n, r.normalized_size, r.trial)
        ):
            record = asdict(row)
            for key in ("param_rel_err", "obs_err", "lambda_used",
                        "alpha_star", "runtime_s", "normalized_size"):
                record[key] = repr(record[key])
            writer.writerow(record)


def read_rows(path):
    rows = []
    with open(path, newline="") as fh:
        for record in csv.DictReader(fh):
            rows.append(
                SweepRow(
                    family=record["family"],
                    n=int(record["n"]),
                    rank=int(record["rank"]),
                    normalized_size=float(record["normalized_size"]),
                    omega_size=int(record["omega_size"]),
                    trial=int(record["trial"]),
                    param_rel_err=float(record["param_rel_err"]),
                    obs_err=float(record["obs_err"]),
                    obs_metric=record["obs_metric"],
                    lambda_used=float(record["lambda_used"]),
                    alpha_star=float(record["alpha_star"]),
                    iterations=int(record["iterations"]),
                    converged=record["converged"] == "True",
                    runtime_s=float(record["runtime_s"]),
                )
            )
    return rows


def aggregate(rows, metric="param_rel_err"):
    """Median and quartiles of ``metric`` per (family, n, normalized size)."""
    if not rows:
        raise ValueError("no rows to aggregate")
    keys = sorted({(r.family, r.n, r.normalized_size) for r in rows})
    table = []
    for fam, n, s in keys:
        values = np.array(
            [getattr(r, metric) for r in rows
             if (r.family, r.n, r.normalized_size) == (fam, n, s)]
        )
        table.append(
            {
                "family": fam,
                "n": n,
                "normalized_size": s,
                "metric": metric,
                "median": float(np.median(values)),
                "q25": float(np.quantile(values, 0.25)),
                "q75": float(np.quantile(values, 0.75)),
            }
        )
    return table


def _write_aggregate(table, path, x_column, x_values):
    fields = ["family", "n", x_column, "metric", "median", "q25", "q75"]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(fields)
        for entry, x in zip(table, x_values):
            writer.writerow(
                [entry["family"], entry["n"], repr(float(x)), entry["metric"],
                 repr(entry["median"]), repr(entry["q25"]), repr(entry["q75"])]
            )


def emit_plot_data(rows, out_dir):
    """Write the three per-figure aggregate CSV files.

    * observation error against normalized sample size,
    * parameter error against the sampled fraction of entries,
    * parameter error against normalized sample size.
    """
    import os

    if not rows:
        raise ValueError("no rows to emit")
    os.makedirs(out_dir, exist_ok=True)
    obs = aggregate(rows, metric="obs_err")
    par = aggregate(rows, metric="param_rel_err")
    norm_x = [entry["normalized_size"] for entry in obs]
    _write_aggregate(
        obs, os.path.join(out_dir, "obs_error_vs_normalized_size.csv"),
        "normalized_size", norm_x,
    )
    _write_aggregate(
        par, os.path.join(out_dir, "param_error_vs_normalized_size.csv"),
        "normalized_size", [entry["normalized_size"] for entry in par],
    )
    by_key = {}
    for row in rows:
        by_key.setdefault((row.family, row.n, row.normalized_size), row)
    fractions = [
        by_key[(e["family"], e["n"], e["normalized_size"])].omega_size
        / (e["n"] ** 2)
        for e in par
    ]
    _write_aggregate(
        par, os.path.join(out_dir, "param_error_vs_sampled_fraction.csv"),
        "sampled_fraction", fractions,
    )
    return [
        os.path.join(out_dir, name)
        for name in (
            "obs_error_vs_normalized_size.csv",
            "param_error_vs_normalized_size.csv",
            "param_error_vs_sampled_fraction.csv",
        )
    ]
