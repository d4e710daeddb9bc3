"""Uniform with-replacement index sampling and the masking operator.

An observation set is a *multiset* of index pairs: the same cell may be
drawn several times and every instance is kept.  Values attached to
duplicate instances follow one of two modes, recorded on the set:

* ``"independent"`` (default) -- every instance gets a fresh noise draw;
* ``"tied"`` -- all instances of a cell share a single draw.

The masking operator sums entries of a matrix against standard-basis
outer products over all instances, so a cell drawn ``c`` times is scaled
by ``c``.

File formats: observation triplets are CSV with header ``i,j,x`` and
one-based indices, one line per instance; index-only files use header
``i,j``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace

import numpy as np

from .families import Family

__all__ = [
    "ObservationSet",
    "sample_indices",
    "full_indices",
    "observe",
    "apply_mask",
    "observed_sum_matrix",
    "residual_matrix",
    "write_observations",
    "read_observations",
]


@dataclass(frozen=True)
class ObservationSet:
    """Multiset of sampled cells, optionally with observed values."""

    m: int
    n: int
    rows: np.ndarray
    cols: np.ndarray
    values: np.ndarray | None = None
    value_mode: str = "independent"

    def __post_init__(self):
        if self.m < 1 or self.n < 1:
            raise ValueError("matrix dimensions must be positive")
        rows = np.asarray(self.rows, dtype=np.intp)
        cols = np.asarray(self.cols, dtype=np.intp)
        if rows.shape != cols.shape or rows.ndim != 1 or rows.size < 1:
            raise ValueError("rows and cols must be equal-length 1-d arrays")
        if rows.min() < 0 or rows.max() >= self.m:
            raise ValueError("row index out of range")
        if cols.min() < 0 or cols.max() >= self.n:
            raise ValueError("column index out of range")
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "cols", cols)
        if self.values is not None:
            values = np.asarray(self.values, dtype=float)
            if values.shape != rows.shape:
                raise ValueError("values must match the index arrays")
            object.__setattr__(self, "values", values)
        if self.value_mode not in ("independent", "tied"):
            raise ValueError("value_mode must be 'independent' or 'tied'")

    @property
    def size(self) -> int:
        """Number of instances, duplicates included."""
        return self.rows.size

    def count_matrix(self) -> np.ndarray:
        """Dense matrix of per-cell multiplicities."""
        counts = np.zeros((self.m, self.n))
        np.add.at(counts, (self.rows, self.cols), 1.0)
        return counts

    def with_values(self, values, value_mode=None) -> "ObservationSet":
        return replace(
            self, values=values, value_mode=value_mode or self.value_mode
        )

    def subset(self, mask) -> "ObservationSet":
        """Restriction to the instances selected by a boolean mask."""
        return replace(
            self,
            rows=self.rows[mask],
            cols=self.cols[mask],
            values=None if self.values is None else self.values[mask],
        )


def sample_indices(m, n, size, seed) -> ObservationSet:
    """Draw ``size`` index pairs i.i.d. uniformly, with replacement."""
    if size < 1:
        raise ValueError("size must be at least 1")
    rng = np.random.default_rng(seed)
    return ObservationSet(
        m=m, n=n, rows=rng.integers(0, m, size), cols=rng.integers(0, n, size)
    )


def full_indices(m, n) -> ObservationSet:
    """Every cell exactly once (row-major order)."""
    rows, cols = np.divmod(np.arange(m * n), n)
    return ObservationSet(m=m, n=n, rows=rows, cols=cols)


def observe(omega: ObservationSet, theta_star, family: Family, seed,
            value_mode="independent") -> ObservationSet:
    """Attach noisy observations of ``theta_star`` to every instance.

    In ``"independent"`` mode duplicate instances of a cell receive fresh
    draws; in ``"tied"`` mode one draw per distinct cell is shared by all
    of its instances.
    """
    theta_star = np.asarray(theta_star, dtype=float)
    if theta_star.shape != (omega.m, omega.n):
        raise ValueError("ground-truth shape does not match the observation set")
    rng = np.random.default_rng(seed)
    thetas = theta_star[omega.rows, omega.cols]
    if value_mode == "independent":
        values = family.sample(thetas, rng)
    elif value_mode == "tied":
        flat = omega.rows * omega.n + omega.cols
        unique, inverse = np.unique(flat, return_inverse=True)
        per_cell = family.sample(theta_star.reshape(-1)[unique], rng)
        values = per_cell[inverse]
    else:
        raise ValueError("value_mode must be 'independent' or 'tied'")
    return omega.with_values(values, value_mode=value_mode)


def apply_mask(omega: ObservationSet, M) -> np.ndarray:
    """Sum ``M`` against basis outer products over all instances.

    Sampled cells are scaled by their multiplicities; unsampled cells
    are zero.
    """
    M = np.asarray(M, dtype=float)
    if M.shape != (omega.m, omega.n):
        raise ValueError(f"expected shape {(omega.m, omega.n)}, got {M.shape}")
    out = np.zeros_like(M)
    np.add.at(out, (omega.rows, omega.cols), M[omega.rows, omega.cols])
    return out


def observed_sum_matrix(omega: ObservationSet) -> np.ndarray:
    """Instance-summed observed values as a dense matrix."""
    if omega.values is None:
        raise ValueError("observation set carries no values")
    out = np.zeros((omega.m, omega.n))
    np.add.at(out, (omega.rows, omega.cols), omega.values)
    return out


def residual_matrix(omega: ObservationSet, mean_matrix) -> np.ndarray:
    """Masked residual: instance sums of observed value minus ``mean_matrix``.

    Equals the masking operator applied to the (per-instance) deviation of
    the observations from their channel means.
    """
    return observed_sum_matrix(omega) - apply_mask(omega, mean_matrix)


def write_observations(omega: ObservationSet, path):
    """Write one CSV line per instance; one-based indices.

    Header is ``i,j,x`` when values are present, ``i,j`` otherwise.
    """
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        if omega.values is None:
            writer.writerow(["i", "j"])
            for i, j in zip(omega.rows, omega.cols):
                writer.writerow([i + 1, j + 1])
        else:
            writer.writerow(["i", "j", "x"])
            for i, j, x in zip(omega.rows, omega.cols, omega.values):
                writer.writerow([i + 1, j + 1, repr(float(x))])


def read_observations(path, m, n, value_mode="independent") -> ObservationSet:
    """Read a triplet or index-only CSV written by ``write_observations``."""
    rows, cols, values = [], [], []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        has_values = [h.strip().lower() for h in header[:3]] == ["i", "j", "x"]
        if not has_values and [h.strip().lower() for h in header[:2]] != ["i", "j"]:
            raise ValueError(f"unrecognized header {header!r} in {path}")
        for line in reader:
            if not line:
                continue
            rows.append(int(line[0]) - 1)
            cols.append(int(line[1]) - 1)
            if has_values:
                values.append(float(line[2]))
    return ObservationSet(
        m=m,
        n=n,
        rows=np.array(rows, dtype=np.intp),
        cols=np.array(cols, dtype=np.intp),
        values=np.array(values) if values else None,
        value_mode=value_mode,
    )
