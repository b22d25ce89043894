"""Squared distances, the Gaussian kernel, Gram matrices and bandwidth grids."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import pdist

from .errors import CalibrationError, ConfigurationError

# Below this dimension the squared distance is summed coordinate by coordinate,
# which is exact and symmetric; above it the BLAS expansion is much faster.
_EXACT_DIM_LIMIT = 16

QUANTILE_READINGS = ("five_sixths", "literal")


def as_dataset(data, name: str = "data") -> np.ndarray:
    """Coerce ``data`` to a finite float64 array of shape (n, d).

    A 1-D input is read as n univariate points.
    """
    arr = np.asarray(data, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[:, None]
    elif arr.ndim != 2:
        raise ConfigurationError(f"{name} must be 1-D or 2-D, got shape {arr.shape}")
    if arr.shape[1] < 1:
        raise ConfigurationError(f"{name} has zero columns")
    if not np.all(np.isfinite(arr)):
        raise ConfigurationError(f"{name} contains non-finite coordinates")
    return arr


def read_csv_dataset(path) -> np.ndarray:
    """Headerless CSV, one point per row."""
    arr = np.loadtxt(path, delimiter=",", ndmin=2, dtype=np.float64)
    return as_dataset(arr, name=str(path))


@dataclass(frozen=True)
class KernelConfig:
    """Gaussian kernel ``exp(-d2 / bandwidth)``; bandwidth is in squared-distance units."""

    bandwidth: float

    def __post_init__(self):
        bw = float(self.bandwidth)
        if not (math.isfinite(bw) and bw > 0):
            raise ConfigurationError(f"bandwidth must be positive and finite, got {self.bandwidth!r}")
        object.__setattr__(self, "bandwidth", bw)

    def from_sq_dists(self, d2, out=None):
        """Kernel values from squared distances, vectorised."""
        if out is None:
            return np.exp(np.multiply(d2, -1.0 / self.bandwidth))
        np.multiply(d2, -1.0 / self.bandwidth, out=out)
        return np.exp(out, out=out)


def squared_euclidean(a, b) -> float:
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.shape != b.shape:
        raise ConfigurationError(f"dimension mismatch: {a.size} vs {b.size}")
    diff = a - b
    return float(diff @ diff)


def gaussian_kernel(a, b, cfg: KernelConfig) -> float:
    return math.exp(-squared_euclidean(a, b) / cfg.bandwidth)


def pairwise_sq_dists(rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
    """Matrix of squared Euclidean distances between the rows of two datasets."""
    if rows.shape[1] != cols.shape[1]:
        raise ConfigurationError(
            f"dimension mismatch: rows have d={rows.shape[1]}, cols have d={cols.shape[1]}"
        )
    d = rows.shape[1]
    if d <= _EXACT_DIM_LIMIT:
        out = np.zeros((rows.shape[0], cols.shape[0]))
        for k in range(d):
            diff = np.subtract.outer(rows[:, k], cols[:, k])
            diff *= diff
            out += diff
        return out
    out = rows @ cols.T
    out *= -2.0
    out += np.einsum("ij,ij->i", rows, rows)[:, None]
    out += np.einsum("ij,ij->i", cols, cols)[None, :]
    np.maximum(out, 0.0, out=out)
    return out


def gram_matrix(rows, cols, cfg: KernelConfig) -> np.ndarray:
    """Kernel matrix with entry (i, j) = k(rows[i], cols[j]).

    Pass ``cols=None`` for the square Gram matrix of a single dataset; that
    result is exactly symmetric with a unit diagonal.
    """
    rows = as_dataset(rows, "rows")
    if rows.shape[0] == 0:
        raise ConfigurationError("gram_matrix needs a nonempty dataset")
    if cols is None:
        K = cfg.from_sq_dists(pairwise_sq_dists(rows, rows))
        K = 0.5 * (K + K.T)
        np.fill_diagonal(K, 1.0)
        return K
    cols = as_dataset(cols, "cols")
    if cols.shape[0] == 0:
        raise ConfigurationError("gram_matrix needs a nonempty dataset")
    return cfg.from_sq_dists(pairwise_sq_dists(rows, cols))


def bandwidth_levels(reading: str = "five_sixths") -> tuple[list[float], float, list[int]]:
    """Quantile levels, the level of the multiplied quantile, and its multipliers."""
    if reading not in QUANTILE_READINGS:
        raise ConfigurationError(f"unknown quantile reading {reading!r}; choose from {QUANTILE_READINGS}")
    top = 5.0 / 6.0 if reading == "five_sixths" else 0.00833
    return [1 / 6, 2 / 6, 3 / 6, 4 / 6], top, [1, 2, 3, 4, 5, 6]


def bandwidth_grid(reference_sample, reading: str = "five_sixths") -> list[KernelConfig]:
    """Ten bandwidths from quantiles of the pairwise squared distances.

    The 1/6..4/6 quantiles, then 1..6 times the top quantile (5/6 by
    default, the literal 0.833% level with ``reading="literal"``). Self
    pairs are excluded and quantiles interpolate linearly.
    """
    sample = as_dataset(reference_sample, "reference_sample")
    if sample.shape[0] < 2:
        raise ConfigurationError("bandwidth_grid needs at least two reference points")
    d2 = pdist(sample, metric="sqeuclidean")
    levels, top, multipliers = bandwidth_levels(reading)
    q = np.quantile(d2, levels + [top])
    grid = list(q[:4]) + [k * q[4] for k in multipliers]
    if not all(v > 0 for v in grid):
        raise CalibrationError(
            "bandwidth grid has zero entries; the reference sample is (nearly) degenerate"
        )
    return [KernelConfig(float(v)) for v in grid]
