"""Diffusion-map eigenbasis estimated from a null sample, with Nystrom extension.

The basis is computed from the Markov matrix ``A = D^-1 K`` through its
symmetric conjugate ``S = D^-1/2 K D^-1/2``. Right eigenvectors of ``A`` are
``D^-1/2 u`` for eigenvectors ``u`` of ``S``; each is rescaled to Euclidean
norm ``sqrt(m)`` so that the constant eigenvector is exactly ``+1``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .errors import ConfigurationError, DegenerateEigenvalueError, NumericalError
from .kernel_space import KernelConfig, as_dataset, gram_matrix, pairwise_sq_dists

EIGENVALUE_FLOOR = 1e-8

# Points per block when evaluating kernels against the training set.
_BLOCK_POINTS = 2048


@dataclass(frozen=True)
class MarkovMatrix:
    """Row-stochastic ``A = D^-1 K`` together with the kernel and degrees."""

    A: np.ndarray
    degree: np.ndarray
    K: np.ndarray
    points: np.ndarray | None = None
    kernel: KernelConfig | None = None


def row_normalize(K, points=None, kernel: KernelConfig | None = None) -> MarkovMatrix:
    K = np.asarray(K, dtype=np.float64)
    if K.ndim != 2 or K.shape[0] != K.shape[1]:
        raise ConfigurationError(f"Gram matrix must be square, got shape {K.shape}")
    degree = K.sum(axis=1)
    if not np.all(degree > 0):
        bad = int(np.flatnonzero(~(degree > 0))[0])
        raise NumericalError(f"row {bad} of the Gram matrix has non-positive sum")
    A = K / degree[:, None]
    return MarkovMatrix(A=A, degree=degree, K=K, points=points, kernel=kernel)


def _fix_signs(vectors: np.ndarray) -> np.ndarray:
    """Flip rows so each sums to >= 0; near-zero sums use the first clear entry."""
    m = vectors.shape[1]
    for row in vectors:
        total = row.sum()
        if abs(total) <= 1e-9 * m:
            nonzero = np.flatnonzero(np.abs(row) > 1e-9)
            flip = nonzero.size > 0 and row[nonzero[0]] < 0
        else:
            flip = total < 0
        if flip:
            row *= -1.0
    return vectors


@dataclass(frozen=True, eq=False)
class DiffusionBasis:
    """Eigenvalues and eigenvector table of the diffusion operator on a null sample.

    ``eigenvectors[i, j]`` is the i-th eigenfunction at training point j.
    ``degree_mean`` is the average kernel degree ``(1/m) sum_i sum_l k(y_i, y_l)``,
    the denominator of the weight function ``s_hat``.
    """

    training_points: np.ndarray
    kernel: KernelConfig
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    degree: np.ndarray
    degree_mean: float = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "degree_mean", float(self.degree.mean()))
        for arr in (self.training_points, self.eigenvalues, self.eigenvectors, self.degree):
            arr.setflags(write=False)

    @property
    def m(self) -> int:
        return self.training_points.shape[0]

    @property
    def max_cutoff(self) -> int:
        return self.eigenvalues.shape[0] - 1

    def usable_cutoff(self, floor: float = EIGENVALUE_FLOOR) -> int:
        """Largest cutoff whose eigenvalues all clear the Nystrom floor."""
        below = np.flatnonzero(self.eigenvalues < floor)
        return self.max_cutoff if below.size == 0 else int(below[0]) - 1

    def check_cutoff(self, cutoff: int, floor: float = EIGENVALUE_FLOOR) -> None:
        if not 0 <= cutoff <= self.max_cutoff:
            raise ConfigurationError(f"cutoff {cutoff} outside 0..{self.max_cutoff}")
        below = np.flatnonzero(self.eigenvalues[: cutoff + 1] < floor)
        if below.size:
            i = int(below[0])
            raise DegenerateEigenvalueError(i, float(self.eigenvalues[i]), floor)

    def _blocks(self, X: np.ndarray):
        X = as_dataset(X, "x")
        if X.shape[1] != self.training_points.shape[1]:
            raise ConfigurationError(
                f"points have d={X.shape[1]}, basis was built with d={self.training_points.shape[1]}"
            )
        for start in range(0, X.shape[0], _BLOCK_POINTS):
            yield start, pairwise_sq_dists(X[start : start + _BLOCK_POINTS], self.training_points)

    def extend(self, X, cutoff: int | None = None) -> np.ndarray:
        """Nystrom extension at every row of ``X``; shape (N, cutoff + 1)."""
        cutoff = self.max_cutoff if cutoff is None else cutoff
        self.check_cutoff(cutoff)
        psi = self.eigenvectors[: cutoff + 1].T
        lam = self.eigenvalues[: cutoff + 1]
        out = []
        for _, d2 in self._blocks(X):
            # normalised weights are invariant to a per-row shift of d2
            d2 -= d2.min(axis=1, keepdims=True)
            W = self.kernel.from_sq_dists(d2, out=d2)
            W /= W.sum(axis=1, keepdims=True)
            out.append((W @ psi) / lam)
        return np.vstack(out)

    def s_values(self, X) -> np.ndarray:
        """``s_hat`` at every row of ``X``."""
        out = []
        for _, d2 in self._blocks(X):
            out.append(self.kernel.from_sq_dists(d2, out=d2).sum(axis=1) / self.degree_mean)
        return np.concatenate(out)

    def weighted_projections(self, X, cutoff: int | None = None) -> np.ndarray:
        """``psi_i(x) * s_hat(x)`` for every row of ``X``; shape (N, cutoff + 1).

        The Nystrom normaliser cancels against the numerator of ``s_hat``, so
        this is ``K(x, Y) psi_i / (lambda_i * degree_mean)``.
        """
        cutoff = self.max_cutoff if cutoff is None else cutoff
        self.check_cutoff(cutoff)
        scaled = self.eigenvectors[: cutoff + 1].T / (self.eigenvalues[: cutoff + 1] * self.degree_mean)
        out = []
        for _, d2 in self._blocks(X):
            out.append(self.kernel.from_sq_dists(d2, out=d2) @ scaled)
        return np.vstack(out)

    def to_arrays(self) -> dict[str, np.ndarray]:
        return {
            "training_points": np.asarray(self.training_points),
            "bandwidth": np.array(self.kernel.bandwidth),
            "eigenvalues": np.asarray(self.eigenvalues),
            "eigenvectors": np.asarray(self.eigenvectors),
            "degree": np.asarray(self.degree),
        }

    @classmethod
    def from_arrays(cls, arrays) -> "DiffusionBasis":
        return cls(
            training_points=np.array(arrays["training_points"], dtype=np.float64),
            kernel=KernelConfig(float(arrays["bandwidth"])),
            eigenvalues=np.array(arrays["eigenvalues"], dtype=np.float64),
            eigenvectors=np.array(arrays["eigenvectors"], dtype=np.float64),
            degree=np.array(arrays["degree"], dtype=np.float64),
        )


def eigenbasis(M: MarkovMatrix, I_max: int) -> DiffusionBasis:
    """Top ``I_max + 1`` right eigenpairs of ``M.A``, normalised and sign-fixed.

    The constant eigenpair ``(1, D^1/2 1)`` of ``S`` is known exactly, so it is
    deflated out and the solver only looks for the next ``I_max`` pairs. This
    keeps the constant function first even when the kernel graph is nearly
    disconnected and several eigenvalues sit at 1.
    """
    m = M.K.shape[0]
    if not 1 <= I_max < m:
        raise ConfigurationError(f"I_max must satisfy 1 <= I_max < m={m}, got {I_max}")
    if M.points is None or M.kernel is None:
        raise ConfigurationError("MarkovMatrix lacks training points or kernel; use build_basis")
    root_d = np.sqrt(M.degree)
    S = M.K / np.outer(root_d, root_d)
    S = 0.5 * (S + S.T)
    u0 = root_d / np.linalg.norm(root_d)
    S -= np.outer(u0, u0)
    try:
        vals, vecs = linalg.eigh(S, subset_by_index=[m - I_max, m - 1])
    except linalg.LinAlgError as exc:
        raise NumericalError(f"eigen-solver failed: {exc}") from exc
    order = np.argsort(vals)[::-1]
    vals, vecs = vals[order], vecs[:, order]
    # the solver leaves an O(eps / lambda) trace of u0, which has eigenvalue 1
    # in the undeflated operator; project it out so small pairs keep their residual
    vecs -= np.outer(u0, u0 @ vecs)
    vecs /= np.linalg.norm(vecs, axis=0)

    psi = (vecs / root_d[:, None]).T
    psi *= np.sqrt(m) / np.linalg.norm(psi, axis=1, keepdims=True)
    psi = _fix_signs(psi)
    eigenvectors = np.vstack([np.ones(m), psi])
    eigenvalues = np.concatenate([[1.0], vals])
    return DiffusionBasis(
        training_points=np.array(M.points, dtype=np.float64),
        kernel=M.kernel,
        eigenvalues=eigenvalues,
        eigenvectors=eigenvectors,
        degree=np.array(M.degree),
    )


def build_basis(points, kernel: KernelConfig, I_max: int) -> DiffusionBasis:
    """Gram matrix, row normalisation and eigen-solve in one call."""
    points = as_dataset(points, "training points")
    if points.shape[0] < 2:
        raise ConfigurationError("a diffusion basis needs at least two training points")
    K = gram_matrix(points, None, kernel)
    basis = eigenbasis(row_normalize(K, points=points, kernel=kernel), I_max)
    usable = basis.usable_cutoff()
    if usable < I_max:
        warnings.warn(
            f"bandwidth {kernel.bandwidth:.6g}: eigenvalue {usable + 1} is below "
            f"{EIGENVALUE_FLOOR:.0e}; cutoffs above {usable} are unusable",
            RuntimeWarning,
            stacklevel=2,
        )
    return basis


def nystrom_extend(basis: DiffusionBasis, x, cutoff: int | None = None) -> np.ndarray:
    """Eigenfunction values at a single point ``x``, components 0..cutoff."""
    x = np.asarray(x, dtype=np.float64).reshape(1, -1)
    return basis.extend(x, cutoff)[0]


def s_hat(basis: DiffusionBasis, x) -> float:
    """Kernel degree of ``x`` against the training set over the mean training degree."""
    x = np.asarray(x, dtype=np.float64).reshape(1, -1)
    return float(basis.s_values(x)[0])


def save_basis(basis: DiffusionBasis, path):
    """Write ``basis`` to a versioned artifact file."""
    from .artifacts import write_artifact

    return write_artifact(path, "basis", basis.to_arrays(), {"m": basis.m, "I_max": basis.max_cutoff})


def load_basis(path) -> DiffusionBasis:
    from .artifacts import read_artifact

    _, arrays, _ = read_artifact(path, "basis")
    return DiffusionBasis.from_arrays(arrays)
