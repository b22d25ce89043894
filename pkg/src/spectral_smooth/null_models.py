"""Simulation scenarios, the bootstrap null, and KS / AD baseline tests.

Every sampler takes an explicit ``numpy.random.Generator``; use :func:`stream`
to derive independent, reproducible generators from a seed and a key path
(stage, replicate index, ...).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np
from scipy import stats

from .errors import ConfigurationError, UsageError
from .kernel_space import as_dataset


def stream(seed: int, *key: int) -> np.random.Generator:
    """Independent generator for ``(seed, key...)``; same inputs give the same stream."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.PCG64(ss))


@dataclass(frozen=True)
class Family:
    null_theta: float
    theta_range: tuple[float, float]
    multivariate: bool = False
    null_cdf: Callable | None = None


_NORM_CDF = stats.norm.cdf

FAMILIES: dict[str, Family] = {
    "normal_mean": Family(0.0, (0.0, 0.7), null_cdf=_NORM_CDF),
    "normal_var": Family(1.0, (1.0, 2.5), null_cdf=_NORM_CDF),
    "lognormal_mean": Family(0.0, (0.0, 1.0), null_cdf=stats.lognorm(s=1.0).cdf),
    "lognormal_var": Family(1.0, (1.0, 2.5), null_cdf=stats.lognorm(s=1.0).cdf),
    "beta_symmetry": Family(1.0, (1.0, 5.0), null_cdf=stats.uniform.cdf),
    "gamma_shape": Family(3.0, (3.0, 4.5), null_cdf=stats.gamma(a=3.0, scale=0.5).cdf),
    "normal_mixture": Family(0.0, (0.0, 2.0), null_cdf=_NORM_CDF),
    "fat_tails": Family(0.0, (1e-3, 1.0), null_cdf=_NORM_CDF),
    "mvn_mean": Family(0.0, (0.0, 1.5), multivariate=True),
    "mvn_var": Family(1.0, (1.0, 20.0), multivariate=True),
    "bootstrap": Family(0.0, (0.0, 0.0), multivariate=True),
}

# short names accepted wherever a null model is named
NULL_ALIASES = {
    "normal": "normal_mean",
    "lognormal": "lognormal_mean",
    "uniform": "beta_symmetry",
    "beta": "beta_symmetry",
    "gamma": "gamma_shape",
    "mvn": "mvn_mean",
}


@dataclass(frozen=True)
class ScenarioSpec:
    """One member of a scenario family.

    ``theta`` is the family parameter: a mean, a standard deviation (normal_var,
    lognormal_var), a Beta or Gamma shape, a mixture offset, the reciprocal
    degrees of freedom (fat_tails), or the first-coordinate variance (mvn_var).
    Gamma uses rate 2. ``dim`` only matters for the mvn families (default 100).
    """

    family: str
    theta: float | None = None
    dim: int | None = None
    reference: np.ndarray | None = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ConfigurationError(
                f"unknown scenario {self.family!r}; valid tags: {', '.join(sorted(FAMILIES))}"
            )
        fam = FAMILIES[self.family]
        if self.theta is None:
            object.__setattr__(self, "theta", fam.null_theta)
        object.__setattr__(self, "theta", float(self.theta))
        if self.dim is None:
            object.__setattr__(self, "dim", 100 if fam.multivariate and self.family != "bootstrap" else 1)
        if self.family == "bootstrap":
            if self.reference is None:
                raise ConfigurationError("bootstrap scenario needs a reference dataset")
            ref = as_dataset(self.reference, "reference")
            object.__setattr__(self, "reference", ref)
            object.__setattr__(self, "dim", ref.shape[1])
        elif not fam.multivariate and self.dim != 1:
            raise ConfigurationError(f"{self.family} is univariate; dim must be 1")

    @property
    def null(self) -> "ScenarioSpec":
        return ScenarioSpec(self.family, FAMILIES[self.family].null_theta, self.dim, self.reference)

    @property
    def is_null(self) -> bool:
        return self.family == "bootstrap" or self.theta == FAMILIES[self.family].null_theta

    def at(self, theta: float) -> "ScenarioSpec":
        return ScenarioSpec(self.family, theta, self.dim, self.reference)

    def null_cdf(self):
        cdf = FAMILIES[self.family].null_cdf
        if cdf is None:
            raise UsageError(f"{self.family} has no univariate null CDF")
        return cdf


def resolve_null(name: str, dim: int | None = None, reference=None) -> ScenarioSpec:
    """Null ScenarioSpec from a family tag or a short alias such as ``normal``."""
    family = NULL_ALIASES.get(name, name)
    spec = ScenarioSpec(family, None, dim if family.startswith("mvn") else None, reference)
    return spec.null


def bootstrap_sample(reference, n: int, rng) -> np.ndarray:
    """``n`` rows drawn uniformly with replacement from ``reference``."""
    ref = np.asarray(reference, dtype=np.float64)
    if ref.ndim == 1:
        ref = ref[:, None]
    if ref.shape[0] == 0:
        raise UsageError("cannot bootstrap from an empty reference")
    idx = rng.integers(0, ref.shape[0], size=n)
    return ref[idx]


def sample(spec: ScenarioSpec, n: int, rng: np.random.Generator) -> np.ndarray:
    """``n`` i.i.d. draws from ``spec`` as an (n, d) array."""
    fam = FAMILIES[spec.family]
    lo, hi = fam.theta_range
    theta = spec.theta
    if spec.family != "bootstrap" and not (lo <= theta <= hi) and theta != fam.null_theta:
        warnings.warn(f"{spec.family}: theta={theta} outside [{lo}, {hi}]", RuntimeWarning, stacklevel=2)

    match spec.family:
        case "normal_mean":
            x = rng.normal(theta, 1.0, n)
        case "normal_var":
            x = rng.normal(0.0, theta, n)
        case "lognormal_mean":
            x = rng.lognormal(theta, 1.0, n)
        case "lognormal_var":
            x = rng.lognormal(0.0, theta, n)
        case "beta_symmetry":
            x = rng.beta(theta, theta, n)
        case "gamma_shape":
            x = rng.gamma(theta, 0.5, n)
        case "normal_mixture":
            signs = np.where(rng.random(n) < 0.5, -1.0, 1.0)
            x = rng.normal(0.0, 1.0, n) + signs * theta
        case "fat_tails":
            x = rng.normal(0.0, 1.0, n) if theta == 0 else rng.standard_t(1.0 / theta, n)
        case "mvn_mean":
            x = rng.normal(0.0, 1.0, (n, spec.dim))
            x[:, 0] += theta
            return x
        case "mvn_var":
            x = rng.normal(0.0, 1.0, (n, spec.dim))
            x[:, 0] *= math.sqrt(theta)
            return x
        case "bootstrap":
            return bootstrap_sample(spec.reference, n, rng)
    return x[:, None]


def sample_datasets(spec: ScenarioSpec, n: int, seed: int, key: tuple[int, ...], indices) -> np.ndarray:
    """Stack of datasets, replicate ``r`` drawn from ``stream(seed, *key, r)``; shape (R, n, d)."""
    return np.stack([sample(spec, n, stream(seed, *key, r)) for r in indices])


class BaselineResult(NamedTuple):
    statistic: float
    p_value: float


def _univariate(data) -> np.ndarray:
    x = np.asarray(data, dtype=np.float64)
    if x.ndim == 2:
        if x.shape[1] != 1:
            raise UsageError(f"KS/AD are univariate tests; got d={x.shape[1]}")
        x = x[:, 0]
    elif x.ndim != 1:
        raise UsageError("KS/AD need a univariate dataset")
    if x.size == 0:
        raise UsageError("KS/AD need at least one observation")
    return x


def _ks_from_uniform(u_sorted: np.ndarray) -> float:
    n = u_sorted.shape[-1]
    i = np.arange(1, n + 1)
    return float(np.max(np.maximum(i / n - u_sorted, u_sorted - (i - 1) / n), axis=-1))


def kolmogorov_sf(t: float) -> float:
    """P(K > t) for the Kolmogorov limit distribution of sqrt(n) * D_n."""
    if t <= 0:
        return 1.0
    k = np.arange(1, 101)
    if t < 1.0:
        cdf = math.sqrt(2 * math.pi) / t * np.sum(np.exp(-((2 * k - 1) ** 2) * math.pi**2 / (8 * t * t)))
        return float(min(1.0, max(0.0, 1.0 - cdf)))
    terms = 2.0 * (-1.0) ** (k - 1) * np.exp(-2.0 * k * k * t * t)
    return float(min(1.0, max(0.0, terms.sum())))


def _ad_from_uniform(u_sorted: np.ndarray) -> float:
    n = u_sorted.shape[-1]
    tiny = np.finfo(np.float64).tiny
    u = np.clip(u_sorted, tiny, 1.0 - np.finfo(np.float64).epsneg)
    i = np.arange(1, n + 1)
    s = np.sum((2 * i - 1) * (np.log(u) + np.log1p(-u[..., ::-1])), axis=-1)
    return float(-n - s / n)


def ad_limit_cdf(z: float) -> float:
    """Limiting CDF of A^2 with fully specified null (Marsaglia & Marsaglia approximation)."""
    if z <= 0:
        return 0.0
    if z < 2.0:
        poly = 2.00012 + (0.247105 - (0.0649821 - (0.0347962 - (0.011672 - 0.00168691 * z) * z) * z) * z) * z
        return math.exp(-1.2337141 / z) / math.sqrt(z) * poly
    inner = 1.0776 - (2.30695 - (0.43424 - (0.082433 - (0.008056 - 0.0003146 * z) * z) * z) * z) * z
    return math.exp(-math.exp(inner))


def _mc_p_value(statistic: float, fn, n: int, reps: int, rng) -> float:
    u = np.sort(rng.random((reps, n)), axis=1)
    null = np.array([fn(row) for row in u])
    return (1 + np.count_nonzero(null >= statistic)) / (reps + 1)


def ks_statistic(data, cdf, mc_threshold: int = 30, mc_reps: int = 2000, rng=None) -> BaselineResult:
    """One-sample Kolmogorov-Smirnov test of ``data`` against ``cdf``.

    The p-value uses the Kolmogorov limit law for n >= ``mc_threshold`` and a
    Monte Carlo null of uniform samples below it.
    """
    x = np.sort(_univariate(data))
    d = _ks_from_uniform(np.asarray(cdf(x), dtype=np.float64))
    n = x.size
    if n >= mc_threshold:
        p = kolmogorov_sf(math.sqrt(n) * d)
    else:
        p = _mc_p_value(d, _ks_from_uniform, n, mc_reps, rng if rng is not None else stream(0, n))
    return BaselineResult(d, p)


def ad_statistic(data, cdf, mc_threshold: int = 30, mc_reps: int = 2000, rng=None) -> BaselineResult:
    """One-sample Anderson-Darling test with a fully specified null ``cdf``."""
    x = np.sort(_univariate(data))
    a2 = _ad_from_uniform(np.asarray(cdf(x), dtype=np.float64))
    n = x.size
    if n >= mc_threshold:
        p = 1.0 - ad_limit_cdf(a2)
    else:
        p = _mc_p_value(a2, _ad_from_uniform, n, mc_reps, rng if rng is not None else stream(0, n))
    return BaselineResult(a2, min(1.0, max(0.0, p)))
