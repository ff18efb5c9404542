"""Heavy-tailed gradient noise: samplers, moment checks and tail diagnostics.

Every family is calibrated so that the alpha-th moment of the noise norm is
(0.9 * gamma) ** alpha, where alpha is the moment order the algorithm's noise
assumption is stated in. For the power-law families the sampled tail exponent
is ``alpha + tail_margin``: a tail exponent of exactly alpha would make the
alpha-th moment infinite. Variance stays infinite whenever the sampled
exponent is below 2.
"""

from __future__ import annotations

import math
import zlib
from dataclasses import dataclass

import numpy as np

FAMILIES = ("alpha_stable", "symmetric_pareto", "gaussian", "none")
HEADROOM = 0.9


class UnsupportedRegimeError(ValueError):
    """Tail index outside (1, 2]: the noise mean would not exist."""


class DegenerateSampleError(ValueError):
    pass


def rng_stream(seed: int, agent: int, purpose: str) -> np.random.Generator:
    """Independent generator keyed by (seed, agent, purpose).

    Identical keys reproduce identical sequences; distinct keys give
    statistically independent streams via SeedSequence spawn keys.
    """
    tag = zlib.crc32(purpose.encode("utf-8"))
    ss = np.random.SeedSequence(entropy=int(seed) & (2**64 - 1), spawn_key=(int(agent), tag))
    return np.random.default_rng(ss)


@dataclass(frozen=True)
class NoiseSpec:
    family: str
    tail_index: float = 2.0
    scale: float = 1.0
    dimension: int = 1
    tail_margin: float = 0.15

    def __post_init__(self) -> None:
        if self.family not in FAMILIES:
            raise ValueError(f"unknown noise family {self.family!r}; expected one of {FAMILIES}")
        if self.family == "gaussian":
            object.__setattr__(self, "tail_index", 2.0)
        if not 1.0 < self.tail_index <= 2.0:
            raise UnsupportedRegimeError(
                f"tail_index must lie in (1, 2], got {self.tail_index}"
            )
        if self.family != "none" and not self.scale > 0:
            raise ValueError("scale must be positive")
        if self.dimension < 1:
            raise ValueError("dimension must be a positive integer")
        if self.tail_margin <= 0:
            raise ValueError("tail_margin must be positive")

    @property
    def alpha(self) -> float:
        return self.tail_index

    @property
    def gamma(self) -> float:
        return self.scale

    @property
    def sampling_exponent(self) -> float:
        """Tail exponent actually drawn (stability index for alpha_stable)."""
        if self.family == "symmetric_pareto":
            return self.tail_index + self.tail_margin
        if self.family == "alpha_stable":
            return min(self.tail_index + self.tail_margin, 2.0)
        return math.inf

    @property
    def internal_scale(self) -> float:
        """Multiplier s applied to the unit-scale draw."""
        if self.family == "none":
            return 0.0
        return HEADROOM * self.scale / unit_norm_moment(self) ** (1.0 / self.tail_index)


def _stable_abs_moment(p: float, a: float) -> float:
    """E|X|^p for standard symmetric stable X with characteristic exp(-|t|^a), p < a."""
    ratio = 1.0 if a == 2.0 else math.gamma(1.0 - p / a) / math.gamma(1.0 - p / 2.0)
    return 2.0**p * math.gamma((1.0 + p) / 2.0) * ratio / math.sqrt(math.pi)


def unit_norm_moment(spec: NoiseSpec) -> float:
    """E||eps||^alpha for the unit-scale vector draw (upper bound when dim > 1).

    For dim > 1 the power-law families use the subadditive bound
    ||eps||^alpha <= sum_j |eps_j|^alpha (valid since alpha <= 2), so the
    calibrated moment never exceeds its target.
    """
    p, d = spec.tail_index, spec.dimension
    if spec.family == "gaussian":
        return 2.0 ** (p / 2.0) * math.exp(math.lgamma((d + p) / 2.0) - math.lgamma(d / 2.0))
    if spec.family == "symmetric_pareto":
        b = spec.sampling_exponent
        return d * b / (b - p)
    if spec.family == "alpha_stable":
        return d * _stable_abs_moment(p, spec.sampling_exponent)
    return 0.0


def _symmetric_stable(a: float, size, rng: np.random.Generator) -> np.ndarray:
    """Chambers-Mallows-Stuck draw, symmetric (skew 0), unit scale."""
    v = rng.uniform(-np.pi / 2, np.pi / 2, size=size)
    w = rng.exponential(1.0, size=size)
    if a == 2.0:
        return 2.0 * np.sin(v) * np.sqrt(w)
    if a == 1.0:
        return np.tan(v)
    return (
        np.sin(a * v)
        / np.cos(v) ** (1.0 / a)
        * (np.cos((1.0 - a) * v) / w) ** ((1.0 - a) / a)
    )


def _symmetric_pareto(b: float, size, rng: np.random.Generator) -> np.ndarray:
    """Signed inverse-CDF draw with P(|X| > x) = x^-b for x >= 1."""
    u = rng.uniform(size=size)
    mag = (1.0 - u) ** (-1.0 / b)
    sign = np.where(rng.uniform(size=size) < 0.5, -1.0, 1.0)
    return sign * mag


def sample_noise(spec: NoiseSpec, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
    """Draw one noise vector of length ``spec.dimension`` (or ``size`` of them)."""
    shape = (spec.dimension,) if size is None else (size, spec.dimension)
    if spec.family == "none":
        return np.zeros(shape)
    if spec.family == "gaussian":
        eps = rng.standard_normal(shape)
    elif spec.family == "symmetric_pareto":
        eps = _symmetric_pareto(spec.sampling_exponent, shape, rng)
    else:
        eps = _symmetric_stable(spec.sampling_exponent, shape, rng)
    return spec.internal_scale * eps


@dataclass
class MomentReport:
    empirical_alpha_moment: float
    standard_error: float
    bound: float

    @property
    def passed(self) -> bool:
        return self.empirical_alpha_moment <= self.bound + 3.0 * self.standard_error

    def __bool__(self) -> bool:
        return self.passed


def verify_moment_bound(
    spec: NoiseSpec,
    n_samples: int,
    rng: np.random.Generator,
    gamma: float | None = None,
) -> MomentReport:
    """Monte-Carlo check of E||noise||^alpha <= gamma^alpha.

    ``gamma`` overrides the bound's scale (defaults to ``spec.scale``) so a
    sample can be checked against a deliberately tight bound.
    """
    if n_samples < 10_000:
        raise ValueError("n_samples must be at least 1e4")
    g = spec.scale if gamma is None else gamma
    vals = np.linalg.norm(sample_noise(spec, rng, size=n_samples), axis=1) ** spec.tail_index
    return MomentReport(
        empirical_alpha_moment=float(vals.mean()),
        standard_error=float(vals.std(ddof=1) / math.sqrt(n_samples)),
        bound=g**spec.tail_index,
    )


def hill_tail_index(samples, top_fraction: float = 0.05) -> float:
    """Hill estimator over the top ceil(top_fraction * n) absolute values."""
    x = np.abs(np.asarray(samples, dtype=float).ravel())
    if x.size < 100:
        raise ValueError("Hill estimator needs at least 100 samples")
    if not 0.0 < top_fraction <= 0.5:
        raise ValueError("top_fraction must lie in (0, 0.5]")
    if np.all(x == x[0]):
        raise DegenerateSampleError("all samples are equal")
    x = np.sort(x)[::-1]
    k = math.ceil(top_fraction * x.size)
    threshold = x[k]
    if threshold <= 0.0:
        raise DegenerateSampleError("order statistic at the threshold is zero")
    total = float(np.sum(np.log(x[:k] / threshold)))
    return math.inf if total == 0.0 else k / total


def ccdf_loglog_table(samples) -> np.ndarray:
    """Rows of (log10 magnitude, log10 P(|X| >= magnitude)) over unique positive magnitudes."""
    x = np.abs(np.asarray(samples, dtype=float).ravel())
    if x.size == 0:
        raise ValueError("ccdf table needs at least one sample")
    mags, counts = np.unique(x, return_counts=True)
    # number of samples >= each unique magnitude
    at_least = x.size - np.concatenate(([0], np.cumsum(counts)[:-1]))
    keep = mags > 0
    return np.column_stack((np.log10(mags[keep]), np.log10(at_least[keep] / x.size)))


def tail_slope(table: np.ndarray, decades: float = 1.0) -> float:
    """Least-squares slope of the CCDF table over its top ``decades`` of magnitude."""
    top = table[:, 0].max()
    sel = table[:, 0] >= top - decades
    if sel.sum() < 2:
        raise DegenerateSampleError("not enough points in the tail window")
    return float(np.polyfit(table[sel, 0], table[sel, 1], 1)[0])
