"""Experiment simulators and the maps between them.

The forward map sends a Poisson point sample (plus independent dither) to a
stack of Gaussian-like coefficients: root-transformed counts on the base
level ``k0`` and quantile-coupled split variables on the finer levels.  The
inverse map recovers the count pyramid exactly from such a stack.  The
white-noise side is represented by its normalized increments on the finest
level ``k1``; :func:`analyze_path` and :func:`reconstruct_path` convert
between that and a coefficient stack.

Conventions: a stack with levels ``(k0, k1)`` carries the base level ``k0``
and detail levels ``k0 < k <= k1``, so it is in bijection with a count
pyramid on levels ``k0..k1`` and with a path on level ``k1``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .couplings import fm_to_normal, normal_to_fm, root_transform, root_transform_inverse
from .density_models import FixedSample, PointProcessSample
from .dyadic import StepFunction, besov_tail_profile

__all__ = [
    "STREAM_PURPOSES",
    "make_rng",
    "CountPyramid",
    "DitherStream",
    "DITHER_MARGIN",
    "CoefficientStack",
    "WhiteNoisePath",
    "InversionFlags",
    "sigma_sq",
    "count_pyramid",
    "forward_map",
    "inverse_map",
    "reconstruct_path",
    "analyze_path",
    "place_points",
    "simulate_white_noise",
    "sample_poisson_process",
    "histogram_estimate",
    "randomize_to_poisson",
    "randomize_to_fixed",
    "choose_k0",
    "gamma_sequence",
    "default_k1",
]

#: Integer tags separating independent random streams drawn from one seed.
STREAM_PURPOSES = {
    "dither": 1,
    "poisson": 2,
    "white-noise": 3,
    "fixed-sample": 4,
    "randomize": 5,
}


def make_rng(seed: int, purpose: str, *key: int) -> np.random.Generator:
    """Counter-based generator for ``(seed, purpose, *key)``.

    Streams for different keys are independent, and a given key always
    produces the same stream regardless of what else was drawn.
    """
    if purpose not in STREAM_PURPOSES:
        raise ValueError(f"unknown stream purpose {purpose!r}")
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(STREAM_PURPOSES[purpose],) + tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))


def sigma_sq(k: int, n: float) -> float:
    """``sigma_k**2 = 2**k / (4 n)``; exact when ``n`` is a power of two."""
    return math.ldexp(1.0, k) / (4.0 * n)


def default_k1(n: int) -> int:
    return max(1, math.ceil(math.log2(n)))


# -- count pyramid ---------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class CountPyramid:
    """Dyadic cell counts ``N_{k,l}`` for ``k0 <= k <= k1``."""

    k0: int
    k1: int
    counts: dict

    def __post_init__(self):
        if not 0 <= self.k0 <= self.k1:
            raise ValueError("need 0 <= k0 <= k1")
        counts = {}
        for k in range(self.k0, self.k1 + 1):
            arr = np.asarray(self.counts[k], dtype=np.int64)
            if arr.shape != (2**k,):
                raise ValueError(f"level {k} needs {2**k} counts")
            if np.any(arr < 0):
                raise ValueError("counts must be nonnegative")
            arr = arr.copy()
            arr.setflags(write=False)
            counts[k] = arr
        for k in range(self.k0, self.k1):
            if not np.array_equal(counts[k], counts[k + 1][0::2] + counts[k + 1][1::2]):
                raise ValueError(f"levels {k} and {k + 1} are inconsistent")
        object.__setattr__(self, "counts", counts)

    @property
    def total(self) -> int:
        return int(self.counts[self.k0].sum())

    def level(self, k: int) -> np.ndarray:
        return self.counts[k]

    def __eq__(self, other):
        if not isinstance(other, CountPyramid):
            return NotImplemented
        return (self.k0, self.k1) == (other.k0, other.k1) and all(
            np.array_equal(self.counts[k], other.counts[k]) for k in self.counts
        )

    def to_dict(self) -> dict:
        return {
            "type": "CountPyramid",
            "k0": self.k0,
            "k1": self.k1,
            "counts": {str(k): v.tolist() for k, v in self.counts.items()},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CountPyramid":
        return cls(int(d["k0"]), int(d["k1"]), {int(k): v for k, v in d["counts"].items()})

    @classmethod
    def from_finest(cls, finest, k0: int) -> "CountPyramid":
        finest = np.asarray(finest, dtype=np.int64)
        k1 = int(round(math.log2(finest.size)))
        counts = {k1: finest}
        for k in range(k1 - 1, k0 - 1, -1):
            counts[k] = counts[k + 1][0::2] + counts[k + 1][1::2]
        return cls(k0, k1, counts)


def count_pyramid(sample, k0: int, k1: int) -> CountPyramid:
    """Bin the points at level ``k1`` and aggregate sibling sums down to ``k0``."""
    if not 0 <= k0 <= k1:
        raise ValueError("need 0 <= k0 <= k1")
    points = np.asarray(getattr(sample, "points", sample), dtype=float)
    if np.any((points < 0) | (points >= 1)) or np.any(np.isnan(points)):
        raise ValueError("points must lie in [0, 1)")
    idx = np.floor(points * 2**k1).astype(np.int64)
    return CountPyramid.from_finest(np.bincount(idx, minlength=2**k1), k0)


#: Distance kept between the dither and the ends of ``[-1/2, 1/2)``.
DITHER_MARGIN = 1e-8


# -- dither ----------------------------------------------------------------------

@dataclass(frozen=True)
class DitherStream:
    """Uniforms ``U_{k,l}`` on ``[-1/2, 1/2)`` keyed by ``(seed, replicate, k)``.

    The interval is shrunk by :data:`DITHER_MARGIN` at each end, a total
    variation change of ``2e-8``.

    Level ``k`` is one independent stream of ``2**k`` draws, so a value does
    not depend on which other levels were requested.
    """

    seed: int
    replicate: int = 0

    def level(self, k: int) -> np.ndarray:
        # uniform on [-1/2 + margin, 1/2 - margin): N + U then stays clear of the
        # rounding boundaries N +- 1/2 by far more than the round-off of the inverse
        u = make_rng(self.seed, "dither", self.replicate, k).random(2**k)
        return (1.0 - 2.0 * DITHER_MARGIN) * (u - 0.5)

    def value(self, k: int, l: int) -> float:
        return float(self.level(k)[l])


@dataclass(frozen=True)
class _FixedDither:
    """Explicit dither values, mainly for tests and worked examples."""

    levels: dict

    def level(self, k: int) -> np.ndarray:
        return np.asarray(self.levels[k], dtype=float)


# -- coefficient stack -------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class CoefficientStack:
    """Base coefficients on level ``k0`` plus even-position details for ``k0 < k <= k1``.

    ``details[k]`` has ``2**(k-1)`` entries ``W_{k,2l}``; the odd positions
    are their negations and are not stored.
    """

    n: float
    k0: int
    k1: int
    base: np.ndarray
    details: dict
    n_saturated: int = 0

    def __post_init__(self):
        if self.n <= 0:
            raise ValueError("n must be positive")
        if not 0 <= self.k0 <= self.k1:
            raise ValueError("need 0 <= k0 <= k1")
        base = np.array(self.base, dtype=float)
        if base.shape != (2**self.k0,):
            raise ValueError(f"base needs {2**self.k0} entries")
        base.setflags(write=False)
        details = {}
        for k in range(self.k0 + 1, self.k1 + 1):
            arr = np.array(self.details[k], dtype=float)
            if arr.shape != (2 ** (k - 1),):
                raise ValueError(f"details at level {k} need {2 ** (k - 1)} entries")
            arr.setflags(write=False)
            details[k] = arr
        object.__setattr__(self, "base", base)
        object.__setattr__(self, "details", details)

    def sigma_sq(self, k: int) -> float:
        return sigma_sq(k, self.n)

    def sigma(self, k: int) -> float:
        return math.sqrt(self.sigma_sq(k))

    def __eq__(self, other):
        if not isinstance(other, CoefficientStack):
            return NotImplemented
        return (
            (self.n, self.k0, self.k1) == (other.n, other.k0, other.k1)
            and np.array_equal(self.base, other.base)
            and all(np.array_equal(self.details[k], other.details[k]) for k in self.details)
        )

    def to_dict(self) -> dict:
        return {
            "type": "CoefficientStack",
            "n": self.n,
            "k0": self.k0,
            "k1": self.k1,
            "sigma_sq": {str(k): self.sigma_sq(k) for k in range(self.k0, self.k1 + 1)},
            "base": self.base.tolist(),
            "details": {str(k): v.tolist() for k, v in self.details.items()},
            "n_saturated": self.n_saturated,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CoefficientStack":
        return cls(
            n=d["n"],
            k0=int(d["k0"]),
            k1=int(d["k1"]),
            base=d["base"],
            details={int(k): v for k, v in d["details"].items()},
            n_saturated=int(d.get("n_saturated", 0)),
        )


def forward_map(pyramid: CountPyramid, dither, n: float) -> CoefficientStack:
    """Map counts plus dither to the coefficient stack.

    Base: ``sigma_{k0} t(N + U)``.  Details: ``sigma_{k-1} Phi^{-1}(F_m(N_{k,2l} + U_{k,2l}))``
    with ``m = N_{k-1,l}``.
    """
    if n <= 0:
        raise ValueError("n must be positive")
    k0, k1 = pyramid.k0, pyramid.k1
    base = math.sqrt(sigma_sq(k0, n)) * root_transform(pyramid.counts[k0] + dither.level(k0))
    details = {}
    saturated = 0
    for k in range(k0 + 1, k1 + 1):
        m = pyramid.counts[k - 1]
        x = pyramid.counts[k][0::2] + dither.level(k)[0::2]
        z, sat = fm_to_normal(m, x, return_saturation=True)
        saturated += int(np.sum(sat))
        details[k] = math.sqrt(sigma_sq(k - 1, n)) * np.atleast_1d(z)
    return CoefficientStack(n, k0, k1, base, details, n_saturated=saturated)


@dataclass(frozen=True)
class InversionFlags:
    """Diagnostics from :func:`inverse_map`; all zero on forward-map output."""

    n_clamped: int = 0
    n_saturated: int = 0


def _round_half_up(x):
    return np.floor(np.asarray(x, dtype=float) + 0.5)


def inverse_map(stack: CoefficientStack, *, return_flags: bool = False):
    """Recover the count pyramid from a coefficient stack.

    Rounding is to the nearest integer with ties going up.  Counts that would
    be negative (or exceed their parent) are clamped and counted in the
    returned flags; that cannot happen for output of :func:`forward_map`.
    """
    k0, k1 = stack.k0, stack.k1
    v = stack.base / stack.sigma(k0)
    base = _round_half_up(root_transform_inverse(v))
    clamped = int(np.sum(base < 0))
    counts = {k0: np.maximum(base, 0).astype(np.int64)}
    for k in range(k0 + 1, k1 + 1):
        m = counts[k - 1]
        x = normal_to_fm(m, stack.details[k] / stack.sigma(k - 1))
        left = _round_half_up(x)
        bad = (left < 0) | (left > m)
        clamped += int(np.sum(bad))
        left = np.clip(left, 0, m).astype(np.int64)
        level = np.empty(2**k, dtype=np.int64)
        level[0::2] = left
        level[1::2] = m - left
        counts[k] = level
    pyramid = CountPyramid(k0, k1, counts)
    if return_flags:
        return pyramid, InversionFlags(clamped, stack.n_saturated)
    return pyramid


def place_points(pyramid: CountPyramid) -> PointProcessSample:
    """Spread ``N_{k1,l}`` points evenly inside each finest cell (at ``(i + 1/2)/N`` of the cell).

    The inverse map only determines counts; this is one fixed, documented
    choice of positions for when a point container is needed.
    """
    k1 = pyramid.k1
    finest = pyramid.counts[k1]
    cell_of = np.repeat(np.arange(finest.size), finest)
    starts = np.concatenate([[0], np.cumsum(finest)[:-1]])
    rank = np.arange(cell_of.size) - np.repeat(starts, finest)
    frac = (rank + 0.5) / np.repeat(finest, finest)
    return PointProcessSample((cell_of + frac) * 2.0**-k1)


# -- white noise -------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class WhiteNoisePath:
    """Normalized increments ``Zbar_{k1,l} = 2**k1 (Z((l+1)/2**k1) - Z(l/2**k1))``."""

    n: float
    k1: int
    increments: np.ndarray

    def __post_init__(self):
        inc = np.array(self.increments, dtype=float)
        if inc.shape != (2**self.k1,):
            raise ValueError(f"path needs {2**self.k1} increments")
        if not np.all(np.isfinite(inc)):
            raise ValueError("increments must be finite")
        inc.setflags(write=False)
        object.__setattr__(self, "increments", inc)

    def values(self) -> np.ndarray:
        """``Z(l / 2**k1)`` for ``l = 0..2**k1``."""
        return np.concatenate([[0.0], np.cumsum(self.increments) * 2.0**-self.k1])

    def to_dict(self) -> dict:
        return {"type": "WhiteNoisePath", "n": self.n, "k1": self.k1, "increments": self.increments.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "WhiteNoisePath":
        return cls(d["n"], int(d["k1"]), d["increments"])


def reconstruct_path(stack: CoefficientStack) -> WhiteNoisePath:
    """Refine top-down: children are ``Zbar_{k-1,l} +- W_{k,2l}``."""
    z = stack.base
    for k in range(stack.k0 + 1, stack.k1 + 1):
        w = stack.details[k]
        nxt = np.empty(2**k)
        nxt[0::2] = z + w
        nxt[1::2] = z - w
        z = nxt
    return WhiteNoisePath(stack.n, stack.k1, z)


def analyze_path(path: WhiteNoisePath, k0: int) -> CoefficientStack:
    """Coarsen bottom-up: parent mean and half-difference of each sibling pair."""
    if not 0 <= k0 <= path.k1:
        raise ValueError("need 0 <= k0 <= k1")
    z = path.increments
    details = {}
    for k in range(path.k1, k0, -1):
        details[k] = 0.5 * (z[0::2] - z[1::2])
        z = 0.5 * (z[0::2] + z[1::2])
    return CoefficientStack(path.n, k0, path.k1, z, details)


def simulate_white_noise(f, n: float, k1: int, rng: np.random.Generator) -> WhiteNoisePath:
    """Independent Gaussian increments with means ``h_{k1,l}`` and sd ``sigma_{k1}``."""
    if n <= 0:
        raise ValueError("n must be positive")
    h = f.sqrt_cell_means(k1)
    return WhiteNoisePath(n, k1, h + math.sqrt(sigma_sq(k1, n)) * rng.standard_normal(2**k1))


# -- samples and randomizations -------------------------------------------------------

def sample_poisson_process(f, n: float, rng: np.random.Generator) -> PointProcessSample:
    """Poisson(n) many i.i.d. draws from ``f``."""
    if n <= 0:
        raise ValueError("n must be positive")
    count = int(rng.poisson(n))
    return PointProcessSample(f.sample(count, rng))


def histogram_estimate(points, count_used: int, k0: int) -> StepFunction:
    """``(2**k0 / count_used) * #{points in I_{k0,l}}`` on each level-``k0`` cell."""
    if count_used <= 0:
        raise ValueError("count_used must be positive")
    if k0 < 0:
        raise ValueError("k0 must be nonnegative")
    points = np.asarray(getattr(points, "points", points), dtype=float)
    idx = np.floor(points * 2**k0).astype(np.int64)
    counts = np.bincount(idx, minlength=2**k0)
    return StepFunction(k0, counts * (2.0**k0 / count_used))


def _augmentation_draws(hist: StepFunction, eps0: float | None, count: int, rng: np.random.Generator) -> np.ndarray:
    """Draws from the histogram floored at ``eps0/2`` (if given) and renormalized.

    An all-zero histogram without a floor falls back to the uniform density.
    """
    values = np.array(hist.values, dtype=float)
    if eps0 is not None:
        values = np.maximum(values, 0.5 * eps0)
    if values.sum() <= 0:
        values = np.ones_like(values)
    cum = np.concatenate([[0.0], np.cumsum(values)])
    cum /= cum[-1]
    u = rng.random(count)
    idx = np.clip(np.searchsorted(cum, u, side="right") - 1, 0, values.size - 1)
    frac = (u - cum[idx]) / (cum[idx + 1] - cum[idx])
    x = (idx + frac) * 2.0**-hist.level
    return np.minimum(x, np.nextafter(1.0, 0.0))


def randomize_to_poisson(sample: FixedSample, k0: int, rng: np.random.Generator, eps0: float | None = None) -> PointProcessSample:
    """Turn ``n`` i.i.d. points into a Poisson(n)-size sample.

    Draw ``N ~ Poisson(n)``; keep the first ``N`` points, or all ``n`` plus
    ``N - n`` draws from the (floored, renormalized) level-``k0`` histogram.
    """
    n = sample.n
    target = int(rng.poisson(n))
    if target <= n:
        return PointProcessSample(np.sort(sample.points[:target]))
    extra = _augmentation_draws(histogram_estimate(sample.points, n, k0), eps0, target - n, rng)
    return PointProcessSample(np.sort(np.concatenate([sample.points, extra])))


def randomize_to_fixed(sample: PointProcessSample, n: int, k0: int, rng: np.random.Generator, eps0: float | None = None) -> FixedSample:
    """Turn a Poisson-size sample into exactly ``n`` points.

    The stored points are sorted, so "the first ``n``" is realized as a
    uniformly random subset of size ``n`` in random order.  A short sample is
    topped up with draws from the (floored, renormalized) histogram.
    """
    if n < 1:
        raise ValueError("n must be positive")
    points = np.asarray(sample.points, dtype=float)
    shuffled = points[rng.permutation(points.size)]
    if points.size >= n:
        return FixedSample(shuffled[:n])
    extra = _augmentation_draws(histogram_estimate(points, n, k0), eps0, n - points.size, rng)
    return FixedSample(np.concatenate([shuffled, extra]))


# -- k0 rule -----------------------------------------------------------------------------

def choose_k0(n: float, gamma) -> int:
    """Smallest ``k`` with ``4**k / n >= gamma[k]``.

    ``gamma`` must be nonincreasing and nonnegative.  If the sequence runs out
    before the condition holds, its last value is carried forward.
    """
    gamma = np.asarray(gamma, dtype=float)
    if gamma.ndim != 1 or gamma.size == 0:
        raise ValueError("gamma must be a nonempty sequence")
    if np.any(gamma < 0) or np.any(np.diff(gamma) > 0) or np.any(~np.isfinite(gamma)):
        raise ValueError("gamma must be finite, nonnegative and nonincreasing")
    if n <= 0:
        raise ValueError("n must be positive")
    k = 0
    while True:
        g = gamma[min(k, gamma.size - 1)]
        if 4.0**k / n >= g:
            return k
        k += 1


def gamma_sequence(family, k_max: int = 20, p: float = 2, q: float = 2) -> np.ndarray:
    """``gamma_k = max over the family of ||f - f_bar_k||^2_{1/2,p,q}`` for ``k = 0..k_max``."""
    family = list(family)
    if not family:
        raise ValueError("family must contain at least one density")
    tails = np.array([besov_tail_profile(f, 0.5, p, q, k_max) ** (2.0 / q) for f in family])
    return tails.max(axis=0)
