"""Scalar couplings between counts and Gaussians.

* the variance-stabilising root transform ``t(x) = 2 sgn(x) sqrt|x|``;
* ``F_m``, the CDF of ``Bin(m, 1/2) + U`` with ``U`` uniform on ``[-1/2, 1/2)``,
  and its inverse;
* the exact densities of ``t(X + U)`` for Poisson ``X`` and of
  ``Phi^{-1}(F_m(X + U))`` for binomial ``X``.

``F_m`` is symmetric about ``m/2``, so every composition with the normal
quantile is evaluated on the lower half and mirrored.  That keeps tail
accuracy in both directions and makes the coupling boundaries exactly
antisymmetric.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import special, stats

__all__ = [
    "SaturationWarning",
    "root_transform",
    "root_transform_inverse",
    "fm_cdf",
    "fm_quantile",
    "fm_to_normal",
    "normal_to_fm",
    "normal_cdf",
    "normal_pdf",
    "normal_interval",
    "normal_quantile",
    "Gaussian",
    "PoissonRootDensity",
    "BinomialCoupledDensity",
    "poisson_root_density",
    "binomial_coupled_density",
    "coupling_boundaries",
    "TusnadyBoundaryTable",
    "tusnady_boundaries",
]

QUANTILE_LOW = 1e-300
QUANTILE_HIGH = 1.0 - 1e-16
_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)


class SaturationWarning(RuntimeWarning):
    """A probability was clamped before the normal quantile was taken."""


# -- root transform --------------------------------------------------------------

def root_transform(x):
    """``t(x) = 2 sgn(x) sqrt|x|`` with ``sgn(0) = 0``."""
    x = np.asarray(x, dtype=float)
    out = 2.0 * np.sign(x) * np.sqrt(np.abs(x))
    return out[()] if out.ndim == 0 else out


def root_transform_inverse(y):
    """``t^{-1}(y) = sgn(y) y**2 / 4``."""
    y = np.asarray(y, dtype=float)
    out = np.sign(y) * y * y / 4.0
    return out[()] if out.ndim == 0 else out


# -- normal distribution -----------------------------------------------------------

def normal_cdf(z):
    out = special.ndtr(np.asarray(z, dtype=float))
    return out[()] if np.ndim(out) == 0 else out


def normal_interval(a, b):
    """``Phi(b) - Phi(a)`` for ``a <= b``, using upper-tail probabilities when ``a > 0``."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    out = np.where(a > 0, special.ndtr(-a) - special.ndtr(-b), special.ndtr(b) - special.ndtr(a))
    return out[()] if out.ndim == 0 else out


def normal_pdf(z):
    z = np.asarray(z, dtype=float)
    return _INV_SQRT_2PI * np.exp(-0.5 * z * z)


def _refined_ndtri(u):
    """Normal quantile with one Newton step against ``ndtr``; no clamping."""
    z = special.ndtri(u)
    finite = np.isfinite(z)
    if np.any(finite):
        zf = np.where(finite, z, 0.0)
        step = (special.ndtr(zf) - u) / normal_pdf(zf)
        z = np.where(finite & np.isfinite(step), zf - step, z)
    return z


def _normal_quantile_flagged(u):
    u = np.asarray(u, dtype=float)
    if np.any((u <= 0) | (u >= 1) | np.isnan(u)):
        raise ValueError("normal quantile needs u in (0, 1)")
    saturated = (u < QUANTILE_LOW) | (u > QUANTILE_HIGH)
    z = _refined_ndtri(np.clip(u, QUANTILE_LOW, QUANTILE_HIGH))
    return z, saturated


def normal_quantile(u):
    """``Phi^{-1}(u)`` for ``u`` in (0, 1).

    ``u`` is clamped to ``[1e-300, 1 - 1e-16]``; a :class:`SaturationWarning`
    is issued when that happens.
    """
    z, saturated = _normal_quantile_flagged(u)
    if np.any(saturated):
        warnings.warn(f"{int(np.sum(saturated))} probabilities clamped in normal_quantile", SaturationWarning, stacklevel=2)
    return z[()] if np.ndim(z) == 0 else z


# -- F_m ---------------------------------------------------------------------------

def _binom_half_cdf(j, m):
    """``P(Bin(m, 1/2) <= j)`` with 0 for ``j < 0``."""
    j = np.asarray(j, dtype=float)
    # stats.binom.cdf keeps ~1e-14 relative accuracy near the median for m up to 2**20,
    # where special.bdtr drifts to ~1e-9
    return np.where(j >= 0, stats.binom.cdf(np.maximum(j, 0), m, 0.5), 0.0)


def _binom_half_pmf(j, m):
    return stats.binom.pmf(j, m, 0.5)


def _fm_lower(m, x):
    """``F_m(x)`` evaluated directly; accurate (relative) for ``x <= m/2``."""
    m = np.asarray(m, dtype=float)
    x = np.asarray(x, dtype=float)
    j = np.floor(x + 0.5)
    inside = (j >= 0) & (j <= m)
    jc = np.clip(j, 0, np.maximum(m, 0))
    below = _binom_half_cdf(jc - 1, m)
    value = below + _binom_half_pmf(jc, m) * (x - jc + 0.5)
    value = np.where(inside, value, np.where(j < 0, 0.0, 1.0))
    return value


def fm_cdf(m, x):
    """``F_m(x) = P(Bin(m, 1/2) + U <= x)``; piecewise linear with knots at ``j +- 1/2``."""
    m = np.asarray(m, dtype=float)
    x = np.asarray(x, dtype=float)
    if np.any(m < 0):
        raise ValueError("m must be nonnegative")
    lower = x <= m / 2
    out = np.where(lower, _fm_lower(m, x), 1.0 - _fm_lower(m, m - x))
    out = np.where(x == m / 2, 0.5, out)
    return out[()] if out.ndim == 0 else out


def _fm_quantile_lower(m, u):
    """Inverse of ``F_m`` for ``u <= 1/2`` (vectorised over ``m`` and ``u``)."""
    m, u = np.broadcast_arrays(np.asarray(m, dtype=float), np.asarray(u, dtype=float))
    j = stats.binom.ppf(u, m, 0.5)
    j = np.nan_to_num(j, nan=0.0)
    for _ in range(4):
        below = _binom_half_cdf(j - 1, m)
        upper = _binom_half_cdf(j, m)
        down = (below > u) & (j > 0)
        up = (upper <= u) & (j < m)
        if not np.any(down | up):
            break
        j = j - down + up
    below = _binom_half_cdf(j - 1, m)
    mass = _binom_half_pmf(j, m)
    x = j - 0.5 + (u - below) / mass
    return np.clip(x, j - 0.5, j + 0.5)


def fm_quantile(m, u):
    """Inverse of :func:`fm_cdf` on (0, 1)."""
    m = np.asarray(m, dtype=float)
    u = np.asarray(u, dtype=float)
    if np.any((u <= 0) | (u >= 1) | np.isnan(u)):
        raise ValueError("fm_quantile needs u in (0, 1)")
    lower = u <= 0.5
    out = np.where(lower, _fm_quantile_lower(m, np.where(lower, u, 0.5)),
                   m - _fm_quantile_lower(m, np.where(lower, 0.5, 1.0 - u)))
    out = np.where(u == 0.5, m / 2, out)
    return out[()] if out.ndim == 0 else out


def fm_to_normal(m, x, *, return_saturation: bool = False):
    """``Phi^{-1}(F_m(x))`` evaluated on the lower half and mirrored (exactly odd about ``m/2``).

    Probabilities below ``1e-300`` are clamped; the boolean saturation mask is
    returned when ``return_saturation`` is set.
    """
    m = np.asarray(m, dtype=float)
    x = np.asarray(x, dtype=float)
    m, x = np.broadcast_arrays(m, x)
    upper = x > m / 2
    xs = np.where(upper, m - x, x)
    u = _fm_lower(m, xs)
    saturated = u < QUANTILE_LOW
    z = _refined_ndtri(np.clip(u, QUANTILE_LOW, 0.5))
    z = np.where(upper, -z, z)
    z = np.where(x == m / 2, 0.0, z)
    z = z[()] if z.ndim == 0 else z
    if return_saturation:
        return z, saturated
    return z


def normal_to_fm(m, z):
    """``F_m^{-1}(Phi(z))``, mirrored so that ``normal_to_fm(m, -z) = m - normal_to_fm(m, z)``."""
    m = np.asarray(m, dtype=float)
    z = np.asarray(z, dtype=float)
    m, z = np.broadcast_arrays(m, z)
    upper = z > 0
    u = special.ndtr(-np.abs(z))
    tiny = u <= 0
    x = _fm_quantile_lower(m, np.where(tiny, 0.25, u))
    x = np.where(tiny, -0.5, x)
    out = np.where(upper, m - x, x)
    return out[()] if out.ndim == 0 else out


@lru_cache(maxsize=4096)
def _boundaries_cached(m: int) -> np.ndarray:
    j = np.arange(m + 2, dtype=float)
    with np.errstate(divide="ignore"):
        half = j - 0.5
        upper = half > m / 2
        u = _fm_lower(float(m), np.where(upper, m - half, half))
        z = special.ndtri(u)
        finite = np.isfinite(z)
        z = np.where(finite, z, -np.inf)
        zf = np.where(finite, z, 0.0)
        step = np.where(finite, (special.ndtr(zf) - u) / normal_pdf(zf), 0.0)
        z = np.where(finite & np.isfinite(step), zf - step, z)
    z = np.where(upper, -z, z)
    z = np.where(half == m / 2, 0.0, z)
    z[0], z[-1] = -np.inf, np.inf
    z.setflags(write=False)
    return z


def coupling_boundaries(m: int) -> np.ndarray:
    """``z_j = Phi^{-1}(F_m(j - 1/2))`` for ``j = 0..m+1`` (so ``z_0 = -inf`` and ``z_{m+1} = inf``)."""
    if m < 0:
        raise ValueError("m must be nonnegative")
    return _boundaries_cached(int(m))


# -- densities ---------------------------------------------------------------------

@dataclass(frozen=True)
class Gaussian:
    """``N(mean, 1)`` density, usable wherever a coupling density is."""

    mean: float = 0.0
    kind: str = field(default="gaussian", init=False)

    @property
    def breakpoints(self) -> np.ndarray:
        return np.empty(0)

    def pdf(self, x):
        return normal_pdf(np.asarray(x, dtype=float) - self.mean)

    def cdf(self, x):
        return special.ndtr(np.asarray(x, dtype=float) - self.mean)

    def sf(self, x):
        return special.ndtr(self.mean - np.asarray(x, dtype=float))

    def support(self, eps: float = 1e-30) -> tuple[float, float]:
        half = -special.ndtri(eps / 2)
        return self.mean - half, self.mean + half


class PoissonRootDensity:
    """Density of ``2 sgn(X + U) sqrt|X + U|`` (or ``2 sqrt(X + U + 1/2)`` when shifted), ``X ~ Poisson(lam)``.

    On the image of ``[j - 1/2, j + 1/2)`` the density is ``P(X = j) |y| / 2``.
    """

    def __init__(self, lam: float, shifted: bool = False, eps: float = 1e-30):
        if not lam > 0:
            raise ValueError("lambda must be positive")
        self.lam = float(lam)
        self.shifted = bool(shifted)
        self.kind = "poisson-root-shifted" if shifted else "poisson-root"
        # the density vanishes like |y| at 0, so sqrt(density) has a square-root singularity there
        self.singular_points = (0.0,)
        j = np.arange(int(np.ceil(lam + 16.0 * np.sqrt(lam) + 80.0)), dtype=float)
        low = np.nonzero(special.pdtr(j, lam) < eps)[0]
        high = np.nonzero(special.pdtrc(j, lam) < eps)[0]
        self.j_lo = int(max(0, low[-1] - 1)) if low.size else 0
        self.j_hi = int(high[0] + 1)

    def _to_x(self, y):
        """Map back to the dithered count ``X + U`` (values below -1/2 carry no mass)."""
        y = np.asarray(y, dtype=float)
        if self.shifted:
            return np.where(y >= 0, y * y / 4.0 - 0.5, -1.0)
        return root_transform_inverse(y)

    def _from_x(self, x):
        x = np.asarray(x, dtype=float)
        if self.shifted:
            return 2.0 * np.sqrt(np.maximum(x + 0.5, 0.0))
        return root_transform(x)

    @property
    def breakpoints(self) -> np.ndarray:
        """Images of ``j +- 1/2`` for ``j`` in the window carrying all but ~1e-30 of the mass."""
        return self._from_x(np.arange(self.j_lo, self.j_hi + 2) - 0.5)

    def pdf(self, y):
        y = np.asarray(y, dtype=float)
        x = self._to_x(y)
        j = np.floor(x + 0.5)
        mass = np.where(j >= 0, stats.poisson.pmf(np.maximum(j, 0), self.lam), 0.0)
        return mass * np.abs(y) / 2.0

    def cdf(self, y):
        x = self._to_x(y)
        j = np.floor(x + 0.5)
        below = np.where(j >= 1, special.pdtr(np.maximum(j - 1, 0), self.lam), 0.0)
        mass = np.where(j >= 0, stats.poisson.pmf(np.maximum(j, 0), self.lam), 0.0)
        return np.where(j >= 0, below + mass * (x - j + 0.5), 0.0)

    def sf(self, y):
        x = self._to_x(y)
        j = np.floor(x + 0.5)
        above = np.where(j >= 0, special.pdtrc(np.maximum(j, 0), self.lam), 1.0)
        mass = np.where(j >= 0, stats.poisson.pmf(np.maximum(j, 0), self.lam), 0.0)
        return np.where(j >= 0, above + mass * (j + 0.5 - x), 1.0)

    def support(self, eps: float = 1e-30) -> tuple[float, float]:
        bp = self.breakpoints
        return float(bp[0]), float(bp[-1])

    def mean(self) -> float:
        """``E t(X + U)`` by exact summation over the window."""
        j = np.arange(self.j_lo, self.j_hi + 1, dtype=float)
        a, b = j - 0.5, j + 0.5
        if self.shifted:
            piece = (4.0 / 3.0) * ((b + 0.5) ** 1.5 - (a + 0.5) ** 1.5)
        else:
            # antiderivative of 2 sgn(x) sqrt|x| is (4/3)|x|**1.5
            piece = (4.0 / 3.0) * (np.abs(b) ** 1.5 - np.abs(a) ** 1.5)
        return float(np.sum(stats.poisson.pmf(j, self.lam) * piece))


class BinomialCoupledDensity:
    """Density of ``Phi^{-1}(F_m(X + U))`` with ``X ~ Bin(m, p)``.

    On ``[z_j, z_{j+1})`` it equals ``(2p)**j (2(1-p))**(m-j) phi(z)``.
    """

    def __init__(self, m: int, p: float):
        if m < 0:
            raise ValueError("m must be nonnegative")
        if not 0 < p < 1:
            raise ValueError("p must lie in (0, 1)")
        self.m, self.p = int(m), float(p)
        self.kind = "binomial-coupled"
        self.edges = coupling_boundaries(self.m)
        j = np.arange(self.m + 1)
        self.log_ratio = j * np.log1p(2 * p - 1) + (self.m - j) * np.log1p(1 - 2 * p)
        self.ratio = np.exp(self.log_ratio)

    @property
    def breakpoints(self) -> np.ndarray:
        e = self.edges[1:-1]
        return e[np.isfinite(e)]

    def piece_index(self, z):
        z = np.asarray(z, dtype=float)
        return np.clip(np.searchsorted(self.edges, z, side="right") - 1, 0, self.m)

    def pdf(self, z):
        z = np.asarray(z, dtype=float)
        return self.ratio[self.piece_index(z)] * normal_pdf(z)

    def piece_masses(self) -> np.ndarray:
        return self.ratio * normal_interval(self.edges[:-1], self.edges[1:])

    def cdf(self, z):
        z = np.asarray(z, dtype=float)
        j = self.piece_index(z)
        cum = np.concatenate([[0.0], np.cumsum(self.piece_masses())])
        return cum[j] + self.ratio[j] * normal_interval(self.edges[j], z)

    def sf(self, z):
        z = np.asarray(z, dtype=float)
        j = self.piece_index(z)
        masses = self.piece_masses()
        above = np.concatenate([np.cumsum(masses[::-1])[::-1], [0.0]])
        return above[j + 1] + self.ratio[j] * normal_interval(z, self.edges[j + 1])

    def support(self, eps: float = 1e-30) -> tuple[float, float]:
        # every piece is at most max(ratio) times a standard normal density
        scale = float(self.ratio.max())
        half = -special.ndtri(min(0.5, eps / (2 * scale)))
        return -half, half


def poisson_root_density(lam: float, shifted: bool = False) -> PoissonRootDensity:
    return PoissonRootDensity(lam, shifted)


def binomial_coupled_density(m: int, p: float) -> BinomialCoupledDensity:
    return BinomialCoupledDensity(m, p)


# -- Tusnady boundaries ------------------------------------------------------------

@dataclass(frozen=True)
class TusnadyBoundaryTable:
    """Rows ``(j, u_j, z_j)`` for ``j = 1..m``.

    ``u_j = 2(j - 1/2 - m/2)/sqrt(m)`` and ``z_j = Phi^{-1}(F_m(j - 1/2))``,
    the standardized normal boundary that matches binomial cell masses.
    """

    m: int
    j: np.ndarray
    u: np.ndarray
    z: np.ndarray

    def rows(self):
        return list(zip(self.j.tolist(), self.u.tolist(), self.z.tolist()))


def tusnady_boundaries(m: int) -> TusnadyBoundaryTable:
    if m < 1:
        raise ValueError("need m >= 1")
    j = np.arange(1, m + 1)
    u = 2.0 * (j - 0.5 - m / 2) / np.sqrt(m)
    z = np.array(coupling_boundaries(m)[1:-1])
    return TusnadyBoundaryTable(m, j, u, z)
