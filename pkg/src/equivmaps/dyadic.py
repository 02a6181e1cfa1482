"""Dyadic cells, the Haar system on [0, 1), piecewise averages and Besov norms.

Everything here works from exact per-cell integrals supplied by a density
model (see :mod:`equivmaps.density_models`), never from sampled function
values.  Level-``k`` quantities are returned as numpy arrays indexed by the
position ``l``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

__all__ = [
    "DyadicIndex",
    "StepFunction",
    "HaarCoefficientTable",
    "MAX_ENUMERATED_LEVEL",
    "cell",
    "haar_eval",
    "haar_coefficient",
    "haar_coefficients",
    "haar_table",
    "piecewise_average",
    "level_power_sum",
    "besov_tail_norm",
    "besov_norm",
    "besov_tail_profile",
]

#: Levels above this are never enumerated cell by cell (2**22 cells).
MAX_ENUMERATED_LEVEL = 22

_SUPPORTED_PQ = {(2.0, 2.0), (4.0, 4.0)}


class DyadicIndex(NamedTuple):
    """Index ``(k, l)`` of the dyadic cell ``[l/2**k, (l+1)/2**k)``."""

    k: int
    l: int

    def validate(self) -> "DyadicIndex":
        if self.k < 0 or not 0 <= self.l < 2**self.k:
            raise ValueError(f"invalid dyadic index (k={self.k}, l={self.l})")
        return self

    @property
    def children(self) -> tuple["DyadicIndex", "DyadicIndex"]:
        return DyadicIndex(self.k + 1, 2 * self.l), DyadicIndex(self.k + 1, 2 * self.l + 1)


def _index(k, l=None) -> DyadicIndex:
    if l is None:
        k, l = k
    return DyadicIndex(int(k), int(l)).validate()


def cell(k, l=None) -> tuple[float, float]:
    """Return the half-open cell ``I_{k,l}`` as ``(left, right)``.

    Accepts either ``cell(k, l)`` or ``cell(DyadicIndex(k, l))``.
    """
    idx = _index(k, l)
    w = 2.0 ** -idx.k
    return idx.l * w, (idx.l + 1) * w


def haar_eval(index, x):
    """Evaluate the Haar function ``phi_{k,l}`` at ``x`` (scalar or array).

    ``phi_{k,l} = 2**(k/2)`` on the left half of ``I_{k,l}``, ``-2**(k/2)`` on
    the right half and 0 elsewhere.
    """
    idx = _index(index)
    x = np.asarray(x, dtype=float)
    scaled = x * 2.0 ** (idx.k + 1) - 2 * idx.l
    amp = 2.0 ** (idx.k / 2)
    out = np.where((scaled >= 0) & (scaled < 1), amp, 0.0)
    out = np.where((scaled >= 1) & (scaled < 2), -amp, out)
    return out[()] if out.ndim == 0 else out


def haar_coefficients(f, k: int) -> np.ndarray:
    """All ``2**k`` Haar coefficients ``theta_{k,l} = int f phi_{k,l}`` at level ``k``."""
    if k < 0:
        raise ValueError("level must be nonnegative")
    halves = f.cell_integrals(k + 1)
    return 2.0 ** (k / 2) * (halves[0::2] - halves[1::2])


def haar_coefficient(f, index) -> float:
    idx = _index(index)
    a, b = cell(idx)
    mid = 0.5 * (a + b)
    return float(2.0 ** (idx.k / 2) * (f.integrate(a, mid) - f.integrate(mid, b)))


@dataclass(frozen=True)
class HaarCoefficientTable:
    k_min: int
    k_max: int
    levels: dict

    def __getitem__(self, index) -> float:
        idx = _index(index)
        if not self.k_min <= idx.k <= self.k_max:
            raise KeyError(idx)
        return float(self.levels[idx.k][idx.l])

    def items(self):
        for k in range(self.k_min, self.k_max + 1):
            for l, v in enumerate(self.levels[k]):
                yield DyadicIndex(k, l), float(v)


def haar_table(f, k_min: int, k_max: int) -> HaarCoefficientTable:
    if not 0 <= k_min <= k_max:
        raise ValueError("need 0 <= k_min <= k_max")
    return HaarCoefficientTable(k_min, k_max, {k: haar_coefficients(f, k) for k in range(k_min, k_max + 1)})


@dataclass(frozen=True)
class StepFunction:
    """Piecewise constant function on the level-``level`` dyadic partition."""

    level: int
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.shape != (2**self.level,):
            raise ValueError(f"expected {2**self.level} values, got shape {values.shape}")
        object.__setattr__(self, "values", values)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        idx = np.clip(np.floor(x * 2**self.level).astype(np.int64), 0, 2**self.level - 1)
        return self.values[idx]

    def integral(self) -> float:
        return float(np.mean(self.values))

    def refine(self, level: int) -> "StepFunction":
        if level < self.level:
            raise ValueError("can only refine to a finer level")
        return StepFunction(level, np.repeat(self.values, 2 ** (level - self.level)))

    def lp_distance(self, other: "StepFunction", p: float) -> float:
        """``||self - other||_p`` on [0, 1)."""
        level = max(self.level, other.level)
        d = self.refine(level).values - other.refine(level).values
        return float(np.mean(np.abs(d) ** p) ** (1.0 / p))


def piecewise_average(f, k: int) -> StepFunction:
    """The step function ``f_bar_k`` whose value on ``I_{k,l}`` is ``2**k * int_{I_{k,l}} f``."""
    if k < 0:
        raise ValueError("level must be nonnegative")
    return StepFunction(k, f.cell_means(k))


def level_power_sum(f, k: int, p: float) -> float:
    """``sum_l |theta_{k,l}|**p``, using a closed form when the model offers one."""
    closed = getattr(f, "haar_level_power_sum", None)
    if closed is not None:
        value = closed(k, p)
        if value is not None:
            return float(value)
    if k > MAX_ENUMERATED_LEVEL:
        raise ValueError(
            f"level {k} exceeds the enumeration cap {MAX_ENUMERATED_LEVEL} and "
            f"{type(f).__name__} has no closed-form level sums"
        )
    theta = haar_coefficients(f, k)
    return float(np.sum(np.abs(theta) ** p))


def _check_pq(p, q):
    if (float(p), float(q)) not in _SUPPORTED_PQ:
        raise ValueError(f"unsupported Besov shape parameters (p={p}, q={q}); use (2, 2) or (4, 4)")


def _tail_power(f, alpha, p, q, k0, k_max) -> float:
    total = 0.0
    for k in range(k0, k_max + 1):
        s = level_power_sum(f, k, p)
        total += (2.0 ** (k * (alpha + 0.5 - 1.0 / p)) * s ** (1.0 / p)) ** q
    return total


def besov_tail_norm(f, alpha: float, p: float, q: float, k0: int, k_max: int = 20) -> float:
    """Tail ``||f - f_bar_{k0}||_{alpha,p,q}`` with the level sum truncated at ``k_max``.

    Only ``(p, q)`` in ``{(2, 2), (4, 4)}`` are supported.
    """
    _check_pq(p, q)
    if k0 < 0 or k_max < k0:
        raise ValueError("need 0 <= k0 <= k_max")
    return _tail_power(f, alpha, p, q, k0, k_max) ** (1.0 / q)


def besov_norm(f, alpha: float, p: float, q: float, k_max: int = 20) -> float:
    """Full Besov norm: the ``|int f|**q`` term plus the tail from level 0."""
    _check_pq(p, q)
    mass = abs(f.integrate(0.0, 1.0))
    return (mass**q + _tail_power(f, alpha, p, q, 0, k_max)) ** (1.0 / q)


def besov_tail_profile(f, alpha: float, p: float, q: float, k_max: int = 20) -> np.ndarray:
    """``besov_tail_norm(f, alpha, p, q, k0, k_max)**q`` for every ``k0`` in ``0..k_max``.

    Each level sum is computed once; the tails are suffix sums.
    """
    _check_pq(p, q)
    if k_max < 0:
        raise ValueError("k_max must be nonnegative")
    terms = np.array([
        (2.0 ** (k * (alpha + 0.5 - 1.0 / p)) * level_power_sum(f, k, p) ** (1.0 / p)) ** q
        for k in range(k_max + 1)
    ])
    return np.cumsum(terms[::-1])[::-1]
