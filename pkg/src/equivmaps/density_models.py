"""Densities on [0, 1) with exact dyadic cell integrals.

Four families are supported: piecewise constant on a dyadic partition (the
uniform density and the single Haar bump are special cases), linear
``a + b x``, and real trigonometric polynomials given by their Fourier
coefficients.  Each model carries a certified lower bound ``eps0``.

Quantities involving ``sqrt(f)`` have no closed form for the smooth families;
they are computed with composite Gauss-Legendre rules on panels no wider
than 1/64, which for densities bounded away from zero is accurate to
round-off (checked against adaptive quadrature in the tests).
"""
from __future__ import annotations

from dataclasses import dataclass
import functools

import numpy as np

from .dyadic import DyadicIndex, _index

__all__ = [
    "InvalidDensityError",
    "DensityModel",
    "PiecewiseConstantDensity",
    "HaarBumpDensity",
    "LinearDensity",
    "FourierDensity",
    "PointProcessSample",
    "FixedSample",
    "make_density",
    "integrate_cell",
    "cell_mean",
    "sqrt_cell_mean",
    "split_probability",
    "split_probabilities",
    "sample_points",
    "class_norms",
]

NORMALIZATION_TOL = 1e-12
_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(24)
_PANEL_LEVEL = 6
_LAST_BELOW_ONE = np.nextafter(1.0, 0.0)


class InvalidDensityError(ValueError):
    """Raised when a density config violates a model invariant."""


def _cell_edges(k: int) -> tuple[np.ndarray, float]:
    w = 2.0**-k
    return np.arange(2**k) * w, w


def _gauss_cell_integrals(func, k: int, offset: float = 0.0, width: float | None = None) -> np.ndarray:
    """Integrate ``func`` over ``[x0 + offset, x0 + offset + width)`` for each level-k cell start x0.

    Each interval is split into enough panels that no panel exceeds
    ``2**-_PANEL_LEVEL``.
    """
    x0, w = _cell_edges(k)
    if width is None:
        width = w
    panels = max(1, int(np.ceil(width * 2**_PANEL_LEVEL)))
    pw = width / panels
    starts = (x0 + offset)[:, None] + pw * np.arange(panels)[None, :]
    nodes = starts[..., None] + 0.5 * pw * (_GL_NODES + 1.0)
    vals = func(nodes)
    return 0.5 * pw * np.einsum("cpn,n->c", vals, _GL_WEIGHTS)


def _level_cached(method):
    """Memoise a per-level array method on the (immutable) model instance."""

    @functools.wraps(method)
    def wrapper(self, k: int) -> np.ndarray:
        cache = self.__dict__.setdefault("_level_cache", {})
        key = (method.__name__, int(k))
        if key not in cache:
            arr = np.array(method(self, int(k)), dtype=float)
            arr.setflags(write=False)
            cache[key] = arr
        return cache[key]

    return wrapper


class DensityModel:
    """Base class: a density on [0, 1) with exact cell integrals and a lower bound ``eps0``."""

    family: str = "abstract"
    eps0: float

    # -- evaluation -------------------------------------------------------
    def pdf(self, x):
        raise NotImplementedError

    def cdf(self, x):
        raise NotImplementedError

    def inverse_cdf(self, u):
        raise NotImplementedError

    def sqrt_pdf(self, x):
        return np.sqrt(self.pdf(x))

    def integrate(self, a: float, b: float) -> float:
        return float(self.cdf(b) - self.cdf(a))

    # -- dyadic quantities --------------------------------------------------
    @_level_cached
    def cell_integrals(self, k: int) -> np.ndarray:
        """``int_{I_{k,l}} f`` for every cell at level ``k``."""
        if k < 0:
            raise ValueError("level must be nonnegative")
        return self._cell_integrals(k)

    def _cell_integrals(self, k: int) -> np.ndarray:
        raise NotImplementedError

    def cell_means(self, k: int) -> np.ndarray:
        """``f_{k,l} = 2**k int_{I_{k,l}} f``."""
        return self.cell_integrals(k) * 2.0**k

    @_level_cached
    def sqrt_cell_means(self, k: int) -> np.ndarray:
        """``h_{k,l} = 2**k int_{I_{k,l}} sqrt(f)``."""
        if k < 0:
            raise ValueError("level must be nonnegative")
        return self._sqrt_cell_means(k)

    def _sqrt_cell_means(self, k: int) -> np.ndarray:
        return _gauss_cell_integrals(self.sqrt_pdf, k) * 2.0**k

    def centered_sq_integrals(self, k: int) -> np.ndarray:
        """``int_{I_{k,l}} (f - f_{k,l})**2`` for every cell at level ``k``."""
        means = self.cell_means(k)
        x0, w = _cell_edges(k)
        idx = np.arange(2**k)

        def integrand(x):
            cell_of = idx.reshape((-1,) + (1,) * (x.ndim - 1))
            return (self.pdf(x) - means[cell_of]) ** 2

        return _gauss_cell_integrals(integrand, k)

    def sqrt_haar_coefficients(self, k: int) -> np.ndarray:
        """``int sqrt(f) phi_{k,l}`` computed without subtractive cancellation."""
        half = 2.0 ** -(k + 1)

        def diff(x):
            return self.sqrt_pdf(x) - self.sqrt_pdf(x + half)

        return 2.0 ** (k / 2) * _gauss_cell_integrals(diff, k, width=half)

    def split_probabilities(self, k: int) -> np.ndarray:
        """``p_{k,2l}`` for every parent cell ``l`` at level ``k - 1``."""
        if k < 1:
            raise ValueError("split probabilities need k >= 1")
        c = self.cell_integrals(k)
        return c[0::2] / (c[0::2] + c[1::2])

    # -- global quantities ----------------------------------------------------
    def l2_sq(self) -> float:
        """``int_0^1 f**2``."""
        raise NotImplementedError

    def bias_sq(self, k: int) -> float:
        """``int (f - f_bar_k)**2`` from ``int f**2`` and the cell means."""
        return float(self.l2_sq() - np.sum(self.cell_means(k) ** 2) * 2.0**-k)

    def fourier_coefficient(self, n: int) -> complex:
        raise NotImplementedError

    def lipschitz_norm(self, beta: float) -> float:
        raise NotImplementedError

    def minimum(self) -> float:
        raise NotImplementedError

    def sample(self, count: int, rng: np.random.Generator) -> np.ndarray:
        """``count`` sorted i.i.d. draws by inverse CDF of ``count`` uniforms from ``rng``."""
        if count < 0:
            raise ValueError("count must be nonnegative")
        u = rng.random(count)
        return np.sort(self.inverse_cdf(u))

    def to_spec(self) -> dict:
        raise NotImplementedError

    def __repr__(self):
        return f"{type(self).__name__}({self.to_spec()})"


class PiecewiseConstantDensity(DensityModel):
    family = "piecewise-constant"

    def __init__(self, values, eps0: float):
        values = np.asarray(values, dtype=float)
        level = int(np.log2(values.size)) if values.size else -1
        if values.ndim != 1 or values.size == 0 or 2**level != values.size:
            raise InvalidDensityError("piecewise-constant values must have length 2**level")
        if np.any(values < 0):
            raise InvalidDensityError("negative density value")
        if abs(values.mean() - 1.0) > NORMALIZATION_TOL:
            raise InvalidDensityError(f"density integrates to {values.mean()!r}, not 1")
        if values.min() < eps0 or eps0 <= 0:
            raise InvalidDensityError(f"min f = {values.min()!r} is below eps0 = {eps0!r}")
        self.values = values
        self.level = level
        self.eps0 = float(eps0)
        self._cum = np.concatenate([[0.0], np.cumsum(values) * 2.0**-level])

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        idx = np.clip(np.floor(x * 2**self.level).astype(np.int64), 0, self.values.size - 1)
        return self.values[idx]

    def cdf(self, x):
        x = np.clip(np.asarray(x, dtype=float), 0.0, 1.0)
        idx = np.clip(np.floor(x * 2**self.level).astype(np.int64), 0, self.values.size - 1)
        return self._cum[idx] + self.values[idx] * (x - idx * 2.0**-self.level)

    def inverse_cdf(self, u):
        u = np.asarray(u, dtype=float)
        idx = np.clip(np.searchsorted(self._cum, u, side="right") - 1, 0, self.values.size - 1)
        w = 2.0**-self.level
        x = idx * w + (u - self._cum[idx]) / self.values[idx]
        return np.minimum(np.clip(x, idx * w, (idx + 1) * w), _LAST_BELOW_ONE)

    def _cell_integrals(self, k: int) -> np.ndarray:
        if k <= self.level:
            return self.values.reshape(2**k, -1).sum(axis=1) * 2.0**-self.level
        return np.repeat(self.values, 2 ** (k - self.level)) * 2.0**-k

    def _sqrt_cell_means(self, k: int) -> np.ndarray:
        root = np.sqrt(self.values)
        if k <= self.level:
            return root.reshape(2**k, -1).mean(axis=1)
        return np.repeat(root, 2 ** (k - self.level))

    def centered_sq_integrals(self, k: int) -> np.ndarray:
        if k >= self.level:
            return np.zeros(2**k)
        v = self.values.reshape(2**k, -1)
        return ((v - v.mean(axis=1, keepdims=True)) ** 2).sum(axis=1) * 2.0**-self.level

    def sqrt_haar_coefficients(self, k: int) -> np.ndarray:
        h = self.sqrt_cell_means(k + 1)
        return 2.0 ** (k / 2) * (h[0::2] - h[1::2]) * 2.0 ** -(k + 1)

    def haar_level_power_sum(self, k: int, p: float):
        if k >= self.level:
            return 0.0
        return None

    def l2_sq(self) -> float:
        return float(np.mean(self.values**2))

    def fourier_coefficient(self, n: int) -> complex:
        if n == 0:
            return complex(self.values.mean())
        if n % 2**self.level == 0:
            # every cell spans whole periods
            return 0j
        x0, w = _cell_edges(self.level)
        phase = np.exp(-1j * np.pi * n * (2 * x0 + w))
        return complex(np.sum(self.values * phase) * np.sin(np.pi * n * w) / (np.pi * n))

    def lipschitz_norm(self, beta: float) -> float:
        return 0.0 if np.all(self.values == self.values[0]) else float("inf")

    def minimum(self) -> float:
        return float(self.values.min())

    def to_spec(self) -> dict:
        if self.level == 0:
            return {"family": "uniform", "params": {}, "eps0": self.eps0}
        return {"family": self.family, "params": {"values": self.values.tolist()}, "eps0": self.eps0}


class HaarBumpDensity(PiecewiseConstantDensity):
    """``f = 1 + amplitude * phi_{k*, l*}``."""

    family = "haar-bump"

    def __init__(self, k_star: int, l_star: int, amplitude: float, eps0: float):
        idx = DyadicIndex(int(k_star), int(l_star)).validate()
        height = abs(amplitude) * 2.0 ** (idx.k / 2)
        if height >= 1.0:
            raise InvalidDensityError("bump amplitude makes the density nonpositive")
        values = np.ones(2 ** (idx.k + 1))
        values[2 * idx.l] += amplitude * 2.0 ** (idx.k / 2)
        values[2 * idx.l + 1] -= amplitude * 2.0 ** (idx.k / 2)
        super().__init__(values, eps0)
        self.k_star, self.l_star, self.amplitude = idx.k, idx.l, float(amplitude)

    def to_spec(self) -> dict:
        return {
            "family": self.family,
            "params": {"k": self.k_star, "l": self.l_star, "amplitude": self.amplitude},
            "eps0": self.eps0,
        }


class LinearDensity(DensityModel):
    """``f(x) = a + b x`` on [0, 1)."""

    family = "linear"

    def __init__(self, a: float, b: float, eps0: float):
        a, b = float(a), float(b)
        if abs(a + b / 2 - 1.0) > NORMALIZATION_TOL:
            raise InvalidDensityError(f"a + b/2 = {a + b / 2!r}, density not normalized")
        low = min(a, a + b)
        if low < 0:
            raise InvalidDensityError("negative density")
        if eps0 <= 0 or low < eps0:
            raise InvalidDensityError(f"min f = {low!r} is below eps0 = {eps0!r}")
        self.a, self.b, self.eps0 = a, b, float(eps0)

    def pdf(self, x):
        return self.a + self.b * np.asarray(x, dtype=float)

    def cdf(self, x):
        x = np.clip(np.asarray(x, dtype=float), 0.0, 1.0)
        return x * (self.a + 0.5 * self.b * x)

    def integrate(self, a: float, b: float) -> float:
        return float((b - a) * (self.a + 0.5 * self.b * (a + b)))

    def inverse_cdf(self, u):
        u = np.asarray(u, dtype=float)
        x = 2.0 * u / (self.a + np.sqrt(self.a**2 + 2.0 * self.b * u))
        return np.minimum(x, _LAST_BELOW_ONE)

    def _cell_integrals(self, k: int) -> np.ndarray:
        x0, w = _cell_edges(k)
        return w * (self.a + 0.5 * self.b * (2 * x0 + w))

    def centered_sq_integrals(self, k: int) -> np.ndarray:
        return np.full(2**k, self.b**2 * 2.0 ** (-3 * k) / 12.0)

    def haar_level_power_sum(self, k: int, p: float):
        # every coefficient at level k equals -b * 2**(-3k/2 - 2)
        return 2.0**k * (abs(self.b) * 2.0 ** (-1.5 * k - 2)) ** p

    def l2_sq(self) -> float:
        return self.a**2 + self.a * self.b + self.b**2 / 3.0

    def fourier_coefficient(self, n: int) -> complex:
        if n == 0:
            return complex(self.a + self.b / 2)
        return 1j * self.b / (2 * np.pi * n)

    def lipschitz_norm(self, beta: float) -> float:
        return abs(self.b)

    def minimum(self) -> float:
        return min(self.a, self.a + self.b)

    def to_spec(self) -> dict:
        return {"family": self.family, "params": {"a": self.a, "b": self.b}, "eps0": self.eps0}


class FourierDensity(DensityModel):
    """Real trigonometric polynomial ``sum_{|n|<=N} c_n exp(2 pi i n x)`` with ``c_{-n} = conj(c_n)``.

    ``coefficients[n]`` holds ``c_n`` for ``n = 0..N``; ``c_0`` must be 1.
    """

    family = "fourier"
    MIN_GRID_LEVEL = 16

    def __init__(self, coefficients, eps0: float):
        c = np.asarray(coefficients, dtype=complex)
        if c.ndim != 1 or c.size == 0:
            raise InvalidDensityError("need at least c_0")
        if abs(c[0].imag) > 0:
            raise InvalidDensityError("c_0 must be real for a real density")
        if abs(c[0].real - 1.0) > NORMALIZATION_TOL:
            raise InvalidDensityError(f"c_0 = {c[0].real!r}, density not normalized")
        self.coefficients = c
        self.n = np.arange(c.size)
        low = self.certified_minimum()
        if low < 0 and self._grid_min() < 0:
            raise InvalidDensityError("negative density")
        if eps0 <= 0 or low < eps0:
            raise InvalidDensityError(f"certified min f = {low!r} is below eps0 = {eps0!r}")
        self.eps0 = float(eps0)

    def _series(self, x, weights):
        x = np.asarray(x, dtype=float)
        out = np.full(x.shape, weights[0].real)
        for n in range(1, weights.size):
            if weights[n] != 0:
                out = out + 2.0 * np.real(weights[n] * np.exp(2j * np.pi * n * x))
        return out

    def pdf(self, x):
        return self._series(x, self.coefficients)

    def derivative(self, x, order: int = 1):
        w = self.coefficients * (2j * np.pi * self.n) ** order
        w[0] = 0.0
        return self._series(x, w)

    def _derivative_bound(self, order: int) -> float:
        return float(np.sum(2.0 * (2 * np.pi * self.n[1:]) ** order * np.abs(self.coefficients[1:])))

    def _grid_min(self) -> float:
        return float(self.pdf(np.arange(2**self.MIN_GRID_LEVEL) * 2.0**-self.MIN_GRID_LEVEL).min())

    def certified_minimum(self) -> float:
        """Grid minimum on 2**16 points minus the worst-case dip between grid points."""
        h = 2.0**-self.MIN_GRID_LEVEL
        return self._grid_min() - self._derivative_bound(1) * h / 2

    def minimum(self) -> float:
        return self.certified_minimum()

    def cdf(self, x):
        x = np.clip(np.asarray(x, dtype=float), 0.0, 1.0)
        out = x * self.coefficients[0].real
        for n in range(1, self.coefficients.size):
            c = self.coefficients[n]
            if c != 0:
                # int_0^x exp(2 pi i n t) dt = exp(i pi n x) sin(pi n x) / (pi n)
                out = out + 2.0 * np.real(c * np.exp(1j * np.pi * n * x)) * np.sin(np.pi * n * x) / (np.pi * n)
        return out

    def integrate(self, a: float, b: float) -> float:
        out = (b - a) * self.coefficients[0].real
        for n in range(1, self.coefficients.size):
            c = self.coefficients[n]
            if c != 0:
                out += 2.0 * np.real(c * np.exp(1j * np.pi * n * (a + b))) * np.sin(np.pi * n * (b - a)) / (np.pi * n)
        return float(out)

    def _cell_integrals(self, k: int) -> np.ndarray:
        x0, w = _cell_edges(k)
        out = np.full(x0.shape, w * self.coefficients[0].real)
        for n in range(1, self.coefficients.size):
            c = self.coefficients[n]
            if c != 0:
                out += 2.0 * np.real(c * np.exp(1j * np.pi * n * (2 * x0 + w))) * np.sin(np.pi * n * w) / (np.pi * n)
        return out

    def inverse_cdf(self, u, tol: float = 1e-12):
        u = np.asarray(u, dtype=float)
        lo = np.zeros_like(u)
        hi = np.ones_like(u)
        for _ in range(48):
            mid = 0.5 * (lo + hi)
            below = self.cdf(mid) <= u
            lo = np.where(below, mid, lo)
            hi = np.where(below, hi, mid)
        x = 0.5 * (lo + hi)
        for _ in range(2):
            x = np.clip(x - (self.cdf(x) - u) / self.pdf(x), lo, hi)
        resid = np.abs(self.cdf(x) - u)
        if resid.size and resid.max() > tol:
            raise RuntimeError(f"inverse CDF did not converge (residual {resid.max():.3g})")
        return np.minimum(x, _LAST_BELOW_ONE)

    def l2_sq(self) -> float:
        return float(self.coefficients[0].real ** 2 + 2.0 * np.sum(np.abs(self.coefficients[1:]) ** 2))

    def fourier_coefficient(self, n: int) -> complex:
        n_abs = abs(n)
        if n_abs >= self.coefficients.size:
            return 0j
        c = self.coefficients[n_abs]
        return complex(c if n >= 0 else np.conj(c))

    def lipschitz_norm(self, beta: float) -> float:
        if beta == 1.0:
            h = 2.0**-self.MIN_GRID_LEVEL
            grid = np.arange(2**self.MIN_GRID_LEVEL) * h
            return float(np.abs(self.derivative(grid)).max() + self._derivative_bound(2) * h / 2)
        # periodic function: sup over lags d of max_x |f(x + d) - f(x)| / d**beta
        x = np.arange(2**12) * 2.0**-12
        best = 0.0
        for d in np.geomspace(2.0**-16, 0.5, 200):
            best = max(best, float(np.abs(self.pdf(x + d) - self.pdf(x)).max() / d**beta))
        return best

    def to_spec(self) -> dict:
        coeffs = [[float(c.real), float(c.imag)] for c in self.coefficients]
        return {"family": self.family, "params": {"coefficients": coeffs}, "eps0": self.eps0}


@dataclass(frozen=True)
class PointProcessSample:
    """A Poisson-process realization: ``count`` sorted points in [0, 1)."""

    points: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim != 1:
            raise ValueError("points must be one-dimensional")
        if pts.size and (pts.min() < 0 or pts.max() >= 1):
            raise ValueError("points must lie in [0, 1)")
        if np.any(np.diff(pts) < 0):
            pts = np.sort(pts)
        object.__setattr__(self, "points", pts)

    @property
    def count(self) -> int:
        return int(self.points.size)


@dataclass(frozen=True)
class FixedSample:
    """``n`` i.i.d. observations, kept in draw order."""

    points: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim != 1 or pts.size == 0:
            raise ValueError("a fixed sample needs n >= 1 points")
        if pts.min() < 0 or pts.max() >= 1:
            raise ValueError("points must lie in [0, 1)")
        object.__setattr__(self, "points", pts)

    @property
    def n(self) -> int:
        return int(self.points.size)


def _parse_fourier_coefficients(raw) -> np.ndarray:
    if isinstance(raw, dict):
        n_max = max(int(k) for k in raw)
        out = np.zeros(n_max + 1, dtype=complex)
        for key, value in raw.items():
            n = int(key)
            value = complex(*value) if isinstance(value, (list, tuple)) else complex(value)
            if n < 0:
                n, value = -n, np.conj(value)
                if out[n] != 0 and not np.isclose(out[n], value):
                    raise InvalidDensityError(f"coefficients for n=+-{n} are not conjugate")
            out[n] = value
        return out
    return np.array([complex(*c) if isinstance(c, (list, tuple)) else complex(c) for c in raw])


def make_density(spec: dict) -> DensityModel:
    """Build and validate a density from ``{"family": ..., "params": ..., "eps0": ...}``.

    Families: ``uniform``, ``piecewise-constant`` (``values``), ``linear``
    (``a``, ``b``), ``fourier`` (``coefficients`` as a list for n = 0..N, or a
    mapping from n to value; complex values as ``[re, im]``) and ``haar-bump``
    (``k``, ``l``, ``amplitude``).
    """
    try:
        family = spec["family"]
        params = spec.get("params", {}) or {}
        eps0 = float(spec["eps0"])
    except (KeyError, TypeError) as exc:
        raise InvalidDensityError(f"malformed density spec: {spec!r}") from exc
    if family == "uniform":
        return PiecewiseConstantDensity([1.0], eps0)
    if family == "piecewise-constant":
        return PiecewiseConstantDensity(params["values"], eps0)
    if family == "linear":
        return LinearDensity(params["a"], params["b"], eps0)
    if family == "fourier":
        return FourierDensity(_parse_fourier_coefficients(params["coefficients"]), eps0)
    if family == "haar-bump":
        return HaarBumpDensity(params["k"], params["l"], params["amplitude"], eps0)
    raise InvalidDensityError(f"unknown density family {family!r}")


# -- single-cell conveniences ---------------------------------------------------

def integrate_cell(f: DensityModel, index) -> float:
    idx = _index(index)
    return float(f.cell_integrals(idx.k)[idx.l])


def cell_mean(f: DensityModel, index) -> float:
    return integrate_cell(f, index) * 2.0 ** _index(index).k


def sqrt_cell_mean(f: DensityModel, index) -> float:
    idx = _index(index)
    return float(f.sqrt_cell_means(idx.k)[idx.l])


def split_probability(f: DensityModel, parent) -> float:
    """``p_{k,2l}``: the probability that a point in parent ``I_{k-1,l}`` falls in its left child."""
    idx = _index(parent)
    return float(f.split_probabilities(idx.k + 1)[idx.l])


def split_probabilities(f: DensityModel, k: int) -> np.ndarray:
    return f.split_probabilities(k)


def sample_points(f: DensityModel, count: int, rng: np.random.Generator) -> np.ndarray:
    return f.sample(count, rng)


def class_norms(f: DensityModel, beta: float, alpha: float, n_max: int = 64) -> dict:
    """Lipschitz norm of index ``beta`` and Sobolev norm of index ``alpha`` truncated at ``n_max``."""
    if not 0 < beta <= 1:
        raise ValueError("need 0 < beta <= 1")
    if alpha <= 0:
        raise ValueError("need alpha > 0")
    n = np.arange(1, n_max + 1)
    c = np.array([abs(f.fourier_coefficient(int(k))) ** 2 for k in n])
    return {"lipschitz": f.lipschitz_norm(beta), "sobolev": float(2.0 * np.sum(n ** (2 * alpha) * c))}
