"""Grid norms for vector-valued functions and Monte-Carlo KL estimation."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import DimensionError, MomoleError, NonFiniteError, NonPositiveDensityError
from .mole import MoleModel, log_conditional_density, marginal_model

DEFAULT_POINTS = {1: 201, 2: 101, 3: 41}


@dataclass(frozen=True, eq=False)
class GridDomain:
    """Tensor grid over the box ``[lower, upper]`` in at most three dimensions."""

    lower: np.ndarray
    upper: np.ndarray
    points_per_axis: tuple

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lower, dtype=float))
        hi = np.atleast_1d(np.asarray(self.upper, dtype=float))
        pts = np.atleast_1d(np.asarray(self.points_per_axis)).astype(int)
        if lo.ndim != 1 or lo.shape != hi.shape:
            raise DimensionError("lower and upper must be vectors of equal length")
        if pts.shape == (1,) and lo.shape[0] > 1:
            pts = np.repeat(pts, lo.shape[0])
        if pts.shape != lo.shape:
            raise DimensionError("need one point count per axis")
        if lo.shape[0] > 3:
            raise DimensionError(f"tensor grids support p <= 3, got p={lo.shape[0]}")
        if not np.all(lo < hi):
            raise MomoleError("grid requires lower < upper on every axis")
        if np.any(pts < 1):
            raise MomoleError("points per axis must be positive")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)
        object.__setattr__(self, "points_per_axis", tuple(int(k) for k in pts))

    @classmethod
    def default(cls, lower, upper) -> "GridDomain":
        lo = np.atleast_1d(np.asarray(lower, dtype=float))
        if lo.shape[0] not in DEFAULT_POINTS:
            raise DimensionError(f"tensor grids support p <= 3, got p={lo.shape[0]}")
        return cls(lo, upper, (DEFAULT_POINTS[lo.shape[0]],) * lo.shape[0])

    @property
    def p(self) -> int:
        return self.lower.shape[0]

    @property
    def size(self) -> int:
        return int(np.prod(self.points_per_axis))

    def points(self) -> np.ndarray:
        """All grid points, shape (size, p), last axis varying fastest."""
        axes = [np.linspace(lo, hi, k) for lo, hi, k in zip(self.lower, self.upper, self.points_per_axis)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)


def _evaluate(fn, grid: GridDomain) -> np.ndarray:
    vals = np.asarray(fn(grid.points()), dtype=float)
    if vals.ndim == 1:
        vals = vals[:, None]
    if vals.shape[0] != grid.size:
        raise DimensionError(f"function returned {vals.shape[0]} rows for {grid.size} grid points")
    if not np.all(np.isfinite(vals)):
        raise NonFiniteError("function returned non-finite values on the grid")
    return vals


def uniform_norm(fn: Callable, grid: GridDomain) -> float:
    """``max |fn(x)|`` over the grid, a lower bound on the sup norm.

    ``fn`` maps an (M, p) array of points to M values.
    """
    vals = _evaluate(fn, grid)
    if vals.shape[1] != 1:
        raise DimensionError("uniform_norm expects a scalar function; use induced_norm")
    return float(np.max(np.abs(vals)))


def coordinate_norms(fn: Callable, grid: GridDomain) -> np.ndarray:
    """Per-coordinate grid sup norms of a vector function, shape (q,)."""
    return np.max(np.abs(_evaluate(fn, grid)), axis=0)


def induced_norm(fn: Callable, grid: GridDomain) -> float:
    """Sum over output coordinates of the per-coordinate grid sup norms."""
    return float(np.sum(coordinate_norms(fn, grid)))


def induced_distance(u: Callable, v: Callable, grid: GridDomain) -> float:
    """``induced_norm(u - v)``."""
    return induced_norm(lambda x: _as_2d(u(x)) - _as_2d(v(x)), grid)


def coordinate_distances(u: Callable, v: Callable, grid: GridDomain) -> np.ndarray:
    """Per-coordinate grid uniform distances between two vector functions."""
    return coordinate_norms(lambda x: _as_2d(u(x)) - _as_2d(v(x)), grid)


def _as_2d(vals):
    vals = np.asarray(vals, dtype=float)
    return vals[:, None] if vals.ndim == 1 else vals


@dataclass(frozen=True)
class DivergenceEstimate:
    """Monte-Carlo mean of ``log g - log f`` with its standard error (nats)."""

    value: float
    standard_error: float
    sample_count: int


def _log_density_fn(density) -> Callable:
    if isinstance(density, MoleModel):
        return lambda y, x: log_conditional_density(density, y, x)
    return density


def kl_divergence_mc(
    sampler: Callable,
    log_g,
    f,
    n_samples: int,
    rng: np.random.Generator,
) -> DivergenceEstimate:
    """Estimate ``∫ log(g(y|x) / f(y|x)) dG(x, y)`` from draws of G.

    Parameters
    ----------
    sampler : callable
        ``sampler(rng, n) -> (X, Y)`` with shapes (n, p) and (n, q).
    log_g, f : MoleModel or callable
        Target and candidate; callables map ``(Y, X)`` to log densities.
    n_samples : int
    rng : numpy.random.Generator

    Raises
    ------
    NonPositiveDensityError
        Either density is zero (log is -inf) or non-finite at some draw.
    """
    if n_samples < 2:
        raise MomoleError("need at least two samples for a standard error")
    X, Y = sampler(rng, n_samples)
    lg = np.asarray(_log_density_fn(log_g)(Y, X), dtype=float)
    lf = np.asarray(_log_density_fn(f)(Y, X), dtype=float)
    if not np.all(np.isfinite(lg)):
        raise NonPositiveDensityError("target density is not positive at every sample")
    if not np.all(np.isfinite(lf)):
        raise NonPositiveDensityError("candidate density is not positive at every sample")
    ratio = lg - lf
    se = float(np.std(ratio, ddof=1) / np.sqrt(n_samples))
    return DivergenceEstimate(float(np.mean(ratio)), se, int(n_samples))


def per_coordinate_kl(
    samplers: Sequence[Callable],
    log_gs: Sequence,
    f: MoleModel,
    n_samples: int,
    rng: np.random.Generator,
) -> list:
    """KL estimate for each output coordinate against f's exact marginal.

    ``samplers[j]`` draws ``(X, Y_j)`` with Y_j of shape (n, 1) and
    ``log_gs[j]`` is the matching univariate target.
    """
    if len(samplers) != f.q or len(log_gs) != f.q:
        raise DimensionError(f"need {f.q} samplers and targets, got {len(samplers)} and {len(log_gs)}")
    out = []
    for j in range(f.q):
        fj = f if f.q == 1 else marginal_model(f, j)
        out.append(kl_divergence_mc(samplers[j], log_gs[j], fj, n_samples, rng))
    return out
