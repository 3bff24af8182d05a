"""Multivariate normal densities on Cholesky factors, and the closed-form
product of two normal densities."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve, solve_triangular

from .errors import DimensionError, NotPositiveDefiniteError, NotSymmetricError

LOG_2PI = float(np.log(2.0 * np.pi))

SYMMETRY_ATOL = 1e-12
EIGEN_FLOOR = 1e-12
FACTOR_ATOL = 1e-10


@dataclass(frozen=True, eq=False)
class GaussianParams:
    """Validated multivariate normal parameters.

    Build instances with :func:`make_gaussian`; the constructor does not
    validate.

    Attributes
    ----------
    mean : ndarray, shape (p,)
    covariance : ndarray, shape (p, p)
    chol : ndarray, shape (p, p)
        Lower-triangular factor with ``chol @ chol.T == covariance``.
    """

    mean: np.ndarray
    covariance: np.ndarray
    chol: np.ndarray

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    @property
    def precision(self) -> np.ndarray:
        return cho_solve((self.chol, True), np.eye(self.dim))


@dataclass(frozen=True, eq=False)
class ScaledGaussian:
    """``exp(log_scale) * phi(x; gaussian.mean, gaussian.covariance)``.

    The scale is kept in log form; it can be far below the smallest float.
    """

    log_scale: float
    gaussian: GaussianParams

    @property
    def scale(self) -> float:
        return float(np.exp(self.log_scale))


def _readonly(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


def cholesky_factor(covariance) -> np.ndarray:
    """Validate a covariance matrix and return its lower Cholesky factor.

    Raises
    ------
    DimensionError
        ``covariance`` is not square.
    NotSymmetricError
        Asymmetry exceeds ``SYMMETRY_ATOL`` in any entry.
    NotPositiveDefiniteError
        The smallest eigenvalue does not exceed ``EIGEN_FLOOR`` times the
        largest.
    """
    cov = np.atleast_2d(np.asarray(covariance, dtype=float))
    if cov.ndim != 2 or cov.shape[0] != cov.shape[1] or cov.shape[0] == 0:
        raise DimensionError(f"covariance must be square, got shape {cov.shape}")
    if not np.all(np.isfinite(cov)):
        raise NotPositiveDefiniteError("covariance has non-finite entries")
    if np.max(np.abs(cov - cov.T)) > SYMMETRY_ATOL:
        raise NotSymmetricError("covariance is not symmetric")
    cov = 0.5 * (cov + cov.T)
    eig = np.linalg.eigvalsh(cov)
    if eig[-1] <= 0.0 or eig[0] <= EIGEN_FLOOR * eig[-1]:
        raise NotPositiveDefiniteError(
            f"covariance is not positive definite (eigenvalues {eig[0]:.3g} .. {eig[-1]:.3g})"
        )
    try:
        chol = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefiniteError(str(exc)) from exc
    if np.max(np.abs(chol @ chol.T - cov)) > FACTOR_ATOL * max(1.0, eig[-1]):
        raise NotPositiveDefiniteError("Cholesky factor does not reproduce covariance")
    return chol


def make_gaussian(mean, covariance) -> GaussianParams:
    """Validate ``(mean, covariance)`` and factorize the covariance."""
    mean = np.atleast_1d(np.asarray(mean, dtype=float))
    if mean.ndim != 1:
        raise DimensionError(f"mean must be a vector, got shape {mean.shape}")
    cov = np.atleast_2d(np.asarray(covariance, dtype=float))
    if cov.shape != (mean.shape[0], mean.shape[0]):
        raise DimensionError(
            f"mean has length {mean.shape[0]} but covariance has shape {cov.shape}"
        )
    chol = cholesky_factor(cov)
    return GaussianParams(_readonly(mean), _readonly(0.5 * (cov + cov.T)), _readonly(chol))


def mvn_logpdf(x, mean, chol):
    """Log density of N(mean, chol chol^T) at the rows of ``x``.

    ``x`` is (p,) or (N, p); ``mean`` is (p,) or broadcastable to ``x``.
    Returns a float or an (N,) array accordingly.
    """
    x = np.asarray(x, dtype=float)
    p = chol.shape[0]
    if x.shape[-1] != p:
        raise DimensionError(f"expected points of dimension {p}, got shape {x.shape}")
    diff = np.atleast_2d(x - mean)
    sol = solve_triangular(chol, diff.T, lower=True, check_finite=False)
    maha = np.einsum("ij,ij->j", sol, sol)
    half_logdet = np.sum(np.log(np.diag(chol)))
    out = -0.5 * (p * LOG_2PI + maha) - half_logdet
    if x.ndim == 1:
        return float(out[0])
    return out


def log_density(g: GaussianParams, x):
    """log phi_p(x; mean, covariance), for a single point or rows of ``x``."""
    return mvn_logpdf(x, g.mean, g.chol)


def density(g: GaussianParams, x):
    """phi_p(x; mean, covariance). Underflows to 0.0 far from the mean."""
    return np.exp(log_density(g, x))


def gaussian_product(g1: GaussianParams, g2: GaussianParams) -> ScaledGaussian:
    """Product of two normal densities as a scaled normal density.

    ``phi(x; m1, S1) * phi(x; m2, S2) == c * phi(x; m12, S12)`` with
    ``S12^-1 = S1^-1 + S2^-1``, ``m12 = S12 (S1^-1 m1 + S2^-1 m2)`` and
    ``c = phi(m1; m2, S1 + S2)``.
    """
    if g1.dim != g2.dim:
        raise DimensionError(f"cannot multiply densities of dimension {g1.dim} and {g2.dim}")
    p1, p2 = g1.precision, g2.precision
    prec = p1 + p2
    prec = 0.5 * (prec + prec.T)
    cov = np.linalg.inv(prec)
    cov = 0.5 * (cov + cov.T)
    mean = cov @ (p1 @ g1.mean + p2 @ g2.mean)
    sum_cov = g1.covariance + g2.covariance
    log_c = mvn_logpdf(g1.mean, g2.mean, np.linalg.cholesky(sum_cov))
    return ScaledGaussian(log_c, make_gaussian(mean, cov))


def sample_gaussian(g: GaussianParams, rng: np.random.Generator, size=None):
    """Draw ``mean + chol @ z`` with ``z`` standard normal.

    Returns shape (p,) when ``size`` is None, else (size, p).
    """
    if size is None:
        return g.mean + g.chol @ rng.standard_normal(g.dim)
    z = rng.standard_normal((size, g.dim))
    return g.mean + z @ g.chol.T
