"""EM estimation of Gaussian-gated mixtures of linear experts.

The joint density ``sum_z pi_z phi_p(x; mu_z, S_z) phi_q(y; a_z + B_z^T x, C_z)``
is fitted by EM. Its conditional ``f(y | x)`` is the Gaussian-gated model.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.cluster.vq import kmeans2
from scipy.linalg import solve_triangular
from scipy.special import logsumexp

from .errors import DimensionError, InsufficientDataError, MomoleError, NonFiniteError
from .gating import GaussianGate, gate_eval
from .gauss import LOG_2PI, make_gaussian
from .metrics import GridDomain, uniform_norm
from .mole import MeanModel, MoleModel, make_expert, mean, mean_model_of

log = logging.getLogger(__name__)

STARRED = "starred"
FULL = "full"


@dataclass(frozen=True, eq=False)
class Dataset:
    """Paired samples: ``inputs`` (N, p) and ``responses`` (N, q)."""

    inputs: np.ndarray
    responses: np.ndarray

    def __post_init__(self):
        X = np.asarray(self.inputs, dtype=float)
        Y = np.asarray(self.responses, dtype=float)
        X = X[:, None] if X.ndim == 1 else X
        Y = Y[:, None] if Y.ndim == 1 else Y
        if X.ndim != 2 or Y.ndim != 2 or X.shape[0] != Y.shape[0]:
            raise DimensionError(f"inputs {X.shape} and responses {Y.shape} are not row-aligned")
        if X.shape[0] < 1:
            raise InsufficientDataError("dataset is empty")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(Y))):
            raise NonFiniteError("dataset contains non-finite entries")
        object.__setattr__(self, "inputs", X)
        object.__setattr__(self, "responses", Y)

    @property
    def size(self) -> int:
        return self.inputs.shape[0]


@dataclass(frozen=True)
class FitConfig:
    max_iter: int = 500
    tol: float = 1e-8
    restarts: int = 5
    cov_floor: float = 1e-6
    kmeans_iter: int = 20


@dataclass(eq=False)
class FitReport:
    """Outcome of the best EM restart.

    ``log_likelihood_trace`` holds the mean per-observation joint
    log-likelihood at each iteration.
    """

    model: MoleModel
    log_likelihood_trace: np.ndarray
    iterations: int
    converged: bool
    restart_index: int
    final_log_likelihoods: list = field(default_factory=list)

    @property
    def log_likelihood(self) -> float:
        return float(self.log_likelihood_trace[-1])


@dataclass
class _Params:
    weights: np.ndarray  # (n,)
    means: np.ndarray  # (n, p)
    covs: np.ndarray  # (n, p, p)
    intercepts: np.ndarray  # (n, q)
    slopes: np.ndarray  # (n, p, q)
    noise: np.ndarray  # (n, q, q)


def _floor_cov(S: np.ndarray, floor: float) -> np.ndarray:
    S = 0.5 * (S + S.T)
    vals, vecs = np.linalg.eigh(S)
    if vals[0] >= floor:
        return S
    vals = np.maximum(vals, floor)
    out = (vecs * vals) @ vecs.T
    return 0.5 * (out + out.T)


def _log_mvn_rows(D: np.ndarray, S: np.ndarray) -> np.ndarray:
    # log N(0, S) evaluated at the rows of D
    L = np.linalg.cholesky(S)
    sol = solve_triangular(L, D.T, lower=True, check_finite=False)
    return -0.5 * (S.shape[0] * LOG_2PI + np.einsum("ij,ij->j", sol, sol)) - np.sum(np.log(np.diag(L)))


def _log_joint(X, Y, prm: _Params) -> np.ndarray:
    n = prm.weights.shape[0]
    out = np.empty((X.shape[0], n))
    with np.errstate(divide="ignore"):
        logw = np.log(prm.weights)
    for z in range(n):
        resid = Y - prm.intercepts[z] - X @ prm.slopes[z]
        out[:, z] = (
            logw[z]
            + _log_mvn_rows(X - prm.means[z], prm.covs[z])
            + _log_mvn_rows(resid, prm.noise[z])
        )
    return out


def _m_step(X, Y, R, mode, floor_x, floor_y) -> _Params:
    N, p = X.shape
    q = Y.shape[1]
    n = R.shape[1]
    Nz = R.sum(axis=0)
    tiny = np.finfo(float).tiny
    weights = np.maximum(Nz, tiny)
    weights = weights / weights.sum()
    means = np.empty((n, p))
    covs = np.empty((n, p, p))
    intercepts = np.empty((n, q))
    slopes = np.zeros((n, p, q))
    noise = np.empty((n, q, q))
    design = np.hstack([np.ones((N, 1)), X])
    for z in range(n):
        r = R[:, z]
        nz = max(Nz[z], tiny)
        mu = r @ X / nz
        D = X - mu
        means[z] = mu
        covs[z] = _floor_cov((D * r[:, None]).T @ D / nz, floor_x)
        if mode == FULL:
            sw = np.sqrt(r)[:, None]
            coef, *_ = np.linalg.lstsq(design * sw, Y * sw, rcond=None)
            intercepts[z] = coef[0]
            slopes[z] = coef[1:]
        else:
            intercepts[z] = r @ Y / nz
        E = Y - intercepts[z] - X @ slopes[z]
        noise[z] = _floor_cov((E * r[:, None]).T @ E / nz, floor_y)
    return _Params(weights, means, covs, intercepts, slopes, noise)


def _variance_scale(A: np.ndarray) -> float:
    v = float(np.mean(np.var(A, axis=0)))
    return v if v > 0 else 1.0


def _initial_responsibilities(X, n, rng, cfg: FitConfig, floor_x, init_means=None) -> np.ndarray:
    N, p = X.shape
    if n == 1:
        return np.ones((N, 1))
    if init_means is not None:
        centers = np.asarray(init_means, dtype=float).reshape(n, p)
        labels = np.argmin(((X[:, None, :] - centers[None]) ** 2).sum(axis=2), axis=1)
    else:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            centers, labels = kmeans2(X, n, iter=cfg.kmeans_iter, minit="++", seed=rng)
    counts = np.bincount(labels, minlength=n).astype(float)
    pooled = np.zeros((p, p))
    for z in range(n):
        D = X[labels == z] - centers[z]
        pooled += D.T @ D
    pooled = _floor_cov(pooled / N, floor_x)
    weights = np.maximum(counts, 1.0)
    weights /= weights.sum()
    logp = np.empty((N, n))
    for z in range(n):
        logp[:, z] = np.log(weights[z]) + _log_mvn_rows(X - centers[z], pooled)
    return np.exp(logp - logsumexp(logp, axis=1, keepdims=True))


def _to_model(prm: _Params) -> MoleModel:
    comps = tuple(make_gaussian(m, S) for m, S in zip(prm.means, prm.covs))
    log_w = np.log(prm.weights)
    gate = GaussianGate(log_w - logsumexp(log_w), comps)
    experts = tuple(
        make_expert(a, B, C) for a, B, C in zip(prm.intercepts, prm.slopes, prm.noise)
    )
    return MoleModel(gate, experts)


def _single_run(X, Y, n, mode, cfg: FitConfig, rng, init_means=None):
    floor_x = cfg.cov_floor * _variance_scale(X)
    floor_y = cfg.cov_floor * _variance_scale(Y)
    R = _initial_responsibilities(X, n, rng, cfg, floor_x, init_means)
    prm = _m_step(X, Y, R, mode, floor_x, floor_y)
    trace = []
    converged = False
    for _ in range(cfg.max_iter):
        lj = _log_joint(X, Y, prm)
        ll_rows = logsumexp(lj, axis=1)
        ll = float(np.mean(ll_rows))
        if not np.isfinite(ll):
            raise NonFiniteError("log-likelihood became non-finite during EM")
        trace.append(ll)
        if len(trace) > 1 and abs(trace[-1] - trace[-2]) < cfg.tol * max(1.0, abs(trace[-2])):
            converged = True
            break
        R = np.exp(lj - ll_rows[:, None])
        prm = _m_step(X, Y, R, mode, floor_x, floor_y)
    return prm, np.array(trace), converged


def fit_em(
    data: Dataset,
    n: int,
    mode: str = STARRED,
    config: FitConfig | None = None,
    rng: np.random.Generator | None = None,
    init_means=None,
) -> FitReport:
    """Fit an n-component Gaussian-gated model by EM, best of several restarts.

    Parameters
    ----------
    data : Dataset
    n : int
        Number of components; at least ``10 * n`` samples are required.
    mode : {"starred", "full"}
        ``"starred"`` fixes every expert slope at exactly zero.
    config : FitConfig, optional
    rng : numpy.random.Generator, optional
        Restart ``k`` uses the k-th child stream of ``rng``.
    init_means : array_like, shape (n, p), optional
        Fixed initial gate centres in place of k-means; every restart then
        starts from the same point.

    Returns
    -------
    FitReport
        The restart with the highest final log-likelihood.
    """
    cfg = config or FitConfig()
    rng = rng if rng is not None else np.random.default_rng()
    if mode not in (STARRED, FULL):
        raise MomoleError(f"unknown fit mode {mode!r}")
    if n < 1:
        raise MomoleError("component count must be at least 1")
    if data.size < 10 * n:
        raise InsufficientDataError(f"{data.size} samples is fewer than 10 per component (n={n})")
    best = None
    finals = []
    for k, child in enumerate(rng.spawn(max(1, cfg.restarts))):
        prm, trace, converged = _single_run(data.inputs, data.responses, n, mode, cfg, child, init_means)
        finals.append(float(trace[-1]))
        log.debug("restart %d: loglik %.6f after %d iterations", k, trace[-1], len(trace))
        if best is None or trace[-1] > best[1][-1]:
            best = (prm, trace, converged, k)
    prm, trace, converged, k = best
    return FitReport(_to_model(prm), trace, len(trace), converged, k, finals)


BANDWIDTH_SCALES = (1.0, 1.5, 2.0, 3.0, 4.0, 6.0)


def widen_gate(gate: GaussianGate, scale: float) -> GaussianGate:
    """Multiply every gate covariance by ``scale**2``; weights and means kept."""
    comps = tuple(make_gaussian(c.mean, scale * scale * c.covariance) for c in gate.components)
    return GaussianGate(gate.log_weights, comps)


def polish_mean(model: MeanModel, X: np.ndarray, y: np.ndarray, scales=BANDWIDTH_SCALES) -> MeanModel:
    """Widen the gate and re-solve the intercepts by least squares.

    For each bandwidth scale the intercepts minimizing the squared residual
    on ``(X, y)`` are found (the mean is linear in them once the gate is
    fixed); the scale with the smallest maximum absolute training residual
    wins. The result stays starred.
    """
    y = y.reshape(X.shape[0], -1)
    best, best_res = model, np.max(np.abs(mean(model, X) - y))
    for h in scales:
        gate = widen_gate(model.gate, h)
        G = gate_eval(gate, X)
        a, *_ = np.linalg.lstsq(G, y, rcond=None)
        res = np.max(np.abs(G @ a - y))
        if res < best_res:
            best = MeanModel(gate, a, np.zeros((model.n, model.p, y.shape[1])))
            best_res = res
    return best


def fit_curve(
    target: Callable,
    grid: GridDomain,
    n: int,
    restarts: int = 5,
    rng: np.random.Generator | None = None,
    n_samples: int = 2000,
    noise: float = 1e-3,
    config: FitConfig | None = None,
    polish: bool = True,
) -> MeanModel:
    """Approximate a scalar function on the grid box with a starred mean model.

    Inputs are drawn uniformly on the box, responses are ``target(x)`` plus
    Gaussian noise of standard deviation ``noise``. Each restart is a
    separate single-start EM fit, optionally followed by
    :func:`polish_mean`; the restart with the smallest grid uniform error is
    returned.

    Maximum-likelihood gates on nearly noiseless data are sharp, which makes
    the raw EM mean close to piecewise constant; the polish step recovers
    the smooth interpolation that wider gates allow.
    """
    rng = rng if rng is not None else np.random.default_rng()
    cfg = config or FitConfig()
    cfg = FitConfig(cfg.max_iter, cfg.tol, 1, cfg.cov_floor, cfg.kmeans_iter)
    data_rng, *fit_rngs = rng.spawn(max(1, restarts) + 1)
    X = grid.lower + (grid.upper - grid.lower) * data_rng.random((n_samples, grid.p))
    y = np.asarray(target(X), dtype=float).reshape(n_samples, -1)
    if y.shape[1] != 1:
        raise DimensionError("fit_curve expects a scalar target")
    y = y + noise * data_rng.standard_normal(y.shape)
    data = Dataset(X, y)
    best, best_err = None, np.inf
    for child in fit_rngs:
        model = mean_model_of(fit_em(data, n, STARRED, cfg, child).model)
        if polish:
            model = polish_mean(model, X, y)
        err = uniform_norm(lambda pts: mean(model, pts)[:, 0] - np.ravel(target(pts)), grid)
        if err < best_err:
            best, best_err = model, err
    return best
