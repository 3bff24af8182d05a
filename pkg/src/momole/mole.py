"""Mixture-of-linear-experts models: conditional density, mean function,
sampling."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np
from scipy.special import logsumexp

from .errors import DimensionError, MomoleError
from .gating import GatingSpec, gate_eval, log_gate_eval, permute_gate
from .gauss import cholesky_factor, mvn_logpdf


@dataclass(frozen=True, eq=False)
class LinearExpert:
    """Gaussian expert ``y | x ~ N(a + B^T x, C)``.

    Attributes
    ----------
    intercept : ndarray, shape (q,)
    slope : ndarray, shape (p, q)
    covariance : ndarray, shape (q, q)
    chol : ndarray, shape (q, q)
    """

    intercept: np.ndarray
    slope: np.ndarray
    covariance: np.ndarray
    chol: np.ndarray

    @property
    def p(self) -> int:
        return self.slope.shape[0]

    @property
    def q(self) -> int:
        return self.intercept.shape[0]


def make_expert(intercept, slope, covariance) -> LinearExpert:
    """Validate and build a :class:`LinearExpert`.

    ``slope`` may be given as a length-p vector when q == 1.
    """
    a = np.atleast_1d(np.asarray(intercept, dtype=float))
    B = np.asarray(slope, dtype=float)
    if a.ndim != 1:
        raise DimensionError(f"intercept must be a vector, got shape {a.shape}")
    if B.ndim == 1 and a.shape[0] == 1:
        B = B.reshape(-1, 1)
    if B.ndim != 2 or B.shape[1] != a.shape[0]:
        raise DimensionError(f"slope must have shape (p, {a.shape[0]}), got {B.shape}")
    C = np.atleast_2d(np.asarray(covariance, dtype=float))
    if C.shape != (a.shape[0], a.shape[0]):
        raise DimensionError(f"noise covariance must be {a.shape[0]}x{a.shape[0]}, got {C.shape}")
    chol = cholesky_factor(C)
    return LinearExpert(a, B, 0.5 * (C + C.T), chol)


def _check_gate_sizes(gate: GatingSpec, n: int, p: int):
    if gate.n != n:
        raise DimensionError(f"gate has {gate.n} components but there are {n} experts")
    if gate.p != p:
        raise DimensionError(f"gate input dimension {gate.p} != expert input dimension {p}")


@dataclass(frozen=True, eq=False)
class MoleModel:
    """Gated mixture of Gaussian linear experts, ``f(y | x; theta)``."""

    gate: GatingSpec
    experts: tuple

    def __post_init__(self):
        experts = tuple(self.experts)
        if not experts:
            raise DimensionError("a model needs at least one expert")
        shapes = {(e.p, e.q) for e in experts}
        if len(shapes) != 1:
            raise DimensionError(f"experts disagree on (p, q): {sorted(shapes)}")
        _check_gate_sizes(self.gate, len(experts), experts[0].p)
        object.__setattr__(self, "experts", experts)

    @property
    def n(self) -> int:
        return len(self.experts)

    @property
    def p(self) -> int:
        return self.experts[0].p

    @property
    def q(self) -> int:
        return self.experts[0].q

    @property
    def intercepts(self) -> np.ndarray:
        return np.stack([e.intercept for e in self.experts])

    @property
    def slopes(self) -> np.ndarray:
        return np.stack([e.slope for e in self.experts])


@dataclass(frozen=True, eq=False)
class MeanModel:
    """Gated mixture of affine maps, ``m(x) = sum_z Gate_z(x) (a_z + B_z^T x)``.

    Attributes
    ----------
    gate : GatingSpec
    intercepts : ndarray, shape (n, q)
    slopes : ndarray, shape (n, p, q)
    """

    gate: GatingSpec
    intercepts: np.ndarray
    slopes: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.intercepts, dtype=float)
        if a.ndim == 1:
            a = a.reshape(-1, 1)
        B = np.asarray(self.slopes, dtype=float)
        if B.ndim == 2 and a.shape[1] == 1:
            B = B[:, :, None]
        if a.ndim != 2 or a.shape[0] < 1:
            raise DimensionError(f"intercepts must have shape (n, q), got {a.shape}")
        if B.ndim != 3 or B.shape[0] != a.shape[0] or B.shape[2] != a.shape[1]:
            raise DimensionError(
                f"slopes must have shape (n, p, q) = ({a.shape[0]}, p, {a.shape[1]}), got {B.shape}"
            )
        _check_gate_sizes(self.gate, a.shape[0], B.shape[1])
        object.__setattr__(self, "intercepts", a)
        object.__setattr__(self, "slopes", B)

    @property
    def n(self) -> int:
        return self.intercepts.shape[0]

    @property
    def p(self) -> int:
        return self.slopes.shape[1]

    @property
    def q(self) -> int:
        return self.intercepts.shape[1]


AnyModel = Union[MoleModel, MeanModel]


def starred_mean_model(gate: GatingSpec, intercepts) -> MeanModel:
    """Mean model with all slopes exactly zero."""
    a = np.asarray(intercepts, dtype=float)
    if a.ndim == 1:
        a = a.reshape(-1, 1)
    return MeanModel(gate, a, np.zeros((a.shape[0], gate.p, a.shape[1])))


def mean_model_of(model: MoleModel) -> MeanModel:
    """The mean function of a density model, dropping the noise covariances."""
    return MeanModel(model.gate, model.intercepts, model.slopes)


def _expert_means(model: MoleModel, x: np.ndarray) -> np.ndarray:
    # (N, n, q)
    return model.intercepts[None, :, :] + np.einsum("np,zpq->nzq", x, model.slopes)


def _pairs(model, y, x):
    y = np.asarray(y, dtype=float)
    x = np.asarray(x, dtype=float)
    single = y.ndim <= 1 and x.ndim <= 1
    y2 = y.reshape(1, -1) if y.ndim <= 1 else y
    x2 = x.reshape(1, -1) if x.ndim <= 1 else x
    if y2.shape[-1] != model.q:
        raise DimensionError(f"model output dimension is {model.q}, got y of shape {y.shape}")
    if x2.shape[-1] != model.p:
        raise DimensionError(f"model input dimension is {model.p}, got x of shape {x.shape}")
    if y2.shape[0] != x2.shape[0]:
        if y2.shape[0] == 1:
            y2 = np.broadcast_to(y2, (x2.shape[0], model.q))
        elif x2.shape[0] == 1:
            x2 = np.broadcast_to(x2, (y2.shape[0], model.p))
        else:
            raise DimensionError(f"{y2.shape[0]} responses but {x2.shape[0]} inputs")
    return y2, x2, single


def log_component_densities(model: MoleModel, y, x) -> np.ndarray:
    """``log Gate_z(x) + log phi_q(y; a_z + B_z^T x, C_z)``, shape (N, n)."""
    y2, x2, _ = _pairs(model, y, x)
    out = np.atleast_2d(log_gate_eval(model.gate, x2)).copy()
    means = _expert_means(model, x2)
    for z, e in enumerate(model.experts):
        out[:, z] += mvn_logpdf(y2, means[:, z, :], e.chol)
    return out


def log_conditional_density(model: MoleModel, y, x):
    """``log f(y | x)``. Scalar for a single pair, (N,) for stacked pairs.

    ``y`` and ``x`` may be single vectors or row-aligned (N, q) / (N, p)
    arrays; a single vector broadcasts against the other argument.
    """
    _, _, single = _pairs(model, y, x)
    out = logsumexp(log_component_densities(model, y, x), axis=1)
    return float(out[0]) if single else out


def conditional_density(model: MoleModel, y, x):
    """``f(y | x) = sum_z Gate_z(x) phi_q(y; a_z + B_z^T x, C_z)``."""
    return np.exp(log_conditional_density(model, y, x))


def mean(model: AnyModel, x):
    """``m(x) = sum_z Gate_z(x) (a_z + B_z^T x)``; shape (q,) or (N, q)."""
    x = np.asarray(x, dtype=float)
    single = x.ndim <= 1
    x2 = x.reshape(1, -1) if single else x
    if x2.shape[-1] != model.p:
        raise DimensionError(f"model input dimension is {model.p}, got x of shape {x.shape}")
    if model.n == 1:
        out = model.intercepts[0][None, :] + x2 @ model.slopes[0]
    else:
        w = gate_eval(model.gate, x2)
        out = np.einsum("nz,nzq->nq", w, _expert_means(model, x2))
    return out[0] if single else out


def is_starred(model: AnyModel) -> bool:
    """True iff every expert slope is exactly zero."""
    return bool(np.all(model.slopes == 0.0))


def sample_response(model: MoleModel, x, rng: np.random.Generator):
    """Draw the latent component and a response at ``x``.

    Returns ``(z, y)`` with 0-based component index ``z``. For ``x`` of shape
    (N, p) both are stacked: ``z`` (N,), ``y`` (N, q).
    """
    x = np.asarray(x, dtype=float)
    single = x.ndim <= 1
    x2 = x.reshape(1, -1) if single else x
    w = np.atleast_2d(gate_eval(model.gate, x2))
    u = rng.random(x2.shape[0])
    cdf = np.cumsum(w, axis=1)
    z = np.minimum((u[:, None] > cdf).sum(axis=1), model.n - 1)
    eps = rng.standard_normal((x2.shape[0], model.q))
    means = _expert_means(model, x2)[np.arange(x2.shape[0]), z]
    chols = np.stack([e.chol for e in model.experts])[z]
    y = means + np.einsum("nij,nj->ni", chols, eps)
    if single:
        return int(z[0]), y[0]
    return z, y


def marginal_model(model: MoleModel, coords: Sequence[int] | int) -> MoleModel:
    """Exact marginal of ``f(y | x)`` over the given output coordinates (0-based).

    Marginals of Gaussian experts are Gaussian, so the result is again a
    mixture of linear experts with the same gate.
    """
    idx = [coords] if np.isscalar(coords) else list(coords)
    if not idx or min(idx) < 0 or max(idx) >= model.q:
        raise DimensionError(f"coordinates {idx} out of range for q={model.q}")
    experts = tuple(
        make_expert(e.intercept[idx], e.slope[:, idx], e.covariance[np.ix_(idx, idx)])
        for e in model.experts
    )
    return MoleModel(model.gate, experts)


def permute_model(model: AnyModel, order: Sequence[int]) -> AnyModel:
    """Reorder components of gate and experts together."""
    order = list(order)
    if sorted(order) != list(range(model.n)):
        raise MomoleError(f"{order} is not a permutation of range({model.n})")
    gate = permute_gate(model.gate, order)
    if isinstance(model, MoleModel):
        return MoleModel(gate, tuple(model.experts[k] for k in order))
    return MeanModel(gate, model.intercepts[order], model.slopes[order])
