"""Soft-max and normalized-Gaussian gating functions."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np
from scipy.special import logsumexp

from .errors import DimensionError, GateEvaluationError, InvalidGateError
from .gauss import make_gaussian, mvn_logpdf

WEIGHT_SUM_ATOL = 1e-12
SHARED_COV_ATOL = 1e-12

# Gate entries are floored here so that far-field evaluations stay strictly
# inside the simplex instead of underflowing to zero.
GATE_FLOOR = np.finfo(float).tiny


@dataclass(frozen=True, eq=False)
class SoftmaxGate:
    """``Gate_z(x) ∝ exp(c_z + d_z^T x)``.

    Attributes
    ----------
    intercepts : ndarray, shape (n,)
    slopes : ndarray, shape (n, p)
    """

    intercepts: np.ndarray
    slopes: np.ndarray

    def __post_init__(self):
        c = np.atleast_1d(np.asarray(self.intercepts, dtype=float))
        d = np.asarray(self.slopes, dtype=float)
        if c.ndim != 1 or c.shape[0] < 1:
            raise InvalidGateError("soft-max gate needs at least one intercept")
        if d.ndim == 1:
            d = d.reshape(c.shape[0], -1)
        if d.ndim != 2 or d.shape[0] != c.shape[0] or d.shape[1] < 1:
            raise InvalidGateError(
                f"slopes must have shape (n, p) with n={c.shape[0]}, got {d.shape}"
            )
        if not (np.all(np.isfinite(c)) and np.all(np.isfinite(d))):
            raise InvalidGateError("soft-max parameters must be finite")
        object.__setattr__(self, "intercepts", c)
        object.__setattr__(self, "slopes", d)

    @property
    def n(self) -> int:
        return self.intercepts.shape[0]

    @property
    def p(self) -> int:
        return self.slopes.shape[1]


@dataclass(frozen=True, eq=False)
class GaussianGate:
    """``Gate_z(x) ∝ pi_z phi_p(x; mu_z, Sigma_z)``.

    Mixing weights are held as logarithms so that merged gates with very
    unequal weights do not lose components to underflow. Use
    :func:`gaussian_gate` to build from plain weights.

    Attributes
    ----------
    log_weights : ndarray, shape (n,)
    components : tuple of GaussianParams
    """

    log_weights: np.ndarray
    components: tuple

    def __post_init__(self):
        lw = np.atleast_1d(np.asarray(self.log_weights, dtype=float))
        comps = tuple(self.components)
        if lw.ndim != 1 or lw.shape[0] < 1:
            raise InvalidGateError("Gaussian gate needs at least one component")
        if lw.shape[0] != len(comps):
            raise InvalidGateError(
                f"{lw.shape[0]} weights but {len(comps)} gate components"
            )
        if not np.all(np.isfinite(lw)):
            raise InvalidGateError("gate weights must be strictly positive")
        if abs(float(logsumexp(lw))) > WEIGHT_SUM_ATOL:
            raise InvalidGateError(
                f"gate weights must sum to 1 (sum = {float(np.exp(logsumexp(lw))):.17g})"
            )
        dims = {c.dim for c in comps}
        if len(dims) != 1:
            raise InvalidGateError(f"gate components have mixed dimensions {sorted(dims)}")
        object.__setattr__(self, "log_weights", lw)
        object.__setattr__(self, "components", comps)

    @property
    def n(self) -> int:
        return self.log_weights.shape[0]

    @property
    def p(self) -> int:
        return self.components[0].dim

    @property
    def weights(self) -> np.ndarray:
        return np.exp(self.log_weights)


GatingSpec = Union[SoftmaxGate, GaussianGate]


def gaussian_gate(weights, means, covariances) -> GaussianGate:
    """Build a :class:`GaussianGate` from plain weights, means and covariances."""
    w = np.atleast_1d(np.asarray(weights, dtype=float))
    if np.any(w <= 0):
        raise InvalidGateError("gate weights must be strictly positive")
    means = np.asarray(means, dtype=float)
    if means.ndim == 1:
        means = means.reshape(w.shape[0], -1)
    covs = np.asarray(covariances, dtype=float)
    if covs.ndim == 1:
        covs = covs.reshape(-1, 1, 1)
    if means.shape[0] != w.shape[0] or covs.shape[0] != w.shape[0]:
        raise InvalidGateError("weights, means and covariances disagree on n")
    comps = tuple(make_gaussian(m, c) for m, c in zip(means, covs))
    return GaussianGate(np.log(w), comps)


def log_gate_numerators(gate: GatingSpec, x) -> np.ndarray:
    """Unnormalized log gate values, shape (N, n) for ``x`` of shape (N, p)."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if x.shape[-1] != gate.p:
        raise DimensionError(f"gate expects inputs of dimension {gate.p}, got {x.shape}")
    if isinstance(gate, SoftmaxGate):
        return gate.intercepts[None, :] + x @ gate.slopes.T
    out = np.empty((x.shape[0], gate.n))
    for z, comp in enumerate(gate.components):
        out[:, z] = gate.log_weights[z] + mvn_logpdf(x, comp.mean, comp.chol)
    return out


def log_gate_eval(gate: GatingSpec, x) -> np.ndarray:
    """Log gate values, normalized with max-subtracted log-sum-exp.

    Returns shape (n,) for a single point or (N, n) for rows of ``x``.
    """
    single = np.ndim(x) == 1
    num = log_gate_numerators(gate, x)
    top = np.max(num, axis=1, keepdims=True)
    if not np.all(np.isfinite(top)):
        raise GateEvaluationError("all gate numerators are zero or non-finite")
    out = num - top
    out -= np.log(np.sum(np.exp(out), axis=1, keepdims=True))
    return out[0] if single else out


def gate_eval(gate: GatingSpec, x) -> np.ndarray:
    """Gate values on the probability simplex.

    Entries are strictly positive: values that underflow are floored at the
    smallest normal float.
    """
    return np.maximum(np.exp(log_gate_eval(gate, x)), GATE_FLOOR)


def gaussian_gate_to_softmax(gate: GaussianGate) -> SoftmaxGate:
    """Rewrite a shared-covariance Gaussian gate as a soft-max gate.

    With common ``Sigma``, ``c_z = log pi_z - mu_z^T Sigma^-1 mu_z / 2`` and
    ``d_z = Sigma^-1 mu_z``; the quadratic term in ``x`` cancels in the ratio.
    """
    ref = gate.components[0].covariance
    for comp in gate.components[1:]:
        if np.max(np.abs(comp.covariance - ref)) > SHARED_COV_ATOL:
            raise InvalidGateError("gate components do not share a covariance matrix")
    prec = gate.components[0].precision
    means = np.stack([c.mean for c in gate.components])
    slopes = means @ prec
    intercepts = gate.log_weights - 0.5 * np.einsum("ij,ij->i", slopes, means)
    return SoftmaxGate(intercepts, slopes)


def permute_gate(gate: GatingSpec, order: Sequence[int]) -> GatingSpec:
    """Reorder gate components; ``order[k]`` is the old index of new component k."""
    order = list(order)
    if isinstance(gate, SoftmaxGate):
        return SoftmaxGate(gate.intercepts[order], gate.slopes[order])
    return GaussianGate(gate.log_weights[order], tuple(gate.components[k] for k in order))
