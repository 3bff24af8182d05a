"""Closure operations on starred Gaussian-gated models.

Sums of mean functions and products of conditional densities are again
starred mixtures over the ``n1 * n2`` pairs of components; pairs are
indexed row-major. Coordinate lifts and the multi-output assemblies are
built from these two binary operations.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import reduce
from typing import Sequence

import numpy as np
from scipy.linalg import block_diag
from scipy.special import logsumexp

from .errors import CapacityError, DimensionError, GateKindError, MomoleError, NotStarredError
from .gating import GaussianGate
from .gauss import gaussian_product
from .mole import AnyModel, MeanModel, MoleModel, is_starred, make_expert

MAX_COMPONENTS = 10**6


def pair_index(s: int, t: int, n1: int, n2: int) -> int:
    """Map ``(s, t)`` in ``[n1] x [n2]`` to ``z`` in ``[n1 * n2]``, 1-based.

    >>> pair_index(2, 3, 2, 3)
    6
    """
    if n1 < 1 or n2 < 1:
        raise MomoleError(f"component counts must be positive, got ({n1}, {n2})")
    if not (1 <= s <= n1 and 1 <= t <= n2):
        raise IndexError(f"pair ({s}, {t}) outside [{n1}] x [{n2}]")
    return (s - 1) * n2 + t


def pair_unindex(z: int, n1: int, n2: int) -> tuple[int, int]:
    """Inverse of :func:`pair_index`."""
    if not 1 <= z <= n1 * n2:
        raise IndexError(f"index {z} outside [{n1 * n2}]")
    s, t = divmod(z - 1, n2)
    return s + 1, t + 1


@dataclass(frozen=True)
class PairIndexMap:
    """Row-major bijection between ``[n1] x [n2]`` and ``[n1 * n2]``."""

    n1: int
    n2: int

    def __post_init__(self):
        if self.n1 < 1 or self.n2 < 1:
            raise MomoleError(f"component counts must be positive, got ({self.n1}, {self.n2})")

    @property
    def size(self) -> int:
        return self.n1 * self.n2

    def forward(self, s: int, t: int) -> int:
        return pair_index(s, t, self.n1, self.n2)

    def inverse(self, z: int) -> tuple[int, int]:
        return pair_unindex(z, self.n1, self.n2)


def _require_starred_gaussian(model: AnyModel, name: str):
    if not isinstance(model.gate, GaussianGate):
        raise GateKindError(f"{name} must have a Gaussian gate, got {type(model.gate).__name__}")
    if not is_starred(model):
        raise NotStarredError(f"{name} has non-zero expert slopes")


def _check_capacity(n1: int, n2: int):
    if n1 * n2 > MAX_COMPONENTS:
        raise CapacityError(f"{n1} x {n2} components exceeds the limit of {MAX_COMPONENTS}")


def merge_gates(g1: GaussianGate, g2: GaussianGate) -> GaussianGate:
    """Gate over component pairs whose ratios equal the product of the two gates.

    Pair ``(s, t)`` gets the Gaussian ``phi(.; mu_1s, S_1s) phi(.; mu_2t, S_2t)
    / c_st`` and weight proportional to ``c_st pi_1s pi_2t``, normalized in
    log space.
    """
    if g1.p != g2.p:
        raise DimensionError(f"gates have input dimensions {g1.p} and {g2.p}")
    _check_capacity(g1.n, g2.n)
    log_w = np.empty(g1.n * g2.n)
    comps = []
    for s, c1 in enumerate(g1.components):
        for t, c2 in enumerate(g2.components):
            prod = gaussian_product(c1, c2)
            z = pair_index(s + 1, t + 1, g1.n, g2.n) - 1
            log_w[z] = g1.log_weights[s] + g2.log_weights[t] + prod.log_scale
            comps.append(prod.gaussian)
    log_w -= logsumexp(log_w)
    # One correction pass pulls the sum to 1 within rounding.
    log_w -= logsumexp(log_w)
    return GaussianGate(log_w, tuple(comps))


def add_mean_models(m1: MeanModel, m2: MeanModel) -> MeanModel:
    """Starred mean model computing ``m1(x) + m2(x)``."""
    _require_starred_gaussian(m1, "m1")
    _require_starred_gaussian(m2, "m2")
    if m1.p != m2.p or m1.q != m2.q:
        raise DimensionError(f"cannot add models with (p, q) = {(m1.p, m1.q)} and {(m2.p, m2.q)}")
    gate = merge_gates(m1.gate, m2.gate)
    a = (m1.intercepts[:, None, :] + m2.intercepts[None, :, :]).reshape(-1, m1.q)
    return MeanModel(gate, a, np.zeros((gate.n, m1.p, m1.q)))


def multiply_densities(f1: MoleModel, f2: MoleModel) -> MoleModel:
    """Starred model on stacked outputs with ``f(y|x) = f1(y1|x) f2(y2|x)``."""
    _require_starred_gaussian(f1, "f1")
    _require_starred_gaussian(f2, "f2")
    if f1.p != f2.p:
        raise DimensionError(f"input dimensions differ: {f1.p} and {f2.p}")
    gate = merge_gates(f1.gate, f2.gate)
    q = f1.q + f2.q
    experts = []
    for e1 in f1.experts:
        for e2 in f2.experts:
            experts.append(
                make_expert(
                    np.concatenate([e1.intercept, e2.intercept]),
                    np.zeros((f1.p, q)),
                    block_diag(e1.covariance, e2.covariance),
                )
            )
    return MoleModel(gate, tuple(experts))


def lift_coordinate(m: MeanModel, j: int, q: int) -> MeanModel:
    """Embed a single-output mean as coordinate ``j`` (1-based) of a q-vector.

    All other coordinates are identically zero.
    """
    if m.q != 1:
        raise DimensionError(f"only single-output models can be lifted, got q={m.q}")
    if not 1 <= j <= q:
        raise IndexError(f"coordinate {j} outside [1, {q}]")
    a = np.zeros((m.n, q))
    a[:, j - 1] = m.intercepts[:, 0]
    B = np.zeros((m.n, m.p, q))
    B[:, :, j - 1] = m.slopes[:, :, 0]
    return MeanModel(m.gate, a, B)


def _check_product_capacity(counts):
    total = 1
    for c in counts:
        total *= c
        if total > MAX_COMPONENTS:
            raise CapacityError(
                f"assembled model would have {int(np.prod(counts, dtype=float)):.3g} components"
            )


def assemble_mo_mean(models: Sequence[MeanModel]) -> MeanModel:
    """Multi-output mean whose coordinate ``j`` is ``models[j]``'s mean.

    Each univariate model is lifted to its coordinate and the lifts are
    summed left to right.
    """
    models = list(models)
    if not models:
        raise MomoleError("need at least one model")
    for k, m in enumerate(models):
        _require_starred_gaussian(m, f"models[{k}]")
    _check_product_capacity([m.n for m in models])
    q = len(models)
    lifted = [lift_coordinate(m, j + 1, q) for j, m in enumerate(models)]
    return reduce(add_mean_models, lifted)


def assemble_joint_density(models: Sequence[MoleModel]) -> MoleModel:
    """Joint conditional density equal to the product of univariate ones."""
    models = list(models)
    if not models:
        raise MomoleError("need at least one model")
    for k, m in enumerate(models):
        _require_starred_gaussian(m, f"models[{k}]")
        if m.q != 1:
            raise DimensionError(f"models[{k}] has output dimension {m.q}, expected 1")
    _check_product_capacity([m.n for m in models])
    return reduce(multiply_densities, models)
