"""Random well-conditioned instances for property checks and the verify command."""

from __future__ import annotations

import numpy as np
from scipy.stats import special_ortho_group

from .gating import GaussianGate, SoftmaxGate, gaussian_gate
from .gauss import GaussianParams, make_gaussian
from .mole import MeanModel, MoleModel, make_expert


def random_spd(rng: np.random.Generator, p: int, low: float = 0.3, high: float = 2.0) -> np.ndarray:
    """Symmetric positive-definite matrix with eigenvalues in ``[low, high]``."""
    vals = rng.uniform(low, high, size=p)
    if p == 1:
        return vals.reshape(1, 1)
    Q = special_ortho_group.rvs(p, random_state=rng)
    S = (Q * vals) @ Q.T
    return 0.5 * (S + S.T)


def random_gaussian(rng: np.random.Generator, p: int, spread: float = 2.0) -> GaussianParams:
    return make_gaussian(rng.uniform(-spread, spread, size=p), random_spd(rng, p))


def random_weights(rng: np.random.Generator, n: int) -> np.ndarray:
    w = rng.uniform(0.2, 1.0, size=n)
    return w / w.sum()


def random_gaussian_gate(rng: np.random.Generator, n: int, p: int) -> GaussianGate:
    comps = tuple(random_gaussian(rng, p) for _ in range(n))
    w = random_weights(rng, n)
    return GaussianGate(np.log(w) - np.log(np.sum(w)), comps)


def random_shared_gaussian_gate(rng: np.random.Generator, n: int, p: int) -> GaussianGate:
    cov = random_spd(rng, p)
    means = rng.uniform(-2.0, 2.0, size=(n, p))
    return gaussian_gate(random_weights(rng, n), means, np.repeat(cov[None], n, axis=0))


def random_softmax_gate(rng: np.random.Generator, n: int, p: int) -> SoftmaxGate:
    return SoftmaxGate(rng.normal(size=n), rng.normal(size=(n, p)))


def random_starred_mean_model(rng: np.random.Generator, n: int, p: int, q: int) -> MeanModel:
    gate = random_gaussian_gate(rng, n, p)
    return MeanModel(gate, rng.normal(scale=2.0, size=(n, q)), np.zeros((n, p, q)))


def random_mole(
    rng: np.random.Generator,
    n: int,
    p: int,
    q: int,
    starred: bool = True,
    gate: str = "gaussian",
) -> MoleModel:
    """Random model; experts have noise covariances with eigenvalues in [0.3, 2]."""
    g = random_gaussian_gate(rng, n, p) if gate == "gaussian" else random_softmax_gate(rng, n, p)
    experts = tuple(
        make_expert(
            rng.normal(scale=2.0, size=q),
            np.zeros((p, q)) if starred else rng.normal(size=(p, q)),
            random_spd(rng, q),
        )
        for _ in range(n)
    )
    return MoleModel(g, experts)
