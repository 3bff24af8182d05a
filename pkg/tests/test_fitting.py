import numpy as np
import pytest

from momole.errors import InsufficientDataError
from momole.fitting import Dataset, FitConfig, fit_curve, fit_em, polish_mean
from momole.gating import GaussianGate
from momole.gauss import cholesky_factor
from momole.metrics import GridDomain, uniform_norm
from momole.mole import is_starred, mean, sample_response
from momole.random_models import random_mole

UNIT = GridDomain.default([0.0], [1.0])


def _monotone(trace, slack=1e-8):
    return bool(np.all(np.diff(trace) >= -slack))


def test_single_expert_recovery(rng):
    N = 4000
    X = rng.normal(size=(N, 1))
    Y = 1.5 + 0.5 * rng.standard_normal((N, 1))
    rep = fit_em(Dataset(X, Y), 1, "starred", FitConfig(restarts=1), rng)
    a = rep.model.experts[0].intercept[0]
    assert abs(a - 1.5) < 4 * 0.5 / np.sqrt(N)
    assert _monotone(rep.log_likelihood_trace)
    assert rep.converged


def test_full_mode_recovers_line(rng):
    N = 4000
    X = rng.normal(size=(N, 2))
    Y = 1.0 + X @ np.array([[2.0], [-1.0]]) + 0.1 * rng.standard_normal((N, 1))
    rep = fit_em(Dataset(X, Y), 1, "full", FitConfig(restarts=1), rng)
    e = rep.model.experts[0]
    assert e.intercept[0] == pytest.approx(1.0, abs=0.02)
    np.testing.assert_allclose(e.slope[:, 0], [2.0, -1.0], atol=0.02)


def test_two_clusters(rng):
    N = 2000
    z = rng.integers(0, 2, size=N)
    X = np.where(z == 0, -5.0, 5.0)[:, None] + rng.standard_normal((N, 1))
    Y = np.where(z == 0, 1.0, -1.0)[:, None] + 0.3 * rng.standard_normal((N, 1))
    rep = fit_em(Dataset(X, Y), 2, "starred", FitConfig(restarts=5), rng)
    centres = sorted(c.mean[0] for c in rep.model.gate.components)
    assert abs(centres[0] + 5.0) < 0.5 and abs(centres[1] - 5.0) < 0.5
    assert rep.restart_index in range(5)
    assert rep.log_likelihood == max(rep.final_log_likelihoods)


def test_em_ascent_random_datasets():
    for seed in range(50):
        r = np.random.default_rng(seed)
        p, q = int(r.integers(1, 3)), int(r.integers(1, 3))
        truth = random_mole(r, int(r.integers(1, 4)), p, q, starred=bool(seed % 2))
        X = r.normal(scale=2.0, size=(300, p))
        _, Y = sample_response(truth, X, r)
        mode = "starred" if seed % 3 else "full"
        rep = fit_em(Dataset(X, Y), int(r.integers(1, 5)), mode, FitConfig(restarts=1, max_iter=200), r)
        assert _monotone(rep.log_likelihood_trace)
        if mode == "starred":
            assert is_starred(rep.model)


def test_fitted_parameters_valid(rng):
    X = rng.uniform(size=(500, 2))
    Y = np.sin(4 * X[:, :1]) + 0.01 * rng.standard_normal((500, 1))
    model = fit_em(Dataset(X, Y), 5, "full", FitConfig(restarts=2), rng).model
    assert isinstance(model.gate, GaussianGate)
    w = model.gate.weights
    assert np.all(w > 0) and abs(w.sum() - 1) < 1e-12
    for comp in model.gate.components:
        cholesky_factor(comp.covariance)
    for e in model.experts:
        cholesky_factor(e.covariance)


def test_too_few_samples(rng):
    with pytest.raises(InsufficientDataError):
        fit_em(Dataset(rng.normal(size=(29, 1)), rng.normal(size=(29, 1))), 3)


def test_row_permutation_invariance(rng):
    X = rng.normal(size=(400, 1))
    Y = np.tanh(X) + 0.1 * rng.standard_normal((400, 1))
    init = [[-1.0], [0.0], [1.0]]
    cfg = FitConfig(restarts=1, max_iter=50)
    a = fit_em(Dataset(X, Y), 3, "starred", cfg, np.random.default_rng(1), init_means=init).model
    perm = rng.permutation(400)
    b = fit_em(Dataset(X[perm], Y[perm]), 3, "starred", cfg, np.random.default_rng(2), init_means=init).model
    np.testing.assert_allclose(a.intercepts, b.intercepts, atol=1e-8)
    np.testing.assert_allclose(a.gate.log_weights, b.gate.log_weights, atol=1e-8)


def test_seeded_fits_reproducible():
    X = np.linspace(0, 1, 300)[:, None]
    Y = X**2
    a = fit_em(Dataset(X, Y), 3, "starred", FitConfig(restarts=2), np.random.default_rng(4)).model
    b = fit_em(Dataset(X, Y), 3, "starred", FitConfig(restarts=2), np.random.default_rng(4)).model
    np.testing.assert_array_equal(a.intercepts, b.intercepts)


def test_fit_curve_constant(rng):
    model = fit_curve(lambda X: np.full(len(X), 2.5), UNIT, 1, 1, rng)
    assert is_starred(model)
    assert uniform_norm(lambda X: mean(model, X)[:, 0] - 2.5, UNIT) < 1e-2


def _sin(X):
    return np.sin(2 * np.pi * X[:, 0])


def test_fit_curve_sin_and_trend():
    errs = {}
    for n in (2, 16):
        model = fit_curve(_sin, UNIT, n, 5, np.random.default_rng(11))
        assert is_starred(model) and model.n == n
        errs[n] = uniform_norm(lambda X: mean(model, X)[:, 0] - _sin(X), UNIT)
    assert errs[16] < 0.1
    assert errs[16] <= errs[2]


def test_polish_never_worse_on_training_data(rng):
    X = rng.uniform(size=(500, 1))
    y = _sin(X)[:, None]
    from momole.mole import mean_model_of

    raw = mean_model_of(fit_em(Dataset(X, y), 6, "starred", FitConfig(restarts=1), rng).model)
    polished = polish_mean(raw, X, y)
    assert is_starred(polished)
    assert np.max(np.abs(mean(polished, X) - y)) <= np.max(np.abs(mean(raw, X) - y))
