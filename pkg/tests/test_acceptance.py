"""Acceptance suite: one test per criterion, each reporting a PASS/FAIL line.

Run under pytest (the lines appear in the terminal summary) or directly with
``python tests/test_acceptance.py``.
"""

import json
import time

import numpy as np
import pytest
from scipy.integrate import quad

from momole.combinators import assemble_joint_density, assemble_mo_mean, multiply_densities
from momole.errors import SchemaError
from momole.experiments import (
    ExperimentConfig,
    check_gaussian_product,
    check_sum_closure,
    check_product_closure,
    check_norm_axioms,
    run_approx_density,
    run_approx_mean,
)
from momole.fitting import Dataset, FitConfig, fit_em
from momole.gating import gate_eval, gaussian_gate_to_softmax
from momole.gauss import cholesky_factor
from momole.metrics import GridDomain, induced_distance, kl_divergence_mc, uniform_norm
from momole.mole import conditional_density, is_starred, log_conditional_density, mean, mean_model_of, sample_response
from momole.random_models import (
    random_gaussian_gate,
    random_mole,
    random_shared_gaussian_gate,
    random_softmax_gate,
    random_starred_mean_model,
)
from momole.serialization import load_model, loads, model_to_dict, save_model

SEED = 20240611
RESULTS = {}


def report(number, name, passed, detail):
    line = f"{'PASS' if passed else 'FAIL'}  [{number:2d}] {name}: {detail}"
    RESULTS[number] = line
    print(line)
    return passed


def _rng(k):
    return np.random.default_rng([SEED, k])


def _timed(fn):
    t0 = time.perf_counter()
    out = fn()
    return out, time.perf_counter() - t0


def test_01_gaussian_product_identity():
    res, secs = _timed(lambda: check_gaussian_product(_rng(1), 1000))
    ok = res.passed and secs < 10
    assert report(1, "Gaussian product identity", ok,
                  f"max rel error {res.max_error:.2e} (< 1e-9) over 1000 pairs, {secs:.1f}s (< 10s)")


def test_02_sum_closure():
    res, secs = _timed(lambda: check_sum_closure(_rng(2), 200))
    total, simplex = res
    ok = total.passed and simplex.passed and secs < 30
    assert report(2, "mean-model sum closure", ok,
                  f"sum error {total.max_error:.2e} (< 1e-9), component counts n1*n2, "
                  f"simplex error {simplex.max_error:.2e} (< 1e-12), {secs:.1f}s (< 30s)")


def test_03_product_closure():
    def run():
        checks = check_product_closure(_rng(3), 200)
        rng = _rng(31)
        pd_ok = True
        for _ in range(200):
            p = int(rng.integers(1, 3))
            f1 = random_mole(rng, int(rng.integers(1, 5)), p, int(rng.integers(1, 3)))
            f2 = random_mole(rng, int(rng.integers(1, 5)), p, int(rng.integers(1, 3)))
            for e in multiply_densities(f1, f2).experts:
                try:
                    cholesky_factor(e.covariance)
                except Exception:
                    pd_ok = False
        return checks, pd_ok

    ((prod, simplex), pd_ok), secs = _timed(run)
    ok = prod.passed and simplex.passed and pd_ok and secs < 30
    assert report(3, "density product closure", ok,
                  f"product rel error {prod.max_error:.2e} (< 1e-9), block covariances PD={pd_ok}, {secs:.1f}s (< 30s)")


def test_04_joint_assembly_marginalizes():
    def run():
        rng = _rng(4)
        fact_err = marg_err = 0.0
        for _ in range(20):
            f1 = random_mole(rng, int(rng.integers(1, 4)), 1, 1)
            f2 = random_mole(rng, int(rng.integers(1, 4)), 1, 1)
            joint = assemble_joint_density([f1, f2])
            x = rng.normal(size=1)
            Y = rng.normal(scale=2.0, size=(50, 2))
            lhs = log_conditional_density(f1, Y[:, :1], x) + log_conditional_density(f2, Y[:, 1:], x)
            fact_err = max(fact_err, float(np.max(np.abs(np.expm1(log_conditional_density(joint, Y, x) - lhs)))))
            y1 = float(rng.normal(scale=2.0))
            centres = [e.intercept[0] for e in f2.experts]
            val, _ = quad(lambda y2: conditional_density(joint, np.array([y1, y2]), x),
                          min(centres) - 20, max(centres) + 20, points=centres, limit=200,
                          epsabs=1e-12, epsrel=1e-12)
            marg_err = max(marg_err, abs(val - conditional_density(f1, np.array([y1]), x)))
        return fact_err, marg_err

    (fact_err, marg_err), secs = _timed(run)
    ok = fact_err < 1e-9 and marg_err < 1e-6 and secs < 30
    assert report(4, "two-output joint assembly", ok,
                  f"factorization rel error {fact_err:.2e}, quadrature marginal error {marg_err:.2e} (< 1e-6) "
                  f"at 20 x, {secs:.1f}s (< 30s)")


def test_05_induced_distance_budget():
    rng = _rng(5)
    grid = GridDomain.default([0.0], [1.0])
    targets = [lambda X: np.sin(2 * np.pi * X[:, 0]), lambda X: np.cos(2 * np.pi * X[:, 0]), lambda X: X[:, 0] ** 2]
    worst = 0.0
    for _ in range(50):
        q = int(rng.integers(2, 4))
        models = [random_starred_mean_model(rng, int(rng.integers(1, 5)), 1, 1) for _ in range(q)]
        mo = assemble_mo_mean(models)
        total = induced_distance(lambda X: mean(mo, X), lambda X: np.stack([u(X) for u in targets[:q]], 1), grid)
        parts = sum(uniform_norm(lambda X: mean(m, X)[:, 0] - u(X), grid) for m, u in zip(models, targets))
        worst = max(worst, abs(total - parts))
    assert report(5, "induced distance equals sum of coordinate errors", worst <= 1e-12,
                  f"max |d_induced - sum d_j| {worst:.2e} (<= 1e-12) over 50 assemblies")


def test_06_norm_axioms():
    checks = check_norm_axioms(_rng(6), 1000)
    ok = all(c.passed for c in checks)
    assert report(6, "induced norm axioms", ok,
                  ", ".join(f"{c.check} {c.max_error:.1e}" for c in checks) + " over 1000 cases each")


def test_07_gate_simplex():
    rng = _rng(7)
    worst, positive = 0.0, True
    for i in range(10_000):
        p = int(rng.integers(1, 4))
        n = int(rng.integers(1, 6))
        gate = random_gaussian_gate(rng, n, p) if i % 2 else random_softmax_gate(rng, n, p)
        x = rng.normal(size=p)
        x *= 10.0 ** rng.uniform(-2, 3) / np.linalg.norm(x)
        g = gate_eval(gate, x)
        positive &= bool(np.all(g > 0))
        worst = max(worst, abs(float(np.sum(g)) - 1.0))
    ok = positive and worst <= 1e-12
    assert report(7, "gate simplex invariant", ok,
                  f"all positive={positive}, max |sum-1| {worst:.2e} (<= 1e-12), 10^4 cases, |x| up to 1e3")


def test_08_softmax_from_gaussian_gate():
    rng = _rng(8)
    worst = 0.0
    for _ in range(100):
        p, n = int(rng.integers(1, 4)), int(rng.integers(1, 6))
        gate = random_shared_gaussian_gate(rng, n, p)
        soft = gaussian_gate_to_softmax(gate)
        X = rng.normal(scale=2.0, size=(100, p))
        worst = max(worst, float(np.max(np.abs(gate_eval(gate, X) - gate_eval(soft, X)))))
    assert report(8, "shared-covariance Gaussian gate as soft-max", worst < 1e-10,
                  f"max pointwise difference {worst:.2e} (< 1e-10) over 100 gates x 100 points")


def test_09_density_normalization_and_mean():
    rng = _rng(9)
    norm_err = mean_err = 0.0
    for i in range(100):
        p = int(rng.integers(1, 4))
        model = random_mole(rng, int(rng.integers(1, 5)), p, 1, starred=bool(i % 2),
                            gate="gaussian" if i % 3 else "softmax")
        x = rng.normal(size=p)
        centres = [float(e.intercept[0] + e.slope[:, 0] @ x) for e in model.experts]
        lo, hi = min(centres) - 25, max(centres) + 25
        kw = dict(points=centres, limit=200, epsabs=1e-12, epsrel=1e-12)
        total, _ = quad(lambda y: conditional_density(model, np.array([y]), x), lo, hi, **kw)
        first, _ = quad(lambda y: y * conditional_density(model, np.array([y]), x), lo, hi, **kw)
        norm_err = max(norm_err, abs(total - 1.0))
        mean_err = max(mean_err, abs(first - mean(model, x)[0]))
    ok = norm_err < 1e-6 and mean_err < 1e-6
    assert report(9, "density normalization and mean consistency", ok,
                  f"max |integral-1| {norm_err:.2e}, max |first moment - mean| {mean_err:.2e} (< 1e-6), 100 models")


def test_10_kl_estimator_calibration():
    def gauss_logpdf(mu, sd):
        return lambda Y, X: -0.5 * ((Y[:, 0] - mu) / sd) ** 2 - np.log(sd) - 0.5 * np.log(2 * np.pi)

    def sampler(rng, n):
        return rng.uniform(size=(n, 1)), rng.standard_normal((n, 1))

    cases = [("shift 0.5", 0.5, 1.0), ("shift 1.5", 1.5, 1.0), ("scale 2", 0.0, 2.0), ("scale 1.3", 0.0, 1.3)]

    def run():
        out = []
        for k, (name, mu, sd) in enumerate(cases):
            exact = np.log(sd) + (1.0 + mu**2) / (2 * sd**2) - 0.5
            est = kl_divergence_mc(sampler, gauss_logpdf(0.0, 1.0), gauss_logpdf(mu, sd), 100_000, _rng(100 + k))
            out.append((name, abs(est.value - exact) / est.standard_error))
        return out

    zs, secs = _timed(run)
    ok = all(z < 4 for _, z in zs) and secs < 10
    assert report(10, "KL estimator calibration", ok,
                  ", ".join(f"{n}: {z:.2f} SE" for n, z in zs) + f" (< 4 SE), N=1e5, {secs:.1f}s (< 10s)")


def test_11_em_ascent():
    monotone, starred = True, True
    worst_drop = 0.0
    for k in range(50):
        r = _rng(1100 + k)
        p, q = int(r.integers(1, 3)), int(r.integers(1, 3))
        truth = random_mole(r, int(r.integers(1, 4)), p, q, starred=bool(k % 2))
        X = r.normal(scale=2.0, size=(400, p))
        _, Y = sample_response(truth, X, r)
        mode = "starred" if k % 2 == 0 else "full"
        rep = fit_em(Dataset(X, Y), int(r.integers(1, 5)), mode, FitConfig(restarts=1), r)
        drop = float(-np.min(np.diff(rep.log_likelihood_trace), initial=0.0))
        worst_drop = max(worst_drop, drop)
        monotone &= drop <= 1e-8
        if mode == "starred":
            starred &= is_starred(rep.model)
    ok = monotone and starred
    assert report(11, "EM ascent", ok,
                  f"largest trace decrease {worst_drop:.2e} (<= 1e-8), starred fits exactly starred={starred}, 50 datasets")


@pytest.mark.slow
def test_12_mean_approximation_trend():
    cfg = ExperimentConfig(kind="approx-mean", seed=7, n_schedule=[2, 4, 8, 16], restarts=5).validate()
    (rows, _), secs = _timed(lambda: run_approx_mean(cfg))
    best = [next(r["induced_distance"] for r in rows if r["n"] == n) for n in cfg.n_schedule]
    nonincreasing = all(b <= a for a, b in zip(best, best[1:]))
    ok = nonincreasing and best[-1] < 0.2 and secs < 120
    assert report(12, "mean approximation trend", ok,
                  "induced distance " + ", ".join(f"n={n}: {d:.3g}" for n, d in zip(cfg.n_schedule, best))
                  + f"; nonincreasing={nonincreasing}, < 0.2 at n=16, {secs:.0f}s (< 120s)")


@pytest.mark.slow
def test_13_density_approximation_trend():
    cfg = ExperimentConfig(kind="approx-density", seed=7, n_schedule=[2, 4, 8, 16], restarts=5,
                           samples=100_000).validate()
    (rows, _), secs = _timed(lambda: run_approx_density(cfg))
    ok = secs < 300
    parts = []
    for j in (1, 2):
        cells = [next(r for r in rows if r["n"] == n and r["coordinate"] == j) for n in cfg.n_schedule]
        trend = all(
            b["kl"] <= a["kl"] + 2 * np.hypot(a["standard_error"], b["standard_error"])
            for a, b in zip(cells, cells[1:])
        )
        ok &= trend and cells[-1]["kl"] < 0.25
        parts.append(f"coord {j}: " + ", ".join(f"{c['kl']:.3g}" for c in cells) + f" (trend ok={trend})")
    assert report(13, "density approximation trend", ok,
                  "; ".join(parts) + f"; KL < 0.25 at n=16, N=1e5, {secs:.0f}s (< 300s)")


def test_14_serialization(tmp_path):
    rng = _rng(14)
    worst = 0.0
    for gate in ("gaussian", "softmax"):
        model = random_mole(rng, 6, 2, 2, starred=False, gate=gate)
        path = tmp_path / f"{gate}.json"
        save_model(model, path)
        back = load_model(path)
        X, Y = rng.normal(size=(100, 2)), rng.normal(size=(100, 2))
        worst = max(worst, float(np.max(np.abs(conditional_density(back, Y, X) - conditional_density(model, Y, X)))))
        worst = max(worst, float(np.max(np.abs(mean(back, X) - mean(model, X)))))
    mm = mean_model_of(random_mole(rng, 4, 1, 3))
    X = rng.normal(size=(100, 1))
    worst = max(worst, float(np.max(np.abs(mean(loads(json.dumps(model_to_dict(mm))), X) - mean(mm, X)))))

    bad = model_to_dict(random_mole(rng, 3, 1, 1))
    w = np.exp(bad["gate"].pop("log_weights"))
    bad["gate"]["weights"] = (0.9 * w / w.sum()).tolist()
    empty = model_to_dict(random_mole(rng, 2, 1, 1))
    empty["experts"] = []
    paths = []
    for doc in (bad, empty):
        try:
            loads(json.dumps(doc))
            paths.append(None)
        except SchemaError as exc:
            paths.append(exc.path)
    ok = worst <= 1e-15 and paths == ["gate.weights", "experts"]
    assert report(14, "model serialization", ok,
                  f"round-trip max difference {worst:.1e} (<= 1e-15) at 100 points; rejected fields {paths}")


if __name__ == "__main__":
    import sys
    import tempfile
    from pathlib import Path

    failed = 0
    for name, fn in sorted((k, v) for k, v in dict(globals()).items() if k.startswith("test_")):
        try:
            if name == "test_14_serialization":
                with tempfile.TemporaryDirectory() as d:
                    fn(Path(d))
            else:
                fn()
        except AssertionError:
            failed += 1
    sys.exit(1 if failed else 0)
