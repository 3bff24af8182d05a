"""Experiment configuration and the runners behind the CLI subcommands.

Every runner is deterministic given the seed: random streams are derived
from ``(seed, purpose, n, coordinate)`` so results do not depend on the
order in which cells are evaluated.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import time
from dataclasses import dataclass, field, fields
from typing import Optional

import numpy as np

from . import combinators
from .combinators import assemble_joint_density, assemble_mo_mean, pair_unindex
from .errors import MomoleError, SchemaError
from .fitting import STARRED, FULL, Dataset, FitConfig, fit_curve, fit_em
from .gating import gate_eval
from .gauss import gaussian_product, log_density
from .metrics import GridDomain, coordinate_distances, induced_distance, induced_norm, per_coordinate_kl, uniform_norm
from .mole import MoleModel, is_starred, log_conditional_density, make_expert, mean
from .random_models import random_gaussian, random_mole, random_starred_mean_model
from .serialization import model_to_dict
from .targets import make_density, make_function

log = logging.getLogger(__name__)

KINDS = ("verify", "fit", "approx-mean", "approx-density")

TOLERANCES = {
    "gaussian_product": 1e-9,
    "sum_closure": 1e-9,
    "sum_simplex": 1e-12,
    "product_closure": 1e-9,
    "product_simplex": 1e-12,
    "norm_definiteness": 0.0,
    "norm_homogeneity": 1e-12,
    "norm_triangle": 1e-12,
}

DEFAULT_INSTANCES = {"gaussian_product": 1000, "sum": 200, "product": 200, "norms": 1000}

MEAN_TARGETS = ["sin", "cos"]
DENSITY_TARGETS = [
    {"family": "normal", "mean": "sin", "sd": 0.1},
    {"family": "normal", "mean": "square", "sd": 0.2},
]


@dataclass
class ExperimentConfig:
    """Fields of a JSON config file; CLI flags override them."""

    kind: str = "verify"
    seed: Optional[int] = None
    out: Optional[str] = None
    targets: Optional[list] = None
    n_schedule: list = field(default_factory=lambda: [2, 4, 8, 16])
    restarts: int = 5
    samples: int = 100_000
    train_samples: Optional[int] = None
    threshold: Optional[float] = None
    grid: dict = field(default_factory=lambda: {"lower": [0.0], "upper": [1.0]})
    mode: str = STARRED
    n: int = 2
    data: Optional[str] = None
    input_dim: int = 1
    instances: dict = field(default_factory=dict)
    corrupt: Optional[str] = None

    def validate(self) -> "ExperimentConfig":
        if self.kind not in KINDS:
            raise SchemaError("kind", f"expected one of {KINDS}, got {self.kind!r}")
        if self.seed is None:
            raise SchemaError("seed", "a seed is required (config field or --seed)")
        if not isinstance(self.seed, int) or self.seed < 0:
            raise SchemaError("seed", "must be a non-negative integer")
        ns = self.n_schedule
        if not ns or not all(isinstance(k, int) and k >= 1 for k in ns):
            raise SchemaError("n_schedule", "must be a non-empty list of positive integers")
        if any(b <= a for a, b in zip(ns, ns[1:])):
            raise SchemaError("n_schedule", "must be strictly increasing")
        if self.restarts < 1:
            raise SchemaError("restarts", "must be at least 1")
        if self.samples < 2:
            raise SchemaError("samples", "must be at least 2")
        if self.mode not in (STARRED, FULL):
            raise SchemaError("mode", f"expected 'starred' or 'full', got {self.mode!r}")
        if self.corrupt not in (None, "add", "multiply"):
            raise SchemaError("corrupt", "expected null, 'add' or 'multiply'")
        unknown = set(self.instances) - set(DEFAULT_INSTANCES)
        if unknown:
            raise SchemaError("instances", f"unknown checks {sorted(unknown)}")
        for key in ("lower", "upper"):
            if key not in self.grid:
                raise SchemaError(f"grid.{key}", "missing field")
        return self

    def grid_domain(self) -> GridDomain:
        try:
            if "points" in self.grid:
                return GridDomain(self.grid["lower"], self.grid["upper"], self.grid["points"])
            return GridDomain.default(self.grid["lower"], self.grid["upper"])
        except (MomoleError, ValueError, TypeError) as exc:
            raise SchemaError("grid", str(exc)) from None


def load_config(path) -> ExperimentConfig:
    with open(path) as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SchemaError("", f"invalid JSON ({exc})") from None
    return config_from_dict(raw)


def config_from_dict(raw) -> ExperimentConfig:
    if not isinstance(raw, dict):
        raise SchemaError("", "config must be a JSON object")
    names = {f.name for f in fields(ExperimentConfig)}
    unknown = set(raw) - names
    if unknown:
        raise SchemaError(sorted(unknown)[0], "unknown config field")
    return ExperimentConfig(**raw)


def _rng(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng([seed, *key])


def _fmt(x) -> str:
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def write_csv(rows: list, columns: list, path=None) -> str:
    """Render rows as CSV with a header; write to ``path`` when given."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_fmt(row[c]) for c in columns])
    text = buf.getvalue()
    if path:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    return text


# ---------------------------------------------------------------------------
# verify


@dataclass
class CheckResult:
    check: str
    instances: int
    max_error: float
    tolerance: float
    failure: Optional[dict] = None

    @property
    def passed(self) -> bool:
        return self.failure is None


def _corrupted_add(m1, m2):
    out = combinators.add_mean_models(m1, m2)
    a = out.intercepts.copy()
    a[0] += 1e-3
    return type(out)(out.gate, a, out.slopes)


def _corrupted_multiply(f1, f2):
    out = combinators.multiply_densities(f1, f2)
    e0 = out.experts[0]
    bad = make_expert(e0.intercept + 1e-3, e0.slope, e0.covariance)
    return MoleModel(out.gate, (bad,) + out.experts[1:])


def _track(result: CheckResult, err: float, tol: float, failure_fn):
    if err > result.max_error or np.isnan(err):
        result.max_error = float(err)
    if result.failure is None and not err <= tol:
        result.failure = failure_fn()


def check_gaussian_product(rng, count: int) -> CheckResult:
    res = CheckResult("gaussian_product", count, 0.0, TOLERANCES["gaussian_product"])
    dims = (1, 2, 3, 5)
    for i in range(count):
        p = dims[i % len(dims)]
        g1, g2 = random_gaussian(rng, p), random_gaussian(rng, p)
        X = rng.normal(scale=2.0, size=(10, p))
        prod = gaussian_product(g1, g2)
        lhs = log_density(g1, X) + log_density(g2, X)
        rhs = prod.log_scale + log_density(prod.gaussian, X)
        errs = np.abs(np.expm1(rhs - lhs))
        k = int(np.argmax(errs))
        _track(res, errs[k], res.tolerance, lambda: {
            "instance": i,
            "g1": {"mean": g1.mean.tolist(), "covariance": g1.covariance.tolist()},
            "g2": {"mean": g2.mean.tolist(), "covariance": g2.covariance.tolist()},
            "x": X[k].tolist(),
            "error": float(errs[k]),
        })
    return res


def _mean_grid(p: int) -> np.ndarray:
    if p == 1:
        return np.linspace(-3.0, 3.0, 100)[:, None]
    return GridDomain([-3.0, -3.0], [3.0, 3.0], (10, 10)).points()


def check_sum_closure(rng, count: int, corrupt: bool = False) -> list:
    add = _corrupted_add if corrupt else combinators.add_mean_models
    res = CheckResult("sum_closure", count, 0.0, TOLERANCES["sum_closure"])
    simplex = CheckResult("sum_simplex", count, 0.0, TOLERANCES["sum_simplex"])
    for i in range(count):
        p, q = (1, 2)[i % 2], (1, 3)[(i // 2) % 2]
        n1, n2 = rng.integers(1, 5, size=2)
        m1 = random_starred_mean_model(rng, int(n1), p, q)
        m2 = random_starred_mean_model(rng, int(n2), p, q)
        m12 = add(m1, m2)
        X = _mean_grid(p)
        errs = np.linalg.norm(mean(m12, X) - mean(m1, X) - mean(m2, X), axis=1)
        k = int(np.argmax(errs))

        def failure():
            z = int(np.argmax(gate_eval(m12.gate, X[k]))) + 1
            s, t = pair_unindex(z, m1.n, m2.n)
            return {"instance": i, "s": s, "t": t, "x": X[k].tolist(), "error": float(errs[k]),
                    "m1": model_to_dict(m1), "m2": model_to_dict(m2)}

        count_ok = m12.n == m1.n * m2.n and is_starred(m12)
        _track(res, errs[k] if count_ok else np.inf, res.tolerance, failure)
        w = m12.gate.weights
        s_err = abs(float(np.sum(w)) - 1.0) if np.all(w > 0) else np.inf
        _track(simplex, s_err, simplex.tolerance, lambda: {"instance": i, "weights": w.tolist()})
    return [res, simplex]


def check_product_closure(rng, count: int, corrupt: bool = False) -> list:
    mult = _corrupted_multiply if corrupt else combinators.multiply_densities
    res = CheckResult("product_closure", count, 0.0, TOLERANCES["product_closure"])
    simplex = CheckResult("product_simplex", count, 0.0, TOLERANCES["product_simplex"])
    for i in range(count):
        p = (1, 2)[i % 2]
        q, r = (int(v) for v in rng.integers(1, 3, size=2))
        n1, n2 = (int(v) for v in rng.integers(1, 5, size=2))
        f1, f2 = random_mole(rng, n1, p, q), random_mole(rng, n2, p, r)
        f12 = mult(f1, f2)
        X = rng.normal(scale=2.0, size=(50, p))
        Y = rng.normal(scale=3.0, size=(50, q + r))
        lhs = log_conditional_density(f1, Y[:, :q], X) + log_conditional_density(f2, Y[:, q:], X)
        rhs = log_conditional_density(f12, Y, X)
        errs = np.abs(np.expm1(rhs - lhs))
        k = int(np.argmax(errs))

        def failure():
            z = int(np.argmax(gate_eval(f12.gate, X[k]))) + 1
            s, t = pair_unindex(z, f1.n, f2.n)
            return {"instance": i, "s": s, "t": t, "x": X[k].tolist(), "y": Y[k].tolist(),
                    "error": float(errs[k]), "f1": model_to_dict(f1), "f2": model_to_dict(f2)}

        ok = f12.n == f1.n * f2.n and f12.q == q + r and is_starred(f12)
        _track(res, errs[k] if ok else np.inf, res.tolerance, failure)
        w = f12.gate.weights
        s_err = abs(float(np.sum(w)) - 1.0) if np.all(w > 0) else np.inf
        _track(simplex, s_err, simplex.tolerance, lambda: {"instance": i, "weights": w.tolist()})
    return [res, simplex]


def check_norm_axioms(rng, count: int) -> list:
    """Norm axioms for the induced norm on random grid functions."""
    grid = GridDomain([0.0], [1.0], (21,))
    M = grid.size
    definite = CheckResult("norm_definiteness", count, 0.0, TOLERANCES["norm_definiteness"])
    homog = CheckResult("norm_homogeneity", count, 0.0, TOLERANCES["norm_homogeneity"])
    tri = CheckResult("norm_triangle", count, 0.0, TOLERANCES["norm_triangle"])
    for i in range(count):
        q = int(rng.integers(1, 4))
        U = rng.normal(size=(M, q))
        V = rng.normal(size=(M, q))
        if i % 10 == 0:
            U[:] = 0.0
        c = float(rng.normal(scale=3.0))
        nu = induced_norm(lambda _: U, grid)
        zero = not np.any(U)
        bad = nu < 0 or (nu == 0.0) != zero
        _track(definite, 1.0 if bad else 0.0, definite.tolerance, lambda: {"instance": i, "norm": nu})
        h_err = abs(induced_norm(lambda _: c * U, grid) - abs(c) * nu)
        _track(homog, h_err, homog.tolerance, lambda: {"instance": i, "scale": c})
        t_err = induced_norm(lambda _: U + V, grid) - nu - induced_norm(lambda _: V, grid)
        _track(tri, max(t_err, 0.0), tri.tolerance, lambda: {"instance": i, "excess": t_err})
    return [definite, homog, tri]


def run_verify(cfg: ExperimentConfig) -> list:
    counts = {**DEFAULT_INSTANCES, **cfg.instances}
    results = []
    results.append(check_gaussian_product(_rng(cfg.seed, 1), counts["gaussian_product"]))
    results += check_sum_closure(_rng(cfg.seed, 2), counts["sum"], corrupt=cfg.corrupt == "add")
    results += check_product_closure(_rng(cfg.seed, 3), counts["product"], corrupt=cfg.corrupt == "multiply")
    results += check_norm_axioms(_rng(cfg.seed, 4), counts["norms"])
    return results


VERIFY_COLUMNS = ["check", "instances", "max_error", "tolerance", "passed"]


def verify_rows(results: list) -> list:
    return [
        {"check": r.check, "instances": r.instances, "max_error": r.max_error,
         "tolerance": r.tolerance, "passed": int(r.passed)}
        for r in results
    ]


# ---------------------------------------------------------------------------
# approx-mean

MEAN_COLUMNS = ["n", "coordinate", "coordinate_error", "univariate_error", "induced_distance", "components", "status"]


def run_approx_mean(cfg: ExperimentConfig):
    """Fit each target coordinate, assemble the multi-output mean, measure.

    Returns ``(rows, timings)``; timings are kept out of the rows so that
    the CSV is reproducible.
    """
    targets = [make_function(t, f"targets[{j}]") for j, t in enumerate(cfg.targets or MEAN_TARGETS)]
    grid = cfg.grid_domain()
    train = cfg.train_samples or 2000
    q = len(targets)
    rows, timings = [], []
    for n in cfg.n_schedule:
        t0 = time.perf_counter()
        try:
            models = [
                fit_curve(u, grid, n, cfg.restarts, _rng(cfg.seed, 10, n, j), n_samples=train)
                for j, u in enumerate(targets)
            ]
            mo = assemble_mo_mean(models)
        except MomoleError as exc:
            log.warning("n=%d: fit failed: %s", n, exc)
            for j in range(q):
                rows.append({"n": n, "coordinate": j + 1, "coordinate_error": float("nan"),
                             "univariate_error": float("nan"), "induced_distance": float("nan"),
                             "components": 0, "status": f"failed: {exc}"})
            continue

        def u_vec(X):
            return np.stack([u(X) for u in targets], axis=1)

        coord = coordinate_distances(lambda X: mean(mo, X), u_vec, grid)
        induced = induced_distance(lambda X: mean(mo, X), u_vec, grid)
        for j, (m, u) in enumerate(zip(models, targets)):
            uni = uniform_norm(lambda X: mean(m, X)[:, 0] - u(X), grid)
            rows.append({"n": n, "coordinate": j + 1, "coordinate_error": float(coord[j]),
                         "univariate_error": uni, "induced_distance": induced,
                         "components": mo.n, "status": "ok"})
        elapsed = time.perf_counter() - t0
        timings.append((n, elapsed))
        log.info("n=%d: induced distance %.6g (%.2fs)", n, induced, elapsed)
    return rows, timings


# ---------------------------------------------------------------------------
# approx-density

DENSITY_COLUMNS = ["n", "coordinate", "kl", "standard_error", "components", "status"]


def run_approx_density(cfg: ExperimentConfig):
    """Fit univariate starred models per coordinate, assemble the joint, estimate KL."""
    grid = cfg.grid
    specs = cfg.targets or DENSITY_TARGETS
    targets = [make_density(t, grid["lower"], grid["upper"], f"targets[{j}]") for j, t in enumerate(specs)]
    train = cfg.train_samples or 20_000
    fit_cfg = FitConfig(restarts=cfg.restarts)
    data = []
    for j, tgt in enumerate(targets):
        X, Y = tgt.sample(_rng(cfg.seed, 20, j), train)
        data.append(Dataset(X, Y))
    rows, timings = [], []
    for n in cfg.n_schedule:
        t0 = time.perf_counter()
        try:
            models = [fit_em(d, n, STARRED, fit_cfg, _rng(cfg.seed, 21, n, j)).model for j, d in enumerate(data)]
            joint = assemble_joint_density(models)
            # Same evaluation draws for every n.
            est = per_coordinate_kl(
                [t.sample for t in targets],
                [t.log_density for t in targets],
                joint,
                cfg.samples,
                _rng(cfg.seed, 22),
            )
        except MomoleError as exc:
            log.warning("n=%d: failed: %s", n, exc)
            for j in range(len(targets)):
                rows.append({"n": n, "coordinate": j + 1, "kl": float("nan"), "standard_error": float("nan"),
                             "components": 0, "status": f"failed: {exc}"})
            continue
        for j, e in enumerate(est):
            rows.append({"n": n, "coordinate": j + 1, "kl": e.value, "standard_error": e.standard_error,
                         "components": joint.n, "status": "ok"})
        elapsed = time.perf_counter() - t0
        timings.append((n, elapsed))
        log.info("n=%d: KL %s (%.2fs)", n, [round(e.value, 5) for e in est], elapsed)
    return rows, timings


def final_rows(rows: list, n_schedule: list) -> list:
    return [r for r in rows if r["n"] == n_schedule[-1]]
