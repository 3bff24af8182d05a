"""Named target functions and conditional density families for the harness.

Functions act on the first input coordinate and map an (M, p) array to M
values. Density targets are ``N(y; fn(x), sd^2)`` with ``x`` uniform on a box.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.stats import norm

from .errors import SchemaError


def _sin(params):
    freq = float(params.get("frequency", 1.0))
    return lambda X: np.sin(2.0 * np.pi * freq * X[:, 0])


def _cos(params):
    freq = float(params.get("frequency", 1.0))
    return lambda X: np.cos(2.0 * np.pi * freq * X[:, 0])


def _polynomial(params):
    coefs = [float(c) for c in params.get("coefficients", [0.0, 0.0, 1.0])]
    # coefficients in increasing degree
    return lambda X: np.polynomial.polynomial.polyval(X[:, 0], coefs)


def _square(params):
    return _polynomial({"coefficients": [0.0, 0.0, 1.0]})


def _constant(params):
    value = float(params.get("value", 1.0))
    return lambda X: np.full(X.shape[0], value)


FUNCTIONS = {
    "sin": _sin,
    "cos": _cos,
    "polynomial": _polynomial,
    "square": _square,
    "constant": _constant,
}


def make_function(spec, path: str = "target") -> Callable:
    """Build a target from ``"sin"`` or ``{"name": "constant", "value": 3}``."""
    if isinstance(spec, str):
        spec = {"name": spec}
    if not isinstance(spec, dict) or "name" not in spec:
        raise SchemaError(path, "expected a target name or an object with 'name'")
    name = spec["name"]
    if name not in FUNCTIONS:
        raise SchemaError(f"{path}.name", f"unknown target {name!r}; known: {sorted(FUNCTIONS)}")
    try:
        return FUNCTIONS[name](spec)
    except (TypeError, ValueError) as exc:
        raise SchemaError(path, str(exc)) from None


@dataclass(frozen=True, eq=False)
class NormalTarget:
    """``Y | X = x ~ N(mean_fn(x), sd^2)``, ``X ~ Uniform(box)``."""

    mean_fn: Callable
    sd: float
    lower: np.ndarray
    upper: np.ndarray

    def sample(self, rng: np.random.Generator, size: int):
        """Joint draws ``(X, Y)`` with shapes (size, p) and (size, 1)."""
        X = self.lower + (self.upper - self.lower) * rng.random((size, self.lower.shape[0]))
        Y = self.mean_fn(X)[:, None] + self.sd * rng.standard_normal((size, 1))
        return X, Y

    def log_density(self, Y, X) -> np.ndarray:
        Y = np.asarray(Y, dtype=float).reshape(-1)
        return norm.logpdf(Y, loc=self.mean_fn(np.atleast_2d(X)), scale=self.sd)


def make_density(spec, lower, upper, path: str = "target") -> NormalTarget:
    """Build ``{"family": "normal", "mean": <function spec>, "sd": 0.1}``."""
    if not isinstance(spec, dict):
        raise SchemaError(path, "expected an object")
    family = spec.get("family", "normal")
    if family != "normal":
        raise SchemaError(f"{path}.family", f"unknown density family {family!r}")
    if "mean" not in spec:
        raise SchemaError(f"{path}.mean", "missing field")
    sd = spec.get("sd", 1.0)
    if not isinstance(sd, (int, float)) or sd <= 0:
        raise SchemaError(f"{path}.sd", "must be a positive number")
    return NormalTarget(
        make_function(spec["mean"], f"{path}.mean"),
        float(sd),
        np.atleast_1d(np.asarray(lower, dtype=float)),
        np.atleast_1d(np.asarray(upper, dtype=float)),
    )
