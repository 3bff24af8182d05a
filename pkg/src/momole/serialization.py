"""JSON model files.

Layout::

    {"type": "mole" | "mean",
     "gate": {"kind": "gaussian", "log_weights": [...], "means": [...], "covariances": [...]}
           | {"kind": "softmax", "intercepts": [...], "slopes": [...]},
     "experts": [{"intercept": [...], "slope": [[...]], "covariance": [[...]]}, ...]}

Mean models omit ``covariance``. A Gaussian gate may give plain ``weights``
instead of ``log_weights``. Floats are written with ``repr`` so that a
save/load round trip is exact.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .errors import MomoleError, SchemaError
from .gating import GaussianGate, SoftmaxGate, WEIGHT_SUM_ATOL
from .gauss import make_gaussian
from .mole import AnyModel, MeanModel, MoleModel, make_expert


def _gate_to_dict(gate) -> dict:
    if isinstance(gate, SoftmaxGate):
        return {
            "kind": "softmax",
            "intercepts": gate.intercepts.tolist(),
            "slopes": gate.slopes.tolist(),
        }
    return {
        "kind": "gaussian",
        "log_weights": gate.log_weights.tolist(),
        "means": [c.mean.tolist() for c in gate.components],
        "covariances": [c.covariance.tolist() for c in gate.components],
    }


def model_to_dict(model: AnyModel) -> dict:
    if isinstance(model, MoleModel):
        experts = [
            {
                "intercept": e.intercept.tolist(),
                "slope": e.slope.tolist(),
                "covariance": e.covariance.tolist(),
            }
            for e in model.experts
        ]
        kind = "mole"
    else:
        experts = [
            {"intercept": a.tolist(), "slope": B.tolist()}
            for a, B in zip(model.intercepts, model.slopes)
        ]
        kind = "mean"
    return {"type": kind, "gate": _gate_to_dict(model.gate), "experts": experts}


def _field(d, key, path):
    if not isinstance(d, dict):
        raise SchemaError(path, "expected an object")
    if key not in d:
        raise SchemaError(f"{path}.{key}" if path else key, "missing field")
    return d[key]


def _array(value, path, ndim):
    try:
        a = np.asarray(value, dtype=float)
    except (TypeError, ValueError) as exc:
        raise SchemaError(path, f"expected numbers ({exc})") from None
    if a.ndim != ndim:
        raise SchemaError(path, f"expected a {ndim}-d array, got {a.ndim}-d")
    if not np.all(np.isfinite(a)):
        raise SchemaError(path, "non-finite number")
    return a


def _gate_from_dict(d):
    kind = _field(d, "kind", "gate")
    if kind == "softmax":
        c = _array(_field(d, "intercepts", "gate"), "gate.intercepts", 1)
        s = _array(_field(d, "slopes", "gate"), "gate.slopes", 2)
        try:
            return SoftmaxGate(c, s)
        except MomoleError as exc:
            raise SchemaError("gate", str(exc)) from None
    if kind != "gaussian":
        raise SchemaError("gate.kind", f"unknown gate kind {kind!r}")
    if "log_weights" in d:
        wpath = "gate.log_weights"
        lw = _array(d["log_weights"], wpath, 1)
    elif "weights" in d:
        wpath = "gate.weights"
        w = _array(d["weights"], wpath, 1)
        if np.any(w <= 0):
            raise SchemaError(wpath, "weights must be strictly positive")
        lw = np.log(w)
    else:
        raise SchemaError("gate.weights", "missing field")
    if abs(np.logaddexp.reduce(lw)) > WEIGHT_SUM_ATOL:
        raise SchemaError(wpath, f"weights sum to {np.exp(np.logaddexp.reduce(lw)):.17g}, not 1")
    means = _field(d, "means", "gate")
    covs = _field(d, "covariances", "gate")
    if not isinstance(means, list) or not isinstance(covs, list):
        raise SchemaError("gate.means", "expected lists of component parameters")
    if not (len(means) == len(covs) == lw.shape[0]):
        raise SchemaError("gate", "weights, means and covariances disagree on component count")
    comps = []
    for z, (m, c) in enumerate(zip(means, covs)):
        try:
            comps.append(make_gaussian(_array(m, f"gate.means[{z}]", 1), _array(c, f"gate.covariances[{z}]", 2)))
        except SchemaError:
            raise
        except MomoleError as exc:
            raise SchemaError(f"gate.covariances[{z}]", str(exc)) from None
    try:
        return GaussianGate(lw, tuple(comps))
    except MomoleError as exc:
        raise SchemaError("gate", str(exc)) from None


def model_from_dict(d) -> AnyModel:
    """Rebuild a model, re-checking every invariant.

    Raises
    ------
    SchemaError
        With the dotted path of the first offending field.
    """
    kind = _field(d, "type", "")
    if kind not in ("mole", "mean"):
        raise SchemaError("type", f"expected 'mole' or 'mean', got {kind!r}")
    gate = _gate_from_dict(_field(d, "gate", ""))
    experts = _field(d, "experts", "")
    if not isinstance(experts, list) or not experts:
        raise SchemaError("experts", "expected a non-empty list")
    try:
        if kind == "mole":
            built = []
            for z, e in enumerate(experts):
                path = f"experts[{z}]"
                a = _array(_field(e, "intercept", path), f"{path}.intercept", 1)
                B = _array(_field(e, "slope", path), f"{path}.slope", 2)
                C = _array(_field(e, "covariance", path), f"{path}.covariance", 2)
                try:
                    built.append(make_expert(a, B, C))
                except MomoleError as exc:
                    raise SchemaError(path, str(exc)) from None
            return MoleModel(gate, tuple(built))
        a = np.stack([
            _array(_field(e, "intercept", f"experts[{z}]"), f"experts[{z}].intercept", 1)
            for z, e in enumerate(experts)
        ])
        B = np.stack([
            _array(_field(e, "slope", f"experts[{z}]"), f"experts[{z}].slope", 2)
            for z, e in enumerate(experts)
        ])
        return MeanModel(gate, a, B)
    except SchemaError:
        raise
    except (MomoleError, ValueError) as exc:
        raise SchemaError("experts", str(exc)) from None


def dumps(model: AnyModel) -> str:
    return json.dumps(model_to_dict(model), indent=1)


def loads(text: str) -> AnyModel:
    try:
        d = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError("", f"invalid JSON ({exc})") from None
    return model_from_dict(d)


def save_model(model: AnyModel, path) -> None:
    Path(path).write_text(dumps(model) + "\n")


def load_model(path) -> AnyModel:
    return loads(Path(path).read_text())
