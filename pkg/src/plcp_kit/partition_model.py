"""Softmax partition networks: maps from covariates into the m-simplex.

Two architectures: a softmax linear layer, and an MLP with ReLU hidden
layers and a softmax output.  Gradients of the weighted-pinball objective
with respect to the parameters are analytic (the per-sample, per-group
costs are constants in the parameters).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .core import as_covariate_matrix, as_scored_arrays, rng_from_seed
from .pinball import pinball_matrix

__all__ = [
    "PartitionModel",
    "param_count",
    "init_params",
    "objective_gradient",
    "save_model",
    "load_model",
]

MODEL_FORMAT = "plcp-kit/partition-model/v1"


def param_count(widths) -> int:
    return sum(dout * din + dout for din, dout in zip(widths[:-1], widths[1:]))


def _softmax(z: np.ndarray, temperature: float) -> np.ndarray:
    # Max-subtraction keeps the exponentials finite for any finite logits.
    z = z / temperature
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


@dataclass(frozen=True)
class PartitionModel:
    """Flat-parameter softmax network; widths = (d, hidden..., m).

    ``temperature`` rescales the output logits (softmax(z / T)); the default
    1.0 reproduces the plain objective, smaller values sharpen assignments.
    """

    widths: tuple[int, ...]
    params: np.ndarray
    temperature: float = 1.0

    def __post_init__(self):
        widths = tuple(int(w) for w in self.widths)
        if len(widths) < 2 or any(w < 1 for w in widths):
            raise ValueError(f"invalid layer widths {widths}")
        params = np.array(self.params, dtype=float).ravel()
        if params.size != param_count(widths):
            raise ValueError(
                f"expected {param_count(widths)} parameters for widths {widths}, "
                f"got {params.size}"
            )
        params.setflags(write=False)
        object.__setattr__(self, "widths", widths)
        object.__setattr__(self, "params", params)
        if not self.temperature > 0.0:
            raise ValueError("temperature must be positive")

    @property
    def d(self) -> int:
        return self.widths[0]

    @property
    def m(self) -> int:
        return self.widths[-1]

    def layers(self) -> list[tuple[np.ndarray, np.ndarray]]:
        out, off = [], 0
        for din, dout in zip(self.widths[:-1], self.widths[1:]):
            w = self.params[off : off + dout * din].reshape(dout, din)
            off += dout * din
            b = self.params[off : off + dout]
            off += dout
            out.append((w, b))
        return out

    def logits_batch(self, x: np.ndarray) -> np.ndarray:
        a = x
        layers = self.layers()
        for i, (w, b) in enumerate(layers):
            z = a @ w.T + b
            a = np.maximum(z, 0.0) if i < len(layers) - 1 else z
        return a

    def forward_batch(self, x) -> np.ndarray:
        """Soft group memberships, one simplex point per row of x."""
        x = as_covariate_matrix(x)
        if x.shape[1] != self.d:
            raise ValueError(f"expected {self.d}-dimensional covariates, got {x.shape[1]}")
        return _softmax(self.logits_batch(x), self.temperature)

    def forward(self, x) -> np.ndarray:
        return self.forward_batch(np.asarray(x, dtype=float).reshape(1, -1))[0]

    def with_params(self, params) -> "PartitionModel":
        return replace(self, params=params)


def init_params(widths, seed: int, scale: float = 0.1, temperature: float = 1.0) -> PartitionModel:
    """Seeded init: weights uniform in +-scale/sqrt(fan_in), biases zero."""
    rng = rng_from_seed(seed)
    chunks = []
    for din, dout in zip(widths[:-1], widths[1:]):
        bound = scale / np.sqrt(din)
        chunks.append(rng.uniform(-bound, bound, size=dout * din))
        chunks.append(np.zeros(dout))
    return PartitionModel(tuple(widths), np.concatenate(chunks), temperature)


def objective_gradient(model: PartitionModel, q, data, alpha) -> np.ndarray:
    """Gradient of the empirical objective w.r.t. the parameters, q held fixed.

    ReLU subgradient at 0 is taken as 0.  Accumulation order over the batch
    is fixed, so the result is bit-stable for a given input order.
    """
    x, s = as_scored_arrays(data)
    qa = np.atleast_1d(np.asarray(getattr(q, "q", q), dtype=float))
    n = s.size
    layers = model.layers()

    acts = [x]
    pres = []
    a = x
    for i, (w, b) in enumerate(layers):
        z = a @ w.T + b
        pres.append(z)
        a = np.maximum(z, 0.0) if i < len(layers) - 1 else z
        acts.append(a)

    h = _softmax(pres[-1], model.temperature)
    costs = pinball_matrix(qa, s, alpha)
    row_cost = np.sum(h * costs, axis=1, keepdims=True)
    delta = h * (costs - row_cost) / (n * model.temperature)

    grads: list[np.ndarray] = []
    for i in reversed(range(len(layers))):
        w, _ = layers[i]
        grads.append(delta.sum(axis=0))  # bias
        grads.append((delta.T @ acts[i]).ravel())  # weights
        if i > 0:
            delta = (delta @ w) * (pres[i - 1] > 0.0)
    return np.concatenate(grads[::-1])


def save_model(model: PartitionModel, path, seed: int | None = None) -> None:
    """Write a text checkpoint; parameters round-trip exactly (17 significant digits)."""
    doc = {
        "format": MODEL_FORMAT,
        "widths": list(model.widths),
        "temperature": model.temperature,
        "seed": seed,
        "params": [format(p, ".17g") for p in model.params],
    }
    Path(path).write_text(json.dumps(doc, indent=1) + "\n", encoding="utf-8")


def load_model(path) -> tuple[PartitionModel, int | None]:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if doc.get("format") != MODEL_FORMAT:
        raise ValueError(f"not a partition-model checkpoint: {path}")
    params = np.array([float(p) for p in doc["params"]])
    model = PartitionModel(tuple(doc["widths"]), params, float(doc["temperature"]))
    return model, doc.get("seed")
