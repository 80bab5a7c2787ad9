"""Small feed-forward networks with hand-written reverse mode and Adam.

Hidden layers use ReLU. The output layer is affine followed by one of

* ``identity``
* ``ramp``      x -> min(1, max(0, x)), giving features bounded in [0, 1]
* ``hardtanh``  x -> min(1, max(-1, x)), used to clamp embedding regressors

Kinks get subgradient 0. Inputs pass through a fixed affine standardisation
``(x - input_shift) / input_scale`` before the first layer; it is part of the
model, not of the trainable parameters.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch

OUTPUT_ACTIVATIONS = ("identity", "ramp", "hardtanh")
MODEL_FORMAT = "causal-embed/feature-map"


def _output_bounds(kind: str) -> tuple[float, float] | None:
    if kind == "ramp":
        return 0.0, 1.0
    if kind == "hardtanh":
        return -1.0, 1.0
    return None


@dataclass
class FeatureMap:
    """Feed-forward map ``R^{layer_dims[0]} -> R^{layer_dims[-1]}``.

    ``weights[k]`` has shape ``(layer_dims[k+1], layer_dims[k])`` so a row of a
    weight matrix belongs to one output unit.
    """

    layer_dims: tuple[int, ...]
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    output_activation: str = "identity"
    input_shift: np.ndarray | None = None
    input_scale: np.ndarray | None = None
    trainable: bool = True

    def __post_init__(self) -> None:
        self.layer_dims = tuple(int(d) for d in self.layer_dims)
        if len(self.layer_dims) < 2:
            raise ValueError("layer_dims needs an input and an output size")
        if self.output_activation not in OUTPUT_ACTIVATIONS:
            raise ValueError(f"unknown output activation {self.output_activation!r}")
        if len(self.weights) != len(self.layer_dims) - 1 or len(self.biases) != len(self.weights):
            raise DimensionMismatch("one weight matrix and bias per layer required")
        for k, (W, b) in enumerate(zip(self.weights, self.biases)):
            shape = (self.layer_dims[k + 1], self.layer_dims[k])
            if W.shape != shape or b.shape != (shape[0],):
                raise DimensionMismatch(f"layer {k}: expected W{shape}, b({shape[0]},)")
        d0 = self.layer_dims[0]
        if self.input_shift is None:
            self.input_shift = np.zeros(d0)
        if self.input_scale is None:
            self.input_scale = np.ones(d0)
        self.input_shift = np.asarray(self.input_shift, dtype=np.float64)
        self.input_scale = np.asarray(self.input_scale, dtype=np.float64)
        if self.input_shift.shape != (d0,) or self.input_scale.shape != (d0,):
            raise DimensionMismatch("input standardisation must match the input dim")

    # construction -----------------------------------------------------

    @classmethod
    def init(
        cls,
        layer_dims,
        rng: np.random.Generator,
        output_activation: str = "identity",
    ) -> FeatureMap:
        """Glorot-uniform weights, zero biases."""
        dims = tuple(int(d) for d in layer_dims)
        weights, biases = [], []
        for fan_in, fan_out in zip(dims[:-1], dims[1:]):
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            weights.append(rng.uniform(-limit, limit, size=(fan_out, fan_in)))
            biases.append(np.zeros(fan_out))
        return cls(dims, weights, biases, output_activation)

    @classmethod
    def constant(cls, in_dim: int, value: float = 1.0) -> FeatureMap:
        """A frozen 1-dim map returning ``value`` for every input."""
        return cls(
            (in_dim, 1),
            [np.zeros((1, in_dim))],
            [np.array([float(value)])],
            trainable=False,
        )

    def standardize_from(self, x: np.ndarray) -> None:
        """Fix the input standardisation from sample moments of ``x``."""
        x = np.asarray(x, dtype=np.float64).reshape(-1, self.in_dim)
        shift = x.mean(axis=0)
        scale = x.std(axis=0)
        scale[scale < 1e-12] = 1.0
        self.input_shift = shift
        self.input_scale = scale

    # shape helpers ------------------------------------------------------

    @property
    def in_dim(self) -> int:
        return self.layer_dims[0]

    @property
    def out_dim(self) -> int:
        return self.layer_dims[-1]

    def fingerprint(self) -> str:
        return array_fingerprint(
            (self.layer_dims, self.output_activation, self.trainable),
            [self.input_shift, self.input_scale, *self.params()],
        )

    def params(self) -> list[np.ndarray]:
        out = []
        for W, b in zip(self.weights, self.biases):
            out.extend((W, b))
        return out

    def n_params(self) -> int:
        return sum(p.size for p in self.params())

    def copy(self) -> FeatureMap:
        return FeatureMap(
            self.layer_dims,
            [W.copy() for W in self.weights],
            [b.copy() for b in self.biases],
            self.output_activation,
            self.input_shift.copy(),
            self.input_scale.copy(),
            self.trainable,
        )

    # evaluation ---------------------------------------------------------

    def _as_batch(self, x) -> tuple[np.ndarray, bool]:
        x = np.asarray(x, dtype=np.float64)
        single = x.ndim == 1
        if single:
            x = x[None, :]
        if x.ndim != 2 or x.shape[1] != self.in_dim:
            raise DimensionMismatch(f"input has shape {x.shape}, expected (..., {self.in_dim})")
        return x, single

    def _forward_cache(self, x: np.ndarray) -> tuple[np.ndarray, list[np.ndarray], np.ndarray]:
        """Return (output, layer inputs, final pre-activation)."""
        h = (x - self.input_shift) / self.input_scale
        inputs = []
        last = len(self.weights) - 1
        z = h
        for k, (W, b) in enumerate(zip(self.weights, self.biases)):
            inputs.append(h)
            z = h @ W.T + b
            if k < last:
                h = np.maximum(z, 0.0)
        bounds = _output_bounds(self.output_activation)
        out = z if bounds is None else np.clip(z, *bounds)
        return out, inputs, z

    def forward(self, x) -> np.ndarray:
        """Evaluate the map on one input ``(d_in,)`` or a batch ``(n, d_in)``."""
        xb, single = self._as_batch(x)
        out = self._forward_cache(xb)[0]
        return out[0] if single else out

    __call__ = forward

    def pre_activations(self, x) -> list[np.ndarray]:
        """All pre-activation arrays (used to detect points near a kink)."""
        xb, _ = self._as_batch(x)
        _, inputs, z_last = self._forward_cache(xb)
        zs = []
        for k in range(len(self.weights) - 1):
            zs.append(inputs[k] @ self.weights[k].T + self.biases[k])
        zs.append(z_last)
        return zs

    def backward(self, x, cotangent) -> tuple[list[np.ndarray], np.ndarray]:
        """Reverse-mode gradient of ``sum_i <cotangent_i, forward(x_i)>``.

        Returns ``(param_grads, input_grad)``; ``param_grads`` is aligned with
        :meth:`params` and summed over the batch.
        """
        xb, single = self._as_batch(x)
        g = np.asarray(cotangent, dtype=np.float64)
        if single:
            g = g[None, :]
        if g.shape != (xb.shape[0], self.out_dim):
            raise DimensionMismatch(
                f"cotangent has shape {g.shape}, expected ({xb.shape[0]}, {self.out_dim})"
            )
        _, inputs, z_last = self._forward_cache(xb)
        bounds = _output_bounds(self.output_activation)
        if bounds is not None:
            g = g * ((z_last > bounds[0]) & (z_last < bounds[1]))
        grads: list[np.ndarray] = [None] * (2 * len(self.weights))  # type: ignore[list-item]
        for k in range(len(self.weights) - 1, -1, -1):
            h = inputs[k]
            grads[2 * k] = g.T @ h
            grads[2 * k + 1] = g.sum(axis=0)
            g = g @ self.weights[k]
            if k > 0:
                g = g * (h > 0.0)
        input_grad = g / self.input_scale
        if single:
            input_grad = input_grad[0]
        return grads, input_grad

    # serialisation ------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "format": MODEL_FORMAT,
            "version": 1,
            "layer_dims": list(self.layer_dims),
            "hidden_activation": "relu",
            "output_activation": self.output_activation,
            "trainable": self.trainable,
            "input_shift": self.input_shift.tolist(),
            "input_scale": self.input_scale.tolist(),
            "layers": [
                {"weight": W.tolist(), "bias": b.tolist()}
                for W, b in zip(self.weights, self.biases)
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> FeatureMap:
        if d.get("format") != MODEL_FORMAT:
            raise ValueError(f"not a feature-map document: format={d.get('format')!r}")
        if d.get("hidden_activation", "relu") != "relu":
            raise ValueError("only relu hidden layers are supported")
        dims = tuple(d["layer_dims"])
        weights = [np.array(layer["weight"], dtype=np.float64).reshape(o, i)
                   for layer, i, o in zip(d["layers"], dims[:-1], dims[1:])]
        biases = [np.array(layer["bias"], dtype=np.float64) for layer in d["layers"]]
        return cls(
            dims,
            weights,
            biases,
            d["output_activation"],
            np.array(d["input_shift"], dtype=np.float64),
            np.array(d["input_scale"], dtype=np.float64),
            bool(d.get("trainable", True)),
        )


def dumps(doc: dict) -> str:
    """Canonical JSON text; floats are written with round-trip precision."""
    return json.dumps(doc, sort_keys=True, separators=(",", ":"), allow_nan=False)


def fingerprint(doc: dict) -> str:
    return hashlib.sha256(dumps(doc).encode()).hexdigest()[:16]


def array_fingerprint(meta, arrays) -> str:
    """Hash of exact float64 contents; stable across a serialise/load trip."""
    h = hashlib.sha256(repr(meta).encode())
    for a in arrays:
        a = np.ascontiguousarray(a, dtype=np.float64)
        h.update(repr(a.shape).encode())
        h.update(a.tobytes())
    return h.hexdigest()[:16]


@dataclass
class Adam:
    """Adam with bias correction; updates parameter arrays in place."""

    step_size: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)

    def step(self, params: list[np.ndarray], grads: list[np.ndarray]) -> None:
        if len(params) != len(grads):
            raise DimensionMismatch(f"{len(params)} parameters but {len(grads)} gradients")
        if not self.m:
            self.m = [np.zeros_like(p) for p in params]
            self.v = [np.zeros_like(p) for p in params]
        if len(self.m) != len(params):
            raise DimensionMismatch("parameter list changed between steps")
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            if p.shape != g.shape or m.shape != p.shape:
                raise DimensionMismatch(f"gradient shape {g.shape} != parameter shape {p.shape}")
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.step_size * (m / c1) / (np.sqrt(v / c2) + self.eps)
