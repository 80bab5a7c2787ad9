"""Second stage: marginal and conditional means of frozen stage-1 features."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import linalg
from .errors import DimensionMismatch, EmptyInput, NonFiniteLoss
from .nn import Adam, FeatureMap, array_fingerprint
from .rng import make_rng

log = logging.getLogger(__name__)

MODEL_FORMAT = "causal-embed/stage2"


def exact_mean(rows: np.ndarray) -> np.ndarray:
    """Column means with correctly rounded sums (order independent)."""
    rows = np.asarray(rows, dtype=np.float64)
    if rows.ndim != 2 or rows.shape[0] == 0:
        raise EmptyInput("mean of an empty sample")
    n = rows.shape[0]
    return np.array([math.fsum(col) for col in rows.T.tolist()]) / n


def marginal_embedding(feature_map: FeatureMap, samples) -> np.ndarray:
    """Empirical feature mean ``(1/n) sum_i phi(x_i)``."""
    x = np.asarray(samples, dtype=np.float64)
    if x.size == 0:
        raise EmptyInput("marginal embedding needs at least one sample")
    x = x.reshape(x.shape[0], -1) if x.ndim > 1 else x.reshape(-1, feature_map.in_dim)
    return exact_mean(feature_map.forward(x))


@dataclass
class Stage2Config:
    hidden: tuple[int, ...] = (64, 64)
    step_size: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    epochs: int = 100
    batch_size: int = 256
    weight_decay: float = 1e-4
    seed: int = 0
    # as in stage 1: tabular conditioning inputs only
    standardize: bool = True
    image_threshold: int = 64

    def __post_init__(self) -> None:
        self.hidden = tuple(self.hidden)
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be non-negative")


@dataclass
class EmbeddingRegressor:
    """Vector-valued regression ``f(c) ~ E[phi(target) | conditioning = c]``.

    The conditioning input is the concatenation of the ``conditioning`` role
    columns in order; ``target`` lists the roles whose features are tensored
    into the regression target.
    """

    network: FeatureMap
    conditioning: tuple[str, ...]
    target: tuple[str, ...]
    n_train: int = 0
    history: list[float] = field(default_factory=list)

    def __post_init__(self) -> None:
        self.conditioning = tuple(self.conditioning)
        self.target = tuple(self.target)

    @property
    def out_dim(self) -> int:
        return self.network.out_dim

    def embed(self, *inputs) -> np.ndarray:
        """Evaluate on one point or a batch; inputs follow ``conditioning``."""
        if len(inputs) != len(self.conditioning):
            raise DimensionMismatch(f"expected inputs for {self.conditioning}, got {len(inputs)}")
        arrs = [np.asarray(x, dtype=np.float64) for x in inputs]
        if all(a.ndim <= 1 for a in arrs):
            return self.network.forward(np.concatenate([np.atleast_1d(a) for a in arrs]))
        # 1-D inputs are held fixed across the batch rows
        n = max(a.shape[0] for a in arrs if a.ndim == 2)
        cols = [a if a.ndim == 2 else np.tile(np.atleast_1d(a), (n, 1)) for a in arrs]
        return self.network.forward(np.hstack(cols))

    def to_dict(self) -> dict:
        return {
            "format": MODEL_FORMAT,
            "version": 1,
            "conditioning": list(self.conditioning),
            "target": list(self.target),
            "n_train": self.n_train,
            "network": self.network.to_dict(),
            "history": list(self.history),
        }

    @classmethod
    def from_dict(cls, d: dict) -> EmbeddingRegressor:
        if d.get("format") != MODEL_FORMAT:
            raise ValueError(f"not a stage-2 document: format={d.get('format')!r}")
        return cls(
            FeatureMap.from_dict(d["network"]),
            tuple(d["conditioning"]),
            tuple(d["target"]),
            int(d.get("n_train", 0)),
            [float(v) for v in d.get("history", [])],
        )

    def fingerprint(self) -> str:
        return array_fingerprint((self.conditioning, self.target, self.n_train, self.network.fingerprint()), [])


def embed(regressor: EmbeddingRegressor, *inputs) -> np.ndarray:
    return regressor.embed(*inputs)


def _loss(net: FeatureMap, c: np.ndarray, t: np.ndarray, wd: float) -> float:
    r = net.forward(c) - t
    return float(np.sum(r * r) / c.shape[0] + wd * sum(float(np.sum(W * W)) for W in net.weights))


def train_embedding(
    target_maps: FeatureMap | Sequence[FeatureMap],
    target_inputs,
    conditioning,
    config: Stage2Config,
    conditioning_roles: Sequence[str] = ("treatment",),
    target_roles: Sequence[str] = ("backdoor",),
) -> EmbeddingRegressor:
    """Fit ``f`` minimising ``(1/n) sum ||phi(t_i) - f(c_i)||^2 + wd * sum ||W||^2``.

    ``target_maps`` may be several maps whose outputs are tensored together
    (e.g. confounder and back-door features). Targets are computed once from
    the frozen maps before training starts. The output is clamped to
    ``[-1, 1]`` when every target map uses the ramp activation.
    """
    if isinstance(target_maps, FeatureMap):
        target_maps = [target_maps]
        target_inputs = [target_inputs]
    target_maps = list(target_maps)
    if len(target_inputs) != len(target_maps):
        raise DimensionMismatch("one input array per target map")
    conditioning = [np.asarray(c, dtype=np.float64) for c in
                    (conditioning if isinstance(conditioning, (list, tuple)) else [conditioning])]
    conditioning = [c[:, None] if c.ndim == 1 else c for c in conditioning]
    c = np.hstack(conditioning)
    n = c.shape[0]
    if n == 0:
        raise EmptyInput("stage-2 training needs samples")
    feats = []
    for m, x in zip(target_maps, target_inputs):
        x = np.asarray(x, dtype=np.float64)
        x = x[:, None] if x.ndim == 1 else x
        if x.shape[0] != n:
            raise DimensionMismatch(f"target inputs have {x.shape[0]} rows, conditioning has {n}")
        feats.append(m.forward(x))
    t = linalg.rowwise_tensor(*feats)

    rng = make_rng(config.seed, "stage2")
    out_act = "hardtanh" if all(m.output_activation == "ramp" for m in target_maps) else "identity"
    net = FeatureMap.init((c.shape[1], *config.hidden, t.shape[1]), rng, out_act)
    if config.standardize and c.shape[1] <= config.image_threshold:
        net.standardize_from(c)
    params = net.params()
    opt = Adam(config.step_size, config.beta1, config.beta2, config.eps)
    wd = config.weight_decay
    history = [_loss(net, c, t, wd)]
    n_batches = max(1, n // config.batch_size)
    for epoch in range(config.epochs):
        for batch in np.array_split(rng.permutation(n), n_batches):
            cb, tb = c[batch], t[batch]
            r = net.forward(cb) - tb
            grads, _ = net.backward(cb, 2.0 / len(batch) * r)
            for k, W in enumerate(net.weights):
                grads[2 * k] = grads[2 * k] + 2.0 * wd * W
            opt.step(params, grads)
        history.append(_loss(net, c, t, wd))
        if not np.isfinite(history[-1]):
            raise NonFiniteLoss(f"stage-2 loss became {history[-1]} at epoch {epoch}; lower the step size")
        log.debug("stage2 epoch %d loss %.6g", epoch, history[-1])
    return EmbeddingRegressor(net, tuple(conditioning_roles), tuple(target_roles), n, history)
