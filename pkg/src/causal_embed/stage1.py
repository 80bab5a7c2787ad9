"""First-stage outcome regression with tensor-product features.

The model is ``g(a, x) = w^T (phi_A(a) ⊗ phi_X(x))`` (or with a third factor
in the middle). Features are trained on the profiled objective: for the
current features the ridge weight is solved in closed form, so only the
feature parameters see Adam. Because ``w`` is the exact minimiser, the
gradient with respect to the design matrix is the partial derivative at
fixed ``w`` (envelope theorem): ``-(2/n) r w^T`` with ``r`` the residual.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from . import linalg
from .data import ColumnarDataset
from .errors import DimensionMismatch, EmptyBatch, NonFiniteLoss, RoleMismatch
from .nn import Adam, FeatureMap, array_fingerprint
from .rng import make_rng

log = logging.getLogger(__name__)

MODEL_FORMAT = "causal-embed/stage1"
_LETTERS = "pqrstuv"


@dataclass
class TrainConfig:
    ridge_lambda: float | None = None
    step_size: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    epochs: int = 100
    # well above feature_dim**2 so the per-batch ridge cannot interpolate
    batch_size: int = 1024
    seed: int = 0
    feature_dim: int = 16
    tabular_hidden: tuple[int, ...] = (32, 32)
    image_hidden: tuple[int, ...] = (512, 128)
    # inputs wider than this use ``image_hidden``
    image_threshold: int = 64
    output_activation: str = "identity"
    # standardise tabular inputs; image inputs are never scaled per pixel
    # (that would inflate the noise-only border)
    standardize: bool = True
    train_features: bool = True
    # roles whose map is the frozen constant 1 (degenerate confounder)
    constant_roles: tuple[str, ...] = ()
    feature_dims: dict[str, int] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.ridge_lambda is not None and not self.ridge_lambda > 0:
            raise ValueError(f"ridge_lambda must be > 0, got {self.ridge_lambda}")
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        self.tabular_hidden = tuple(self.tabular_hidden)
        self.image_hidden = tuple(self.image_hidden)
        self.constant_roles = tuple(self.constant_roles)

    def layer_dims(self, role: str, in_dim: int) -> tuple[int, ...]:
        hidden = self.image_hidden if in_dim > self.image_threshold else self.tabular_hidden
        return (in_dim, *hidden, self.feature_dims.get(role, self.feature_dim))


@dataclass
class StageOneModel:
    roles: tuple[str, ...]
    maps: list[FeatureMap]
    weight: np.ndarray
    ridge_lambda: float
    history: list[float] = field(default_factory=list)

    def __post_init__(self) -> None:
        self.roles = tuple(self.roles)
        if len(self.roles) != len(self.maps) or len(self.maps) not in (2, 3):
            raise DimensionMismatch("a stage-1 model has 2 or 3 factors, one map per role")
        if self.roles[0] != "treatment":
            raise RoleMismatch("the treatment map must come first")
        self.weight = np.asarray(self.weight, dtype=np.float64)
        if self.weight.shape != (self.weight_dim,):
            raise DimensionMismatch(f"weight has shape {self.weight.shape}, expected ({self.weight_dim},)")

    @property
    def feature_dims(self) -> tuple[int, ...]:
        return tuple(m.out_dim for m in self.maps)

    @property
    def weight_dim(self) -> int:
        return int(np.prod(self.feature_dims))

    def map_for(self, role: str) -> FeatureMap:
        if role not in self.roles:
            raise RoleMismatch(f"model has roles {self.roles}, no {role!r}")
        return self.maps[self.roles.index(role)]

    def weight_tensor(self) -> np.ndarray:
        return self.weight.reshape(self.feature_dims)

    def features(self, inputs: Sequence) -> list[np.ndarray]:
        if len(inputs) != len(self.maps):
            raise DimensionMismatch(f"expected {len(self.maps)} inputs, got {len(inputs)}")
        return [m.forward(np.atleast_2d(np.asarray(x, dtype=np.float64))) for m, x in zip(self.maps, inputs)]

    def design(self, inputs: Sequence) -> np.ndarray:
        return linalg.rowwise_tensor(*self.features(inputs))

    def predict(self, *inputs) -> np.ndarray:
        """``g`` on a batch; inputs are per-factor arrays in role order."""
        return self.design(inputs) @ self.weight

    def to_dict(self) -> dict:
        return {
            "format": MODEL_FORMAT,
            "version": 1,
            "roles": list(self.roles),
            "ridge_lambda": self.ridge_lambda,
            "factor_maps": [m.to_dict() for m in self.maps],
            "weight": self.weight.tolist(),
            "history": list(self.history),
        }

    @classmethod
    def from_dict(cls, d: dict) -> StageOneModel:
        if d.get("format") != MODEL_FORMAT:
            raise ValueError(f"not a stage-1 document: format={d.get('format')!r}")
        return cls(
            tuple(d["roles"]),
            [FeatureMap.from_dict(m) for m in d["factor_maps"]],
            np.array(d["weight"], dtype=np.float64),
            float(d["ridge_lambda"]),
            [float(v) for v in d.get("history", [])],
        )

    def fingerprint(self) -> str:
        return array_fingerprint(
            (self.roles, self.ridge_lambda, [m.fingerprint() for m in self.maps]), [self.weight]
        )


def predict_g(model: StageOneModel, *inputs) -> float:
    """``g`` at a single point; one input vector per factor."""
    feats = [m.forward(np.asarray(x, dtype=np.float64)) for m, x in zip(model.maps, inputs)]
    if len(feats) != len(model.maps):
        raise DimensionMismatch(f"expected {len(model.maps)} inputs, got {len(inputs)}")
    phi = feats[0]
    for f in feats[1:]:
        phi = linalg.tensor_product(phi, f)
    return float(model.weight @ phi)


def default_lambda(y: np.ndarray) -> float:
    lam = 1e-3 * float(np.mean(np.square(y)))
    return lam if lam > 0 else 1e-3


def profiled_loss(maps: Sequence[FeatureMap], inputs: Sequence, y, lam: float) -> tuple[float, np.ndarray]:
    """Ridge-profiled loss on a batch: returns ``(loss, w_hat)``."""
    loss, w, _ = _profiled(maps, inputs, y, lam, want_grads=False)
    return loss, w


def profiled_loss_and_grads(maps, inputs, y, lam):
    """Loss, closed-form weight, and gradients for every map's parameters."""
    return _profiled(maps, inputs, y, lam, want_grads=True)


def _profiled(maps, inputs, y, lam, want_grads):
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    n = y.shape[0]
    if n == 0:
        raise EmptyBatch("profiled loss on an empty batch")
    if len(maps) != len(inputs):
        raise DimensionMismatch(f"{len(maps)} maps but {len(inputs)} inputs")
    feats = [m.forward(np.asarray(x, dtype=np.float64).reshape(n, -1)) for m, x in zip(maps, inputs)]
    Phi = linalg.rowwise_tensor(*feats)
    if not np.all(np.isfinite(Phi)):
        raise NonFiniteLoss("features became non-finite; lower the step size")
    w = linalg.ridge_weight(Phi, y, lam)
    r = y - Phi @ w
    loss = float(r @ r / n + lam * (w @ w))
    if not want_grads:
        return loss, w, None
    W = w.reshape([f.shape[1] for f in feats])
    k = len(feats)
    grads = []
    for j, (m, x) in enumerate(zip(maps, inputs)):
        if not m.trainable:
            grads.append(None)
            continue
        # contract W with every other factor's features, row by row
        idx = _LETTERS[:k]
        operands = [W]
        subs = [idx]
        for i, f in enumerate(feats):
            if i != j:
                operands.append(f)
                subs.append("n" + idx[i])
        subscripts = ",".join(subs) + "->n" + idx[j]
        dfeat = np.einsum(subscripts, *operands, optimize=True) * (-2.0 / n * r)[:, None]
        param_grads, _ = m.backward(np.asarray(x, dtype=np.float64).reshape(n, -1), dfeat)
        grads.append(param_grads)
    return loss, w, grads


def _role_inputs(data: ColumnarDataset, roles: Sequence[str]) -> list[np.ndarray]:
    return [data[r] for r in roles]


def init_maps(data: ColumnarDataset, roles: Sequence[str], config: TrainConfig,
              rng: np.random.Generator) -> list[FeatureMap]:
    maps = []
    for role in roles:
        x = data[role]
        if role in config.constant_roles:
            maps.append(FeatureMap.constant(x.shape[1]))
            continue
        m = FeatureMap.init(config.layer_dims(role, x.shape[1]), rng, config.output_activation)
        if config.standardize and x.shape[1] <= config.image_threshold:
            m.standardize_from(x)
        maps.append(m)
    return maps


def train_stage1(data: ColumnarDataset, roles: Sequence[str], config: TrainConfig) -> StageOneModel:
    """Train feature maps on the profiled loss, then refit ``w`` on all data.

    With ``config.train_features`` off the randomly initialised maps are kept
    as-is (random-feature baseline); ``w`` is still fit in closed form.
    """
    roles = tuple(roles)
    if roles[0] != "treatment":
        raise RoleMismatch(f"first role must be 'treatment', got {roles}")
    y = data.outcome()
    inputs = _role_inputs(data, roles)
    n = data.n
    lam = config.ridge_lambda if config.ridge_lambda is not None else default_lambda(y)
    rng = make_rng(config.seed, "stage1")
    maps = init_maps(data, roles, config, rng)

    history: list[float] = []
    if config.train_features:
        trainable = [m for m in maps if m.trainable]
        params = [p for m in trainable for p in m.params()]
        opt = Adam(config.step_size, config.beta1, config.beta2, config.eps)
        n_batches = max(1, n // config.batch_size)
        for epoch in range(config.epochs):
            perm = rng.permutation(n)
            total = 0.0
            for batch in np.array_split(perm, n_batches):
                loss, _, grads = profiled_loss_and_grads(maps, [x[batch] for x in inputs], y[batch], lam)
                if not np.isfinite(loss):
                    raise NonFiniteLoss(f"stage-1 loss became {loss} at epoch {epoch}; lower the step size")
                opt.step(params, [g for gs in grads if gs is not None for g in gs])
                total += loss * len(batch)
            history.append(total / n)
            log.debug("stage1 epoch %d loss %.6g", epoch, history[-1])

    Phi = linalg.rowwise_tensor(*[m.forward(x) for m, x in zip(maps, inputs)])
    w = linalg.ridge_weight(Phi, y, lam)
    return StageOneModel(roles, maps, w, lam, history)


def refit_weight(model: StageOneModel, data: ColumnarDataset) -> StageOneModel:
    """Closed-form ridge weight for ``model``'s features on ``data``."""
    Phi = model.design(_role_inputs(data, model.roles))
    w = linalg.ridge_weight(Phi, data.outcome(), model.ridge_lambda)
    return replace(model, weight=w)


def regularized_loss(model: StageOneModel, data: ColumnarDataset, weight=None) -> float:
    w = model.weight if weight is None else np.asarray(weight, dtype=np.float64)
    Phi = model.design(_role_inputs(data, model.roles))
    r = data.outcome() - Phi @ w
    return float(r @ r / data.n + model.ridge_lambda * (w @ w))
