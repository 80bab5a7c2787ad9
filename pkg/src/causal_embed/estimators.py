"""Causal estimates as contractions of the stage-1 weight with embeddings.

Back-door (roles ``treatment, backdoor``)::

    ATE(a)     = w . (phi_A(a) ⊗ mean_i phi_X(x_i))
    ATT(a; a') = w . (phi_A(a) ⊗ f_X(a'))

Front-door (roles ``treatment, frontdoor``)::

    ATE(a)     = w . (mean_i phi_A(a_i) ⊗ f_M(a))
    ATT(a; a') = w . (phi_A(a') ⊗ f_M(a))

Note the front-door ATT: the treatment features are taken at ``a'`` and the
mediator embedding at ``a``, i.e. ``E_M[g(a', M) | A = a]``. This is the
transpose of the back-door convention and is kept as the identification
formula states it.

With an observed confounder the model has a third factor in the middle,
``(treatment, confounder, backdoor|frontdoor)``; see
:func:`obs_confounder_estimates`.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import linalg
from .data import ColumnarDataset
from .errors import MissingRegressor, RoleMismatch
from .stage1 import StageOneModel
from .stage2 import EmbeddingRegressor, exact_mean

PARAMETERS = ("ATE", "ATT", "CATE")
ADJUSTMENTS = ("backdoor", "frontdoor")


def _vec(x) -> np.ndarray | None:
    if x is None:
        return None
    return np.atleast_1d(np.asarray(x, dtype=np.float64)).reshape(-1)


@dataclass
class CausalQuery:
    parameter: str
    adjustment: str
    a: np.ndarray
    a_prime: np.ndarray | None = None
    o: np.ndarray | None = None
    label: str = ""

    def __post_init__(self) -> None:
        if self.parameter not in PARAMETERS:
            raise ValueError(f"parameter must be one of {PARAMETERS}")
        if self.adjustment not in ADJUSTMENTS:
            raise ValueError(f"adjustment must be one of {ADJUSTMENTS}")
        self.a = _vec(self.a)
        self.a_prime = _vec(self.a_prime)
        self.o = _vec(self.o)
        if (self.a_prime is not None) != (self.parameter == "ATT"):
            raise ValueError("a_prime is given exactly for ATT queries")
        if (self.o is not None) != (self.parameter == "CATE"):
            raise ValueError("o is given exactly for CATE queries")


@dataclass
class CausalEstimate:
    query: CausalQuery
    value: float
    n_used: int
    fingerprints: dict[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not np.isfinite(self.value):
            raise FloatingPointError(f"non-finite estimate {self.value}")


def _fps(model: StageOneModel, *regressors: EmbeddingRegressor) -> dict[str, str]:
    out = {"stage1": model.fingerprint()}
    for r in regressors:
        out["stage2:" + "|".join(r.conditioning) + "->" + "*".join(r.target)] = r.fingerprint()
    return out


def _require_roles(model: StageOneModel, roles: tuple[str, ...]) -> None:
    if model.roles != roles:
        raise RoleMismatch(f"estimator needs a model with roles {roles}, got {model.roles}")


def _require_regressor(reg: EmbeddingRegressor, conditioning, target) -> None:
    if reg.conditioning != tuple(conditioning) or reg.target != tuple(target):
        raise RoleMismatch(
            f"regressor maps {reg.conditioning} -> {reg.target}, expected {tuple(conditioning)} -> {tuple(target)}"
        )


def contract(model: StageOneModel, *factors) -> float:
    """``w . (f1 ⊗ f2 [⊗ f3])`` for per-factor feature (or embedding) vectors."""
    phi = linalg.as_vector(factors[0])
    for f in factors[1:]:
        phi = linalg.tensor_product(phi, f)
    return float(model.weight @ phi)


def ate_backdoor(model: StageOneModel, data: ColumnarDataset, a) -> CausalEstimate:
    _require_roles(model, ("treatment", "backdoor"))
    phi_a = model.maps[0].forward(_vec(a))
    mean_x = exact_mean(model.maps[1].forward(data["backdoor"]))
    value = contract(model, phi_a, mean_x)
    return CausalEstimate(CausalQuery("ATE", "backdoor", a), value, data.n, _fps(model))


def att_backdoor(model: StageOneModel, regressor: EmbeddingRegressor, a, a_prime) -> CausalEstimate:
    _require_roles(model, ("treatment", "backdoor"))
    _require_regressor(regressor, ("treatment",), ("backdoor",))
    value = contract(model, model.maps[0].forward(_vec(a)), regressor.embed(_vec(a_prime)))
    return CausalEstimate(CausalQuery("ATT", "backdoor", a, a_prime=a_prime), value,
                          regressor.n_train, _fps(model, regressor))


def ate_frontdoor(model: StageOneModel, data: ColumnarDataset, regressor: EmbeddingRegressor, a) -> CausalEstimate:
    _require_roles(model, ("treatment", "frontdoor"))
    _require_regressor(regressor, ("treatment",), ("frontdoor",))
    mean_a = exact_mean(model.maps[0].forward(data["treatment"]))
    value = contract(model, mean_a, regressor.embed(_vec(a)))
    return CausalEstimate(CausalQuery("ATE", "frontdoor", a), value, data.n, _fps(model, regressor))


def att_frontdoor(model: StageOneModel, regressor: EmbeddingRegressor, a, a_prime) -> CausalEstimate:
    _require_roles(model, ("treatment", "frontdoor"))
    _require_regressor(regressor, ("treatment",), ("frontdoor",))
    value = contract(model, model.maps[0].forward(_vec(a_prime)), regressor.embed(_vec(a)))
    return CausalEstimate(CausalQuery("ATT", "frontdoor", a, a_prime=a_prime), value,
                          regressor.n_train, _fps(model, regressor))


def find_regressor(regressors: Sequence[EmbeddingRegressor], conditioning, target) -> EmbeddingRegressor:
    for r in regressors:
        if r.conditioning == tuple(conditioning) and r.target == tuple(target):
            return r
    raise MissingRegressor(f"no regressor for E[{'⊗'.join(target)} | {', '.join(conditioning)}]")


def obs_confounder_estimates(
    model: StageOneModel,
    data: ColumnarDataset,
    regressors: Sequence[EmbeddingRegressor],
    query: CausalQuery,
) -> CausalEstimate:
    """Estimators with an observed confounder ``O`` (three-factor model).

    Back-door, model roles ``(treatment, confounder, backdoor)``:

    * ATE(a)     = w . (phi_A(a) ⊗ mean_i[phi_O(o_i) ⊗ phi_X(x_i)])
    * ATT(a; a') = w . (phi_A(a) ⊗ f_{O⊗X}(a'))      regressor treatment -> confounder*backdoor
    * CATE(a; o) = w . (phi_A(a) ⊗ phi_O(o) ⊗ f_X(o)) regressor confounder -> backdoor

    Front-door, model roles ``(treatment, confounder, frontdoor)``, all using
    the regressor ``f_M(o, a)`` of (confounder, treatment) -> frontdoor:

    * ATE(a)     = w . (mean_i phi_A(a_i) ⊗ mean_j[phi_O(o_j) ⊗ f_M(o_j, a)])
    * ATT(a; a') = w . (phi_A(a') ⊗ mean_j[phi_O(o_j) ⊗ f_M(o_j, a)])
    * CATE(a; o) = w . (mean_i phi_A(a_i) ⊗ phi_O(o) ⊗ f_M(o, a))
    """
    adj = query.adjustment
    _require_roles(model, ("treatment", "confounder", adj))
    phi_a, phi_o, phi_last = model.maps
    p = query.parameter
    if adj == "backdoor":
        if p == "ATE":
            inner = exact_mean(linalg.rowwise_tensor(phi_o.forward(data["confounder"]),
                                                     phi_last.forward(data["backdoor"])))
            value = contract(model, phi_a.forward(query.a), inner)
            return CausalEstimate(query, value, data.n, _fps(model))
        if p == "ATT":
            reg = find_regressor(regressors, ("treatment",), ("confounder", "backdoor"))
            value = contract(model, phi_a.forward(query.a), reg.embed(query.a_prime))
            return CausalEstimate(query, value, reg.n_train, _fps(model, reg))
        reg = find_regressor(regressors, ("confounder",), ("backdoor",))
        value = contract(model, phi_a.forward(query.a), phi_o.forward(query.o), reg.embed(query.o))
        return CausalEstimate(query, value, reg.n_train, _fps(model, reg))

    reg = find_regressor(regressors, ("confounder", "treatment"), ("frontdoor",))
    if p == "CATE":
        mean_a = exact_mean(phi_a.forward(data["treatment"]))
        value = contract(model, mean_a, phi_o.forward(query.o), reg.embed(query.o, query.a))
        return CausalEstimate(query, value, data.n, _fps(model, reg))
    o = data["confounder"]
    inner = exact_mean(linalg.rowwise_tensor(phi_o.forward(o), reg.embed(o, query.a)))
    if p == "ATE":
        outer = exact_mean(phi_a.forward(data["treatment"]))
    else:
        outer = phi_a.forward(query.a_prime)
    return CausalEstimate(query, contract(model, outer, inner), data.n, _fps(model, reg))


def estimate(model, data, regressors, query: CausalQuery) -> CausalEstimate:
    """Dispatch a query to the matching estimator."""
    if len(model.roles) == 3:
        return obs_confounder_estimates(model, data, regressors, query)
    if query.parameter == "CATE":
        raise RoleMismatch("CATE needs a three-factor model with an observed confounder")
    if query.adjustment == "backdoor":
        if query.parameter == "ATE":
            return ate_backdoor(model, data, query.a)
        reg = find_regressor(regressors, ("treatment",), ("backdoor",))
        return att_backdoor(model, reg, query.a, query.a_prime)
    reg = find_regressor(regressors, ("treatment",), ("frontdoor",))
    if query.parameter == "ATE":
        return ate_frontdoor(model, data, reg, query.a)
    return att_frontdoor(model, reg, query.a, query.a_prime)
