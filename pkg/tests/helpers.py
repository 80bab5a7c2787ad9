"""Shared fixtures for discrete-model oracle checks."""

from __future__ import annotations

import numpy as np

from causal_embed.discrete import (
    ROLE_OF,
    adjustment_of,
    empirical_law,
    graph_parameters,
    identified_value,
    observed_vars,
    random_scm,
    support_grid,
)
from causal_embed.data import ColumnarDataset
from causal_embed.estimators import CausalQuery, estimate
from causal_embed.nn import FeatureMap
from causal_embed.stage1 import TrainConfig, train_stage1
from causal_embed.stage2 import EmbeddingRegressor, Stage2Config, marginal_embedding, train_embedding

FAST_STAGE1 = dict(epochs=10, batch_size=1024)
FAST_STAGE2 = dict(epochs=10, batch_size=1024, step_size=3e-3)


def discrete_roles(graph: str) -> tuple[str, ...]:
    adj = adjustment_of(graph)
    return ("treatment", "confounder", adj) if graph.endswith("-obs") else ("treatment", adj)


def regressor_specs(graph: str):
    adj = adjustment_of(graph)
    if graph == "backdoor":
        return [(("treatment",), ("backdoor",))]
    if graph == "frontdoor":
        return [(("treatment",), ("frontdoor",))]
    if graph == "backdoor-obs":
        return [(("treatment",), ("confounder", "backdoor")), (("confounder",), ("backdoor",))]
    return [(("confounder", "treatment"), (adj,))]


def stage1_options(graph: str) -> dict:
    """Three-factor tensors use narrower maps so the ridge stays small."""
    return dict(FAST_STAGE1, feature_dim=6) if graph.endswith("-obs") else dict(FAST_STAGE1)


def fit_discrete(graph: str, scm_seed: int, n: int, seed: int, stage1=None, stage2=None):
    scm = random_scm(graph, scm_seed)
    data = scm.sample(n, seed)
    model = train_stage1(data, discrete_roles(graph), TrainConfig(seed=seed, **(stage1 or stage1_options(graph))))
    regs = []
    for cond, target in regressor_specs(graph):
        regs.append(train_embedding([model.map_for(r) for r in target], [data[r] for r in target],
                                    [data[r] for r in cond], Stage2Config(seed=seed, **(stage2 or FAST_STAGE2)),
                                    cond, target))
    return scm, data, model, regs


def g_table(model, scm) -> np.ndarray:
    """Fitted g on every cell of the observed support, axes as observed_vars."""
    vars_ = observed_vars(scm.graph)
    table = np.zeros(tuple(scm.card(v) for v in vars_))
    order = [ROLE_OF[v] for v in vars_]
    for cell in support_grid(scm):
        by_role = {r: np.array([[scm.supports[v][i]]]) for r, v, i in zip(order, vars_, cell)}
        table[cell] = model.predict(*[by_role[r] for r in model.roles])[0]
    return table


def all_queries(scm):
    """Every (parameter, a-index, a'-index, o-index) for the graph on binary supports."""
    out = []
    sup = scm.supports
    for p in graph_parameters(scm.graph):
        for ia in range(scm.card("A")):
            if p == "ATE":
                out.append((p, ia, None, None))
            elif p == "ATT":
                out.extend((p, ia, iap, None) for iap in range(scm.card("A")))
            else:
                out.extend((p, ia, None, io) for io in range(scm.card("O")))
    queries = []
    for p, ia, iap, io in out:
        q = CausalQuery(p, adjustment_of(scm.graph), [sup["A"][ia]],
                        None if iap is None else [sup["A"][iap]],
                        None if io is None else [sup["O"][io]])
        queries.append(((p, ia, iap, io), q))
    return queries


def oracle_gaps(scm, data, model, regs):
    """|estimate - enumeration oracle| for every query, oracle on fitted g and empirical law."""
    law = empirical_law(data, scm)
    g = g_table(model, scm)
    gaps = []
    for (p, ia, iap, io), q in all_queries(scm):
        est = estimate(model, data, regs, q).value
        ref = identified_value(scm.graph, law, g, p, ia, iap, io)
        gaps.append((p, abs(est - ref)))
    return gaps


def _lift_regressor(reg, conditioning, target, zero_inputs_before: int = 0):
    """Same network under new roles, optionally ignoring extra leading inputs."""
    net = reg.network.copy()
    if zero_inputs_before:
        k = zero_inputs_before
        net.weights[0] = np.hstack([np.zeros((net.weights[0].shape[0], k)), net.weights[0]])
        net.input_shift = np.concatenate([np.zeros(k), net.input_shift])
        net.input_scale = np.concatenate([np.ones(k), net.input_scale])
        net.layer_dims = (net.layer_dims[0] + k, *net.layer_dims[1:])
    return type(reg)(net, conditioning, target, reg.n_train)


def _constant_regressor(value: np.ndarray, conditioning, target, in_dim: int = 1):
    net = FeatureMap((in_dim, len(value)), [np.zeros((len(value), in_dim))], [np.asarray(value, dtype=np.float64)])
    return EmbeddingRegressor(net, conditioning, target)


def collapse_pair(seed: int, n: int = 500) -> list[tuple[str, float, float]]:
    """(label, three-factor estimate, two-factor estimate) with a constant confounder.

    Both stage-1 models are trained on identical data and seeds; the
    three-factor one holds ``phi_O = 1`` fixed. Stage-2 regressors of the
    two-factor model are lifted to the three-factor roles.
    """
    rng = np.random.default_rng(seed)
    u = rng.normal(size=n)
    a = u + rng.normal(size=n)
    x = u + 0.5 * rng.normal(size=n)
    m = np.tanh(a) + 0.3 * rng.normal(size=n)
    y = np.sin(a) + m + u + 0.1 * rng.normal(size=n)
    data = ColumnarDataset({"treatment": a, "backdoor": x, "frontdoor": m, "confounder": np.zeros(n), "outcome": y})
    s1 = dict(epochs=5, batch_size=128, seed=seed)
    s2 = Stage2Config(epochs=5, batch_size=128, seed=seed)
    out = []
    for adj in ("backdoor", "frontdoor"):
        two = train_stage1(data, ("treatment", adj), TrainConfig(**s1))
        three = train_stage1(data, ("treatment", "confounder", adj), TrainConfig(**s1, constant_roles=("confounder",)))
        reg = train_embedding(two.map_for(adj), data[adj], data["treatment"], s2, ("treatment",), (adj,))
        if adj == "backdoor":
            regs3 = [_lift_regressor(reg, ("treatment",), ("confounder", "backdoor")),
                     _constant_regressor(marginal_embedding(two.map_for(adj), data[adj]), ("confounder",), ("backdoor",))]
        else:
            regs3 = [_lift_regressor(reg, ("confounder", "treatment"), ("frontdoor",), zero_inputs_before=1)]
        for q in (-1.0, 0.0, 0.7):
            for p, q2 in (("ATE", "ATE"), ("ATT", "ATT"), ("CATE", "ATE")):
                extra3 = {"a_prime": [0.4]} if p == "ATT" else {"o": [0.0]} if p == "CATE" else {}
                extra2 = {"a_prime": [0.4]} if q2 == "ATT" else {}
                v3 = estimate(three, data, regs3, CausalQuery(p, adj, [q], **extra3)).value
                v2 = estimate(two, data, [reg], CausalQuery(q2, adj, [q], **extra2)).value
                out.append((f"{adj} {p} a={q}", v3, v2))
    return out
