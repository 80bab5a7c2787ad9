"""Finite structural causal models with exact enumeration.

Four graphs are supported; ``U`` is always hidden::

    backdoor        U -> X -> A -> Y <- U
    frontdoor       U -> A -> M -> Y <- U
    backdoor-obs    U -> O;  X <- (U, O);  A <- (X, O);  Y <- (A, O, U)
    frontdoor-obs   U -> O;  A <- (U, O);  M <- (A, O);  Y <- (M, O, U)

Each variable has a finite support of real values and a conditional
probability table ``cpt[parent indices..., value index]``. Ground truth is
available two ways: by intervening on the full model (``interventional``)
and by evaluating the identification formula on the observed law
(``identified``). For the three graphs without an observed confounder in the
treatment path the two agree; see :func:`identified_value` for the
observed-confounder front-door case.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .data import ColumnarDataset
from .errors import InvalidDistribution
from .rng import make_rng

GRAPHS: dict[str, dict[str, tuple[str, ...]]] = {
    "backdoor": {"U": (), "X": ("U",), "A": ("X",), "Y": ("A", "U")},
    "frontdoor": {"U": (), "A": ("U",), "M": ("A",), "Y": ("M", "U")},
    "backdoor-obs": {"U": (), "O": ("U",), "X": ("U", "O"), "A": ("X", "O"), "Y": ("A", "O", "U")},
    "frontdoor-obs": {"U": (), "O": ("U",), "A": ("U", "O"), "M": ("A", "O"), "Y": ("M", "O", "U")},
}
ROLE_OF = {"A": "treatment", "Y": "outcome", "X": "backdoor", "M": "frontdoor", "O": "confounder"}


def graph_parameters(graph: str) -> tuple[str, ...]:
    return ("ATE", "ATT", "CATE") if graph.endswith("-obs") else ("ATE", "ATT")


def adjustment_of(graph: str) -> str:
    return "backdoor" if graph.startswith("backdoor") else "frontdoor"


def covariate_of(graph: str) -> str:
    """The non-treatment variable ``g`` conditions on besides ``O``."""
    return "X" if graph.startswith("backdoor") else "M"


def observed_vars(graph: str) -> tuple[str, ...]:
    """Axis order of the observed law and of ``g``."""
    z = covariate_of(graph)
    return ("A", "O", z) if graph.endswith("-obs") else ("A", z)


@dataclass
class DiscreteSCM:
    graph: str
    supports: dict[str, tuple[float, ...]]
    cpts: dict[str, np.ndarray]

    def __post_init__(self) -> None:
        if self.graph not in GRAPHS:
            raise ValueError(f"graph must be one of {sorted(GRAPHS)}")
        parents = GRAPHS[self.graph]
        for v, pa in parents.items():
            if v not in self.supports or v not in self.cpts:
                raise InvalidDistribution(f"variable {v} needs a support and a table")
            self.supports[v] = tuple(float(s) for s in self.supports[v])
            table = np.asarray(self.cpts[v], dtype=np.float64)
            shape = tuple(len(self.supports[p]) for p in pa) + (len(self.supports[v]),)
            if table.shape != shape:
                raise InvalidDistribution(f"table for {v} has shape {table.shape}, expected {shape}")
            if np.any(table < 0) or not np.all(np.isfinite(table)):
                raise InvalidDistribution(f"table for {v} has negative or non-finite entries")
            if np.max(np.abs(table.sum(axis=-1) - 1.0)) > 1e-12:
                raise InvalidDistribution(f"rows of the table for {v} do not sum to 1")
            self.cpts[v] = table

    @property
    def order(self) -> tuple[str, ...]:
        return tuple(GRAPHS[self.graph])

    def card(self, v: str) -> int:
        return len(self.supports[v])

    # exact laws -----------------------------------------------------------

    def joint(self, do_a: int | None = None) -> np.ndarray:
        """Full joint over ``order`` (optionally with ``A`` set to index ``do_a``)."""
        order = self.order
        parents = GRAPHS[self.graph]
        p = np.ones(tuple(self.card(v) for v in order))
        for v in order:
            table = self.cpts[v]
            if v == "A" and do_a is not None:
                table = np.zeros_like(table)
                table[..., do_a] = 1.0
            axes = [order.index(q) for q in parents[v]] + [order.index(v)]
            shape = [1] * len(order)
            for ax, size in zip(axes, table.shape):
                shape[ax] = size
            # broadcast table into the joint's axis layout
            perm = np.argsort(axes)
            p = p * np.transpose(table, perm).reshape(shape)
        return p

    def observed_law(self) -> np.ndarray:
        """``P`` over :func:`observed_vars` (Y and U summed out)."""
        return _marginal(self.joint(), self.order, observed_vars(self.graph))

    def true_g(self) -> np.ndarray:
        """``E[Y | A, (O,) Z]`` on the observed grid (0 where unsupported)."""
        return _conditional_mean_y(self.joint(), self.order, observed_vars(self.graph), self.supports["Y"])

    def interventional(self, parameter: str, a: int, a_prime: int | None = None, o: int | None = None) -> float:
        """``E[Y^(a)]``, ``E[Y^(a) | A=a']`` or ``E[Y^(a) | O=o]`` by intervention."""
        order = self.order
        keep = ("U", "O") if "O" in order else ("U",)
        # E[Y^(a) | U, O]: U and O are not descendants of A
        pa = self.joint(do_a=a)
        ey = _conditional_mean_y(pa, order, keep, self.supports["Y"])
        full = self.joint()
        if parameter == "ATE":
            w = _marginal(full, order, keep)
        elif parameter == "ATT":
            w = _marginal(full, order, keep + ("A",))[..., a_prime]
            w = w / w.sum()
        elif parameter == "CATE":
            w = _marginal(full, order, keep)
            w = np.where(np.arange(self.card("O")) == o, w, 0.0)
            w = w / w.sum()
        else:
            raise ValueError(parameter)
        return float(np.sum(w * ey))

    def identified(self, parameter: str, a: int, a_prime: int | None = None, o: int | None = None) -> float:
        return identified_value(self.graph, self.observed_law(), self.true_g(), parameter, a, a_prime, o)

    # sampling -----------------------------------------------------------

    def sample(self, n: int, seed: int) -> ColumnarDataset:
        """Ancestral sampling in graph order, one uniform per variable per row."""
        rng = make_rng(seed, "data")
        parents = GRAPHS[self.graph]
        idx: dict[str, np.ndarray] = {}
        for v in self.order:
            table = self.cpts[v]
            rows = table[tuple(idx[p] for p in parents[v])] if parents[v] else np.broadcast_to(table, (n, table.shape[-1]))
            cdf = np.cumsum(rows, axis=1)
            r = rng.random(n)[:, None]
            idx[v] = np.minimum((r >= cdf).sum(axis=1), table.shape[-1] - 1)
        cols = {ROLE_OF[v]: np.asarray(self.supports[v])[idx[v]] for v in self.order if v != "U"}
        names = {ROLE_OF[v]: [v.lower()] for v in self.order if v != "U"}
        return ColumnarDataset(cols, names, seed)


def _marginal(p: np.ndarray, order, keep) -> np.ndarray:
    drop = tuple(i for i, v in enumerate(order) if v not in keep)
    m = p.sum(axis=drop)
    kept = [v for v in order if v in keep]
    return np.transpose(m, [kept.index(v) for v in keep])


def _conditional_mean_y(p: np.ndarray, order, given, y_support) -> np.ndarray:
    with_y = _marginal(p, order, tuple(given) + ("Y",))
    mass = with_y.sum(axis=-1)
    num = with_y @ np.asarray(y_support)
    return np.divide(num, mass, out=np.zeros_like(num), where=mass > 0)


def _normalize(v: np.ndarray) -> np.ndarray:
    s = v.sum()
    return v / s if s > 0 else np.zeros_like(v)


def identified_value(graph: str, law: np.ndarray, g: np.ndarray, parameter: str,
                     a: int, a_prime: int | None = None, o: int | None = None) -> float:
    """Evaluate the identification formula by exhaustive summation.

    ``law`` is a joint over :func:`observed_vars` and ``g`` a table on the same
    grid. Front-door with observed confounder uses the marginal laws of ``O``
    and of ``A'`` as in the estimators (they match the interventional values
    when ``O`` is independent of ``A``)::

        ATE(a)     = sum_a' P(a') sum_o P(o) sum_m P(m|o,a) g(a',o,m)
        ATT(a; a') = sum_o P(o) sum_m P(m|o,a) g(a',o,m)
        CATE(a; o) = sum_a' P(a') sum_m P(m|o,a) g(a',o,m)
    """
    law = np.asarray(law, dtype=np.float64)
    law = law / law.sum()
    pa = law.sum(axis=tuple(range(1, law.ndim)))
    if graph == "backdoor":
        if parameter == "ATE":
            return float(law.sum(axis=0) @ g[a])
        return float(_normalize(law[a_prime]) @ g[a])
    if graph == "frontdoor":
        pm_a = _normalize(law[a])
        if parameter == "ATE":
            return float(sum(pa[ap] * (pm_a @ g[ap]) for ap in range(len(pa))))
        return float(pm_a @ g[a_prime])
    if graph == "backdoor-obs":
        if parameter == "ATE":
            return float(np.sum(law.sum(axis=0) * g[a]))
        if parameter == "ATT":
            return float(np.sum(_normalize(law[a_prime]) * g[a]))
        return float(_normalize(law[:, o, :].sum(axis=0)) @ g[a, o])
    if graph == "frontdoor-obs":
        po = law.sum(axis=(0, 2))
        pm = np.array([_normalize(law[a, oo]) for oo in range(law.shape[1])])  # P(m | o, a)
        if parameter == "ATT":
            return float(sum(po[oo] * (pm[oo] @ g[a_prime, oo]) for oo in range(len(po))))
        if parameter == "ATE":
            return float(sum(pa[ap] * po[oo] * (pm[oo] @ g[ap, oo])
                             for ap in range(len(pa)) for oo in range(len(po))))
        return float(sum(pa[ap] * (pm[o] @ g[ap, o]) for ap in range(len(pa))))
    raise ValueError(f"unknown graph {graph!r}")


def empirical_law(data: ColumnarDataset, scm: DiscreteSCM) -> np.ndarray:
    """Observed-law table estimated by counting the sample."""
    vars_ = observed_vars(scm.graph)
    idx = []
    for v in vars_:
        col = data[ROLE_OF[v]][:, 0]
        sup = np.asarray(scm.supports[v])
        idx.append(np.abs(col[:, None] - sup[None, :]).argmin(axis=1))
    counts = np.zeros(tuple(scm.card(v) for v in vars_))
    np.add.at(counts, tuple(idx), 1.0)
    return counts / data.n


def support_grid(scm: DiscreteSCM) -> list[tuple[int, ...]]:
    return list(itertools.product(*(range(scm.card(v)) for v in observed_vars(scm.graph))))


def random_scm(graph: str, seed: int, card: int = 2, concentration: float = 2.0,
               floor: float = 0.05) -> DiscreteSCM:
    """Random tables with every cell at least ``floor`` (positivity).

    Supports are ``0 .. card-1`` for every variable.
    """
    rng = make_rng(seed, "scm")
    parents = GRAPHS[graph]
    supports = {v: tuple(float(i) for i in range(card)) for v in parents}
    cpts = {}
    for v, pa in parents.items():
        shape = tuple(card for _ in pa) + (card,)
        raw = rng.dirichlet(np.full(card, concentration), size=shape[:-1] or None)
        raw = np.asarray(raw).reshape(shape)
        table = floor + (1.0 - card * floor) * raw
        cpts[v] = table / table.sum(axis=-1, keepdims=True)
    return DiscreteSCM(graph, supports, cpts)
