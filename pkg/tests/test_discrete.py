import numpy as np
import pytest

from causal_embed.discrete import (
    GRAPHS,
    DiscreteSCM,
    empirical_law,
    graph_parameters,
    identified_value,
    random_scm,
)
from causal_embed.errors import InvalidDistribution


def constant_scm(graph, y_value=3.0):
    supports = {v: (0.0,) for v in GRAPHS[graph]}
    supports["Y"] = (y_value,)
    cpts = {v: np.ones((1,) * (len(pa) + 1)) for v, pa in GRAPHS[graph].items()}
    return DiscreteSCM(graph, supports, cpts)


def parameter_args(scm):
    """All (parameter, a, a', o) index combinations."""
    out = []
    for p in graph_parameters(scm.graph):
        for a in range(scm.card("A")):
            if p == "ATE":
                out.append((p, a, None, None))
            elif p == "ATT":
                out.extend((p, a, ap, None) for ap in range(scm.card("A")))
            else:
                out.extend((p, a, None, o) for o in range(scm.card("O")))
    return out


def test_rows_must_sum_to_one():
    scm = random_scm("backdoor", 0)
    cpts = dict(scm.cpts)
    cpts["X"] = cpts["X"] + 1e-9
    with pytest.raises(InvalidDistribution):
        DiscreteSCM("backdoor", dict(scm.supports), cpts)


def test_tiny_rounding_accepted():
    scm = random_scm("backdoor", 0)
    cpts = dict(scm.cpts)
    cpts["X"] = cpts["X"] * (1 + 1e-15)
    DiscreteSCM("backdoor", dict(scm.supports), cpts)


def test_table_shape_and_sign_checked():
    scm = random_scm("frontdoor", 0)
    with pytest.raises(InvalidDistribution):
        DiscreteSCM("frontdoor", dict(scm.supports), {**scm.cpts, "M": np.full((3, 2), 0.5)})
    with pytest.raises(InvalidDistribution):
        DiscreteSCM("frontdoor", dict(scm.supports), {**scm.cpts, "U": np.array([1.5, -0.5])})
    with pytest.raises(InvalidDistribution):
        DiscreteSCM("frontdoor", {k: v for k, v in scm.supports.items() if k != "M"}, dict(scm.cpts))
    with pytest.raises(ValueError):
        DiscreteSCM("sideways", dict(scm.supports), dict(scm.cpts))


@pytest.mark.parametrize("graph", sorted(GRAPHS))
def test_degenerate_spec(graph):
    scm = constant_scm(graph)
    data = scm.sample(20, 0)
    for role in data.columns:
        assert np.all(data[role] == data[role][0])
    assert np.all(data.outcome() == 3.0)
    for args in parameter_args(scm):
        assert scm.identified(*args) == 3.0
        assert scm.interventional(*args) == 3.0


def test_uniform_independent_att_ignores_a_prime():
    scm = random_scm("backdoor", 3)
    cpts = dict(scm.cpts)
    for v in ("U", "X", "A"):
        cpts[v] = np.full_like(cpts[v], 0.5)
    scm = DiscreteSCM("backdoor", dict(scm.supports), cpts)
    for a in range(2):
        ate = scm.interventional("ATE", a)
        assert scm.interventional("ATT", a, 0) == pytest.approx(ate, abs=1e-15)
        assert scm.interventional("ATT", a, 1) == pytest.approx(ate, abs=1e-15)
        assert scm.identified("ATT", a, 1) == pytest.approx(ate, abs=1e-15)


@pytest.mark.parametrize("graph", sorted(GRAPHS))
def test_empirical_frequencies_within_binomial_bounds(graph):
    n = 100_000
    scm = random_scm(graph, 5)
    p = scm.observed_law()
    freq = empirical_law(scm.sample(n, 1), scm)
    assert np.all(np.abs(freq - p) <= 3 * np.sqrt(p * (1 - p) / n))


@pytest.mark.parametrize("graph", ["backdoor", "frontdoor", "backdoor-obs"])
@pytest.mark.parametrize("seed", range(4))
def test_identification_matches_intervention(graph, seed):
    scm = random_scm(graph, seed)
    for args in parameter_args(scm):
        assert scm.identified(*args) == pytest.approx(scm.interventional(*args), abs=1e-12)


def test_frontdoor_obs_matches_when_confounder_is_independent():
    scm = random_scm("frontdoor-obs", 2)
    cpts = dict(scm.cpts)
    # O ignores U and A ignores O, so O is independent of (U, A)
    cpts["O"] = np.tile(cpts["O"][0], (2, 1))
    cpts["A"] = np.repeat(cpts["A"][:, :1, :], 2, axis=1)
    scm = DiscreteSCM("frontdoor-obs", dict(scm.supports), cpts)
    for args in parameter_args(scm):
        assert scm.identified(*args) == pytest.approx(scm.interventional(*args), abs=1e-12)


def test_identified_value_by_hand_backdoor():
    law = np.array([[0.1, 0.3], [0.4, 0.2]])  # P(a, x)
    g = np.array([[1.0, 2.0], [3.0, 5.0]])
    # P(x) = (0.5, 0.5)
    assert identified_value("backdoor", law, g, "ATE", 1) == pytest.approx(4.0)
    # P(x | a'=0) = (0.25, 0.75)
    assert identified_value("backdoor", law, g, "ATT", 1, a_prime=0) == pytest.approx(0.25 * 3 + 0.75 * 5)


def test_identified_value_by_hand_frontdoor():
    law = np.array([[0.1, 0.3], [0.4, 0.2]])  # P(a, m)
    g = np.array([[1.0, 2.0], [3.0, 5.0]])
    pm_given_a1 = np.array([2 / 3, 1 / 3])
    ate = 0.4 * (pm_given_a1 @ g[0]) + 0.6 * (pm_given_a1 @ g[1])
    assert identified_value("frontdoor", law, g, "ATE", 1) == pytest.approx(ate)
    assert identified_value("frontdoor", law, g, "ATT", 1, a_prime=0) == pytest.approx(pm_given_a1 @ g[0])


def test_sampling_reproducible():
    scm = random_scm("backdoor-obs", 1)
    a, b = scm.sample(500, 3), scm.sample(500, 3)
    for role in a.columns:
        assert np.array_equal(a[role], b[role])


def test_random_scm_positivity():
    for graph in GRAPHS:
        scm = random_scm(graph, 9)
        assert np.all(scm.observed_law() > 0)
        for t in scm.cpts.values():
            assert np.all(t >= 0.05)
