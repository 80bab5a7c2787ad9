import numpy as np
import pytest

from causal_embed.data import ColumnarDataset
from causal_embed.errors import MissingRegressor, RoleMismatch
from causal_embed.estimators import (
    CausalQuery,
    ate_backdoor,
    ate_frontdoor,
    att_backdoor,
    att_frontdoor,
    estimate,
    obs_confounder_estimates,
)
from causal_embed.nn import FeatureMap
from causal_embed.stage1 import StageOneModel, TrainConfig, train_stage1
from causal_embed.stage2 import EmbeddingRegressor, Stage2Config, train_embedding

from helpers import collapse_pair, fit_discrete, oracle_gaps

BD = ("treatment", "backdoor")
FD = ("treatment", "frontdoor")


def identity_map():
    return FeatureMap((1, 1), [np.eye(1)], [np.zeros(1)])


def affine_regressor(scale, shift, conditioning=("treatment",), target=("frontdoor",), in_dim=1):
    net = FeatureMap((in_dim, 1), [np.full((1, in_dim), float(scale))], [np.array([float(shift)])])
    return EmbeddingRegressor(net, conditioning, target, n_train=10)


def random_map(rng, in_dim, out_dim):
    return FeatureMap.init((in_dim, 6, out_dim), rng)


def random_regressor(rng, in_dim, out_dim, conditioning, target):
    return EmbeddingRegressor(FeatureMap.init((in_dim, 5, out_dim), rng), conditioning, target, n_train=7)


def random_obs_setup(adjustment, seed=0, n=40):
    """Random three-factor model, data and every regressor the formulas use."""
    rng = np.random.default_rng(seed)
    dims = (3, 2, 4)
    maps = [random_map(rng, 1, d) for d in dims]
    roles = ("treatment", "confounder", adjustment)
    model = StageOneModel(roles, maps, rng.normal(size=int(np.prod(dims))), 0.1)
    cols = {r: rng.normal(size=n) for r in roles}
    cols["outcome"] = rng.normal(size=n)
    data = ColumnarDataset(cols)
    if adjustment == "backdoor":
        regs = [random_regressor(rng, 1, 8, ("treatment",), ("confounder", "backdoor")),
                random_regressor(rng, 1, 4, ("confounder",), ("backdoor",))]
    else:
        regs = [random_regressor(rng, 2, 4, ("confounder", "treatment"), ("frontdoor",))]
    return model, data, regs


def obs_queries(adjustment):
    return [CausalQuery("ATE", adjustment, 0.3),
            CausalQuery("ATT", adjustment, 0.3, a_prime=-0.7),
            CausalQuery("CATE", adjustment, 0.3, o=1.1)]


# closed forms ------------------------------------------------------------------


def test_zero_weight_two_factor():
    data = ColumnarDataset({"treatment": np.arange(5.0), "backdoor": np.ones(5), "frontdoor": np.ones(5)})
    bd = StageOneModel(BD, [identity_map(), identity_map()], np.zeros(1), 0.1)
    fd = StageOneModel(FD, [identity_map(), identity_map()], np.zeros(1), 0.1)
    reg_x = affine_regressor(2.0, 1.0, target=("backdoor",))
    reg_m = affine_regressor(2.0, 1.0)
    assert ate_backdoor(bd, data, 1.5).value == 0.0
    assert att_backdoor(bd, reg_x, 1.5, 0.5).value == 0.0
    assert ate_frontdoor(fd, data, reg_m, 1.5).value == 0.0
    assert att_frontdoor(fd, reg_m, 1.5, 0.5).value == 0.0


def test_zero_regressor_output():
    model = StageOneModel(BD, [identity_map(), identity_map()], np.array([3.0]), 0.1)
    assert att_backdoor(model, affine_regressor(0.0, 0.0, target=("backdoor",)), 2.0, 1.0).value == 0.0


@pytest.mark.parametrize("adjustment", ["backdoor", "frontdoor"])
def test_zero_weight_all_obs_formulas(adjustment):
    model, data, regs = random_obs_setup(adjustment)
    model.weight[:] = 0.0
    for q in obs_queries(adjustment):
        assert obs_confounder_estimates(model, data, regs, q).value == 0.0


def test_backdoor_ate_one_dim_closed_form():
    x = np.array([0.5, -1.0, 2.0, 3.5])
    data = ColumnarDataset({"treatment": np.zeros(4), "backdoor": x})
    model = StageOneModel(BD, [identity_map(), identity_map()], np.array([1.5]), 0.1)
    assert ate_backdoor(model, data, 2.0).value == pytest.approx(1.5 * 2.0 * np.mean(x), abs=1e-15)


def test_frontdoor_ate_one_dim_closed_form():
    a = np.array([0.25, 1.0, -2.0, 4.0, 0.75])
    data = ColumnarDataset({"treatment": a, "frontdoor": np.zeros(5)})
    model = StageOneModel(FD, [identity_map(), identity_map()], np.array([-0.5]), 0.1)
    reg = affine_regressor(2.0, 1.0)
    # f(a) = 2 a + 1
    assert ate_frontdoor(model, data, reg, 3.0).value == pytest.approx(-0.5 * np.mean(a) * 7.0, abs=1e-14)


def test_frontdoor_att_argument_placement():
    # treatment features at a', mediator embedding at a
    model = StageOneModel(FD, [identity_map(), identity_map()], np.array([1.0]), 0.1)
    reg = affine_regressor(1.0, 0.0)
    assert att_frontdoor(model, reg, 2.0, 5.0).value == pytest.approx(10.0)
    reg = affine_regressor(1.0, 10.0)
    assert att_frontdoor(model, reg, 0.0, 3.0).value == pytest.approx(30.0)


def test_backdoor_att_bilinear_form():
    rng = np.random.default_rng(3)
    model = StageOneModel(BD, [random_map(rng, 1, 3), random_map(rng, 1, 4)], rng.normal(size=12), 0.1)
    reg = random_regressor(rng, 1, 4, ("treatment",), ("backdoor",))
    got = att_backdoor(model, reg, 0.4, -0.2).value
    want = model.maps[0].forward(np.array([0.4])) @ model.weight.reshape(3, 4) @ reg.embed(np.array([-0.2]))
    assert got == pytest.approx(want, abs=1e-13)


@pytest.mark.parametrize("seed", range(5))
def test_ate_equals_mean_prediction(seed):
    rng = np.random.default_rng(seed)
    model = StageOneModel(BD, [random_map(rng, 2, 4), random_map(rng, 3, 5)], rng.normal(size=20), 0.1)
    data = ColumnarDataset({"treatment": rng.normal(size=(200, 2)), "backdoor": rng.normal(size=(200, 3))})
    a = rng.normal(size=2)
    mean_pred = np.mean(model.predict(np.tile(a, (200, 1)), data["backdoor"]))
    assert abs(ate_backdoor(model, data, a).value - mean_pred) <= 1e-10


# obs-confounder formulas vs direct sums -----------------------------------------


def test_obs_backdoor_formulas_vs_direct_sums():
    model, data, regs = random_obs_setup("backdoor", seed=1)
    W = model.weight_tensor()
    pa, po, px = model.maps
    a, a_prime, o = 0.3, -0.7, 1.1
    fa = pa.forward(np.array([a]))
    ate = np.mean([np.einsum("i,ijk,j,k", fa, W, po.forward(np.array([oi])), px.forward(np.array([xi])))
                   for oi, xi in zip(data["confounder"][:, 0], data["backdoor"][:, 0])])
    att = np.einsum("i,ij", fa, W.reshape(W.shape[0], -1)) @ regs[0].embed(np.array([a_prime]))
    cate = np.einsum("i,ijk,j,k", fa, W, po.forward(np.array([o])), regs[1].embed(np.array([o])))
    got = [obs_confounder_estimates(model, data, regs, q).value for q in obs_queries("backdoor")]
    np.testing.assert_allclose(got, [ate, att, cate], rtol=0, atol=1e-12)


def test_obs_frontdoor_formulas_vs_direct_sums():
    model, data, regs = random_obs_setup("frontdoor", seed=2)
    W = model.weight_tensor()
    pa, po, _ = model.maps
    f = regs[0]
    a, a_prime, o = 0.3, -0.7, 1.1
    mean_a = np.mean(pa.forward(data["treatment"]), axis=0)
    os_ = data["confounder"][:, 0]
    inner = np.mean([np.outer(po.forward(np.array([oj])), f.embed(np.array([oj]), np.array([a]))) for oj in os_], axis=0)
    ate = np.einsum("i,ijk,jk", mean_a, W, inner)
    att = np.einsum("i,ijk,jk", pa.forward(np.array([a_prime])), W, inner)
    cate = np.einsum("i,ijk,j,k", mean_a, W, po.forward(np.array([o])), f.embed(np.array([o]), np.array([a])))
    got = [obs_confounder_estimates(model, data, regs, q).value for q in obs_queries("frontdoor")]
    np.testing.assert_allclose(got, [ate, att, cate], rtol=0, atol=1e-12)


# properties --------------------------------------------------------------------


@pytest.mark.parametrize("adjustment", ["backdoor", "frontdoor"])
def test_linearity_in_weight(adjustment):
    model, data, regs = random_obs_setup(adjustment, seed=4)
    base = [obs_confounder_estimates(model, data, regs, q).value for q in obs_queries(adjustment)]
    model.weight = 2.0 * model.weight
    scaled = [obs_confounder_estimates(model, data, regs, q).value for q in obs_queries(adjustment)]
    assert scaled == [2.0 * v for v in base]


def test_linearity_two_factor():
    rng = np.random.default_rng(5)
    model = StageOneModel(BD, [random_map(rng, 1, 3), random_map(rng, 1, 3)], rng.normal(size=9), 0.1)
    data = ColumnarDataset({"treatment": rng.normal(size=30), "backdoor": rng.normal(size=30)})
    v = ate_backdoor(model, data, 0.2).value
    model.weight = -3.0 * model.weight
    assert ate_backdoor(model, data, 0.2).value == pytest.approx(-3.0 * v, rel=1e-15)


@pytest.mark.parametrize("adjustment", ["backdoor", "frontdoor"])
def test_estimates_deterministic(adjustment):
    m1, d1, r1 = random_obs_setup(adjustment, seed=6)
    m2, d2, r2 = random_obs_setup(adjustment, seed=6)
    for q in obs_queries(adjustment):
        assert obs_confounder_estimates(m1, d1, r1, q).value == obs_confounder_estimates(m2, d2, r2, q).value


def test_collapse_to_two_factor():
    for label, three, two in collapse_pair(seed=0):
        assert abs(three - two) <= 1e-10, label


# trained models ------------------------------------------------------------------


@pytest.mark.parametrize("graph", ["backdoor", "frontdoor", "backdoor-obs", "frontdoor-obs"])
def test_discrete_oracle(graph):
    gaps = oracle_gaps(*fit_discrete(graph, scm_seed=11, n=20000, seed=1))
    for parameter, gap in gaps:
        tol = 0.02 if (graph == "backdoor" and parameter == "ATE") else 0.05
        assert gap <= tol, (parameter, gap)


def test_att_matches_ate_under_independence():
    rng = np.random.default_rng(0)
    n = 3000
    a, x = rng.normal(size=(2, n))
    data = ColumnarDataset({"treatment": a, "backdoor": x, "outcome": a + a * x + 0.1 * rng.normal(size=n)})
    model = train_stage1(data, BD, TrainConfig(epochs=20, seed=0))
    reg = train_embedding(model.map_for("backdoor"), x, a, Stage2Config(epochs=30, seed=0), ("treatment",), ("backdoor",))
    for q in (-1.0, 0.0, 1.0):
        ate = ate_backdoor(model, data, q).value
        for q_prime in (-0.5, 0.5):
            assert abs(att_backdoor(model, reg, q, q_prime).value - ate) < 0.05


def test_frontdoor_att_deterministic_mediator():
    rng = np.random.default_rng(1)
    n = 3000
    u = rng.normal(size=n)
    a = u + rng.normal(size=n)
    m = np.sin(a)
    data = ColumnarDataset({"treatment": a, "frontdoor": m, "outcome": m + u + 0.1 * rng.normal(size=n)})
    model = train_stage1(data, FD, TrainConfig(epochs=20, seed=0))
    reg = train_embedding(model.map_for("frontdoor"), m, a, Stage2Config(epochs=50, seed=0), ("treatment",), ("frontdoor",))
    for q in (-1.0, 0.0, 1.0):
        g = model.predict(np.array([q]), np.array([np.sin(q)]))[0]
        assert abs(att_frontdoor(model, reg, q, q).value - g) < 0.05


def test_frontdoor_and_backdoor_ate_agree():
    # x confounds a and y; m mediates a -> y without confounding
    rng = np.random.default_rng(0)
    n = 5000
    x = rng.normal(size=n)
    a = x + rng.normal(size=n)
    m = a + 0.5 * rng.normal(size=n)
    y = m + 0.5 * m**2 + x + 0.3 * rng.normal(size=n)
    data = ColumnarDataset({"treatment": a, "backdoor": x, "frontdoor": m, "outcome": y})
    bd = train_stage1(data, BD, TrainConfig(seed=0))
    fd = train_stage1(data, FD, TrainConfig(seed=0))
    reg = train_embedding(fd.map_for("frontdoor"), m, a, Stage2Config(seed=0), ("treatment",), ("frontdoor",))
    grid = np.linspace(-1.5, 1.5, 7)
    gaps = [abs(ate_backdoor(bd, data, q).value - ate_frontdoor(fd, data, reg, q).value) for q in grid]
    assert np.median(gaps) < 0.1


# errors --------------------------------------------------------------------------


def test_role_mismatch_errors():
    data = ColumnarDataset({"treatment": np.ones(3), "backdoor": np.ones(3), "frontdoor": np.ones(3)})
    fd = StageOneModel(FD, [identity_map(), identity_map()], np.ones(1), 0.1)
    bd = StageOneModel(BD, [identity_map(), identity_map()], np.ones(1), 0.1)
    with pytest.raises(RoleMismatch):
        ate_backdoor(fd, data, 1.0)
    with pytest.raises(RoleMismatch):
        att_backdoor(bd, affine_regressor(1, 0, target=("frontdoor",)), 1.0, 1.0)
    with pytest.raises(RoleMismatch):
        ate_frontdoor(bd, data, affine_regressor(1, 0), 1.0)
    with pytest.raises(RoleMismatch):
        estimate(bd, data, [], CausalQuery("CATE", "backdoor", 1.0, o=0.0))
    model, data3, regs = random_obs_setup("backdoor")
    with pytest.raises(RoleMismatch):
        obs_confounder_estimates(model, data3, regs, CausalQuery("ATE", "frontdoor", 0.0))


def test_missing_regressor():
    model, data, regs = random_obs_setup("backdoor")
    with pytest.raises(MissingRegressor):
        obs_confounder_estimates(model, data, regs[:1], CausalQuery("CATE", "backdoor", 0.0, o=1.0))
    bd = StageOneModel(BD, [identity_map(), identity_map()], np.ones(1), 0.1)
    with pytest.raises(MissingRegressor):
        estimate(bd, data, [], CausalQuery("ATT", "backdoor", 0.0, a_prime=1.0))


def test_query_validation():
    with pytest.raises(ValueError):
        CausalQuery("ATT", "backdoor", 1.0)
    with pytest.raises(ValueError):
        CausalQuery("ATE", "backdoor", 1.0, o=2.0)
    with pytest.raises(ValueError):
        CausalQuery("ATE", "sideways", 1.0)
