import json
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from calrm.demand import DemandModel, derive_probabilities
from calrm.errors import DimensionMismatch, ParamOutOfRange, ParseError, UnknownName, ValidationError
from calrm.instance import (
    FIXTURE_NAMES,
    HubSpokeConfig,
    NetworkInstance,
    count_paths,
    counterexample,
    enumerate_paths,
    generate_hub_spoke,
    load_instance,
    lognormal_row,
    save_instance,
)


def tiny(**over):
    kw = dict(
        capacities=np.array([2]),
        revenues=np.array([1.0, 0.0]),
        usage=np.array([[1, 0]]),
        arrivals=np.full((1, 2, 2), 0.5),
        null_product_index=1,
    )
    kw.update(over)
    return NetworkInstance(**kw)


def test_tiny_instance_properties():
    inst = tiny()
    assert (inst.n_resources, inst.n_products, inst.K, inst.T) == (1, 2, 1, 2)
    assert inst.max_usage == 1 and inst.c_min == 2
    assert inst.real_products().tolist() == [0]


@pytest.mark.parametrize(
    "over,err",
    [
        (dict(capacities=np.array([0])), ValidationError),
        (dict(capacities=np.array([1.5])), ValidationError),
        (dict(usage=np.array([[2, 0]])), ValidationError),
        (dict(usage=np.array([[1, 0], [0, 0]])), DimensionMismatch),
        (dict(arrivals=np.full((1, 2, 2), 0.6)), ValidationError),
        (dict(arrivals=np.full((1, 2, 3), 1 / 3)), DimensionMismatch),
        (dict(revenues=np.array([1.0, 0.5])), ValidationError),
        (dict(null_product_index=None), ValidationError),  # product 1 would use nothing
        (dict(revenues=np.array([-1.0, 0.0])), ValidationError),
    ],
)
def test_instance_validation(over, err):
    with pytest.raises(err):
        tiny(**over)


def test_compatibility_check():
    with pytest.raises(DimensionMismatch):
        tiny().check_compatible(DemandModel(2, 2, np.full((2, 2, 2), 0.5), 1))


def test_json_round_trip(tmp_path):
    inst, model = generate_hub_spoke(HubSpokeConfig(K=2, base_mean=4, seed=3))
    save_instance(tmp_path / "i.json", inst, model)
    inst2, model2 = load_instance(tmp_path / "i.json")
    assert inst2 == inst and model2 == model


def test_demand_by_reference(tmp_path):
    inst = tiny()
    model = DemandModel(1, 2, np.full((1, 2, 2), 0.5), 1)
    model.save(tmp_path / "d.json")
    doc = inst.to_dict()
    doc["demand"] = "d.json"
    (tmp_path / "i.json").write_text(json.dumps(doc))
    assert load_instance(tmp_path / "i.json")[1] == model


@pytest.mark.parametrize("mutate", [lambda d: d.pop("products"), lambda d: d["products"][0].pop("usage"),
                                    lambda d: d.pop("demand")])
def test_parse_errors(tmp_path, mutate):
    inst = tiny()
    doc = inst.to_dict()
    doc["demand"] = DemandModel(1, 2, np.full((1, 2, 2), 0.5), 1).to_dict()
    mutate(doc)
    (tmp_path / "i.json").write_text(json.dumps(doc))
    with pytest.raises(ParseError):
        load_instance(tmp_path / "i.json")


def test_hub_spoke_shape_and_normalization():
    cfg = HubSpokeConfig(K=3, base_mean=10, rho=0.2, seed=5)
    inst, model = generate_hub_spoke(cfg)
    assert inst.n_resources == 6 and inst.n_products == 24
    assert model.T == 19 == cfg.T
    np.testing.assert_allclose(inst.arrivals.sum(axis=2), 1.0, atol=1e-12)
    # high fare is kappa times low fare, and both fares of a pair use the same legs
    np.testing.assert_allclose(inst.revenues[1::2], 8.0 * inst.revenues[0::2])
    assert np.array_equal(inst.usage[:, 0::2], inst.usage[:, 1::2])
    # direct itineraries use one leg, connections two
    assert sorted(set(inst.usage.sum(axis=0).tolist())) == [1, 2]
    assert inst.max_usage == 2
    # capacities follow ceil(xi / beta)
    tail = derive_probabilities(model).tail
    xi = np.einsum("ij,kt,ktj->i", inst.usage, tail, inst.arrivals)
    np.testing.assert_array_equal(inst.capacities, np.maximum(np.ceil(xi / 1.6), 1))


def test_hub_spoke_deterministic():
    cfg = HubSpokeConfig(K=3, base_mean=10, rho=0.2, seed=11)
    a, b = generate_hub_spoke(cfg), generate_hub_spoke(cfg)
    assert a[0] == b[0] and a[1] == b[1]
    assert not generate_hub_spoke(HubSpokeConfig(K=3, base_mean=10, rho=0.2, seed=12))[0] == a[0]


def test_hub_spoke_conditional_mean():
    cfg = HubSpokeConfig(K=2, base_mean=10, rho=0.5, seed=0)
    _, model = generate_hub_spoke(cfg)
    d = np.arange(1, model.T + 1)
    means = model.transition[0] @ d
    # rounding up adds about half a unit, truncation at T removes a little
    mu = 0.5 * d + 5
    assert np.all(np.abs(means - mu - 0.5) < 0.6)
    assert np.all(np.diff(means) > 0)


@given(st.floats(2.0, 50.0), st.floats(0.05, 1.0), st.integers(1, 80))
def test_lognormal_row_against_scipy(mean, cv, T):
    row = lognormal_row(mean, cv, T)
    assert row.shape == (T,) and abs(row.sum() - 1) < 1e-12 and np.all(row >= 0)
    # independent route: survival function of the same log-normal
    sigma = np.sqrt(np.log1p(cv * cv))
    X = stats.lognorm(s=sigma, scale=mean * np.exp(-sigma**2 / 2))
    assert abs(X.mean() - mean) < 1e-8 * mean
    tail_T = X.sf(T - 1) if T > 1 else 1.0
    assert abs(row[-1] - tail_T) < 1e-9


@pytest.mark.parametrize("cfg", [dict(rho=1.0), dict(rho=-0.1), dict(base_mean=1), dict(beta=0), dict(K=0)])
def test_hub_spoke_config_ranges(cfg):
    with pytest.raises(ParamOutOfRange):
        HubSpokeConfig(**{"K": 2, **cfg})


@pytest.mark.parametrize("name", FIXTURE_NAMES)
def test_fixtures_build(name):
    fx = counterexample(name)
    fx.instance.check_compatible(fx.demand)
    assert all(isinstance(v, Fraction) for v in fx.known.values())


def test_fixture_shapes():
    n = counterexample("appN", {"alpha": 3})
    assert n.instance.capacities.tolist() == [9]
    paths = dict(enumerate_paths(n.demand))
    assert paths == {(3,): pytest.approx(0.75), (27,): pytest.approx(0.25)}
    g = counterexample("appG", {"C": 10})
    assert g.known["prf"] == Fraction(25, 2)
    f = counterexample("appF", {"K": 4})
    assert f.instance.capacities.tolist() == [2]


@pytest.mark.parametrize(
    "name,params",
    [("appF", {"K": 3}), ("appG", {"C": 7}), ("appG", {"C": 6}), ("appK1", {"alpha": 1}), ("appN", {"alpha": 2.5})],
)
def test_fixture_param_ranges(name, params):
    with pytest.raises(ParamOutOfRange):
        counterexample(name, params)


def test_unknown_fixture():
    with pytest.raises(UnknownName):
        counterexample("appZ")


def test_path_counts():
    assert count_paths(counterexample("appF", {"K": 6}).demand) == 1
    assert count_paths(counterexample("appK2").demand) == 4
    m = counterexample("appE1").demand
    assert count_paths(m) == len(list(enumerate_paths(m))) == 3
