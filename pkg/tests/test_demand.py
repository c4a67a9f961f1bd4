import json
import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from calrm.demand import (
    CalibrationTarget,
    DemandModel,
    calibrate_total_demand,
    conditional_joint,
    conditional_joint_all,
    derive_probabilities,
    min_transition_mass,
    sample_path,
    total_demand_pmf,
    validate_model,
)
from calrm.errors import ConditioningOnNull, InvalidTarget, ParseError, ValidationError
from calrm.instance import count_paths, enumerate_paths
from strategies import demand_models


def brute_w(model):
    """w[k, t, q] by summing path probabilities."""
    K, T = model.K, model.T
    w = np.zeros((K, T, T))
    for path, p in enumerate_paths(model):
        prev = (model.initial_prev_demand,) + path
        for k in range(K):
            w[k, : path[k], prev[k] - 1] += p
    return w


def test_rejects_bad_rows():
    tr = np.full((1, 2, 2), 0.5)
    tr[0, 1] = [0.7, 0.4]
    with pytest.raises(ValidationError, match="prev demand 2"):
        DemandModel(1, 2, tr, 1)


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(K=0, T=1, transition=np.ones((0, 1, 1)), initial_prev_demand=1),
        dict(K=1, T=2, transition=np.full((1, 2, 3), 1 / 3), initial_prev_demand=1),
        dict(K=1, T=2, transition=np.full((1, 2, 2), 0.5), initial_prev_demand=3),
        dict(K=1, T=2, transition=np.array([[[1.5, -0.5], [0.5, 0.5]]]), initial_prev_demand=1),
    ],
)
def test_validation_errors(kwargs):
    with pytest.raises(ValidationError):
        DemandModel(**kwargs)


def test_two_stage_hand_values():
    tr = np.array([[[0.5, 0.5], [0.5, 0.5]], [[0.0, 1.0], [0.5, 0.5]]])
    m = DemandModel(2, 2, tr, 1)
    pr = derive_probabilities(m)
    # stage 2: D^1 = 1 forces D^2 = 2; D^1 = 2 gives 1 or 2
    np.testing.assert_allclose(pr.w[1], [[0.5, 0.5], [0.5, 0.25]])
    np.testing.assert_allclose(pr.tail[1], [1.0, 0.75])
    np.testing.assert_allclose(pr.survival[1], [[1.0, 0.5], [0.0, 0.0]])
    assert pr.eps == 0.0


@given(demand_models())
def test_w_matches_path_enumeration(model):
    pr = derive_probabilities(model)
    np.testing.assert_allclose(pr.w, brute_w(model), atol=1e-12)
    assert np.all(pr.w >= 0)
    # P{D^k >= 1} = 1 and w is nonincreasing in t
    np.testing.assert_allclose(pr.tail[:, 0], 1.0, atol=1e-12)
    assert np.all(np.diff(pr.w, axis=1) <= 1e-15)


@given(demand_models())
def test_survival_consistent_with_w(model):
    pr = derive_probabilities(model)
    assert np.all((pr.survival >= 0) & (pr.survival <= 1))
    assert np.all(pr.survival[:, -1, :] == 0)
    np.testing.assert_allclose(pr.w[:, 1:, :], pr.w[:, :-1, :] * pr.survival[:, :-1, :], atol=1e-12)


@given(demand_models(max_K=3, max_T=3))
def test_conditional_joint_against_enumeration(model):
    pr = derive_probabilities(model)
    K, T = model.K, model.T
    paths = list(enumerate_paths(model))
    for k in range(2, K + 1):
        cj = conditional_joint_all(model, pr, k)
        for q in range(1, T + 1):
            mass = sum(p for path, p in paths if path[k - 2] == q)
            if mass == 0:
                assert np.all(cj[..., q - 1] == 0)
                with pytest.raises(ConditioningOnNull):
                    conditional_joint(model, pr, k, q)
                continue
            want = np.zeros((k - 1, T, T))
            for path, p in paths:
                if path[k - 2] != q:
                    continue
                prev = (model.initial_prev_demand,) + path
                for ell in range(k - 1):
                    want[ell, : path[ell], prev[ell] - 1] += p / mass
            np.testing.assert_allclose(conditional_joint(model, pr, k, q), want, atol=1e-12)


def test_independent_conditional_equals_unconditional():
    row = np.array([0.2, 0.3, 0.5])
    m = DemandModel(3, 3, np.broadcast_to(row, (3, 3, 3)).copy(), 2)
    assert m.is_independent()
    pr = derive_probabilities(m)
    cj = conditional_joint_all(m, pr, 3)
    for q in range(3):
        # stages before k-1 keep their unconditional law
        np.testing.assert_allclose(cj[0, ..., q], pr.w[0], atol=1e-12)
        # stage k-1 itself is pinned to q
        want = (np.arange(1, 4)[:, None] <= q + 1) * pr.marginal[1][None, :]
        np.testing.assert_allclose(cj[1, ..., q], want, atol=1e-12)


def test_min_mass_and_warning():
    m = DemandModel(1, 2, np.array([[[1.0, 0.0], [0.5, 0.5]]]), 1)
    assert min_transition_mass(m) == 0.0
    with warnings.catch_warnings(record=True) as rec:
        warnings.simplefilter("always")
        assert validate_model(m) == 0.0
    assert rec


def test_sample_path_frequencies():
    tr = np.array([[[0.25, 0.75], [0.25, 0.75]], [[0.9, 0.1], [0.2, 0.8]]])
    m = DemandModel(2, 2, tr, 1)
    rng = np.random.default_rng(0)
    n = 40_000
    counts = {}
    for _ in range(n):
        d = sample_path(m, rng).demands
        counts[d] = counts.get(d, 0) + 1
    for path, p in enumerate_paths(m):
        se = np.sqrt(p * (1 - p) / n)
        assert abs(counts.get(path, 0) / n - p) < 5 * se


def test_json_round_trip(tmp_path):
    tr = np.random.default_rng(1).dirichlet(np.ones(3), size=(2, 3))
    m = DemandModel(2, 3, tr, 3)
    m.save(tmp_path / "m.json")
    assert DemandModel.load(tmp_path / "m.json") == m
    (tmp_path / "bad.json").write_text("{")
    with pytest.raises(ParseError):
        DemandModel.load(tmp_path / "bad.json")
    doc = m.to_dict()
    del doc["T"]
    with pytest.raises(ParseError):
        DemandModel.from_dict(json.loads(json.dumps(doc)))


@given(st.integers(1, 3), st.integers(1, 4), st.integers(0, 2**32 - 1), st.booleans())
def test_calibration_reproduces_target(K, T, seed, holes):
    rng = np.random.default_rng(seed)
    size = K * (T - 1) + 1
    pmf = rng.dirichlet(np.ones(size))
    if holes:
        pmf[rng.random(size) < 0.5] = 0.0
        if pmf.sum() == 0:
            pmf[-1] = 1.0
        pmf /= pmf.sum()
    model = calibrate_total_demand(CalibrationTarget(K, T, pmf))
    np.testing.assert_allclose(total_demand_pmf(model), pmf, atol=1e-12)
    law = np.zeros(size)
    for path, p in enumerate_paths(model):
        law[sum(path) - K] += p
    np.testing.assert_allclose(law, pmf, atol=1e-12)


def test_calibration_point_masses():
    # all mass at the extremes
    for atom, path in [(0, (1, 1, 1)), (6, (3, 3, 3))]:
        pmf = np.zeros(7)
        pmf[atom] = 1.0
        model = calibrate_total_demand(CalibrationTarget(3, 3, pmf))
        assert list(enumerate_paths(model)) == [(path, 1.0)]


@pytest.mark.parametrize(
    "K,T,pmf",
    [(2, 2, [0.5, 0.6, -0.1]), (2, 2, [0.5, 0.5]), (2, 2, [0.5, 0.4, 0.0]), (0, 2, [1.0])],
)
def test_bad_targets(K, T, pmf):
    with pytest.raises(InvalidTarget):
        CalibrationTarget(K, T, np.array(pmf))


def test_calibration_dimension_mismatch():
    with pytest.raises(InvalidTarget):
        calibrate_total_demand(CalibrationTarget(2, 2, np.array([0.2, 0.3, 0.5])), K=3)


@given(demand_models(max_K=3, max_T=3))
def test_total_pmf_and_path_count(model):
    pmf = total_demand_pmf(model)
    assert abs(pmf.sum() - 1) < 1e-12
    paths = list(enumerate_paths(model))
    assert len(paths) == count_paths(model)
    law = np.zeros_like(pmf)
    for path, p in paths:
        law[sum(path) - model.K] += p
    np.testing.assert_allclose(law, pmf, atol=1e-12)
