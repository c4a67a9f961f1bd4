import math

import numpy as np
import pytest
from hypothesis import given, settings

from calrm import crn
from calrm.demand import DemandModel, derive_probabilities
from calrm.errors import EpsilonZero, GammaOutOfRange, PreconditionViolated, ValidationError
from calrm.exact import solve_dp
from calrm.fluid import exf_solution, prf_solution
from calrm.instance import NetworkInstance, counterexample
from calrm.policy import (
    AdmissionPolicy,
    SimConfig,
    bernoulli_mgf_check,
    exf_policy,
    indep_policy,
    pathwise_offline_audit,
    prf_policy,
    recommended_gamma,
    simulate,
)
from strategies import small_instances


def ample():
    tr = np.array([[[0.4, 0.6], [0.4, 0.6]], [[0.7, 0.3], [0.2, 0.8]]])
    model = DemandModel(2, 2, tr, 2)
    inst = NetworkInstance(np.array([50]), np.array([2.0, 0.0]), np.array([[1, 0]]), np.full((2, 2, 2), 0.5), 1)
    return inst, model


def test_gamma_zero_earns_nothing():
    fx = counterexample("appF")
    pol = prf_policy(prf_solution(fx.instance, fx.demand), fx.instance, 0.0)
    assert np.all(pol.table == 0)
    st = simulate(fx.instance, fx.demand, pol, SimConfig(1000, 0))
    assert st.mean == 0.0 and st.stderr == 0.0
    pol = exf_policy(exf_solution(fx.instance, fx.demand), fx.instance, derive_probabilities(fx.demand), 0.0)
    assert simulate(fx.instance, fx.demand, pol, SimConfig(1000, 0)).mean == 0.0


def test_ample_capacity_accepts_all_and_matches_closed_form():
    inst, model = ample()
    probs = derive_probabilities(model)
    pol = prf_policy(prf_solution(inst, model, probs), inst, 1.0)
    live = probs.w > 0
    np.testing.assert_allclose(pol.table[..., 0][live], 1.0)
    st = simulate(inst, model, pol, SimConfig(40_000, 1), probs)
    want = 2.0 * 0.5 * probs.tail.sum()
    assert abs(st.mean - want) < 3 * st.stderr
    # EXF rule with ample capacity thins by exactly gamma
    ex = exf_policy(exf_solution(inst, model, probs), inst, probs, 0.7)
    np.testing.assert_allclose(ex.table[..., 0], 0.7)


def test_app_f_policy_table():
    fx = counterexample("appF", {"K": 8})
    fl = prf_solution(fx.instance, fx.demand)
    pol = prf_policy(fl, fx.instance, 1.0)
    np.testing.assert_allclose(pol.table[:, 0, 0, 0], fl.x[:, 0, 0, 0] / 0.5)
    assert pol.prob(0, 1, 1, 1) == pytest.approx(fl.x[0, 0, 0, 0] / 0.5)


def test_app_n_exf_policy():
    fx = counterexample("appN", {"alpha": 3})
    probs = derive_probabilities(fx.demand)
    ex = exf_solution(fx.instance, fx.demand, probs)
    assert ex.x[0] == pytest.approx(9.0)
    pol = exf_policy(ex, fx.instance, probs, 1.0)
    np.testing.assert_allclose(pol.table[..., 0], 9.0 / 9.0)


def test_indep_policy_is_q_average():
    fx = counterexample("appK2")
    probs = derive_probabilities(fx.demand)
    fl = prf_solution(fx.instance, fx.demand, probs)
    p = prf_policy(fl, fx.instance, 1.0).table
    q = indep_policy(fl, fx.instance, probs, 1.0).table
    want = np.einsum("kq,ktqj->ktj", probs.marginal[:2], p)
    for qq in range(fx.demand.T):
        np.testing.assert_allclose(q[:, :, qq, :], want)


def test_indep_equals_prf_single_stage():
    fx = counterexample("appK1", {"alpha": 2})
    probs = derive_probabilities(fx.demand)
    fl = prf_solution(fx.instance, fx.demand, probs)
    a = prf_policy(fl, fx.instance, 1.0).table[:, :, 0]
    b = indep_policy(fl, fx.instance, probs, 1.0).table[:, :, 0]
    np.testing.assert_allclose(a, b)


def test_policy_preconditions():
    fx = counterexample("appF")
    probs = derive_probabilities(fx.demand)
    ex = exf_solution(fx.instance, fx.demand, probs)
    with pytest.raises(PreconditionViolated):
        prf_policy(ex, fx.instance, 1.0)
    with pytest.raises(PreconditionViolated):
        exf_policy(prf_solution(fx.instance, fx.demand), fx.instance, probs, 1.0)
    for g in (-0.1, 1.5, math.nan):
        with pytest.raises(GammaOutOfRange):
            prf_policy(prf_solution(fx.instance, fx.demand), fx.instance, g)
    with pytest.raises(ValidationError):
        AdmissionPolicy("x", 1.0, np.full((1, 1, 1, 2), 1.5))
    with pytest.raises(ValidationError):
        SimConfig(0)


def test_recommended_gamma():
    inst = NetworkInstance(np.array([3, 3]), np.array([1.0]), np.array([[1], [1]]), np.ones((1, 1, 1)))
    model = DemandModel(1, 1, np.ones((1, 1, 1)), 1)
    assert recommended_gamma(inst, model, regime="constant_factor") == 0.25
    c = 10**12
    big = NetworkInstance(np.array([c]), np.array([1.0]), np.array([[1]]), np.ones((1, 1, 1)))
    g = recommended_gamma(big, model, regime="asymptotic")
    assert g == pytest.approx(1 - math.sqrt(4 * math.log(c) / c), rel=1e-12)
    zero = counterexample("appE1")
    with pytest.raises(EpsilonZero):
        recommended_gamma(zero.instance, zero.demand, regime="asymptotic")
    with pytest.raises(PreconditionViolated):
        recommended_gamma(counterexample("appE2").instance, counterexample("appE2").demand, regime="asymptotic")


def test_constant_factor_on_app_f():
    fx = counterexample("appF", {"K": 8})
    fl = prf_solution(fx.instance, fx.demand)
    st = simulate(fx.instance, fx.demand, prf_policy(fl, fx.instance, 1.0), SimConfig(100_000, 2))
    assert st.mean / fl.value >= 0.25
    assert st.capacity_violations == 0


def test_crn_same_requests_across_policies():
    fx = counterexample("appK2")
    probs = derive_probabilities(fx.demand)
    fl = prf_solution(fx.instance, fx.demand, probs)
    cfg = SimConfig(500, 7, record_paths=True)
    a = simulate(fx.instance, fx.demand, prf_policy(fl, fx.instance, 1.0), cfg, probs)
    b = simulate(fx.instance, fx.demand, prf_policy(fl, fx.instance, 0.3), cfg, probs)
    assert np.array_equal(a.products, b.products)
    assert np.array_equal(a.demands, b.demands)


def test_chunking_does_not_change_paths():
    fx = counterexample("appE1")
    pol = prf_policy(prf_solution(fx.instance, fx.demand), fx.instance, 0.8)
    big = simulate(fx.instance, fx.demand, pol, SimConfig(25_000, 4, record_paths=True))
    small = simulate(fx.instance, fx.demand, pol, SimConfig(300, 4, record_paths=True))
    np.testing.assert_array_equal(big.revenues[:300], small.revenues)
    np.testing.assert_array_equal(big.products[:300], small.products)


def test_crn_streams():
    u = crn.uniforms(3, crn.PRODUCT, 10, 5, 7)
    v = crn.uniforms(3, crn.PRODUCT, 0, 20, 7)
    np.testing.assert_array_equal(u, v[10:15])
    assert np.all((u >= 0) & (u < 1))
    assert not np.array_equal(u, crn.uniforms(3, crn.ACCEPT, 10, 5, 7))
    assert not np.array_equal(u, crn.uniforms(4, crn.PRODUCT, 10, 5, 7))


def test_simulated_demand_law():
    tr = np.array([[[0.2, 0.3, 0.5]] * 3, [[0.6, 0.2, 0.2], [0.1, 0.1, 0.8], [0.3, 0.3, 0.4]]])
    model = DemandModel(2, 3, tr, 1)
    inst = NetworkInstance(np.array([1]), np.array([1.0]), np.array([[1]]), np.ones((2, 3, 1)))
    probs = derive_probabilities(model)
    pol = AdmissionPolicy("none", 0.0, np.zeros((2, 3, 3, 1)))
    n = 50_000
    st = simulate(inst, model, pol, SimConfig(n, 9, record_paths=True), probs)
    for k in range(2):
        freq = np.bincount(st.demands[:, k] - 1, minlength=3) / n
        p = probs.marginal[k + 1]
        assert np.all(np.abs(freq - p) < 5 * np.sqrt(p * (1 - p) / n) + 1e-12)


@settings(max_examples=20)
@given(small_instances(max_K=2, max_T=3, max_J=3, cmax=3, full_support=False))
def test_simulation_safety_and_dominance(pair):
    inst, model = pair
    probs = derive_probabilities(model)
    fl = prf_solution(inst, model, probs)
    st = simulate(inst, model, prf_policy(fl, inst, 1.0), SimConfig(300, 1, record_paths=True), probs)
    assert st.capacity_violations == 0
    audit = pathwise_offline_audit(inst, st)
    assert audit["violations"] == 0
    # no policy beats the optimum in expectation
    assert st.mean <= solve_dp(inst, model, probs).opt + 4 * st.stderr + 1e-9


def test_audit_requires_recorded_paths():
    fx = counterexample("appE2")
    st = simulate(fx.instance, fx.demand, prf_policy(prf_solution(fx.instance, fx.demand), fx.instance, 1.0),
                  SimConfig(10, 0))
    with pytest.raises(ValidationError):
        pathwise_offline_audit(fx.instance, st)


def test_bernoulli_mgf_grid():
    fails, excess = bernoulli_mgf_check(0.05)
    assert fails == 0 and excess <= 1e-12
