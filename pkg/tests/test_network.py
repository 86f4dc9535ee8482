"""Network model: validation, traffic equations, product form, topology, analytic CDFs."""
import itertools
import math

import numpy as np
import pytest

import jacknet as jn
from jacknet.errors import (
    NegativeRate,
    NoExogenousArrivals,
    NonInvertibleRouting,
    NotAcyclic,
    RepeatedNode,
    RowSumExceedsOne,
    UnstableNetwork,
)


def test_validate_tandem_ok():
    spec = jn.tandem_network([2, 2, 2], 1.0)
    out = jn.validate_spec(spec)
    assert out is spec
    assert np.array_equal(out.q, [0.0, 0.0, 1.0])


def test_validate_row_sum_exceeds_one():
    spec = jn.NetworkSpec(v=[1.0], mu=[2.0], P=[[1.2]])
    with pytest.raises(RowSumExceedsOne):
        jn.validate_spec(spec)


def test_validate_absorbing_routing():
    spec = jn.NetworkSpec(v=[1.0], mu=[2.0], P=[[1.0]])
    with pytest.raises(NonInvertibleRouting):
        jn.validate_spec(spec)


def test_validate_negative_and_missing_arrivals():
    with pytest.raises(NegativeRate):
        jn.validate_spec(jn.NetworkSpec(v=[-1.0], mu=[2.0], P=[[0.0]]))
    with pytest.raises(NegativeRate):
        jn.validate_spec(jn.NetworkSpec(v=[1.0], mu=[0.0], P=[[0.0]]))
    with pytest.raises(NoExogenousArrivals):
        jn.validate_spec(jn.NetworkSpec(v=[0.0], mu=[2.0], P=[[0.0]]))


def test_traffic_tandem():
    spec = jn.tandem_network([2, 2, 2], 1.0)
    t = jn.solve_traffic_equations(spec)
    assert np.allclose(t.theta, [1, 1, 1], rtol=0, atol=1e-14)
    assert t.stable


def test_traffic_feedback():
    spec = jn.bernoulli_feedback_network(1.0, 3.0, 0.5)
    t = jn.solve_traffic_equations(spec)
    assert t.theta[0] == pytest.approx(2.0, rel=1e-14)


def test_traffic_three_node():
    spec = jn.three_node_acyclic_network(1.0, 2.0, 2.0, 2.0, 0.4)
    t = jn.solve_traffic_equations(spec)
    assert np.allclose(t.theta, [1.0, 0.4, 1.0], rtol=1e-14)


def test_traffic_residual_random_networks():
    rng = np.random.default_rng(7)
    for _ in range(50):
        J = int(rng.integers(1, 6))
        P = rng.random((J, J))
        P *= rng.random(J)[:, None] * 0.9 / P.sum(axis=1, keepdims=True)
        v = rng.random(J) * 2
        spec = jn.NetworkSpec(v=v, mu=np.ones(J), P=P)
        t = jn.solve_traffic_equations(spec)
        residual = np.abs(t.theta - spec.v - spec.P.T @ t.theta).max()
        assert residual <= 1e-10 * max(t.theta.max(), 1.0)
        assert np.all(t.theta >= spec.v - 1e-12)


def test_stationary_probability_examples():
    spec = jn.tandem_network([2, 2, 2], 1.0)
    t = jn.solve_traffic_equations(spec)
    assert jn.stationary_probability(t, (0, 0, 0)) == pytest.approx(0.125, rel=1e-14)
    assert jn.stationary_probability(t, (1, 1, 1)) == pytest.approx(0.015625, rel=1e-14)
    single = jn.solve_traffic_equations(jn.tandem_network([2.0], 1.0))
    assert jn.stationary_probability(single, (0,)) == pytest.approx(0.5, rel=1e-14)


def test_stationary_probability_unstable():
    spec = jn.tandem_network([0.9], 1.0)
    t = jn.solve_traffic_equations(spec)
    assert not t.stable
    with pytest.raises(UnstableNetwork):
        jn.stationary_probability(t, (0,))


def test_product_form_normalization():
    # partial sums over the box {0..N}^J approach 1 once the tails are gone
    rng = np.random.default_rng(3)
    for _ in range(10):
        J = int(rng.integers(1, 4))
        rho = rng.random(J) * 0.9
        theta = rho.copy()
        t = jn.TrafficSolution(theta=theta, rho=rho, stable=True)
        N = 1
        while rho.max(initial=0.0) ** (N + 1) >= 1e-12:
            N += 1
        total = 0.0
        for n in itertools.product(range(N + 1), repeat=J):
            total += jn.stationary_probability(t, n)
        assert abs(total - 1.0) <= J * 1e-11


def test_product_form_marginal_consistency():
    spec = jn.three_node_acyclic_network(1.0, 2.0, 1.5, 2.0, 0.5)
    t = jn.solve_traffic_equations(spec)
    N = 60
    for j in range(3):
        for nj in range(3):
            marg = 0.0
            for other in itertools.product(range(N), repeat=2):
                n = list(other[:j]) + [nj] + list(other[j:])
                marg += jn.stationary_probability(t, tuple(n))
            assert marg == pytest.approx((1 - t.rho[j]) * t.rho[j] ** nj, abs=1e-6)


def test_classify_tandem_any_length():
    for J in (1, 2, 5, 9):
        spec = jn.tandem_network([2.0] * J, 1.0)
        topo = jn.classify_topology(spec)
        assert topo.acyclic and not topo.has_feedback
        assert topo.overtake_free_moment_condition


def test_classify_feedback_and_three_node():
    fb = jn.classify_topology(jn.bernoulli_feedback_network(1, 3, 0.5))
    assert fb.has_feedback and not fb.acyclic and not fb.overtake_free_moment_condition
    three = jn.classify_topology(jn.three_node_acyclic_network(1, 2, 2, 2, 0.4))
    assert three.acyclic and not three.overtake_free_moment_condition  # two routes 1 -> 3


def test_classify_self_loop_not_overtake_free():
    spec = jn.NetworkSpec(v=[1, 0], mu=[3, 3], P=[[0.2, 0.5], [0.0, 0.0]])
    assert not jn.classify_topology(spec).overtake_free_moment_condition
    assert jn.classify_topology(spec).has_feedback


def test_node_sojourn_cdf_acyclic():
    spec = jn.tandem_network([2.0], 1.0)
    t = jn.solve_traffic_equations(spec)
    assert jn.node_sojourn_cdf_acyclic(spec, t, 0, 0.0) == 0.0
    assert jn.node_sojourn_cdf_acyclic(spec, t, 0, math.log(2)) == pytest.approx(0.5, rel=1e-12)
    assert jn.node_sojourn_cdf_acyclic(spec, t, 0, 1e9) == pytest.approx(1.0)
    fb = jn.bernoulli_feedback_network(1, 3, 0.5)
    with pytest.raises(NotAcyclic):
        jn.node_sojourn_cdf_acyclic(fb, jn.solve_traffic_equations(fb), 0, 1.0)


def test_path_sojourn_cdf_equal_rates_is_erlang():
    spec = jn.tandem_network([2, 2, 2], 1.0)
    t = jn.solve_traffic_equations(spec)
    # oracle: Erlang(3,1) CDF at t=3 computed independently (scipy gammainc)
    assert jn.path_sojourn_cdf_independent(spec, t, [0, 1, 2], 3.0) == pytest.approx(
        0.5768099188731566, rel=1e-12
    )


def test_path_sojourn_cdf_single_node_reduces():
    spec = jn.tandem_network([2, 3], 1.0)
    t = jn.solve_traffic_equations(spec)
    for x in (0.1, 1.0, 4.0):
        assert jn.path_sojourn_cdf_independent(spec, t, [1], x) == pytest.approx(
            jn.node_sojourn_cdf_acyclic(spec, t, 1, x), rel=1e-12
        )


def test_path_sojourn_cdf_distinct_rates():
    # rates (1, 2): F(t) = 1 - 2 e^-t + e^-2t
    spec = jn.tandem_network([2.0, 3.0], 1.0)
    t = jn.solve_traffic_equations(spec)
    got = jn.path_sojourn_cdf_independent(spec, t, [0, 1], 1.3)
    assert got == pytest.approx(0.5292099921463087, rel=1e-12)


def test_path_sojourn_cdf_near_equal_rates_stable():
    # nearly equal rates fall back to the averaged Erlang; no cancellation blowup
    spec = jn.NetworkSpec(
        v=[1, 0], mu=[2.0, 2.0 + 1e-12], P=[[0, 1], [0, 0]]
    )
    t = jn.solve_traffic_equations(spec)
    got = jn.path_sojourn_cdf_independent(spec, t, [0, 1], 2.0)
    exact = 1 - math.exp(-2.0) * (1 + 2.0)  # Erlang(2,1)
    assert got == pytest.approx(exact, rel=1e-9)


def test_path_sojourn_cdf_mixed_cluster_rates():
    # two coinciding rates plus one distinct: phase-type fallback
    spec = jn.NetworkSpec(
        v=[1, 0, 0], mu=[2.0, 2.0 + 1e-12, 4.0], P=[[0, 1, 0], [0, 0, 1], [0, 0, 0]]
    )
    t = jn.solve_traffic_equations(spec)
    got = jn.path_sojourn_cdf_independent(spec, t, [0, 1, 2], 1.5)
    # oracle: convolution of Erlang(2,1) with Exp(3) by quadrature
    from scipy.integrate import quad

    f = lambda x: x * math.exp(-x) * (1 - math.exp(-3 * (1.5 - x)))
    exact, _ = quad(f, 0, 1.5)
    assert got == pytest.approx(exact, rel=1e-7)


def test_path_sojourn_cdf_properties():
    spec = jn.three_node_acyclic_network(1.0, 2.0, 1.7, 2.5, 0.5)
    t = jn.solve_traffic_equations(spec)
    grid = np.linspace(0, 30, 200)
    vals = jn.path_sojourn_cdf_independent(spec, t, [0, 1, 2], grid)
    assert vals[0] == 0.0
    assert np.all(np.diff(vals) >= -1e-12)
    assert vals[-1] > 0.999999


def test_path_sojourn_repeated_node():
    spec = jn.tandem_network([2, 2], 1.0)
    t = jn.solve_traffic_equations(spec)
    with pytest.raises(RepeatedNode):
        jn.path_sojourn_cdf_independent(spec, t, [0, 0], 1.0)


def test_network_json_roundtrip(tmp_path):
    spec = jn.three_node_acyclic_network(1.0, 2.0, 1.5, 2.0, 0.4)
    path = tmp_path / "net.json"
    jn.save_network(spec, path)
    back = jn.load_network(path)
    assert np.array_equal(back.v, spec.v)
    assert np.array_equal(back.mu, spec.mu)
    assert np.array_equal(back.P, spec.P)


def test_network_json_rejects_nan(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text('{"nodes": 1, "arrival_rates": [NaN], "service_rates": [2], "routing": [[0]]}')
    with pytest.raises(jn.errors.InvalidNetwork):
        jn.load_network(path)


def test_network_json_rejects_negative(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text('{"nodes": 1, "arrival_rates": [-1], "service_rates": [2], "routing": [[0]]}')
    with pytest.raises(NegativeRate):
        jn.load_network(path)


def test_pattern_detectors():
    assert jn.network.is_tandem(jn.tandem_network([2, 2], 1.0))
    assert not jn.network.is_tandem(jn.three_node_acyclic_network(1, 2, 2, 2, 0.4))
    assert jn.network.is_feedback_queue(jn.bernoulli_feedback_network(1, 3, 0.5))
    assert jn.network.is_three_node_acyclic(jn.three_node_acyclic_network(1, 2, 2, 2, 0.4))
    assert not jn.network.is_three_node_acyclic(jn.tandem_network([2, 2, 2], 1.0))
