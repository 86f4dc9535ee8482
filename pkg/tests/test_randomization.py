"""Generator construction, jump-matrix identities, and h(n) extraction."""
import numpy as np
import pytest

import jacknet as jn
from jacknet.errors import AlphaTooSmall, NoConvergence
from jacknet.randomization import build_generator, compute_h, initial_distribution, randomize


def _pipeline(spec, entry=0, cap=3, path=None):
    traffic = jn.solve_traffic_equations(spec)
    space = jn.build_state_space(spec, traffic, entry, cap, path=path)
    gen = build_generator(space)
    return traffic, space, gen


def test_marked_alone_single_transition():
    # single node, no arrivals along a fixed path: only exit is absorption
    spec = jn.NetworkSpec(v=[0.0], mu=[2.5], P=[[0.0]])
    traffic = jn.TrafficSolution(theta=np.array([0.0]), rho=np.array([0.0]), stable=True)
    space = jn.build_state_space(spec, traffic, 0, 0, path=(0,))
    gen = build_generator(space)
    assert gen.n_transient == 1
    assert len(gen.rates) == 0
    assert gen.absorb[0] == 2.5
    assert gen.exit[0] == 2.5
    chain = randomize(gen)
    assert chain.absorb_p[0] == pytest.approx(1.0)
    assert chain.probs[0] == pytest.approx(0.0)  # diagonal entry


def test_alpha_global_bound_tandem():
    spec = jn.tandem_network([2, 2, 2], 1.0)
    _, _, gen = _pipeline(spec, cap=2)
    assert gen.alpha == pytest.approx(7.0)


def test_generator_row_sums_nonpositive():
    spec = jn.NetworkSpec(
        v=[1.0, 0.2], mu=[3.0, 2.0], P=[[0.1, 0.6], [0.3, 0.0]]
    )
    _, space, gen = _pipeline(spec, cap=3)
    sums = gen.row_sums()
    assert np.all(sums <= 1e-12)
    # rows clip exactly when an arrival or routed customer would pass the cap
    assert np.allclose(sums, -gen.clip, atol=1e-12)
    assert gen.clip.max() > 0  # the cap really bites somewhere


def test_randomize_half_jump_example():
    # one transient state with absorption rate mu: alpha = 2 mu gives a
    # half-and-half row
    spec = jn.NetworkSpec(v=[0.0], mu=[2.5], P=[[0.0]])
    traffic = jn.TrafficSolution(theta=np.array([0.0]), rho=np.array([0.0]), stable=True)
    space = jn.build_state_space(spec, traffic, 0, 0, path=(0,))
    gen = build_generator(space)
    chain = randomize(gen, alpha=5.0)
    assert chain.probs[0] == pytest.approx(0.5)
    assert chain.absorb_p[0] == pytest.approx(0.5)


def test_randomize_alpha_too_small():
    spec = jn.tandem_network([2, 2], 1.0)
    _, _, gen = _pipeline(spec, cap=2)
    with pytest.raises(AlphaTooSmall):
        randomize(gen, alpha=1.0)


def test_row_stochastic_invariant_random_networks():
    rng = np.random.default_rng(17)
    for _ in range(30):
        J = int(rng.integers(1, 4))
        P = rng.random((J, J))
        P *= rng.uniform(0.3, 0.9, size=J)[:, None] / P.sum(axis=1, keepdims=True)
        v = rng.uniform(0.1, 1.0, size=J)
        theta = np.linalg.solve(np.eye(J) - P.T, v)
        rho = rng.uniform(0.2, 0.8, size=J)
        mu = theta / rho
        spec = jn.NetworkSpec(v=v, mu=mu, P=P)
        _, space, gen = _pipeline(spec, cap=int(rng.integers(1, 4)))
        chain = randomize(gen)
        closure = chain.row_sums() + chain.deficit_rate
        assert np.max(np.abs(closure - 1.0)) <= 1e-12
        assert np.all(chain.probs >= 0)


def test_initial_distribution_single_node_geometric():
    spec = jn.tandem_network([2.0], 1.0)
    traffic, space, gen = _pipeline(spec, cap=2)
    psi0, deficit = initial_distribution(space, traffic)
    assert psi0[0] == 0.0
    weights = {}
    for sid in range(1, space.n_states):
        st = space.decode(sid)
        if psi0[sid] > 0:
            weights[(st.ahead, st.counts)] = psi0[sid]
    # arriving customer joins the end of the queue: ahead == pre-arrival count
    assert weights[(0, (0,))] == pytest.approx(0.5)
    assert weights[(1, (1,))] == pytest.approx(0.25)
    assert weights[(2, (2,))] == pytest.approx(0.125)
    assert deficit == pytest.approx(0.125)


def test_initial_distribution_product_form():
    spec = jn.tandem_network([2.0, 2.0], 1.0)
    traffic, space, gen = _pipeline(spec, cap=2)
    psi0, deficit = initial_distribution(space, traffic)
    st_id = space.state_id(0, 1, (1, 2))
    # (1-rho) rho^1 * (1-rho) rho^2 at rho = 1/2
    assert psi0[st_id] == pytest.approx(0.25 * 0.125)
    assert deficit == pytest.approx(1 - (1 - 0.5**3) ** 2)


def test_initial_distribution_empty_system_point_mass():
    spec = jn.NetworkSpec(v=[0.0], mu=[2.0], P=[[0.0]])
    traffic = jn.TrafficSolution(theta=np.array([0.0]), rho=np.array([0.0]), stable=True)
    space = jn.build_state_space(spec, traffic, 0, 2, path=(0,))
    psi0, deficit = initial_distribution(space, traffic)
    assert deficit == 0.0
    assert psi0.sum() == pytest.approx(1.0)
    assert psi0[space.state_id(0, 0, (0,))] == pytest.approx(1.0)


def test_compute_h_initial_mass_in_absorbing():
    spec = jn.NetworkSpec(v=[0.0], mu=[2.0], P=[[0.0]])
    traffic = jn.TrafficSolution(theta=np.array([0.0]), rho=np.array([0.0]), stable=True)
    space = jn.build_state_space(spec, traffic, 0, 0, path=(0,))
    chain = randomize(build_generator(space))
    psi0 = np.zeros(space.n_states)
    psi0[0] = 1.0
    mix = compute_h(chain, psi0, 1e-9)
    assert mix.k == 0
    assert mix.h[0] == 1.0
    assert mix.deficit == pytest.approx(0.0)


def test_compute_h_marked_alone_single_jump():
    # empty system, alpha = mu: absorption happens at exactly one jump
    spec = jn.NetworkSpec(v=[0.0], mu=[2.0], P=[[0.0]])
    traffic = jn.TrafficSolution(theta=np.array([0.0]), rho=np.array([0.0]), stable=True)
    space = jn.build_state_space(spec, traffic, 0, 0, path=(0,))
    chain = randomize(build_generator(space))
    psi0, _ = initial_distribution(space, traffic)
    mix = compute_h(chain, psi0, 1e-12)
    assert mix.h[0] == 0.0
    assert mix.h[1] == pytest.approx(1.0)
    assert len(mix.h) == 2
    # resulting law is one exponential stage
    b = jn.cdf_bounds(mix, np.array([0.0, 0.5, 1.0]))
    assert b.lower[1] == pytest.approx(1 - np.exp(-2 * 0.5), abs=1e-12)


def test_compute_h_mm1_matches_exponential_law():
    # the M/M/1 sojourn law is exponential with rate mu - v
    spec = jn.tandem_network([2.0], 1.0)
    traffic = jn.solve_traffic_equations(spec)
    space = jn.build_state_space(spec, traffic, 0, 40)
    chain = randomize(build_generator(space))
    psi0, _ = initial_distribution(space, traffic)
    mix = compute_h(chain, psi0, 1e-6)
    grid = np.linspace(0.0, 8.0, 30)
    b = jn.cdf_bounds(mix, grid)
    exact = 1 - np.exp(-grid)
    assert np.all(b.lower <= exact + 1e-12)
    assert np.all(exact <= b.upper + 1e-12)
    assert np.all(b.upper - b.lower <= 1e-5 + mix.truncation_deficit + 1e-12)


def test_compute_h_geometric_jump_law_mm1():
    # with v=1, mu=2 the jump count is geometric: h(n) = (1/3)(2/3)^(n-1)
    spec = jn.tandem_network([2.0], 1.0)
    traffic = jn.solve_traffic_equations(spec)
    space = jn.build_state_space(spec, traffic, 0, 60)
    chain = randomize(build_generator(space))
    psi0, _ = initial_distribution(space, traffic)
    mix = compute_h(chain, psi0, 1e-8)
    n = np.arange(1, len(mix.h))
    expected = (1.0 / 3.0) * (2.0 / 3.0) ** (n - 1)
    assert np.allclose(mix.h[1:], expected, rtol=1e-6, atol=1e-12)


def test_compute_h_deterministic_bitwise():
    spec = jn.three_node_acyclic_network(1.0, 2.0, 1.5, 2.0, 0.4)
    traffic = jn.solve_traffic_equations(spec)
    space = jn.build_state_space(spec, traffic, 0, 4)
    chain = randomize(build_generator(space))
    psi0, _ = initial_distribution(space, traffic)
    a = compute_h(chain, psi0, 1e-7)
    b = compute_h(chain, psi0, 1e-7)
    assert np.array_equal(a.h, b.h)
    assert a.clip_deficit == b.clip_deficit and a.tail_mass == b.tail_mass


def test_compute_h_no_convergence():
    spec = jn.tandem_network([2.0], 1.0)
    traffic = jn.solve_traffic_equations(spec)
    space = jn.build_state_space(spec, traffic, 0, 10)
    chain = randomize(build_generator(space))
    psi0, _ = initial_distribution(space, traffic)
    with pytest.raises(NoConvergence):
        compute_h(chain, psi0, 1e-9, max_jumps=3)


def test_h_mass_accounting():
    spec = jn.three_node_acyclic_network(1.0, 2.0, 1.5, 2.0, 0.4)
    traffic = jn.solve_traffic_equations(spec)
    space = jn.build_state_space(spec, traffic, 0, 3)
    chain = randomize(build_generator(space))
    psi0, _ = initial_distribution(space, traffic)
    mix = compute_h(chain, psi0, 1e-6)
    assert np.all(mix.h >= 0)
    assert mix.captured <= 1.0 + 1e-12
    total = mix.captured + mix.initial_deficit + mix.clip_deficit + mix.tail_mass
    assert total == pytest.approx(1.0, abs=1e-12)
