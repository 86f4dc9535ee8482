"""Open Jackson network model.

A network is a set of J single-server FCFS exponential queues with Poisson
exogenous arrivals and Bernoulli routing.  This module holds the network
description, solves the traffic equations, evaluates the product-form
equilibrium, classifies the routing topology, and provides the analytic
per-node / per-path sojourn laws valid on acyclic networks.

Nodes are indexed 0..J-1 throughout the library.  The on-disk JSON format and
the command line use 1-based node numbers.
"""
from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    InvalidNetwork,
    NegativeRate,
    NoExogenousArrivals,
    NonInvertibleRouting,
    NotAcyclic,
    RepeatedNode,
    RowSumExceedsOne,
    UnstableNetwork,
)

#: Stability requires rho_j < 1 - STABILITY_MARGIN (downstream formulas divide
#: by mu_j - theta_j).
STABILITY_MARGIN = 1e-12

#: Routing matrices with spectral radius above 1 - SPECTRAL_TOL are rejected.
SPECTRAL_TOL = 1e-10

#: Exponential rates closer than RATE_MERGE_TOL * max(rate) are treated as
#: equal when forming the sum-of-exponentials CDF.
RATE_MERGE_TOL = 1e-8


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class NetworkSpec:
    """Description of an open Jackson network.

    Parameters
    ----------
    v : array of shape (J,)
        Exogenous Poisson arrival rate per node.
    mu : array of shape (J,)
        Exponential service rate per node.
    P : array of shape (J, J)
        Routing probabilities; row j may sum to less than one, the
        remainder ``q[j]`` being the departure probability.
    """

    v: np.ndarray
    mu: np.ndarray
    P: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "v", _readonly(np.atleast_1d(self.v)))
        object.__setattr__(self, "mu", _readonly(np.atleast_1d(self.mu)))
        object.__setattr__(self, "P", _readonly(np.atleast_2d(self.P)))
        J = self.v.shape[0]
        if self.mu.shape != (J,) or self.P.shape != (J, J):
            raise InvalidNetwork(
                f"inconsistent shapes: v {self.v.shape}, mu {self.mu.shape}, P {self.P.shape}"
            )

    @property
    def J(self) -> int:
        return self.v.shape[0]

    @property
    def q(self) -> np.ndarray:
        """Departure probability per node, 1 - sum of the routing row."""
        return _readonly(np.clip(1.0 - self.P.sum(axis=1), 0.0, 1.0))


@dataclass(frozen=True, eq=False)
class TrafficSolution:
    """Solution of the traffic equations theta = v + P^T theta."""

    theta: np.ndarray
    rho: np.ndarray
    stable: bool

    def __post_init__(self):
        object.__setattr__(self, "theta", _readonly(self.theta))
        object.__setattr__(self, "rho", _readonly(self.rho))

    @property
    def J(self) -> int:
        return self.theta.shape[0]


@dataclass(frozen=True)
class TopologyClass:
    """Routing-digraph classification (edge j -> l iff p_jl > 0)."""

    acyclic: bool
    has_feedback: bool
    overtake_free_moment_condition: bool


def validate_spec(spec: NetworkSpec) -> NetworkSpec:
    """Check the structural constraints of a network description.

    Returns the spec unchanged on success (``spec.q`` is derived on access).

    Raises
    ------
    NegativeRate
        Any NaN or negative rate, nonpositive service rate, or routing
        probability outside [0, 1].
    RowSumExceedsOne
        A routing row sums to more than one.
    NoExogenousArrivals
        All exogenous rates are zero.
    NonInvertibleRouting
        Spectral radius of P is >= 1 within tolerance, i.e. customers
        cannot all eventually leave.
    """
    if np.any(~np.isfinite(spec.v)) or np.any(spec.v < 0):
        raise NegativeRate(f"arrival rates must be finite and >= 0, got {spec.v}")
    if np.any(~np.isfinite(spec.mu)) or np.any(spec.mu <= 0):
        raise NegativeRate(f"service rates must be finite and > 0, got {spec.mu}")
    if np.any(~np.isfinite(spec.P)) or np.any(spec.P < 0):
        raise NegativeRate("routing probabilities must be finite and >= 0")
    row_sums = spec.P.sum(axis=1)
    if np.any(row_sums > 1 + 1e-12):
        bad = int(np.argmax(row_sums))
        raise RowSumExceedsOne(f"routing row {bad} sums to {row_sums[bad]:.12g} > 1")
    if spec.v.sum() <= 0:
        raise NoExogenousArrivals("at least one exogenous arrival rate must be positive")
    if spec.J > 0:
        radius = max(abs(np.linalg.eigvals(spec.P)))
        if radius >= 1 - SPECTRAL_TOL:
            raise NonInvertibleRouting(
                f"spectral radius of routing matrix is {radius:.12g}; customers never leave"
            )
    return spec


def solve_traffic_equations(spec: NetworkSpec) -> TrafficSolution:
    """Solve theta_j = v_j + sum_l theta_l p_lj for the total arrival rates.

    Uses a direct dense solve of (I - P^T) theta = v; J is small, so dense
    LU is both simple and accurate.
    """
    A = np.eye(spec.J) - spec.P.T
    try:
        theta = np.linalg.solve(A, spec.v)
    except np.linalg.LinAlgError as exc:
        raise NonInvertibleRouting(str(exc)) from exc
    rho = theta / spec.mu
    stable = bool(np.all(rho < 1 - STABILITY_MARGIN))
    return TrafficSolution(theta=theta, rho=rho, stable=stable)


def stationary_probability(traffic: TrafficSolution, n) -> float:
    """Equilibrium probability of queue-length vector ``n``.

    The product form: prod_j (1 - rho_j) rho_j^{n_j}.
    """
    if not traffic.stable:
        raise UnstableNetwork("no equilibrium distribution: some rho_j >= 1")
    n = np.asarray(n)
    if n.shape != (traffic.J,) or np.any(n < 0) or not np.issubdtype(n.dtype, np.integer):
        raise ValueError(f"n must be {traffic.J} nonnegative integers")
    return float(np.prod((1.0 - traffic.rho) * traffic.rho**n))


def _adjacency(spec: NetworkSpec) -> np.ndarray:
    return (spec.P > 0).astype(np.int64)


def _is_acyclic(adj: np.ndarray) -> bool:
    # Kahn's algorithm; the digraph is acyclic iff all nodes get removed.
    J = adj.shape[0]
    indeg = adj.sum(axis=0).copy()
    alive = np.ones(J, dtype=bool)
    removed = 0
    changed = True
    while changed:
        changed = False
        for j in range(J):
            if alive[j] and indeg[j] == 0:
                alive[j] = False
                indeg -= adj[j]
                removed += 1
                changed = True
    return removed == J


def classify_topology(spec: NetworkSpec) -> TopologyClass:
    """Classify the routing digraph.

    ``acyclic``: no directed cycle (self-loops included).  The
    overtake-free moment condition additionally requires at most one
    directed path between every ordered node pair, counted by DAG
    dynamic programming (sum of adjacency-matrix powers).
    """
    adj = _adjacency(spec)
    acyclic = _is_acyclic(adj)
    overtake_free = False
    if acyclic:
        # Number of directed paths of every length between ordered pairs.
        paths = np.zeros_like(adj)
        power = np.eye(spec.J, dtype=np.int64)
        for _ in range(spec.J):
            power = power @ adj
            paths += power
        overtake_free = bool(paths.max(initial=0) <= 1)
    return TopologyClass(
        acyclic=acyclic,
        has_feedback=not acyclic,
        overtake_free_moment_condition=overtake_free,
    )


def _require_stable(traffic: TrafficSolution):
    if not traffic.stable:
        raise UnstableNetwork(f"traffic intensities {traffic.rho} not all < 1")


def node_sojourn_cdf_acyclic(spec: NetworkSpec, traffic: TrafficSolution, j: int, t):
    """Sojourn-time CDF at node ``j`` of an acyclic network: 1 - exp(-(mu_j - theta_j) t).

    ``t`` may be a scalar or an array.
    """
    if not classify_topology(spec).acyclic:
        raise NotAcyclic("per-node exponential sojourn law requires an acyclic network")
    _require_stable(traffic)
    rate = spec.mu[j] - traffic.theta[j]
    return 1.0 - np.exp(-rate * np.asarray(t, dtype=float))


def _hypoexp_cdf(rates: np.ndarray, t: np.ndarray) -> np.ndarray:
    """CDF of a sum of independent exponentials with the given rates.

    Distinct rates use the partial-fraction form; a cluster of nearly equal
    rates would make that form cancel catastrophically, so all-near-equal
    falls back to an Erlang with the averaged rate and mixed cases use an
    exact Erlang-mixture series (all-positive arithmetic, no cancellation).
    """
    from .bounds import erlang_cdf

    n = len(rates)
    rmax = rates.max()
    if rates.min() > rmax - RATE_MERGE_TOL * rmax:
        return erlang_cdf(n, float(rates.mean()), t)
    diffs = np.abs(rates[:, None] - rates[None, :]) + np.eye(n) * rmax
    if diffs.min() >= RATE_MERGE_TOL * rmax:
        weights = np.empty(n)
        for i in range(n):
            others = np.delete(rates, i)
            weights[i] = np.prod(others / (others - rates[i]))
        out = 1.0 - np.exp(-np.outer(t, rates)) @ weights
        return np.clip(out, 0.0, 1.0)
    return _sum_exponentials_series_cdf(rates, t)


def _sum_exponentials_series_cdf(rates: np.ndarray, t: np.ndarray) -> np.ndarray:
    """Exact mixture-of-Erlangs series for a sum of exponentials.

    Views the stage chain at a common rate alpha = max(rates): each jump
    advances from stage i with probability rates[i]/alpha, so the sum is
    distributed as sum_m h(m) Erlang(m, alpha) where h(m) is the chance of
    finishing at jump m.  Stable for any rate multiset (the matrix
    exponential of the stage generator is not, when rates nearly coincide).
    """
    from .bounds import erlang_cdf_table

    n = len(rates)
    alpha = float(rates.max())
    step = rates / alpha
    phi = np.zeros(n)
    phi[0] = 1.0
    h = [0.0]
    while phi.sum() > 1e-15 and len(h) < 10_000_000:
        advancing = phi * step
        h.append(float(advancing[-1]))
        phi = phi - advancing
        phi[1:] += advancing[:-1]
    h_arr = np.asarray(h)
    out = erlang_cdf_table(len(h_arr) - 1, alpha, t) @ h_arr
    return np.clip(out, 0.0, 1.0)


def path_sojourn_cdf_independent(spec: NetworkSpec, traffic: TrafficSolution, path, t):
    """CDF of the path sojourn time under the per-node independence assumption.

    Sums the independent per-node exponential laws along ``path``:
    hypoexponential for distinct rates, Erlang when all the rates
    coincide.  On overtake-free paths this is the exact law; otherwise it
    is the independence approximation used for comparisons.
    """
    path = list(path)
    if len(set(path)) != len(path):
        raise RepeatedNode(f"path {path} revisits a node")
    if not classify_topology(spec).acyclic:
        raise NotAcyclic("independence law applies to acyclic networks")
    _require_stable(traffic)
    rates = spec.mu[path] - traffic.theta[path]
    t_arr = np.atleast_1d(np.asarray(t, dtype=float))
    out = _hypoexp_cdf(rates, t_arr)
    return float(out[0]) if np.isscalar(t) or np.ndim(t) == 0 else out


# --- reference topologies ---------------------------------------------------

def tandem_network(mu, v: float) -> NetworkSpec:
    """Series of queues: arrivals at node 0, each node feeds the next."""
    mu = np.atleast_1d(np.asarray(mu, dtype=float))
    J = len(mu)
    P = np.zeros((J, J))
    for j in range(J - 1):
        P[j, j + 1] = 1.0
    varr = np.zeros(J)
    varr[0] = v
    return NetworkSpec(v=varr, mu=mu, P=P)


def bernoulli_feedback_network(v: float, mu: float, p: float) -> NetworkSpec:
    """Single queue whose customers rejoin it with probability p after service."""
    return NetworkSpec(v=[v], mu=[mu], P=[[p]])


def three_node_acyclic_network(v: float, mu1: float, mu2: float, mu3: float, p: float) -> NetworkSpec:
    """Three nodes; node 0 routes to node 1 w.p. p, else directly to node 2;
    node 1 always feeds node 2.  Two distinct routes 0 -> 2 make overtaking
    possible."""
    P = np.zeros((3, 3))
    P[0, 1] = p
    P[0, 2] = 1.0 - p
    P[1, 2] = 1.0
    return NetworkSpec(v=[v, 0.0, 0.0], mu=[mu1, mu2, mu3], P=P)


def is_tandem(spec: NetworkSpec) -> bool:
    """True iff the spec is a series of queues fed only at node 0."""
    expected = tandem_network(spec.mu, spec.v[0])
    return (
        spec.v[0] > 0
        and np.array_equal(spec.v, expected.v)
        and np.array_equal(spec.P, expected.P)
    )


def is_feedback_queue(spec: NetworkSpec) -> bool:
    """True iff the spec is a single node with Bernoulli feedback."""
    return spec.J == 1 and spec.v[0] > 0 and 0 <= spec.P[0, 0] < 1


def is_three_node_acyclic(spec: NetworkSpec) -> bool:
    """True iff the spec matches the two-route three-node topology."""
    if spec.J != 3 or spec.v[0] <= 0 or spec.v[1] != 0 or spec.v[2] != 0:
        return False
    p = spec.P[0, 1]
    if not 0 < p < 1:
        return False
    expected = three_node_acyclic_network(spec.v[0], *spec.mu, p)
    return bool(np.allclose(spec.P, expected.P, rtol=0, atol=1e-12))


# --- JSON network files -----------------------------------------------------

def parse_network(obj: dict) -> NetworkSpec:
    """Build and validate a NetworkSpec from a parsed JSON object.

    Expected fields: ``nodes`` (int), ``arrival_rates`` (array),
    ``service_rates`` (array), ``routing`` (row-major array of arrays).
    """
    try:
        J = int(obj["nodes"])
        v = [float(x) for x in obj["arrival_rates"]]
        mu = [float(x) for x in obj["service_rates"]]
        P = [[float(x) for x in row] for row in obj["routing"]]
    except (KeyError, TypeError, ValueError) as exc:
        raise InvalidNetwork(f"malformed network object: {exc}") from exc
    if len(v) != J or len(mu) != J or len(P) != J or any(len(r) != J for r in P):
        raise InvalidNetwork(f"field lengths do not match nodes={J}")
    return validate_spec(NetworkSpec(v=v, mu=mu, P=P))


def load_network(path) -> NetworkSpec:
    """Read and validate a network JSON file."""
    with open(path) as f:
        obj = json.load(f, parse_constant=_reject_constant)
    return parse_network(obj)


def _reject_constant(name):
    raise InvalidNetwork(f"non-finite value {name!r} in network file")


def network_to_obj(spec: NetworkSpec) -> dict:
    return {
        "nodes": spec.J,
        "arrival_rates": spec.v.tolist(),
        "service_rates": spec.mu.tolist(),
        "routing": spec.P.tolist(),
    }


def save_network(spec: NetworkSpec, path):
    with open(path, "w") as f:
        json.dump(network_to_obj(spec), f, indent=2)
        f.write("\n")


def all_count_vectors(J: int, cap: int):
    """Iterate all queue-length vectors with each component in 0..cap."""
    return itertools.product(range(cap + 1), repeat=J)


def product_form_box_mass(traffic: TrafficSolution, cap: int) -> float:
    """Total product-form probability of the box {0..cap}^J (closed form)."""
    _require_stable(traffic)
    return float(np.prod(1.0 - traffic.rho ** (cap + 1)))
