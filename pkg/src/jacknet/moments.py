"""Exact sojourn-time moments from the network flow equations.

`T_j` denotes the remaining network sojourn time of a customer arriving at
node j.  First moments solve a linear system valid for every stable Jackson
network.  Higher orders use a recursion that is exact when the network is
overtake-free (at most one directed path between any ordered node pair and
no self-loops): the queue a routed customer meets is then independent of its
past sojourn, and the cross terms factorize through the geometric
queue-length law.  Closed forms for the series-of-queues variance and the
Bernoulli-feedback variance/covariance complete the picture.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    InvalidProbability,
    NotOvertakeFree,
    NotTandem,
    UnstableNetwork,
)
from .network import (
    NetworkSpec,
    TrafficSolution,
    classify_topology,
    is_tandem,
)


class MomentMethod(enum.Enum):
    MATRIX_FIRST_MOMENT = "MatrixFirstMoment"
    OVERTAKE_FREE_RECURSION = "OvertakeFreeRecursion"
    CLOSED_FORM = "ClosedForm"


@dataclass(frozen=True, eq=False)
class MomentReport:
    """Raw moments E[T_j^order] per entry node."""

    order: int
    values: np.ndarray
    method: MomentMethod

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        vals.flags.writeable = False
        object.__setattr__(self, "values", vals)


def _require_stable(traffic: TrafficSolution):
    if not traffic.stable:
        raise UnstableNetwork(f"traffic intensities {traffic.rho} not all < 1")


def _reverse_topological_order(P: np.ndarray) -> list[int]:
    """Nodes ordered so every successor precedes its predecessors; ties by index."""
    adj = P > 0
    J = P.shape[0]
    remaining_succ = adj.sum(axis=1).astype(int)
    removed = np.zeros(J, dtype=bool)
    order = []
    for _ in range(J):
        ready = [j for j in range(J) if not removed[j] and remaining_succ[j] == 0]
        if not ready:
            raise NotOvertakeFree("routing digraph has a directed cycle")
        j = ready[0]
        order.append(j)
        removed[j] = True
        remaining_succ -= adj[:, j]
    return order


def first_moments(spec: NetworkSpec, traffic: TrafficSolution) -> MomentReport:
    """E[T] = (I - P)^{-1} b with b_j = 1/(mu_j - theta_j).

    Valid for any stable Jackson network; no overtake-free condition is
    needed at first order.
    """
    _require_stable(traffic)
    b = 1.0 / (spec.mu - traffic.theta)
    values = np.linalg.solve(np.eye(spec.J) - spec.P, b)
    return MomentReport(order=1, values=values, method=MomentMethod.MATRIX_FIRST_MOMENT)


def mean_queue_length(traffic: TrafficSolution, j: int) -> float:
    """Expected queue length seen on arrival at node j: theta_j/(mu_j - theta_j)."""
    _require_stable(traffic)
    rho = traffic.rho[j]
    return float(rho / (1.0 - rho))


def _check_overtake_free(spec: NetworkSpec):
    if not classify_topology(spec).overtake_free_moment_condition:
        raise NotOvertakeFree(
            "exact higher moments need p_jj = 0 and at most one directed path "
            "between every ordered node pair"
        )


def second_moments_overtake_free(
    spec: NetworkSpec, traffic: TrafficSolution, first: MomentReport | None = None
) -> MomentReport:
    """Second moments by recursion over the reverse topological order.

    E[T_j^2] = 2 d_j^{-2} + sum_l p_jl E[T_l^2] + 2 d_j^{-1} sum_l p_jl E[T_l]
    with d_j = mu_j - theta_j.  The carry-over term sum_l p_jl E[T_l^2] is
    required for consistency with the series-of-queues variance.
    """
    _check_overtake_free(spec)
    _require_stable(traffic)
    if first is None:
        first = first_moments(spec, traffic)
    d = spec.mu - traffic.theta
    et1 = first.values
    et2 = np.zeros(spec.J)
    for j in _reverse_topological_order(spec.P):
        carry = float(spec.P[j] @ et2)
        cross = float(spec.P[j] @ et1)
        et2[j] = 2.0 / d[j] ** 2 + carry + 2.0 / d[j] * cross
    return MomentReport(order=2, values=et2, method=MomentMethod.OVERTAKE_FREE_RECURSION)


def higher_moments_overtake_free(
    spec: NetworkSpec, traffic: TrafficSolution, order: int
) -> MomentReport:
    """Raw moments of any order for overtake-free networks.

    The recursion for E[T_j^r] carries binomial cross terms
    C(r,n) mu_j^{-n} E[T_l^{r-n} (N_j+1)...(N_j+n)].  With N_j geometric of
    parameter rho_j and independent of T_l, the factorial-moment identity
    E[(N_j+1)...(N_j+n)] = n!/(1-rho_j)^n collapses the coefficient to
    n!/(mu_j - theta_j)^n.  Evaluation runs in reverse topological order.
    """
    if order < 1:
        raise ValueError("moment order must be >= 1")
    _check_overtake_free(spec)
    _require_stable(traffic)
    d = spec.mu - traffic.theta
    topo = _reverse_topological_order(spec.P)
    # moments[r] holds E[T^r] per node, r = 1..order
    moments = np.zeros((order + 1, spec.J))
    for r in range(1, order + 1):
        for j in topo:
            total = math.factorial(r) / d[j] ** r
            total += float(spec.P[j] @ moments[r])
            for n in range(1, r):
                coeff = math.comb(r, n) * math.factorial(n) / d[j] ** n
                total += coeff * float(spec.P[j] @ moments[r - n])
            moments[r, j] = total
    return MomentReport(
        order=order, values=moments[order], method=MomentMethod.OVERTAKE_FREE_RECURSION
    )


def tandem_variance(spec: NetworkSpec, traffic: TrafficSolution, j: int) -> float:
    """Sojourn variance from node j of a series of queues: sum_{l>=j} (mu_l - v)^{-2}."""
    if not is_tandem(spec):
        raise NotTandem("closed-form variance applies to a series of queues only")
    _require_stable(traffic)
    v = spec.v[0]
    return float(np.sum(1.0 / (spec.mu[j:] - v) ** 2))


def _check_feedback_params(v: float, mu: float, p: float):
    if not 0 <= p < 1:
        raise InvalidProbability(f"feedback probability must be in [0, 1), got {p}")
    if v < 0 or mu <= 0:
        raise InvalidProbability(f"rates must satisfy v >= 0, mu > 0, got v={v}, mu={mu}")
    if (1.0 - p) * mu <= v:
        raise UnstableNetwork(f"feedback queue unstable: (1-p)*mu = {(1-p)*mu} <= v = {v}")


def feedback_variance(v: float, mu: float, p: float) -> float:
    """Sojourn variance of the Bernoulli-feedback queue.

    VAR[T] = ((1-p^2) mu + v p) / (((1-p) mu - v)^2 ((1-p^2) mu - v p)).
    Reduces to the plain M/M/1 value 1/(mu - v)^2 at p = 0.
    """
    _check_feedback_params(v, mu, p)
    base = ((1.0 - p) * mu - v) ** 2
    return ((1.0 - p * p) * mu + v * p) / (base * ((1.0 - p * p) * mu - v * p))


def feedback_covariance(v: float, mu: float, p: float) -> float:
    """Covariance of the queue seen on arrival with the sojourn time,
    v (1-p) mu / ((1-p^2) mu - v p), for the Bernoulli-feedback queue."""
    _check_feedback_params(v, mu, p)
    return v * (1.0 - p) * mu / ((1.0 - p * p) * mu - v * p)


class CorrelationVerdict(enum.Enum):
    CONDITIONS_HOLD = "ConditionsHold"
    CONDITIONS_FAIL = "ConditionsFail"


@dataclass(frozen=True)
class ThreeNodeCorrelation:
    """Verdict on guaranteed positive correlation of the entry- and
    exit-node sojourn times in the two-route three-node network.

    ``p_lower``/``p_upper`` delimit the open interval of routing
    probabilities for which the verdict holds: both routes must be active
    (otherwise the network degenerates to a series with independent
    per-node sojourns) and node 1 must stay stable.  The ``closed_form_*``
    fields evaluate a stricter root-interval test kept for reference; its
    discriminant is negative for every stable rate set (see tests), so the
    verdict never rests on it and simulation cross-checks it instead.
    """

    verdict: CorrelationVerdict
    p: float
    p_lower: float
    p_upper: float
    closed_form_lhs: float
    closed_form_holds: bool
    closed_form_discriminant: float
    closed_form_interval: tuple[float, float] | None


def three_node_positive_correlation(
    v: float, mu1: float, mu2: float, mu3: float, p: float
) -> ThreeNodeCorrelation:
    """Decide whether the sojourn times at the entry and exit nodes of the
    two-route three-node network are guaranteed positively correlated.

    Requires stability at all three nodes (mu1 > v, mu2 > p v, mu3 > v).
    The guarantee holds exactly when both routes are active, 0 < p < 1;
    at the endpoints the network is a series of queues whose per-node
    sojourns are independent.
    """
    if not 0 <= p <= 1:
        raise InvalidProbability(f"routing probability must be in [0, 1], got {p}")
    if v <= 0 or mu1 <= 0 or mu2 <= 0 or mu3 <= 0:
        raise InvalidProbability("all rates must be positive")
    if mu1 <= v or mu3 <= v or mu2 <= p * v:
        raise UnstableNetwork(
            f"need mu1 > v, mu3 > v, mu2 > p*v; got v={v}, mu=({mu1},{mu2},{mu3}), p={p}"
        )
    total = v + mu1 + mu2 + mu3
    a = 1.0 / (mu1 - v)
    c = 1.0 / (mu3 - v)
    lhs = 2.0 * total * math.sqrt((a + c) / total + a * a + c * c)
    disc = 1.0 / total**2 + 4.0 * (a + c) / total - 4.0 * (a * a + c * c)
    interval = None
    if disc >= 0:
        root = math.sqrt(disc)
        x_minus = 1.0 / (2.0 * total) - root / 2.0
        x_plus = 1.0 / (2.0 * total) + root / 2.0
        interval = (
            mu2 * x_minus / (1.0 - v * x_minus),
            mu2 * x_plus / (1.0 - v * x_plus),
        )
    p_upper = min(1.0, mu2 / v)
    verdict = (
        CorrelationVerdict.CONDITIONS_HOLD
        if 0.0 < p < p_upper and p < 1.0
        else CorrelationVerdict.CONDITIONS_FAIL
    )
    return ThreeNodeCorrelation(
        verdict=verdict,
        p=p,
        p_lower=0.0,
        p_upper=p_upper,
        closed_form_lhs=lhs,
        closed_form_holds=lhs < 1.0,
        closed_form_discriminant=disc,
        closed_form_interval=interval,
    )
