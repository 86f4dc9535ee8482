"""Discrete-event simulation of the network with tagged customers.

The simulator is the brute-force oracle for every analytic and bounding
result: it tags each post-warmup arriving customer up to a quota, records
the per-node sojourn times along its realized path, and reports the
bookkeeping needed for conservation sanity checks (time-average population,
per-node throughput).
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import backends
from .errors import MaxEventsExceeded
from .network import NetworkSpec, solve_traffic_equations


@dataclass(frozen=True)
class SimConfig:
    """Simulation run parameters.

    ``warmup_customers=None`` derives the warmup from the relaxation-time
    heuristic 10 * J * max_j 1/(mu_j - theta_j) worth of simulated time,
    converted to an arrival count.  ``path_filter`` keeps only tagged
    customers whose realized path matches exactly.
    """

    seed: int = 0
    tagged_customers: int = 10_000
    warmup_customers: int | None = None
    path_filter: tuple[int, ...] | None = None
    max_events: int = 500_000_000

    def __post_init__(self):
        if self.tagged_customers < 1:
            raise ValueError("tagged_customers must be >= 1")
        if self.warmup_customers is not None and self.warmup_customers < 0:
            raise ValueError("warmup_customers must be >= 0")
        if self.path_filter is not None:
            object.__setattr__(self, "path_filter", tuple(int(p) for p in self.path_filter))


@dataclass(frozen=True, eq=False)
class SojournSample:
    """One tagged customer: realized path, per-visit sojourns, and their sum."""

    path: tuple[int, ...]
    sojourns: np.ndarray
    total: float


@dataclass(frozen=True, eq=False)
class SimulationResult:
    """Tagged-customer samples plus run-level counters.

    Samples are stored in flat arrays: sample i owns
    ``path_nodes[offsets[i]:offsets[i+1]]`` and the matching slice of
    ``sojourns``.  When a path filter is active the arrays contain only the
    retained samples; ``n_tagged`` counts all tagged customers.
    """

    spec: NetworkSpec
    config: SimConfig
    offsets: np.ndarray
    path_nodes: np.ndarray
    sojourns: np.ndarray
    totals: np.ndarray
    n_tagged: int
    elapsed: float
    integral_customers: float
    departures: np.ndarray
    n_events: int

    @property
    def n_samples(self) -> int:
        return len(self.totals)

    def sample(self, i: int) -> SojournSample:
        lo, hi = self.offsets[i], self.offsets[i + 1]
        return SojournSample(
            path=tuple(int(x) for x in self.path_nodes[lo:hi]),
            sojourns=self.sojourns[lo:hi],
            total=float(self.totals[i]),
        )

    def samples(self):
        return [self.sample(i) for i in range(self.n_samples)]

    def sojourns_at(self, node: int) -> np.ndarray:
        """Per-sample sojourn at the first visit to ``node``.

        Requires every retained sample to visit the node (use a path
        filter); raises otherwise.
        """
        out = np.empty(self.n_samples)
        for i in range(self.n_samples):
            lo, hi = self.offsets[i], self.offsets[i + 1]
            visits = np.nonzero(self.path_nodes[lo:hi] == node)[0]
            if len(visits) == 0:
                raise ValueError(f"sample {i} never visits node {node}")
            out[i] = self.sojourns[lo + visits[0]]
        return out

    @property
    def throughput(self) -> np.ndarray:
        """Per-node service completions per unit time over the run."""
        return self.departures / self.elapsed if self.elapsed > 0 else np.zeros_like(self.departures, dtype=float)

    @property
    def mean_population(self) -> float:
        """Time-average number of customers in the system."""
        return self.integral_customers / self.elapsed if self.elapsed > 0 else 0.0


def default_warmup(spec: NetworkSpec) -> int:
    """Arrival count matching 10 * J * max_j 1/(mu_j - theta_j) of warm-up time.

    Falls back to 0 (with a warning upstream) when the network is unstable
    and the relaxation heuristic is meaningless.
    """
    traffic = solve_traffic_equations(spec)
    if not traffic.stable:
        return 0
    horizon = 10.0 * spec.J * float(np.max(1.0 / (spec.mu - traffic.theta)))
    return math.ceil(float(spec.v.sum()) * horizon)


def simulate(spec: NetworkSpec, config: SimConfig) -> SimulationResult:
    """Run the tagged-customer simulation described by ``config``.

    Unstable networks are simulated with a warning (useful for divergence
    demonstrations); hitting the event safety cap raises
    :class:`MaxEventsExceeded`.
    """
    traffic = solve_traffic_equations(spec)
    if not traffic.stable:
        warnings.warn("simulating an unstable network; sojourn statistics will diverge")
    warmup = config.warmup_customers
    if warmup is None:
        warmup = default_warmup(spec)
    streams = backends.make_streams(config.seed, spec.J)
    pcum = np.cumsum(spec.P, axis=1)
    log_tag, log_node, log_soj, n_done, elapsed, integral_n, departures, n_events, hit_cap = (
        backends.run_simulation(
            spec.J,
            spec.v,
            spec.mu,
            pcum,
            warmup,
            config.tagged_customers,
            config.max_events,
            streams,
        )
    )
    if hit_cap:
        raise MaxEventsExceeded(
            f"{n_events} events processed with only {n_done} tagged departures"
        )
    # group the completion log by tag (stable, so visits stay time-ordered)
    order = np.argsort(log_tag, kind="stable")
    visits = np.bincount(log_tag, minlength=n_done) if len(log_tag) else np.zeros(n_done, dtype=np.int64)
    offsets = np.concatenate(([0], np.cumsum(visits))).astype(np.int64)
    path_nodes = log_node[order]
    sojourns = log_soj[order]
    totals = np.add.reduceat(sojourns, offsets[:-1]) if len(sojourns) else np.zeros(0)
    if config.path_filter is not None:
        keep = _matching_paths(offsets, path_nodes, np.asarray(config.path_filter, dtype=np.int32))
        new_offsets = np.concatenate(([0], np.cumsum(visits[keep]))).astype(np.int64)
        mask = np.zeros(len(path_nodes), dtype=bool)
        for i in np.nonzero(keep)[0]:
            mask[offsets[i] : offsets[i + 1]] = True
        path_nodes = path_nodes[mask]
        sojourns = sojourns[mask]
        totals = totals[keep]
        offsets = new_offsets
    return SimulationResult(
        spec=spec,
        config=config,
        offsets=offsets,
        path_nodes=path_nodes,
        sojourns=sojourns,
        totals=totals,
        n_tagged=n_done,
        elapsed=float(elapsed),
        integral_customers=float(integral_n),
        departures=departures,
        n_events=int(n_events),
    )


def _matching_paths(offsets, path_nodes, target) -> np.ndarray:
    n = len(offsets) - 1
    keep = np.zeros(n, dtype=bool)
    tlen = len(target)
    for i in range(n):
        lo, hi = offsets[i], offsets[i + 1]
        keep[i] = hi - lo == tlen and np.array_equal(path_nodes[lo:hi], target)
    return keep
