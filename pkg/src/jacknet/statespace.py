"""State space of the network-plus-marked-customer Markov process.

A state tracks the position of one tagged (marked) customer plus the queue
lengths of everyone else.  Queue lengths are truncated at a cap C; id 0 is
the single aggregate absorbing state reached when the marked customer leaves.
Transient states are ordered lexicographically by (marked slot, customers
ahead, background counts) and mapped to consecutive integer ids in closed
form, so neither enumeration lists nor hash maps are ever materialized.

The marked coordinate ("slot") is the node itself under random routing and
the position along the path when the customer is conditioned to follow a
fixed path; a fixed path may legitimately revisit nodes.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import CapTooSmall, UnreachablePath, UnstableNetwork
from .network import NetworkSpec, TrafficSolution

#: Refuse to build transient spaces larger than this (memory guard).
MAX_TRANSIENT_STATES = 25_000_000


@dataclass(frozen=True)
class MarkedState:
    """One state: either absorbed, or (node, customers ahead, background counts)."""

    absorbed: bool
    node: int | None = None
    ahead: int | None = None
    counts: tuple[int, ...] | None = None
    slot: int | None = None


@dataclass(frozen=True, eq=False)
class MarkedStateSpace:
    """Truncated, deterministically indexed state enumeration.

    ``counts`` excludes the marked customer, so ``ahead <= counts[node]``
    always holds and a customer arriving at an equilibrium queue of length
    n starts with ``ahead = n``.
    """

    spec: NetworkSpec
    entry: int
    cap: int
    path: tuple[int, ...] | None = None

    def __post_init__(self):
        J = self.spec.J
        cap = self.cap
        slots = len(self.path) if self.path is not None else J
        box = (cap + 1) ** (J - 1)
        slot_block = box * (cap + 1) * (cap + 2) // 2
        ahead_off = np.empty(cap + 2, dtype=np.int64)
        ahead_off[0] = 0
        for a in range(cap + 1):
            ahead_off[a + 1] = ahead_off[a] + box * (cap - a + 1)
        object.__setattr__(self, "_box", box)
        object.__setattr__(self, "_slot_block", slot_block)
        object.__setattr__(self, "_ahead_off", ahead_off)

    @property
    def J(self) -> int:
        return self.spec.J

    @property
    def n_slots(self) -> int:
        return len(self.path) if self.path is not None else self.J

    @property
    def slot_nodes(self) -> np.ndarray:
        """Node occupied by the marked customer for each slot value."""
        if self.path is not None:
            return np.asarray(self.path, dtype=np.int64)
        return np.arange(self.J, dtype=np.int64)

    @property
    def entry_slot(self) -> int:
        return 0 if self.path is not None else self.entry

    @property
    def n_transient(self) -> int:
        return self.n_slots * self._slot_block

    @property
    def n_states(self) -> int:
        return self.n_transient + 1

    def state_id(self, slot: int, ahead: int, counts) -> int:
        """Integer id of a transient state (absorbing aggregate is id 0)."""
        cap = self.cap
        mnode = int(self.slot_nodes[slot])
        if not 0 <= ahead <= counts[mnode] <= cap:
            raise ValueError(f"invalid state: slot={slot} ahead={ahead} counts={counts}")
        rank = 0
        for j in range(self.J):
            if j == mnode:
                rank = rank * (cap - ahead + 1) + (counts[j] - ahead)
            else:
                rank = rank * (cap + 1) + counts[j]
        return 1 + slot * self._slot_block + int(self._ahead_off[ahead]) + rank

    def decode(self, sid: int) -> MarkedState:
        """Inverse of :meth:`state_id`."""
        if sid == 0:
            return MarkedState(absorbed=True)
        if not 1 <= sid <= self.n_transient:
            raise ValueError(f"state id {sid} out of range")
        cap = self.cap
        rem = sid - 1
        slot, rem = divmod(rem, self._slot_block)
        ahead = int(np.searchsorted(self._ahead_off, rem, side="right")) - 1
        rem -= int(self._ahead_off[ahead])
        mnode = int(self.slot_nodes[slot])
        counts = [0] * self.J
        for j in range(self.J - 1, -1, -1):
            radix = cap - ahead + 1 if j == mnode else cap + 1
            rem, digit = divmod(rem, radix)
            counts[j] = digit + ahead if j == mnode else digit
        return MarkedState(
            absorbed=False, node=mnode, ahead=ahead, counts=tuple(counts), slot=int(slot)
        )

    def states(self):
        """Iterate every state in id order (absorbing first).  Small spaces only."""
        for sid in range(self.n_states):
            yield self.decode(sid)


def build_state_space(
    spec: NetworkSpec,
    traffic: TrafficSolution,
    entry: int,
    cap: int,
    path=None,
) -> MarkedStateSpace:
    """Enumerate the truncated marked-customer state space.

    ``path=None`` leaves the marked customer randomly routed; otherwise it
    is conditioned to follow the given node sequence, which must start at
    ``entry`` and have positive routing probability at every hop.
    """
    if not traffic.stable:
        raise UnstableNetwork(f"traffic intensities {traffic.rho} not all < 1")
    if cap < 0:
        raise CapTooSmall(f"cap must be >= 0, got {cap}")
    if not 0 <= entry < spec.J:
        raise UnreachablePath(f"entry node {entry} out of range")
    if path is None:
        if spec.v[entry] <= 0:
            raise UnreachablePath(f"node {entry} has no exogenous arrivals")
    else:
        path = tuple(int(p) for p in path)
        if not path or path[0] != entry:
            raise UnreachablePath(f"path {path} must start at entry node {entry}")
        if any(not 0 <= p < spec.J for p in path):
            raise UnreachablePath(f"path {path} leaves node range")
        for a, b in zip(path, path[1:]):
            if spec.P[a, b] <= 0:
                raise UnreachablePath(f"hop {a} -> {b} has zero routing probability")
    space = MarkedStateSpace(spec=spec, entry=entry, cap=cap, path=path)
    if space.n_transient > MAX_TRANSIENT_STATES:
        raise ValueError(
            f"{space.n_transient} transient states exceed the memory guard; lower the cap"
        )
    return space


def default_cap(traffic: TrafficSolution, epsilon: float) -> int:
    """Smallest cap whose per-node geometric tail mass stays below eps/(2J).

    rho^(C+1)/(1-rho) < eps/(2J) per node; nodes with rho = 0 impose no
    constraint.  At least 1.
    """
    if not 0 < epsilon < 1:
        raise ValueError("epsilon must be in (0, 1)")
    J = traffic.J
    cap = 1
    for rho in traffic.rho:
        if rho <= 0:
            continue
        need = math.log(epsilon * (1.0 - rho) / (2.0 * J)) / math.log(rho)
        cap = max(cap, math.ceil(need) - 1)
    return cap
