"""Pure-Python/NumPy implementations of the hot kernels.

Three kernels dominate runtime: building the marked-chain transition matrix,
the restricted jump iteration that extracts the absorption probabilities, and
the discrete-event simulation loop.  This module is the readable reference;
``jacknet.backends._core`` is its compiled twin and must produce identical
arrays (and, for the simulator, bitwise-identical samples) for the same
inputs.  Transition-emission order, random-draw order, and tie-breaking are
therefore pinned here and mirrored exactly in the Cython source.
"""
from __future__ import annotations

from collections import deque

import numpy as np

_STREAM_BUFFER = 4096
_INF = float("inf")


def build_transitions(J, cap, n_slots, slot_nodes, fixed, v, mu, P, q):
    """Assemble the truncated marked-chain generator in CSR-by-source form.

    Returns ``(indptr, indices, rates, absorb, clip, exit)`` where row x of
    (indices, rates) lists transitions to other transient states, absorb[x]
    is the rate into the absorbing aggregate, clip[x] the rate of cap-
    violating transitions removed from the model (tracked, never
    renormalized, so downstream absorption probabilities stay certified
    lower bounds), and exit[x] their total.  Transitions that do not change
    the state (a served customer immediately rejoining the same queue
    without passing the marked customer) cancel in the generator and are
    skipped.

    Per-state emission order: exogenous arrivals by node, background
    services by node (routing targets ascending, then departure), marked
    service last.
    """
    J = int(J)
    cap = int(cap)
    n_slots = int(n_slots)
    slot_nodes = [int(s) for s in slot_nodes]
    fixed = bool(fixed)
    v = [float(x) for x in v]
    mu = [float(x) for x in mu]
    q = [float(x) for x in q]
    P = np.asarray(P, dtype=float)

    box = (cap + 1) ** (J - 1)
    slot_block = box * (cap + 1) * (cap + 2) // 2
    ahead_off = [0] * (cap + 2)
    for a in range(cap + 1):
        ahead_off[a + 1] = ahead_off[a] + box * (cap - a + 1)
    n_transient = n_slots * slot_block

    def state_id(slot, ahead, counts, mnode):
        rank = 0
        for j in range(J):
            if j == mnode:
                rank = rank * (cap - ahead + 1) + (counts[j] - ahead)
            else:
                rank = rank * (cap + 1) + counts[j]
        return 1 + slot * slot_block + ahead_off[ahead] + rank

    indptr = np.zeros(n_transient + 1, dtype=np.int64)
    indices = []
    rates = []
    absorb = np.zeros(n_transient)
    clip = np.zeros(n_transient)
    exit_rate = np.zeros(n_transient)

    x = -1  # transient index (state id - 1)
    for slot in range(n_slots):
        mnode = slot_nodes[slot]
        for a in range(cap + 1):
            counts = [0] * J
            counts[mnode] = a
            while True:
                x += 1
                row_idx = []
                row_rate = []
                clipped = 0.0
                absorbed = 0.0
                # exogenous arrivals
                for j in range(J):
                    if v[j] <= 0.0:
                        continue
                    if counts[j] < cap:
                        counts[j] += 1
                        dest = state_id(slot, a, counts, mnode)
                        counts[j] -= 1
                        row_idx.append(dest - 1)
                        row_rate.append(v[j])
                    else:
                        clipped += v[j]
                # background service completions
                for j in range(J):
                    if counts[j] < 1 or (j == mnode and a == 0):
                        continue
                    a2 = a - 1 if j == mnode else a
                    for l in range(J):
                        pjl = P[j, l]
                        if pjl <= 0.0:
                            continue
                        if l == j:
                            if j != mnode:
                                continue  # state unchanged: cancels in the generator
                            dest = state_id(slot, a2, counts, mnode)
                        elif counts[l] < cap:
                            counts[j] -= 1
                            counts[l] += 1
                            dest = state_id(slot, a2, counts, mnode)
                            counts[j] += 1
                            counts[l] -= 1
                        else:
                            clipped += mu[j] * pjl
                            continue
                        row_idx.append(dest - 1)
                        row_rate.append(mu[j] * pjl)
                    if q[j] > 0.0:
                        counts[j] -= 1
                        dest = state_id(slot, a2, counts, mnode)
                        counts[j] += 1
                        row_idx.append(dest - 1)
                        row_rate.append(mu[j] * q[j])
                # marked-customer service (it is at the head of its queue)
                if a == 0:
                    if fixed:
                        if slot == n_slots - 1:
                            absorbed += mu[mnode]
                        else:
                            nxt = slot_nodes[slot + 1]
                            dest = state_id(slot + 1, counts[nxt], counts, nxt)
                            row_idx.append(dest - 1)
                            row_rate.append(mu[mnode])
                    else:
                        for l in range(J):
                            pml = P[mnode, l]
                            if pml <= 0.0:
                                continue
                            dest = state_id(l, counts[l], counts, l)
                            if dest - 1 != x:
                                row_idx.append(dest - 1)
                                row_rate.append(mu[mnode] * pml)
                        if q[mnode] > 0.0:
                            absorbed += mu[mnode] * q[mnode]
                indices.extend(row_idx)
                rates.extend(row_rate)
                absorb[x] = absorbed
                clip[x] = clipped
                total = absorbed + clipped
                for r in row_rate:
                    total += r
                exit_rate[x] = total
                indptr[x + 1] = indptr[x] + len(row_idx)
                # odometer over counts, rightmost digit fastest
                j = J - 1
                while j >= 0:
                    low = a if j == mnode else 0
                    if counts[j] < cap:
                        counts[j] += 1
                        break
                    counts[j] = low
                    j -= 1
                if j < 0:
                    break
    assert x + 1 == n_transient
    return (
        indptr,
        np.asarray(indices, dtype=np.int32),
        np.asarray(rates, dtype=float),
        absorb,
        clip,
        exit_rate,
    )


def iterate_transient(indptr, indices, probs, absorb_p, clip_p, phi, eps, max_steps):
    """Drive phi_n = phi_{n-1} R restricted to the transient set.

    Each step n >= 1 records the absorption flow h(n) = phi . absorb_p and
    the equivalent mass-difference value (previous mass - new mass -
    clipped mass), stopping at the first n whose remaining transient mass
    is <= eps.  Deterministic: fixed summation order, single thread.

    Returns (h_flow, h_mass, clip_total, tail_mass, converged).
    """
    import scipy.sparse as sp

    n = len(phi)
    R = sp.csr_matrix((probs, indices, indptr), shape=(n, n))
    phi = np.array(phi, dtype=float)
    h_flow = []
    h_mass = []
    clip_total = 0.0
    mass = float(phi.sum())
    for _ in range(int(max_steps)):
        absorbed = float(phi @ absorb_p)
        clipped = float(phi @ clip_p)
        phi = phi @ R
        new_mass = float(phi.sum())
        h_flow.append(absorbed)
        h_mass.append(mass - new_mass - clipped)
        clip_total += clipped
        mass = new_mass
        if mass <= eps:
            return np.asarray(h_flow), np.asarray(h_mass), clip_total, mass, True
    return np.asarray(h_flow), np.asarray(h_mass), clip_total, mass, False


class Stream:
    """Buffered scalar draws from one numpy Generator.

    Values are consumed in generation order, so the draw sequence does not
    depend on the buffer size; the compiled backend consumes the exact same
    sequence.
    """

    __slots__ = ("gen", "uniform", "buf", "pos")

    def __init__(self, gen, uniform=False):
        self.gen = gen
        self.uniform = uniform
        self.buf = ()
        self.pos = 0

    def next(self):
        if self.pos >= len(self.buf):
            if self.uniform:
                self.buf = self.gen.random(_STREAM_BUFFER)
            else:
                self.buf = self.gen.standard_exponential(_STREAM_BUFFER)
            self.pos = 0
        val = self.buf[self.pos]
        self.pos += 1
        return float(val)


def run_simulation(J, v, mu, Pcum, warmup, quota, max_events, streams):
    """Event-driven FCFS network simulation with tagged customers.

    Tags the exogenous arrivals numbered warmup..warmup+quota-1 (0-based,
    across all nodes in arrival order) and runs until the last tagged
    customer departs.  Event selection scans per-node next-arrival then
    next-completion times; ties break toward arrivals, then the lower node
    index.  Draw order per event is pinned: an arrival first draws its next
    interarrival gap, then a service time if it finds the server idle; a
    completion draws routing, then the destination's service start if that
    server was idle, then the freed server's next service.

    ``streams`` holds 3 generators per node (arrival, service, routing) as
    produced by :func:`make_streams`.

    Returns (log_tag, log_node, log_sojourn, n_done, elapsed, integral_n,
    departures, n_events, hit_cap); the logs list every service completion
    of a tagged customer in event order.
    """
    J = int(J)
    warmup = int(warmup)
    quota = int(quota)
    max_events = int(max_events)
    v = [float(x) for x in v]
    mu = [float(x) for x in mu]
    Pcum = np.asarray(Pcum, dtype=float)
    arr = [Stream(streams[3 * j]) for j in range(J)]
    svc = [Stream(streams[3 * j + 1]) for j in range(J)]
    rtg = [Stream(streams[3 * j + 2], uniform=True) for j in range(J)]

    next_arrival = [arr[j].next() / v[j] if v[j] > 0.0 else _INF for j in range(J)]
    next_completion = [_INF] * J
    queues = [deque() for _ in range(J)]  # customer indices; head is in service
    cust_arrival = []  # arrival time at the current node
    cust_tag = []  # tag index, -1 for background customers
    free = []

    log_tag = []
    log_node = []
    log_soj = []
    departures = [0] * J
    arrivals_seen = 0
    tagged_done = 0
    clock = 0.0
    integral_n = 0.0
    n_in_sys = 0
    n_events = 0
    hit_cap = False

    while True:
        best_t = _INF
        kind = -1
        node = -1
        for j in range(J):
            if next_arrival[j] < best_t:
                best_t = next_arrival[j]
                kind = 0
                node = j
        for j in range(J):
            if next_completion[j] < best_t:
                best_t = next_completion[j]
                kind = 1
                node = j
        if kind < 0:
            break  # nothing can ever happen (all arrival rates zero)
        if n_events >= max_events:
            hit_cap = True
            break
        n_events += 1
        integral_n += n_in_sys * (best_t - clock)
        clock = best_t
        j = node
        if kind == 0:
            next_arrival[j] = clock + arr[j].next() / v[j]
            tag = -1
            if warmup <= arrivals_seen < warmup + quota:
                tag = arrivals_seen - warmup
            arrivals_seen += 1
            if free:
                c = free.pop()
                cust_arrival[c] = clock
                cust_tag[c] = tag
            else:
                c = len(cust_arrival)
                cust_arrival.append(clock)
                cust_tag.append(tag)
            queues[j].append(c)
            n_in_sys += 1
            if len(queues[j]) == 1:
                next_completion[j] = clock + svc[j].next() / mu[j]
        else:
            c = queues[j].popleft()
            next_completion[j] = _INF
            tag = cust_tag[c]
            if tag >= 0:
                log_tag.append(tag)
                log_node.append(j)
                log_soj.append(clock - cust_arrival[c])
            departures[j] += 1
            u = rtg[j].next()
            dest = -1
            for l in range(J):
                if u < Pcum[j, l]:
                    dest = l
                    break
            if dest < 0:
                n_in_sys -= 1
                free.append(c)
                if tag >= 0:
                    tagged_done += 1
                    if tagged_done >= quota:
                        break
            else:
                cust_arrival[c] = clock
                queues[dest].append(c)
                if dest != j and len(queues[dest]) == 1:
                    next_completion[dest] = clock + svc[dest].next() / mu[dest]
            if queues[j]:
                next_completion[j] = clock + svc[j].next() / mu[j]

    return (
        np.asarray(log_tag, dtype=np.int64),
        np.asarray(log_node, dtype=np.int32),
        np.asarray(log_soj, dtype=float),
        tagged_done,
        clock,
        integral_n,
        np.asarray(departures, dtype=np.int64),
        n_events,
        hit_cap,
    )


def make_streams(seed, J):
    """One arrival, one service, and one routing generator per node.

    Spawned from a single SeedSequence so parameter changes at one node
    leave every other node's draws untouched (common random numbers).
    """
    children = np.random.SeedSequence(seed).spawn(3 * J)
    return [np.random.Generator(np.random.PCG64(c)) for c in children]
