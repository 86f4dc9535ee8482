# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled twin of ``jacknet.backends.pure``.

Implements the same three kernels with identical semantics: the
transition-matrix builder and the transient jump iteration produce the same
arrays (exit sums follow the same accumulation order), and the simulator
consumes the same per-stream random-draw sequence with the same event
tie-breaking, so its samples match the pure backend bitwise.
"""

import numpy as np

cimport numpy as cnp
from libc.string cimport memset

cnp.import_array()

cdef Py_ssize_t STREAM_BUFFER = 4096


cdef inline long long _state_id(int J, int cap, long long slot_block,
                                long long* ahead_off, long long box,
                                int slot, int ahead, long long* counts,
                                int mnode) nogil:
    cdef long long rank = 0
    cdef int j
    for j in range(J):
        if j == mnode:
            rank = rank * (cap - ahead + 1) + (counts[j] - ahead)
        else:
            rank = rank * (cap + 1) + counts[j]
    return 1 + slot * slot_block + ahead_off[ahead] + rank


def build_transitions(J, cap, n_slots, slot_nodes, fixed, v, mu, P, q):
    """See ``jacknet.backends.pure.build_transitions``; identical contract."""
    cdef int cJ = int(J)
    cdef int ccap = int(cap)
    cdef int cslots = int(n_slots)
    cdef int cfixed = 1 if fixed else 0
    cdef const cnp.int64_t[::1] snodes = np.ascontiguousarray(slot_nodes, dtype=np.int64)
    cdef const cnp.float64_t[::1] cv = np.ascontiguousarray(v, dtype=np.float64)
    cdef const cnp.float64_t[::1] cmu = np.ascontiguousarray(mu, dtype=np.float64)
    cdef const cnp.float64_t[::1] cq = np.ascontiguousarray(q, dtype=np.float64)
    cdef const cnp.float64_t[:, ::1] cP = np.ascontiguousarray(P, dtype=np.float64)

    cdef long long box = 1
    cdef int i
    for i in range(cJ - 1):
        box *= ccap + 1
    cdef long long slot_block = box * (ccap + 1) * (ccap + 2) // 2
    cdef cnp.ndarray ahead_off_arr = np.zeros(ccap + 2, dtype=np.int64)
    cdef cnp.int64_t[::1] ahead_off = ahead_off_arr
    cdef int a
    for a in range(ccap + 1):
        ahead_off[a + 1] = ahead_off[a] + box * (ccap - a + 1)
    cdef long long n_transient = cslots * slot_block

    cdef cnp.ndarray counts_arr = np.zeros(cJ, dtype=np.int64)
    cdef long long* counts = <long long*> cnp.PyArray_DATA(counts_arr)
    cdef long long* aoff = <long long*> cnp.PyArray_DATA(ahead_off_arr)

    cdef cnp.ndarray indptr_arr = np.zeros(n_transient + 1, dtype=np.int64)
    cdef cnp.int64_t[::1] indptr = indptr_arr
    cdef cnp.ndarray absorb_arr = np.zeros(n_transient, dtype=np.float64)
    cdef cnp.float64_t[::1] absorb = absorb_arr
    cdef cnp.ndarray clip_arr = np.zeros(n_transient, dtype=np.float64)
    cdef cnp.float64_t[::1] clip = clip_arr
    cdef cnp.ndarray exit_arr = np.zeros(n_transient, dtype=np.float64)
    cdef cnp.float64_t[::1] exit_rate = exit_arr

    cdef int passno, slot, mnode, j, l, a2, odo
    cdef long long x, dest, nnz, ptr
    cdef double clipped, absorbed, row_total, rate
    cdef cnp.int32_t[::1] indices = None
    cdef cnp.float64_t[::1] rates = None
    cdef cnp.ndarray indices_arr = None, rates_arr = None

    # Pass 0 counts row lengths; pass 1 fills.  Emission order matches the
    # pure backend: arrivals by node, services by node (targets ascending,
    # then departure), marked service last.
    for passno in range(2):
        if passno == 1:
            nnz = 0
            for x in range(n_transient):
                ptr = indptr[x + 1]
                indptr[x + 1] = nnz + ptr
                nnz = indptr[x + 1]
            indices_arr = np.empty(nnz, dtype=np.int32)
            rates_arr = np.empty(nnz, dtype=np.float64)
            indices = indices_arr
            rates = rates_arr
        x = -1
        for slot in range(cslots):
            mnode = <int> snodes[slot]
            for a in range(ccap + 1):
                for j in range(cJ):
                    counts[j] = 0
                counts[mnode] = a
                while True:
                    x += 1
                    ptr = indptr[x] if passno == 1 else 0
                    clipped = 0.0
                    absorbed = 0.0
                    row_total = 0.0
                    # exogenous arrivals
                    for j in range(cJ):
                        if cv[j] <= 0.0:
                            continue
                        if counts[j] < ccap:
                            if passno == 0:
                                ptr += 1
                            else:
                                counts[j] += 1
                                dest = _state_id(cJ, ccap, slot_block, aoff, box,
                                                 slot, a, counts, mnode)
                                counts[j] -= 1
                                indices[ptr] = <cnp.int32_t> (dest - 1)
                                rates[ptr] = cv[j]
                                ptr += 1
                        else:
                            clipped += cv[j]
                    # background service completions
                    for j in range(cJ):
                        if counts[j] < 1 or (j == mnode and a == 0):
                            continue
                        a2 = a - 1 if j == mnode else a
                        for l in range(cJ):
                            if cP[j, l] <= 0.0:
                                continue
                            if l == j:
                                if j != mnode:
                                    continue
                                if passno == 0:
                                    ptr += 1
                                else:
                                    dest = _state_id(cJ, ccap, slot_block, aoff, box,
                                                     slot, a2, counts, mnode)
                                    indices[ptr] = <cnp.int32_t> (dest - 1)
                                    rates[ptr] = cmu[j] * cP[j, l]
                                    ptr += 1
                            elif counts[l] < ccap:
                                if passno == 0:
                                    ptr += 1
                                else:
                                    counts[j] -= 1
                                    counts[l] += 1
                                    dest = _state_id(cJ, ccap, slot_block, aoff, box,
                                                     slot, a2, counts, mnode)
                                    counts[j] += 1
                                    counts[l] -= 1
                                    indices[ptr] = <cnp.int32_t> (dest - 1)
                                    rates[ptr] = cmu[j] * cP[j, l]
                                    ptr += 1
                            else:
                                clipped += cmu[j] * cP[j, l]
                        if cq[j] > 0.0:
                            if passno == 0:
                                ptr += 1
                            else:
                                counts[j] -= 1
                                dest = _state_id(cJ, ccap, slot_block, aoff, box,
                                                 slot, a2, counts, mnode)
                                counts[j] += 1
                                indices[ptr] = <cnp.int32_t> (dest - 1)
                                rates[ptr] = cmu[j] * cq[j]
                                ptr += 1
                    # marked-customer service
                    if a == 0:
                        if cfixed:
                            if slot == cslots - 1:
                                absorbed += cmu[mnode]
                            else:
                                if passno == 0:
                                    ptr += 1
                                else:
                                    l = <int> snodes[slot + 1]
                                    dest = _state_id(cJ, ccap, slot_block, aoff, box,
                                                     slot + 1, <int> counts[l], counts, l)
                                    indices[ptr] = <cnp.int32_t> (dest - 1)
                                    rates[ptr] = cmu[mnode]
                                    ptr += 1
                        else:
                            for l in range(cJ):
                                if cP[mnode, l] <= 0.0:
                                    continue
                                # self-transition (rejoining an empty own queue)
                                if l == mnode and counts[l] == 0:
                                    continue
                                if passno == 0:
                                    ptr += 1
                                else:
                                    dest = _state_id(cJ, ccap, slot_block, aoff, box,
                                                     l, <int> counts[l], counts, l)
                                    indices[ptr] = <cnp.int32_t> (dest - 1)
                                    rates[ptr] = cmu[mnode] * cP[mnode, l]
                                    ptr += 1
                            if cq[mnode] > 0.0:
                                absorbed += cmu[mnode] * cq[mnode]
                    if passno == 0:
                        indptr[x + 1] = ptr  # row length; prefix-summed later
                        absorb[x] = absorbed
                        clip[x] = clipped
                    else:
                        row_total = absorbed + clipped
                        for nnz in range(indptr[x], ptr):
                            row_total += rates[nnz]
                        exit_rate[x] = row_total
                    # odometer over counts, rightmost digit fastest
                    odo = cJ - 1
                    while odo >= 0:
                        if counts[odo] < ccap:
                            counts[odo] += 1
                            break
                        counts[odo] = a if odo == mnode else 0
                        odo -= 1
                    if odo < 0:
                        break
    return indptr_arr, indices_arr, rates_arr, absorb_arr, clip_arr, exit_arr


def iterate_transient(indptr, indices, probs, absorb_p, clip_p, phi, eps, max_steps):
    """See ``jacknet.backends.pure.iterate_transient``; identical contract."""
    cdef const cnp.int64_t[::1] cptr = np.ascontiguousarray(indptr, dtype=np.int64)
    cdef const cnp.int32_t[::1] cidx = np.ascontiguousarray(indices, dtype=np.int32)
    cdef const cnp.float64_t[::1] cprob = np.ascontiguousarray(probs, dtype=np.float64)
    cdef const cnp.float64_t[::1] cabs = np.ascontiguousarray(absorb_p, dtype=np.float64)
    cdef const cnp.float64_t[::1] cclip = np.ascontiguousarray(clip_p, dtype=np.float64)
    cdef cnp.ndarray phi_arr = np.array(phi, dtype=np.float64)
    cdef cnp.ndarray new_arr = np.zeros_like(phi_arr)
    cdef cnp.float64_t[::1] cphi = phi_arr
    cdef cnp.float64_t[::1] cnew = new_arr
    cdef long long n = cphi.shape[0]
    cdef double ceps = float(eps)
    cdef long long cmax = int(max_steps)

    cdef list h_flow = []
    cdef list h_mass = []
    cdef double clip_total = 0.0
    cdef double mass, new_mass, absorbed, clipped, p
    cdef long long i, k, step
    cdef bint converged = False
    cdef cnp.float64_t[::1] swap

    mass = 0.0
    for i in range(n):
        mass += cphi[i]
    for step in range(cmax):
        absorbed = 0.0
        clipped = 0.0
        new_mass = 0.0
        with nogil:
            memset(&cnew[0], 0, n * sizeof(double))
            for i in range(n):
                p = cphi[i]
                if p == 0.0:
                    continue
                absorbed += p * cabs[i]
                clipped += p * cclip[i]
                for k in range(cptr[i], cptr[i + 1]):
                    cnew[cidx[k]] += p * cprob[k]
            for i in range(n):
                new_mass += cnew[i]
        h_flow.append(absorbed)
        h_mass.append(mass - new_mass - clipped)
        clip_total += clipped
        mass = new_mass
        swap = cphi
        cphi = cnew
        cnew = swap
        if mass <= ceps:
            converged = True
            break
    return (
        np.asarray(h_flow, dtype=np.float64),
        np.asarray(h_mass, dtype=np.float64),
        clip_total,
        mass,
        converged,
    )


cdef class _Stream:
    """Buffered draws from one numpy Generator (same sequence as the pure twin)."""
    cdef object gen
    cdef bint uniform
    cdef cnp.float64_t[::1] buf
    cdef Py_ssize_t pos, size

    def __init__(self, gen, uniform=False):
        self.gen = gen
        self.uniform = uniform
        self.pos = 0
        self.size = 0

    cdef double next(self):
        if self.pos >= self.size:
            if self.uniform:
                self.buf = self.gen.random(STREAM_BUFFER)
            else:
                self.buf = self.gen.standard_exponential(STREAM_BUFFER)
            self.size = STREAM_BUFFER
            self.pos = 0
        cdef double val = self.buf[self.pos]
        self.pos += 1
        return val


def run_simulation(J, v, mu, Pcum, warmup, quota, max_events, streams):
    """See ``jacknet.backends.pure.run_simulation``; identical contract and
    bitwise-identical output for the same streams."""
    cdef int cJ = int(J)
    cdef long long cwarm = int(warmup)
    cdef long long cquota = int(quota)
    cdef long long cmax = int(max_events)
    cdef const cnp.float64_t[::1] cv = np.ascontiguousarray(v, dtype=np.float64)
    cdef const cnp.float64_t[::1] cmu = np.ascontiguousarray(mu, dtype=np.float64)
    cdef const cnp.float64_t[:, ::1] cPcum = np.ascontiguousarray(Pcum, dtype=np.float64)

    cdef list arr = [_Stream(streams[3 * j]) for j in range(cJ)]
    cdef list svc = [_Stream(streams[3 * j + 1]) for j in range(cJ)]
    cdef list rtg = [_Stream(streams[3 * j + 2], True) for j in range(cJ)]

    cdef double INF = float("inf")
    cdef cnp.ndarray na_arr = np.full(cJ, INF)
    cdef cnp.ndarray nc_arr = np.full(cJ, INF)
    cdef double* next_arrival = <double*> cnp.PyArray_DATA(na_arr)
    cdef double* next_completion = <double*> cnp.PyArray_DATA(nc_arr)
    cdef int j
    for j in range(cJ):
        if cv[j] > 0.0:
            next_arrival[j] = (<_Stream> arr[j]).next() / cv[j]

    # per-node FIFO ring buffers of customer indices
    cdef cnp.ndarray qbuf = np.zeros((cJ, 16), dtype=np.int64)
    cdef cnp.ndarray qhead_arr = np.zeros(cJ, dtype=np.int64)
    cdef cnp.ndarray qlen_arr = np.zeros(cJ, dtype=np.int64)
    cdef long long* qhead = <long long*> cnp.PyArray_DATA(qhead_arr)
    cdef long long* qlen = <long long*> cnp.PyArray_DATA(qlen_arr)
    cdef long long qcap = 16

    # customer table with free list
    cdef long long ccap_cust = 1024
    cdef cnp.ndarray cust_arrival_arr = np.zeros(ccap_cust, dtype=np.float64)
    cdef cnp.ndarray cust_tag_arr = np.zeros(ccap_cust, dtype=np.int64)
    cdef double* cust_arrival = <double*> cnp.PyArray_DATA(cust_arrival_arr)
    cdef long long* cust_tag = <long long*> cnp.PyArray_DATA(cust_tag_arr)
    cdef cnp.ndarray free_arr = np.zeros(ccap_cust, dtype=np.int64)
    cdef long long* free_stack = <long long*> cnp.PyArray_DATA(free_arr)
    cdef long long n_free = 0
    cdef long long n_cust = 0

    # completion log of tagged customers
    cdef long long lcap = max(cquota * 2, 1024)
    cdef cnp.ndarray log_tag_arr = np.zeros(lcap, dtype=np.int64)
    cdef cnp.ndarray log_node_arr = np.zeros(lcap, dtype=np.int32)
    cdef cnp.ndarray log_soj_arr = np.zeros(lcap, dtype=np.float64)
    cdef long long* log_tag = <long long*> cnp.PyArray_DATA(log_tag_arr)
    cdef cnp.int32_t* log_node = <cnp.int32_t*> cnp.PyArray_DATA(log_node_arr)
    cdef double* log_soj = <double*> cnp.PyArray_DATA(log_soj_arr)
    cdef long long n_log = 0

    cdef cnp.ndarray dep_arr = np.zeros(cJ, dtype=np.int64)
    cdef long long* departures = <long long*> cnp.PyArray_DATA(dep_arr)

    cdef long long arrivals_seen = 0, tagged_done = 0, n_events = 0
    cdef double clock = 0.0, integral_n = 0.0
    cdef long long n_in_sys = 0
    cdef bint hit_cap = False

    cdef double best_t, u
    cdef int kind, node, l, dest
    cdef long long c, tag

    while True:
        best_t = INF
        kind = -1
        node = -1
        for j in range(cJ):
            if next_arrival[j] < best_t:
                best_t = next_arrival[j]
                kind = 0
                node = j
        for j in range(cJ):
            if next_completion[j] < best_t:
                best_t = next_completion[j]
                kind = 1
                node = j
        if kind < 0:
            break
        if n_events >= cmax:
            hit_cap = True
            break
        n_events += 1
        integral_n += n_in_sys * (best_t - clock)
        clock = best_t
        j = node
        if kind == 0:
            next_arrival[j] = clock + (<_Stream> arr[j]).next() / cv[j]
            tag = -1
            if cwarm <= arrivals_seen < cwarm + cquota:
                tag = arrivals_seen - cwarm
            arrivals_seen += 1
            if n_free > 0:
                n_free -= 1
                c = free_stack[n_free]
            else:
                if n_cust >= ccap_cust:
                    ccap_cust *= 2
                    cust_arrival_arr = np.concatenate([cust_arrival_arr, np.zeros(ccap_cust // 2)])
                    cust_tag_arr = np.concatenate([cust_tag_arr, np.zeros(ccap_cust // 2, dtype=np.int64)])
                    free_arr = np.concatenate([free_arr, np.zeros(ccap_cust // 2, dtype=np.int64)])
                    cust_arrival = <double*> cnp.PyArray_DATA(cust_arrival_arr)
                    cust_tag = <long long*> cnp.PyArray_DATA(cust_tag_arr)
                    free_stack = <long long*> cnp.PyArray_DATA(free_arr)
                c = n_cust
                n_cust += 1
            cust_arrival[c] = clock
            cust_tag[c] = tag
            if qlen[j] >= qcap:
                qcap *= 2
                qbuf = _regrow_rings(qbuf, qhead_arr, qlen_arr, qcap)
                qhead = <long long*> cnp.PyArray_DATA(qhead_arr)
            _ring_push(qbuf, qhead, qlen, qcap, j, c)
            n_in_sys += 1
            if qlen[j] == 1:
                next_completion[j] = clock + (<_Stream> svc[j]).next() / cmu[j]
        else:
            c = _ring_pop(qbuf, qhead, qlen, qcap, j)
            next_completion[j] = INF
            tag = cust_tag[c]
            if tag >= 0:
                if n_log >= lcap:
                    lcap *= 2
                    log_tag_arr = np.concatenate([log_tag_arr, np.zeros(lcap // 2, dtype=np.int64)])
                    log_node_arr = np.concatenate([log_node_arr, np.zeros(lcap // 2, dtype=np.int32)])
                    log_soj_arr = np.concatenate([log_soj_arr, np.zeros(lcap // 2)])
                    log_tag = <long long*> cnp.PyArray_DATA(log_tag_arr)
                    log_node = <cnp.int32_t*> cnp.PyArray_DATA(log_node_arr)
                    log_soj = <double*> cnp.PyArray_DATA(log_soj_arr)
                log_tag[n_log] = tag
                log_node[n_log] = j
                log_soj[n_log] = clock - cust_arrival[c]
                n_log += 1
            departures[j] += 1
            u = (<_Stream> rtg[j]).next()
            dest = -1
            for l in range(cJ):
                if u < cPcum[j, l]:
                    dest = l
                    break
            if dest < 0:
                n_in_sys -= 1
                free_stack[n_free] = c
                n_free += 1
                if tag >= 0:
                    tagged_done += 1
                    if tagged_done >= cquota:
                        break
            else:
                cust_arrival[c] = clock
                if qlen[dest] >= qcap:
                    qcap *= 2
                    qbuf = _regrow_rings(qbuf, qhead_arr, qlen_arr, qcap)
                    qhead = <long long*> cnp.PyArray_DATA(qhead_arr)
                _ring_push(qbuf, qhead, qlen, qcap, dest, c)
                if dest != j and qlen[dest] == 1:
                    next_completion[dest] = clock + (<_Stream> svc[dest]).next() / cmu[dest]
            if qlen[j] > 0:
                next_completion[j] = clock + (<_Stream> svc[j]).next() / cmu[j]

    return (
        log_tag_arr[:n_log].copy(),
        log_node_arr[:n_log].copy(),
        log_soj_arr[:n_log].copy(),
        tagged_done,
        clock,
        integral_n,
        dep_arr,
        n_events,
        hit_cap,
    )


cdef inline void _ring_push(cnp.ndarray qbuf, long long* qhead, long long* qlen,
                            long long qcap, int j, long long c):
    cdef long long* row = (<long long*> cnp.PyArray_DATA(qbuf)) + j * qcap
    row[(qhead[j] + qlen[j]) % qcap] = c
    qlen[j] += 1


cdef inline long long _ring_pop(cnp.ndarray qbuf, long long* qhead, long long* qlen,
                                long long qcap, int j):
    cdef long long* row = (<long long*> cnp.PyArray_DATA(qbuf)) + j * qcap
    cdef long long c = row[qhead[j]]
    qhead[j] = (qhead[j] + 1) % qcap
    qlen[j] -= 1
    return c


cdef cnp.ndarray _regrow_rings(cnp.ndarray qbuf, cnp.ndarray qhead_arr,
                               cnp.ndarray qlen_arr, long long new_cap):
    """Double every ring buffer, unrolling each queue to start at slot 0."""
    cdef cnp.ndarray out = np.zeros((qbuf.shape[0], new_cap), dtype=np.int64)
    cdef long long old_cap = qbuf.shape[1]
    cdef long long* qhead = <long long*> cnp.PyArray_DATA(qhead_arr)
    cdef long long* qlen = <long long*> cnp.PyArray_DATA(qlen_arr)
    cdef long long* src
    cdef long long* dst
    cdef long long i
    cdef int j
    for j in range(qbuf.shape[0]):
        src = (<long long*> cnp.PyArray_DATA(qbuf)) + j * old_cap
        dst = (<long long*> cnp.PyArray_DATA(out)) + j * new_cap
        for i in range(qlen[j]):
            dst[i] = src[(qhead[j] + i) % old_cap]
        qhead[j] = 0
    return out
