"""Randomization of the marked-customer chain.

The continuous-time marked process has a bounded generator Q; with a rate
alpha no smaller than any state's total outflow, R = I + Q/alpha is a
stochastic jump matrix and the sojourn time becomes a mixture of Erlang
laws whose weights h(n) are the absorption probabilities of the jump chain.
Queue-length truncation removes probability instead of renormalizing it, so
every computed h(n) is a certified lower bound of the untruncated value.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import backends
from .bounds import ErlangMixture
from .errors import AlphaTooSmall, NoConvergence, NumericalFailure, UnstableNetwork
from .network import TrafficSolution
from .statespace import MarkedStateSpace

#: Row sums of the randomized matrix must close to 1 within this tolerance.
ROW_SUM_TOL = 1e-12

#: Agreement required between the flow form and the mass-difference form
#: of the jump-count probabilities.
H_FORM_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class MarkedGenerator:
    """Sparse generator rows of the transient states (CSR by source).

    ``rates`` holds transitions between transient states; ``absorb`` the
    rate into the absorbing aggregate; ``clip`` the rate removed by the
    queue cap; ``exit`` their total (the negated diagonal).  ``alpha`` is
    the state-independent uniformization bound: total exogenous arrival
    rate plus the sum of all service rates.
    """

    space: MarkedStateSpace
    alpha: float
    indptr: np.ndarray
    indices: np.ndarray
    rates: np.ndarray
    absorb: np.ndarray
    clip: np.ndarray
    exit: np.ndarray

    @property
    def n_transient(self) -> int:
        return len(self.absorb)

    def row_sums(self) -> np.ndarray:
        """Net generator row sums; zero except -clip on clipped rows."""
        rows = np.repeat(np.arange(self.n_transient), np.diff(self.indptr))
        off = np.bincount(rows, weights=self.rates, minlength=self.n_transient)
        return off + self.absorb - self.exit


@dataclass(frozen=True, eq=False)
class RandomizedChain:
    """Jump matrix R = I + Q/alpha restricted to the transient states.

    CSR by source with the diagonal stored first in each row;
    ``absorb_p[x]`` is the per-jump absorption probability and
    ``deficit_rate[x]`` the per-jump probability routed out of the
    truncated box (tracked, never renormalized).
    """

    space: MarkedStateSpace
    alpha: float
    indptr: np.ndarray
    indices: np.ndarray
    probs: np.ndarray
    absorb_p: np.ndarray
    deficit_rate: np.ndarray

    @property
    def n_transient(self) -> int:
        return len(self.absorb_p)

    def row_sums(self) -> np.ndarray:
        """Stored probability per row; 1 - deficit_rate up to rounding."""
        rows = np.repeat(np.arange(self.n_transient), np.diff(self.indptr))
        out = np.bincount(rows, weights=self.probs, minlength=self.n_transient)
        return out + self.absorb_p


def build_generator(space: MarkedStateSpace) -> MarkedGenerator:
    """Build the truncated generator of the marked process.

    Exogenous arrivals, background service completions with Bernoulli
    routing, and the marked customer's own service make up the rows; any
    transition pushing a queue past the cap is dropped from its row and
    tracked in ``clip``.
    """
    spec = space.spec
    indptr, indices, rates, absorb, clip, exit_rate = backends.build_transitions(
        spec.J,
        space.cap,
        space.n_slots,
        space.slot_nodes,
        1 if space.path is not None else 0,
        spec.v,
        spec.mu,
        spec.P,
        spec.q,
    )
    alpha = float(spec.v.sum() + spec.mu.sum())
    return MarkedGenerator(
        space=space,
        alpha=alpha,
        indptr=indptr,
        indices=indices,
        rates=rates,
        absorb=absorb,
        clip=clip,
        exit=exit_rate,
    )


def randomize(gen: MarkedGenerator, alpha: float | None = None) -> RandomizedChain:
    """Form the stochastic jump matrix R = I + Q/alpha.

    ``alpha`` defaults to the generator's global outflow bound; any value
    below some state's total outflow would make a diagonal entry negative
    and raises :class:`AlphaTooSmall`.
    """
    if alpha is None:
        alpha = gen.alpha
    if alpha <= 0:
        raise AlphaTooSmall("uniformization rate must be positive")
    diag = 1.0 - gen.exit / alpha
    bad = diag < -ROW_SUM_TOL
    if np.any(bad):
        worst = float(gen.exit[bad].max())
        raise AlphaTooSmall(f"state outflow {worst} exceeds alpha {alpha}")
    diag = np.maximum(diag, 0.0)
    n = gen.n_transient
    nnz = len(gen.rates)
    indptr = gen.indptr + np.arange(n + 1, dtype=np.int64)
    indices = np.empty(nnz + n, dtype=np.int32)
    probs = np.empty(nnz + n)
    diag_pos = indptr[:-1]
    indices[diag_pos] = np.arange(n, dtype=np.int32)
    probs[diag_pos] = diag
    if nnz:
        rows = np.repeat(np.arange(n, dtype=np.int64), np.diff(gen.indptr))
        off_pos = np.arange(nnz, dtype=np.int64) + rows + 1
        indices[off_pos] = gen.indices
        probs[off_pos] = gen.rates / alpha
    chain = RandomizedChain(
        space=gen.space,
        alpha=float(alpha),
        indptr=indptr,
        indices=indices,
        probs=probs,
        absorb_p=gen.absorb / alpha,
        deficit_rate=gen.clip / alpha,
    )
    closure = chain.row_sums() + chain.deficit_rate
    if np.any(np.abs(closure - 1.0) > 1e-9):
        raise NumericalFailure("randomized rows do not close to 1")
    return chain


def initial_distribution(
    space: MarkedStateSpace, traffic: TrafficSolution
) -> tuple[np.ndarray, float]:
    """Entry-instant state distribution of the marked customer.

    Arriving customers see the equilibrium product form, so background
    counts are weighted by prod_j (1-rho_j) rho_j^(c_j) restricted to the
    truncation box (unnormalized; the missing tail is the initial
    truncation deficit), and the marked customer joins the end of the
    entry queue: ahead = pre-arrival occupancy.

    Returns (psi0 over all state ids, initial deficit).
    """
    if not traffic.stable:
        raise UnstableNetwork(f"traffic intensities {traffic.rho} not all < 1")
    J = space.J
    cap = space.cap
    rho = traffic.rho
    entry = space.entry
    slot = space.entry_slot
    psi0 = np.zeros(space.n_states)
    geo = [(1.0 - rho) * rho**n for n in range(cap + 1)]  # geo[n][j]
    counts = [0] * J
    while True:
        w = 1.0
        for j in range(J):
            w *= geo[counts[j]][j]
        psi0[space.state_id(slot, counts[entry], counts)] = w
        j = J - 1
        while j >= 0:
            if counts[j] < cap:
                counts[j] += 1
                break
            counts[j] = 0
            j -= 1
        if j < 0:
            break
    deficit = 1.0 - float(psi0.sum())
    return psi0, max(deficit, 0.0)


def compute_h(
    chain: RandomizedChain,
    psi0: np.ndarray,
    epsilon: float,
    max_jumps: int = 10**6,
) -> ErlangMixture:
    """Jump-count absorption probabilities of the randomized chain.

    h(0) is the probability mass starting in the absorbing aggregate
    (zero for an arriving customer); h(n) for n >= 1 is the flow into the
    aggregate at the n-th jump.  Iteration stops at the first n whose
    remaining transient mass is <= epsilon.  Every step also evaluates the
    equivalent mass-difference form and the two must agree to 1e-12.

    With truncation the h(n) are certified lower bounds: clipped mass is
    discarded, never reabsorbed.
    """
    if not 0 < epsilon < 1:
        raise ValueError("epsilon must be in (0, 1)")
    psi0 = np.asarray(psi0, dtype=float)
    if psi0.shape != (chain.n_transient + 1,):
        raise ValueError("psi0 must cover the absorbing state plus all transient states")
    initial_deficit = max(1.0 - float(psi0.sum()), 0.0)
    h0 = float(psi0[0])
    phi = psi0[1:]
    mass0 = float(phi.sum())
    if mass0 <= epsilon:
        return ErlangMixture(
            alpha=chain.alpha,
            h=np.array([h0]),
            epsilon=epsilon,
            initial_deficit=initial_deficit,
            clip_deficit=0.0,
            tail_mass=mass0,
        )
    h_flow, h_mass, clip_total, tail, converged = backends.iterate_transient(
        chain.indptr,
        chain.indices,
        chain.probs,
        chain.absorb_p,
        chain.deficit_rate,
        phi,
        float(epsilon),
        int(max_jumps),
    )
    if not converged:
        raise NoConvergence(
            f"transient mass {tail:.3e} still above epsilon={epsilon} after {max_jumps} jumps"
        )
    if np.max(np.abs(h_flow - h_mass), initial=0.0) > H_FORM_TOL:
        raise NumericalFailure("flow-form and mass-difference-form h(n) disagree")
    return ErlangMixture(
        alpha=chain.alpha,
        h=np.concatenate(([h0], h_flow)),
        epsilon=epsilon,
        initial_deficit=initial_deficit,
        clip_deficit=float(clip_total),
        tail_mass=float(tail),
    )
