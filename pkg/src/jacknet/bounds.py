"""Erlang mixtures and the certified CDF / moment bounds built from them.

The first-passage law of the randomized jump chain is a mixture
sum_n h(n) * Erlang(n, alpha).  Truncating the mixture at k jumps gives a
lower CDF bound L_k(t); adding the unaccounted mass 1 - sum_{n<=k} h(n)
gives the upper bound U_k(t).  The truncated rising-factorial sums give
moment lower bounds for every order.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammainc

#: Above this value of alpha*t the upward Poisson recurrence underflows at
#: the first weight exp(-alpha*t); switch to the regularized incomplete gamma.
_RECURRENCE_LIMIT = 700.0


def erlang_cdf(n: int, alpha: float, t):
    """Erlang(n, alpha) distribution function.

    E_{n,alpha}(t) = 1 - sum_{i=0}^{n-1} e^{-alpha t} (alpha t)^i / i!,
    with the empty-sum convention E_0 = 1 (zero stages: already done).
    Computed by the stable upward Poisson-weight recurrence
    w_0 = e^{-x}, w_{i+1} = w_i * x / (i+1).

    ``t`` may be a scalar or an array.
    """
    if n < 0:
        raise ValueError("stage count must be >= 0")
    if alpha <= 0:
        raise ValueError("rate must be positive")
    t_arr = np.atleast_1d(np.asarray(t, dtype=float))
    if np.any(t_arr < 0):
        raise ValueError("time must be >= 0")
    if n == 0:
        out = np.ones_like(t_arr)
    else:
        x = alpha * t_arr
        out = np.empty_like(x)
        small = x <= _RECURRENCE_LIMIT
        xs = x[small]
        w = np.exp(-xs)
        acc = w.copy()
        for i in range(1, n):
            w = w * xs / i
            acc += w
        out[small] = 1.0 - acc
        out[~small] = gammainc(n, x[~small])
    return float(out[0]) if np.ndim(t) == 0 else out


def erlang_cdf_table(kmax: int, alpha: float, grid: np.ndarray) -> np.ndarray:
    """Matrix of E_{n,alpha}(t) for n = 0..kmax over the grid.

    Shares the Poisson weights across all n: column n is
    1 - cumsum(weights)[n-1].
    """
    x = alpha * np.asarray(grid, dtype=float)
    T = len(x)
    table = np.ones((T, kmax + 1))
    if kmax == 0:
        return table
    small = x <= _RECURRENCE_LIMIT
    xs = x[small]
    if xs.size:
        # weights[i] = e^{-x} x^i / i! via cumulative products
        factors = xs[:, None] / np.arange(1, kmax)[None, :] if kmax > 1 else np.empty((len(xs), 0))
        weights = np.empty((len(xs), kmax))
        weights[:, 0] = np.exp(-xs)
        if kmax > 1:
            weights[:, 1:] = weights[:, :1] * np.cumprod(factors, axis=1)
        table[small, 1:] = 1.0 - np.cumsum(weights, axis=1)
    if np.any(~small):
        ns = np.arange(1, kmax + 1)
        table[np.ix_(~small, ns)] = gammainc(ns[None, :], x[~small, None])
    return np.clip(table, 0.0, 1.0)


@dataclass(frozen=True, eq=False)
class ErlangMixture:
    """Jump-count absorption probabilities of the randomized chain.

    ``h[n]`` is the probability that the marked customer leaves the network
    at the n-th jump, computed up to the stopping index k = len(h)-1.  The
    missing mass 1 - sum(h) splits into three tracked deficits: probability
    outside the initial truncation box, probability clipped at the cap
    during the iteration, and transient mass left when the stopping rule
    fired.  With truncation the h(n) are certified lower bounds.
    """

    alpha: float
    h: np.ndarray
    epsilon: float
    initial_deficit: float = 0.0
    clip_deficit: float = 0.0
    tail_mass: float = 0.0

    def __post_init__(self):
        h = np.asarray(self.h, dtype=float)
        h.flags.writeable = False
        object.__setattr__(self, "h", h)

    @property
    def k(self) -> int:
        return len(self.h) - 1

    @property
    def captured(self) -> float:
        return float(self.h.sum())

    @property
    def deficit(self) -> float:
        """Total unaccounted probability mass, 1 - sum(h)."""
        return 1.0 - self.captured

    @property
    def truncation_deficit(self) -> float:
        """Mass lost to the queue-length cap (initial box + clipping)."""
        return self.initial_deficit + self.clip_deficit


@dataclass(frozen=True, eq=False)
class CdfBounds:
    """Pointwise lower/upper bounds for the sojourn-time CDF on a grid."""

    grid: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    epsilon: float

    def __post_init__(self):
        for name in ("grid", "lower", "upper"):
            a = np.asarray(getattr(self, name), dtype=float)
            a.flags.writeable = False
            object.__setattr__(self, name, a)

    @property
    def width(self) -> np.ndarray:
        return self.upper - self.lower


def cdf_bounds(mixture: ErlangMixture, grid) -> CdfBounds:
    """Certified CDF bounds L_k(t) <= tau(t) <= U_k(t) on the grid.

    L_k(t) = sum_{n<=k} h(n) E_{n,alpha}(t); U_k(t) = L_k(t) + (1 - sum h),
    which is the complementary-Erlang upper bound with the truncation loss
    folded into the additive deficit.  The width U - L is constant in t.
    """
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or np.any(np.diff(grid) < 0) or np.any(grid < 0):
        raise ValueError("grid must be a sorted 1-d array of nonnegative times")
    table = erlang_cdf_table(mixture.k, mixture.alpha, grid)
    lower = table @ mixture.h
    upper = lower + mixture.deficit
    return CdfBounds(
        grid=grid,
        lower=np.clip(lower, 0.0, 1.0),
        upper=np.clip(upper, 0.0, 1.0),
        epsilon=mixture.epsilon,
    )


def moment_lower_bounds(mixture: ErlangMixture, m: int) -> float:
    """Truncated rising-factorial moment bound.

    (1/alpha^m) * sum_{n<=k} n (n+1) ... (n+m-1) h(n), a certified lower
    bound for E[T^m], nondecreasing in k.  For m = 1 this is exactly
    (1/alpha) * sum n h(n), the Little-type identity E[T] = E[H]/alpha in
    truncated form.
    """
    if m < 1:
        raise ValueError("moment order must be >= 1")
    n = np.arange(len(mixture.h), dtype=float)
    rising = np.ones_like(n)
    for i in range(m):
        rising *= n + i
    return float(np.sum(rising * mixture.h) / mixture.alpha**m)
