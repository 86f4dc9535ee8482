"""Statistics over tagged-customer samples.

Tagged customers of one run are weakly dependent, so standard errors use
batch means (default 100 batches) instead of i.i.d. formulas.  The
empirical CDF carries a Dvoretzky-Kiefer-Wolfowitz simultaneous band.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import TooFewSamples
from .simulate import SimulationResult

DEFAULT_BATCHES = 100


@dataclass(frozen=True)
class MomentEstimate:
    """Sample mean and variance of S^order with batch-means standard errors."""

    order: int
    n: int
    mean: float
    mean_se: float
    variance: float
    variance_se: float


@dataclass(frozen=True)
class CorrelationEstimate:
    """Pearson correlation with a Fisher-z 95% confidence interval."""

    r: float
    lo: float
    hi: float
    n: int


def _batches(x: np.ndarray, n_batches: int) -> np.ndarray:
    n_batches = max(2, min(n_batches, len(x) // 2))
    size = len(x) // n_batches
    return x[: n_batches * size].reshape(n_batches, size)


def empirical_moments(totals, order: int = 1, n_batches: int = DEFAULT_BATCHES) -> MomentEstimate:
    """Mean and variance of S^order with batch-means standard errors.

    ``totals`` is the array of sampled sojourn times (or a
    :class:`SimulationResult`), in simulation order; contiguous batching
    relies on that ordering.
    """
    if isinstance(totals, SimulationResult):
        totals = totals.totals
    x = np.asarray(totals, dtype=float) ** order
    if len(x) < 2:
        raise TooFewSamples(f"need at least 2 samples, got {len(x)}")
    b = _batches(x, n_batches)
    nb = b.shape[0]
    batch_means = b.mean(axis=1)
    mean_se = float(np.std(batch_means, ddof=1) / math.sqrt(nb))
    if b.shape[1] >= 2:
        batch_vars = b.var(axis=1, ddof=1)
        var_se = float(np.std(batch_vars, ddof=1) / math.sqrt(nb))
    else:
        var_se = float("nan")
    return MomentEstimate(
        order=order,
        n=len(x),
        mean=float(x.mean()),
        mean_se=mean_se,
        variance=float(x.var(ddof=1)),
        variance_se=var_se,
    )


def empirical_cdf(totals, grid, confidence: float = 0.99) -> tuple[np.ndarray, float]:
    """Empirical CDF on the grid plus the DKW simultaneous band half-width.

    Half-width: sqrt(ln(2/(1-confidence)) / (2n)).
    """
    if isinstance(totals, SimulationResult):
        totals = totals.totals
    x = np.sort(np.asarray(totals, dtype=float))
    if len(x) < 1:
        raise TooFewSamples("need at least 1 sample")
    grid = np.asarray(grid, dtype=float)
    values = np.searchsorted(x, grid, side="right") / len(x)
    half_width = math.sqrt(math.log(2.0 / (1.0 - confidence)) / (2.0 * len(x)))
    return values, half_width


def correlation(result: SimulationResult, node_a: int, node_b: int) -> CorrelationEstimate:
    """Pearson correlation of the sojourns at two nodes across samples.

    Requires a path filter (or any run whose every retained sample visits
    both nodes); uses the first visit to each node.
    """
    sa = result.sojourns_at(node_a)
    sb = result.sojourns_at(node_b)
    n = len(sa)
    if n < 4:
        raise TooFewSamples(f"need at least 4 samples for a Fisher interval, got {n}")
    r = float(np.corrcoef(sa, sb)[0, 1])
    z = math.atanh(max(min(r, 1 - 1e-15), -1 + 1e-15))
    half = 1.959963984540054 / math.sqrt(n - 3)
    return CorrelationEstimate(r=r, lo=math.tanh(z - half), hi=math.tanh(z + half), n=n)
