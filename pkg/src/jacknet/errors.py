"""Exception hierarchy for jacknet.

Every error raised by the library derives from :class:`JacknetError`, split
into three groups: invalid network input, operations applied outside their
domain of validity, and numerical/resource failures.  The CLI maps each group
to a distinct process exit code (see ``jacknet.cli``).
"""


class JacknetError(Exception):
    """Base class for all jacknet errors."""


# --- invalid network input ------------------------------------------------

class InvalidNetwork(JacknetError):
    """The network description violates a structural constraint."""


class NegativeRate(InvalidNetwork):
    """An arrival or service rate is negative (or NaN), or a service rate is zero."""


class RowSumExceedsOne(InvalidNetwork):
    """A routing-matrix row sums to more than one."""


class NoExogenousArrivals(InvalidNetwork):
    """Every exogenous arrival rate is zero; the network is not open."""


class NonInvertibleRouting(InvalidNetwork):
    """Customers never leave: spectral radius of the routing matrix is >= 1."""


class InvalidProbability(InvalidNetwork):
    """A probability parameter lies outside [0, 1)."""


# --- operation preconditions ----------------------------------------------

class NotApplicable(JacknetError):
    """An operation was invoked on a network outside its domain of validity."""


class UnstableNetwork(NotApplicable):
    """Some traffic intensity is >= 1; equilibrium quantities are undefined."""


class NotAcyclic(NotApplicable):
    """The routing digraph contains a directed cycle."""


class NotOvertakeFree(NotApplicable):
    """The moment recursion needs p_jj = 0 and single-path connectivity."""


class NotTandem(NotApplicable):
    """The network is not a simple series of queues."""


class RepeatedNode(NotApplicable):
    """A node occurs more than once where distinct nodes are required."""


class UnreachablePath(NotApplicable):
    """The requested entry node or path has zero probability."""


# --- numerical / resource failures ----------------------------------------

class NumericalFailure(JacknetError):
    """A numerical procedure could not complete."""


class CapTooSmall(NumericalFailure):
    """The queue-length truncation cap is negative."""


class AlphaTooSmall(NumericalFailure):
    """The uniformization rate is below some state's total outflow rate."""


class NoConvergence(NumericalFailure):
    """The jump iteration hit its step cap before draining the transient mass."""


class MaxEventsExceeded(NumericalFailure):
    """The simulation hit its safety cap on processed events."""


class TooFewSamples(NumericalFailure):
    """Not enough samples for the requested statistic."""
