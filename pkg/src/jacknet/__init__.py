"""Sojourn-time analysis for open Jackson queueing networks.

Exact moments where the network flow equations permit, certified
distribution-function and moment bounds for arbitrary stable networks via
the randomization of the marked-customer chain, and a discrete-event
simulation oracle to cross-validate everything.
"""

from .analysis import UniformizationReport, sojourn_analysis
from .backends import backend_name
from .bounds import CdfBounds, ErlangMixture, cdf_bounds, erlang_cdf, moment_lower_bounds
from .moments import (
    CorrelationVerdict,
    MomentMethod,
    MomentReport,
    ThreeNodeCorrelation,
    feedback_covariance,
    feedback_variance,
    first_moments,
    higher_moments_overtake_free,
    mean_queue_length,
    second_moments_overtake_free,
    tandem_variance,
    three_node_positive_correlation,
)
from .network import (
    NetworkSpec,
    TopologyClass,
    TrafficSolution,
    bernoulli_feedback_network,
    classify_topology,
    load_network,
    node_sojourn_cdf_acyclic,
    parse_network,
    path_sojourn_cdf_independent,
    save_network,
    solve_traffic_equations,
    stationary_probability,
    tandem_network,
    three_node_acyclic_network,
    validate_spec,
)
from .randomization import (
    MarkedGenerator,
    RandomizedChain,
    build_generator,
    compute_h,
    initial_distribution,
    randomize,
)
from .simulate import SimConfig, SimulationResult, SojournSample, simulate
from .statespace import MarkedState, MarkedStateSpace, build_state_space, default_cap
from .stats import correlation, empirical_cdf, empirical_moments

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
