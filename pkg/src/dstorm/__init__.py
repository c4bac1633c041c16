"""dstorm: decentralized stochastic optimization simulator.

Accelerated gossip-based stochastic gradient methods over static and
time-varying communication graphs, with consensus subroutines, a run
planner, built-in problem instances, and an experiment harness.
"""

from .agd import (
    AgdState,
    CoefficientSchedule,
    NonFiniteGradientError,
    a_lower_bound,
    agd_step,
    next_alpha,
    run_agd,
    theoretical_bound,
)
from .consensus import (
    ConsensusReport,
    chebyshev_consensus,
    consensus_error_sq,
    mix_round,
    run_consensus,
)
from .decentralized import (
    DecState,
    MetricRow,
    PlanError,
    RunPlan,
    RunRecord,
    dec_step,
    dsgd_step,
    plan_run,
    run,
    run_dsagd,
    run_dsgd,
)
from .oracle import (
    NodeOracle,
    OracleError,
    ProblemConstants,
    RngStream,
    batched_gradient,
    delta_from_delta_prime,
    inexact_oracle_eval,
    node_streams,
    stacked_batched_gradient,
)
from .problems import (
    Dataset,
    LogisticInstance,
    QuadraticInstance,
    gen_quadratic,
    logistic_oracle,
    make_logistic_instance,
    parse_libsvm,
    partition,
    quadratic_oracle,
    synthetic_classification,
)
from .topology import (
    ContractionCertificate,
    Graph,
    GraphSchedule,
    MixingMatrix,
    NonContractingScheduleError,
    RadiusTooSmallError,
    TopologyError,
    contraction_certificate,
    graph_from_edge_list,
    graph_to_edge_list,
    metropolis_weights,
    random_geometric_graph,
    second_eigenvalue,
    static_schedule,
    tau_connected_schedule,
    validate_mixing,
)

__version__ = "0.1.0"
