"""Projection-free decentralized optimization over simulated agent networks.

A library + CLI implementing a consensus-based decentralized Frank-Wolfe
(conditional gradient) method with tracked gradient aggregation, sparse and
low-rank linear-minimization oracles, a communication-sparsified variant for
l1-constrained regression, projected-gradient and centralized baselines, and
an experiment harness that verifies convergence rates and consensus-error
certificates at desk scale.
"""

from .network import (
    NetworkModel,
    SpanningTree,
    ac_multi_round,
    ac_round,
    build_spanning_tree,
    gen_complete,
    gen_erdos_renyi,
    gen_path,
    gen_ring,
    lambda2,
    metropolis_weights,
    t0_alpha,
    t0_alpha_ceiling,
)
from .constraints import (
    CoordinateAtom,
    L1Ball,
    RankOneAtom,
    TraceBall,
    duality_gap,
    lo_l1,
    lo_trace,
    project_l1,
    project_trace,
)
from .objectives import (
    LassoAgentData,
    LassoProblem,
    MatrixCompletionProblem,
    McAgentData,
    SmoothnessEstimate,
    estimate_constants,
    lasso_local_eval,
    mc_gauss_local_eval,
    mc_square_local_eval,
)
from .engine import (
    AgentState,
    RateCertificate,
    StepSchedule,
    aggregate_step,
    compute_certificate,
    consensus_step,
    fw_step,
    run_defw,
    step_size,
    rate_bound,
)
from .sparsified import (
    CoordSelection,
    ell_t,
    run_sparsified_defw,
    select_coords,
    sparsified_aggregate,
    xi_t,
)
from .baselines import DpgConfig, centralized_fw, dpg_step, run_dpg
from .metrics import CommLedger, RunMetrics, read_metrics_csv
from .harness import (
    ExperimentConfig,
    RateFit,
    TestSet,
    build_mc_problem,
    fit_rate,
    gen_lasso_instance,
    gen_mc_instance,
    load_config,
    load_movielens,
    mse_test,
    run_experiment,
    worst_case_mse,
)

__version__ = "0.1.0"
