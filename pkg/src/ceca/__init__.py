"""Finite-time exact consensus and decentralized SGD built on top of it.

The package is organized bottom-up: ``schedule`` derives the per-round
plan from the agent count, ``topology`` builds each round's
communication permutation, ``consensus`` runs the exact averaging
recursions, ``mixing`` builds and verifies the block mixing matrices,
``optimizer`` implements the decentralized SGD step and rate formulas,
``problems`` provides synthetic least-squares objectives, and
``harness`` drives experiments and writes CSV metrics (with ``cli`` as
the command-line front end).
"""

from .consensus import (
    ConsensusState,
    init_state,
    iter_states,
    rounds_csv,
    run_consensus,
    step_1p,
    step_2p,
)
from .harness import (
    ConfigError,
    LsqResult,
    MetricsRow,
    MatrixVerificationReport,
    RunConfig,
    baseline_gossip,
    load_config_file,
    run_consensus_experiment,
    run_lsq_experiment,
    run_matrix_verification,
)
from .mixing import (
    FamilyCheckReport,
    MixingPair,
    build_mixing,
    commutation_check,
    operator_norm,
    product_consensus,
    product_form_first_cycle,
    product_form_stationary,
    semigroup_check,
    verify_family,
)
from .optimizer import (
    OptimizerState,
    RateParams,
    StepCoefficients,
    dsgd_ceca_step,
    init_optimizer,
    initial_global_average,
    rate_bound_terms,
    right_hand_side_bound,
    step_coefficients,
    theorem_rate,
)
from .problems import (
    LeastSquaresProblem,
    desk_preset,
    exact_gradient,
    global_objective,
    global_optimum,
    heterogeneity_estimate,
    make_least_squares,
    paper_preset,
    smoothness_constant,
    stochastic_gradient,
    stochastic_oracle,
)
from .schedule import BinarySchedule, build_schedule, mod_index
from .topology import (
    ONE_PORT,
    TWO_PORT,
    CommMatrix,
    OnePortParityError,
    comm_matrix,
    comm_matrix_1p,
    comm_matrix_2p,
    matrix_csv,
    normalize_mode,
    receive_from,
    recv_sources,
)

__version__ = "0.1.0"
