"""Decomposable submodular function minimization.

Level-1 solvers (augmenting-path flow methods and coordinate descent /
alternating projections) built on per-potential level-0 oracles.
"""

from .core import (
    BlockVector,
    CapabilityError,
    CertificateError,
    DecomposableInstance,
    DSFMError,
    FunctionPotential,
    GroundSet,
    InputError,
    ModularPotential,
    OracleExactnessError,
    SolveReport,
    SolverError,
    SubmodularityError,
    SubmodularPotential,
    TablePotential,
    check_base_membership,
    check_submodular,
    evaluate,
    greedy_vertex,
)
from .diagnostics import (
    DiagnosticsContext,
    TransportError,
    check_ell,
    compute_sstar,
    decompose_transport,
    estimate_kappa,
)
from .flow import augment, exchange_capacity, exchange_set, minimal_tight_set, solve_flow_ekd, solve_flow_ibfs
from .gradient import acdm_epoch, rcdm_step, round_and_certify, solve_acdm, solve_ap, solve_rcdm
from .level0 import (
    Level0,
    OraclePolicy,
    OracleRequest,
    brute_force_sfm,
    fujishige_wolfe,
    quad_oracle_from_sfm,
    sfm_from_quad_oracle,
)
from .potentials import (
    EdgeCutPotential,
    MatchingCutPotential,
    RegionPotential,
    SquarePotential,
    UnaryPotential,
    oracle_edge_cut,
    oracle_region,
    oracle_square,
    oracle_unary,
)

__version__ = "0.1.0"
