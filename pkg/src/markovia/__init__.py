"""Numerical toolkit for multipartite quantum Markov states.

Construct, certify, and decompose weak/strong Markov states; reduce
localized system-environment dynamics to local subdynamics; and simulate
classical-environment entanglement sudden death and revival.
"""

from .errors import InvariantError, LayoutError, MarkoviaError
from .states import (
    MultipartiteState,
    Spectrum,
    SubsystemLayout,
    bell_state,
    conditional_mutual_information,
    eig_hermitian,
    ghz_state,
    maximally_mixed,
    mutual_information,
    partial_trace,
    permute_parts,
    pure_state,
    tensor_product,
    von_neumann_entropy,
)
from .measures import concurrence, negativity, one_norm_distance, partial_transpose
from .channels import (
    KrausChannel,
    StinespringDilation,
    ad_unitary,
    append_state_channel,
    apply,
    choi_matrix,
    compose,
    depolarizing_channel,
    direct_sum_channel,
    identity_channel,
    is_completely_positive,
    reduce_localized_dynamics,
    replace_with_state_channel,
    stinespring,
    trace_out_channel,
)
from .markov import (
    BlockSpec,
    DecompositionFailure,
    MarkovDecomposition,
    MarkovReport,
    check_sm_replacement,
    construct_sm_state,
    construct_tripartite_markov,
    find_markov_decomposition,
    phi_channels,
    reconstruct,
    recovery_channels,
    tripartite_decomposition,
    verify_decomposition,
    wm_certificate,
)
from .revival import (
    RandomUnitaryScenario,
    RevivalInterval,
    TimeRow,
    TimeSeries,
    branch_states,
    build_joint,
    classicality_check,
    dephasing_bell_scenario,
    detect_revivals,
    evolve_joint,
    evolve_system,
    hidden_entanglement,
    run_scenario,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
