"""Dissipativity certification of LTI systems from input-output time series."""

from .lti_core import (
    StateSpace,
    StateTrajectory,
    StateMaps,
    Trajectory,
    controllability_matrix,
    is_controllable,
    is_observable,
    lag,
    load_system,
    model_dissipativity_check,
    observability_matrix,
    random_controllable_system,
    save_system,
    simulate,
    state_reconstruction_maps,
    toeplitz_markov,
)
from .qdf import (
    BehaviorBasis,
    QdfCoeff,
    SupplyRate,
    degree,
    l2gain_supply,
    minimize_coeff,
    nabla,
    nonneg_on_behavior,
    passivity_supply,
    psd_equivalent,
    qdf_eval,
    reduce_degree,
)
from .datamat import (
    ComplexityEstimate,
    HankelMatrix,
    behavior_basis_from_data,
    estimate_complexity,
    hankel,
    numerical_rank,
)
from .sdp import (
    AffineSymMap,
    FeasResult,
    SolveOptions,
    inertia,
    min_eigenvalue,
    solve_psd_feasibility,
)
from .certifier import (
    Certificate,
    CertifyOptions,
    Permutation,
    PriorKnowledge,
    Report,
    build_dissipativity_lmi,
    build_permutation,
    certify,
    necessity_applicable,
    storage_to_state,
    verify_certificate_on_model,
)

__version__ = "0.1.0"
