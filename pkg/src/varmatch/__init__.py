"""Diffeomorphic registration of discrete varifolds by geodesic shooting."""

from .dynamics import (
    ActionModel,
    IntegrationError,
    NormalizedState,
    PushforwardFullState,
    PushforwardReducedState,
    Trajectory,
    apply_action,
    expand_reduced_state,
    forward_rhs,
    hamiltonian,
    initial_state,
    integrate,
    kernel_matrix,
    reduce_full_state,
    state_to_varifold,
    velocity_field,
)
from .fidelity import (
    FidelityConfig,
    grad_fidelity_normalized,
    grad_fidelity_pushforward,
    inner_product,
    pushforward_varifold,
    squared_distance,
)
from .kernels import (
    DeformationKernel,
    OrientationKernel,
    SpatialKernel,
    gamma_derivs,
    h_derivs,
    rho_derivs,
)
from .optimizer import (
    RegistrationProblem,
    RegistrationResult,
    adjoint_gradient,
    energy,
    grad_energy,
    register,
)
from .varifold import (
    Dirac,
    DiscreteVarifold,
    GrayImage,
    PolylineCurve,
    TriangleMesh,
    VarifoldError,
    curve_to_varifold,
    image_to_varifold,
    mesh_to_varifold,
    rigid_transform,
)

__version__ = "0.1.0"
