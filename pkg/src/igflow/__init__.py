"""Gradient flows on dually flat statistical manifolds, their geodesic and
optical reformulations, and a suite of numerical invariant checks."""

from .core import (
    CoordVector,
    ModelDescriptor,
    check_metric,
    coord_map,
    dual_chart,
    fd_gradient_check,
    legendre_residual,
    metric_at,
    metric_duality_residual,
)
from .dynamics import (
    FlowSample,
    HamiltonianSpec,
    Trajectory,
    consistency_residual,
    geodesic_flow,
    gradient_flow,
    hamiltonian_flow,
    hamiltonian_value,
    ig_geodesic_spec,
    ig_natural_spec,
    integrability_products,
    jm_transform,
    linear_flow,
    linear_flow_closed_form,
    natural_flow_t,
    read_csv,
    reparametrize,
)
from .errors import (
    DomainError,
    DomainExit,
    GridMismatch,
    IdentifiabilityError,
    IGFlowError,
    ModelMismatch,
    NonFinite,
    NonMonotone,
    SingularMetric,
    StepLimit,
    TimeMapUndefined,
    TooFewSamples,
    TurningPointError,
    UnknownModel,
)
from .integrate import IntegratorConfig, integrate
from .models import (
    FiniteExpFamily,
    finite_exp_family,
    gamma_model,
    gamma_params_of_eta,
    gaussian_model,
    get_model,
    load_finite_family,
    refractive_index,
)
from .optics import (
    RayState,
    RefractiveField,
    anisotropic_field,
    eikonal_residual,
    field_from_dict,
    homogeneous_field,
    huygens_residual,
    jm_hamiltonian_values,
    linear_field,
    load_field,
    normalize_momentum,
    radial_field,
    ray_conservation_check,
    ray_trace,
)
from .replicator import ProbabilityVector, equivalence_residual, replicator_rhs, simulate_replicator
from .special import digamma, polygamma, tetragamma, trigamma
from .verify import CheckReport, inject_fault, run_suite, second_set_gaussian_check, time_map_check

__version__ = "0.1.0"
