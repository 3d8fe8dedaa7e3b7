"""Bexcitonic hierarchical equations of motion for open quantum systems."""

from .bath import (
    BathSpec,
    Brownian,
    DrudeLorentz,
    FeatureSet,
    ParameterError,
    QuadratureError,
    bcf_eval,
    bcf_quadrature,
    bose_poles,
    features_for,
    validate_features,
)
from .eom import (
    DivergenceError,
    Dynamics,
    ExtendedState,
    PropagationConfig,
    StructureError,
    SystemSpec,
    UnsupportedConfiguration,
    init_state,
    propagate,
    rhs_number,
    rhs_position,
    stability_monitor,
    step,
)
from .observables import (
    Trajectory,
    bexciton_density_map,
    bexciton_population,
    extract_rho_S,
    inner,
    purity,
)
from .space import DvrBasis, HierarchySpace, MetricSpec, dvr_build, enumerate_indices, flat_offset

__version__ = "0.1.0"
