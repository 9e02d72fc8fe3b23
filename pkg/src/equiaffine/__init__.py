"""Projectively equivalent equiaffine connections on a coordinate chart."""

from .curvature import equiaffinity_report, ricci, riemann
from .expr import DomainError, ParseError, differentiate, eval_jet1, eval_jet2, evaluate, parse
from .geodesic import GeodesicProblem, collinearity_defect, integrate, unparametrized_distance
from .geometry import (
    Chart,
    ConnectionField,
    MetricField,
    OneFormField,
    covariant_derivative_oneform,
    levi_civita,
    metric_inverse,
    sample_points,
)
from .projective import (
    apply_projective,
    equiaffinize,
    psi_deformation,
    trace_one_form,
    verify_curvature_relation,
    verify_ricci_relation,
)

__version__ = "0.1.0"
