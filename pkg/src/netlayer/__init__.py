"""Convection-diffusion on metric graphs, its transport limit and the
boundary-layer convergence study."""

from .asymptotics import (
    ErrorTracker,
    GridPolicy,
    LayerField,
    MeshPolicy,
    RateReport,
    composite_error,
    fit_slope,
    layer_field,
    rate_study,
)
from .cdsolve import DiscreteOperator, SolverError, apply_operator, assemble_cd, steady_solve
from .fields import BoundaryData, DataError, DiscreteField, InitialData, Table
from .graph import (
    Edge,
    GraphError,
    MetricGraph,
    build_graph,
    classify_vertices,
    require_admissible,
    validate_flow_conservation,
)
from .mesh import EdgeMesh, MeshError, NetworkMesh, shishkin_mesh, uniform_mesh
from .timeloop import TimeGrid, Trajectory, integrate_cd
from .transport import (
    CFLError,
    ExactTransport,
    MixingRule,
    UpwindTransport,
    exact_transport,
    integrate_transport,
    junction_dissipation,
    mixing_values,
    transport_step_upwind,
)

__version__ = "0.1.0"

__all__ = [
    "BoundaryData",
    "CFLError",
    "DataError",
    "DiscreteField",
    "DiscreteOperator",
    "Edge",
    "EdgeMesh",
    "ErrorTracker",
    "ExactTransport",
    "GraphError",
    "GridPolicy",
    "InitialData",
    "LayerField",
    "MeshError",
    "MeshPolicy",
    "MetricGraph",
    "MixingRule",
    "NetworkMesh",
    "RateReport",
    "SolverError",
    "Table",
    "TimeGrid",
    "Trajectory",
    "UpwindTransport",
    "apply_operator",
    "assemble_cd",
    "build_graph",
    "classify_vertices",
    "composite_error",
    "exact_transport",
    "fit_slope",
    "integrate_cd",
    "integrate_transport",
    "junction_dissipation",
    "layer_field",
    "mixing_values",
    "rate_study",
    "require_admissible",
    "shishkin_mesh",
    "steady_solve",
    "transport_step_upwind",
    "uniform_mesh",
    "validate_flow_conservation",
]
