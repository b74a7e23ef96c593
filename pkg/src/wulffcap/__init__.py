"""Anisotropic capacity solver and Wulff-shape rigidity probes in convex cones.

The package evaluates positively homogeneous anisotropies (gauges) and their
duals, meshes truncated exterior regions of convex cones, minimizes the
associated degenerate energy with a damped Newton scheme, and checks the
integral identities that single out Wulff balls among obstacle shapes.
"""

from .gauges import (
    DualGauge,
    DualMaximizationError,
    EllipsoidGauge,
    FluxMap,
    Gauge,
    GaugeError,
    LpGauge,
    TabulatedGauge,
    anisotropic_quadratic,
    duality_roundtrip_residual,
    ellipticity_probe,
    euclidean,
    scaled_euclidean,
    shifted_euclidean,
)
from .geometry import (
    ConvexCone,
    Ellipse,
    EuclideanBall,
    PerturbedWulffBall,
    Region,
    RegionError,
    StarShapedObstacle,
    WulffBall,
    build_region,
    wulff_ball_contains,
)
from .meshing import Mesh, MeshError, load_mesh, mesh_region, save_mesh
from .solver import (
    AsymptoticsFit,
    Field,
    SolveOptions,
    SolveReport,
    SolverError,
    TruncatedProblem,
    comparison_check,
    extract_asymptotics,
    neumann_residual,
    solve_truncated,
)
from .wulff import (
    IsoperimetryResult,
    VolumeDisagreementError,
    anisotropic_perimeter,
    cone_volume,
    isoperimetric_quotient,
    reference_quotient,
    unit_wulff_ball,
)
from .identities import (
    CapacityStats,
    IdentityCheck,
    PohozaevReport,
    RigidityReport,
    boundary_flux,
    c_formula_check,
    capacity_constant,
    pohozaev_check,
    rigidity_probe,
    ring_flux,
    volume_identity_check,
)

__version__ = "0.1.0"
