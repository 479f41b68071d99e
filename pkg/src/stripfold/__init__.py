"""Static stability analysis of fabric strip folding with 2D nonlinear finite elements."""
from .model import (
    MaterialParams,
    StripGeometry,
    StripMesh,
    build_strip_mesh,
    elasticity_matrix,
    material_from_ratios,
)
from .fem import KinematicState
from .constraints import ConstraintSet, GraspConstraint, GripperPath, GroundContact, HoldConstraint
from .system import StripSystem
from .solvers import DynamicOptions, NewtonOptions, integrate_dynamic, smallest_eigenvalue, solve_static
from .continuation import (
    ContinuationOptions,
    EquilibriumRecord,
    InternalFriction,
    critical_sweep,
    locate_critical_point,
    perturb_and_branch,
    trace_path,
)
from .scenarios import Scenario, XTranslation

__version__ = "0.1.0"
