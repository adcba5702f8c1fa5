"""Forward solver and verification harness for conductivity inclusions with
high-curvature interface points."""

from .geometry import InterfaceSpec, Mesh, check_admissibility, generate_mesh, refine_mesh
from .fem import FemSolution, solve_dirichlet, solve_neumann_problem, max_gradient
from .analysis import CircleOracle, CgoParams, circle_exact_solution, decay_bound, make_cgo
from .experiment import SweepRecord, fit_loglog, run_sweep

__all__ = [
    "InterfaceSpec", "Mesh", "check_admissibility", "generate_mesh", "refine_mesh",
    "FemSolution", "solve_dirichlet", "solve_neumann_problem", "max_gradient",
    "CircleOracle", "CgoParams", "circle_exact_solution", "decay_bound", "make_cgo",
    "SweepRecord", "fit_loglog", "run_sweep",
]
__version__ = "0.1.0"
