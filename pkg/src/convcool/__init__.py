"""Bilinear flow control of convection-cooling on the unit square.

The package simulates an advection–diffusion temperature field stirred by a
divergence-free velocity, computes adjoint-based optimal controls for a
variance-reduction cost, and applies an instantaneous feedback law built
from a Stokes solve of the smoothed temperature force.
"""

from .app import (InitialConditionSpec, RunConfig, build_initial_condition,
                  export_metrics, load_manifest, run, validate_manifest,
                  write_manifest)
from .errors import ArtifactIOError, ConfigError, ConvcoolError, SolverError
from .feedback import (ClosedLoopRun, FeedbackConfig, SweepRow,
                       closed_loop_step, feedback_velocity, mix_norm,
                       simulate_closed_loop, tau_sweep)
from .grid import (GridSpec, ScalarField, StaggeredVelocity, TimeGrid, advect,
                   deviation, divergence, face_force, grad_seminorm_sq, inner,
                   laplacian_neumann, mean, norm_l2, prolong,
                   resample_to_nodes, vel_inner, vel_norm_l2)
from .linsolve import HelmholtzOperator, LinearSolveReport, helmholtz_solve
from .objective import (ObjectiveBreakdown, directional_derivative, evaluate,
                        evaluate_nodal, hessian_quadratic_form,
                        node_dev_norm_sq)
from .optimize import (AndersonMemory, ControlProblem, OptimalControlResult,
                       anderson_step, continuation_levels, picard_map,
                       solve_optimal)
from .pde import (ControlTrajectory, Trajectory, adjoint_solve, forward_solve,
                  linearized_solve)
from .stokes import StokesSolution, apply_inverse_stokes, stokes_solve

__version__ = "0.1.0"

__all__ = [
    "ArtifactIOError", "ConfigError", "ConvcoolError", "SolverError",
    "GridSpec", "ScalarField", "StaggeredVelocity", "TimeGrid",
    "advect", "deviation", "divergence", "face_force", "grad_seminorm_sq",
    "inner", "laplacian_neumann", "mean", "norm_l2", "prolong",
    "resample_to_nodes", "vel_inner", "vel_norm_l2",
    "HelmholtzOperator", "LinearSolveReport", "helmholtz_solve",
    "ObjectiveBreakdown", "directional_derivative", "evaluate",
    "evaluate_nodal", "hessian_quadratic_form", "node_dev_norm_sq",
    "ControlTrajectory", "Trajectory", "adjoint_solve", "forward_solve",
    "linearized_solve",
    "StokesSolution", "apply_inverse_stokes", "stokes_solve",
    "AndersonMemory", "ControlProblem", "OptimalControlResult",
    "anderson_step", "continuation_levels", "picard_map", "solve_optimal",
    "ClosedLoopRun", "FeedbackConfig", "SweepRow", "closed_loop_step",
    "feedback_velocity", "mix_norm", "simulate_closed_loop", "tau_sweep",
    "InitialConditionSpec", "RunConfig", "build_initial_condition",
    "export_metrics", "load_manifest", "run", "validate_manifest",
    "write_manifest",
    "__version__",
]
