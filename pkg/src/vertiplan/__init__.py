"""Drone and courier hub network design with queueing-aware fleet sizing."""
from .adaptive import BoundsTrace, SolverConfig, feasibility_probe, solve_exact, solve_static
from .generate import GenConfig, default_parameters, generate, generate_feasible
from .instance import Instance, InstanceError, scale_instance
from .model import (FULL, ModelVariant, PlanSolution, check_nonlinear_feasibility, compute_metrics,
                    evaluate_objective, queue_length)

__version__ = "0.1.0"

__all__ = [
    "BoundsTrace", "FULL", "GenConfig", "Instance", "InstanceError", "ModelVariant", "PlanSolution",
    "SolverConfig", "check_nonlinear_feasibility", "compute_metrics", "default_parameters",
    "evaluate_objective", "feasibility_probe", "generate", "generate_feasible", "queue_length",
    "scale_instance", "solve_exact", "solve_static",
]
