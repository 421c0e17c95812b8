"""Mixed-integer linear programming layer: model container, solver backends,
warm-start validation and LP-format export."""
from __future__ import annotations

from typing import Optional

from .bnb import BranchAndBound
from .highs_mip import HighsMip
from .lpformat import to_lp_string, write_lp
from .lpkernel import NumericalFailure
from .model import (BINARY, CONTINUOUS, EQ, GE, INTEGER, LE, MilpModel, MilpSolution, ModelError,
                    RowViolation, WarmStartError, WarmStartReport, validate_warm_start)

BACKENDS = {"bnb": BranchAndBound, "highs": HighsMip}


def get_backend(name: str = "bnb", **options):
    try:
        return BACKENDS[name](**options)
    except KeyError:
        raise ValueError(f"unknown MILP backend {name!r}; choose from {sorted(BACKENDS)}") from None


def solve(model: MilpModel, time_limit_s: Optional[float] = None, warm_start=None,
          backend: str = "bnb", **options) -> MilpSolution:
    """Minimize ``model``; an invalid warm start raises WarmStartError."""
    return get_backend(backend, **options).solve(model, time_limit_s, warm_start)


__all__ = [
    "BACKENDS", "BINARY", "BranchAndBound", "CONTINUOUS", "EQ", "GE", "HighsMip", "INTEGER", "LE",
    "MilpModel", "MilpSolution", "ModelError", "NumericalFailure", "RowViolation", "WarmStartError",
    "WarmStartReport", "get_backend", "solve", "to_lp_string", "validate_warm_start", "write_lp",
]
