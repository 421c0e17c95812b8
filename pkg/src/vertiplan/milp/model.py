"""Sparse mixed-integer linear model container (minimization only)."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import sparse

CONTINUOUS, BINARY, INTEGER = "C", "B", "I"
LE, GE, EQ = "<=", ">=", "="

Terms = Union[Mapping[int, float], Iterable[Tuple[int, float]]]


class ModelError(ValueError):
    pass


class MilpModel:
    """Variables, linear rows and a linear objective to be minimized.

    Variables and rows are addressed by integer index; names are kept for
    export, diagnostics and warm-start assignments.
    """

    def __init__(self, name: str = "model"):
        self.name = name
        self.var_names: List[str] = []
        self.kinds: List[str] = []
        self.lb: List[float] = []
        self.ub: List[float] = []
        self.obj: List[float] = []
        self.obj_const = 0.0
        self.row_idx: List[np.ndarray] = []
        self.row_val: List[np.ndarray] = []
        self.senses: List[str] = []
        self.rhs: List[float] = []
        self.row_names: List[str] = []
        self._index: Dict[str, int] = {}

    # -- building ---------------------------------------------------------
    @property
    def num_vars(self) -> int:
        return len(self.var_names)

    @property
    def num_rows(self) -> int:
        return len(self.rhs)

    def add_var(self, name: str, kind: str = CONTINUOUS, lb: float = 0.0,
                ub: float = math.inf, obj: float = 0.0) -> int:
        if name in self._index:
            raise ModelError(f"duplicate variable {name!r}")
        if kind == BINARY:
            lb, ub = max(0.0, lb), min(1.0, ub)
        elif kind == INTEGER:
            if not (math.isfinite(lb) and math.isfinite(ub)):
                raise ModelError(f"integer variable {name!r} needs finite bounds")
        elif kind != CONTINUOUS:
            raise ModelError(f"unknown variable kind {kind!r}")
        if lb > ub:
            raise ModelError(f"empty bounds for {name!r}: [{lb}, {ub}]")
        idx = len(self.var_names)
        self._index[name] = idx
        self.var_names.append(name)
        self.kinds.append(kind)
        self.lb.append(float(lb))
        self.ub.append(float(ub))
        self.obj.append(float(obj))
        return idx

    def add_constr(self, terms: Terms, sense: str, rhs: float, name: Optional[str] = None) -> int:
        if sense not in (LE, GE, EQ):
            raise ModelError(f"unknown sense {sense!r}")
        items = terms.items() if isinstance(terms, Mapping) else terms
        merged: Dict[int, float] = {}
        for j, a in items:
            if not 0 <= j < self.num_vars:
                raise ModelError(f"row {name!r} references undeclared variable {j}")
            merged[j] = merged.get(j, 0.0) + float(a)
        idx = np.fromiter(merged.keys(), dtype=np.int64, count=len(merged))
        val = np.fromiter(merged.values(), dtype=float, count=len(merged))
        keep = val != 0.0
        self.row_idx.append(idx[keep])
        self.row_val.append(val[keep])
        self.senses.append(sense)
        self.rhs.append(float(rhs))
        self.row_names.append(name or f"r{len(self.rhs) - 1}")
        return len(self.rhs) - 1

    def set_obj(self, j: int, coef: float) -> None:
        self.obj[j] = float(coef)

    def var(self, name: str) -> int:
        return self._index[name]

    def has_var(self, name: str) -> bool:
        return name in self._index

    def fix(self, j: int, value: float) -> None:
        self.lb[j] = self.ub[j] = float(value)

    def is_integer(self) -> np.ndarray:
        return np.array([k != CONTINUOUS for k in self.kinds], dtype=bool)

    # -- matrix views -----------------------------------------------------
    def matrix(self) -> sparse.csr_matrix:
        indptr = np.zeros(self.num_rows + 1, dtype=np.int64)
        for r, idx in enumerate(self.row_idx):
            indptr[r + 1] = indptr[r] + len(idx)
        indices = np.concatenate(self.row_idx) if self.row_idx else np.zeros(0, dtype=np.int64)
        data = np.concatenate(self.row_val) if self.row_val else np.zeros(0)
        return sparse.csr_matrix((data, indices, indptr), shape=(self.num_rows, self.num_vars))

    def row_bounds(self) -> Tuple[np.ndarray, np.ndarray]:
        rhs = np.array(self.rhs, dtype=float)
        lo = np.full(self.num_rows, -np.inf)
        hi = np.full(self.num_rows, np.inf)
        s = np.array(self.senses)
        le, ge, eq = s == LE, s == GE, s == EQ
        hi[le | eq] = rhs[le | eq]
        lo[ge | eq] = rhs[ge | eq]
        return lo, hi

    # -- evaluation -------------------------------------------------------
    def assignment_vector(self, assignment: Union[Mapping[str, float], Sequence[float]]) -> Tuple[np.ndarray, List[str]]:
        """Dense vector from a name map; missing names are reported."""
        if isinstance(assignment, Mapping):
            v = np.full(self.num_vars, np.nan)
            for name, val in assignment.items():
                j = self._index.get(name)
                if j is not None:
                    v[j] = val
            missing = [self.var_names[j] for j in np.flatnonzero(np.isnan(v))]
            return v, missing
        v = np.asarray(assignment, dtype=float)
        if v.shape != (self.num_vars,):
            raise ModelError(f"assignment has {v.shape} entries, model has {self.num_vars} variables")
        return v, []

    def objective_value(self, values: np.ndarray) -> float:
        return float(np.dot(self.obj, values) + self.obj_const)


@dataclass
class MilpSolution:
    status: str  # optimal | feasible | infeasible | unbounded | no_solution
    values: Optional[np.ndarray]
    objective: float
    dual_bound: float
    nodes: int = 0
    seconds: float = 0.0
    names: Dict[str, int] = field(default_factory=dict, repr=False)

    @property
    def has_solution(self) -> bool:
        return self.values is not None

    def value(self, name: str) -> float:
        return float(self.values[self.names[name]])

    def as_dict(self) -> Dict[str, float]:
        return {n: float(self.values[j]) for n, j in self.names.items()}

    @property
    def gap(self) -> float:
        if not self.has_solution:
            return math.inf
        return abs(self.objective - self.dual_bound) / max(abs(self.objective), 1e-9)


@dataclass
class RowViolation:
    row: str
    amount: float


@dataclass
class WarmStartReport:
    complete: bool
    missing: List[str]
    violations: List[RowViolation]
    bound_violations: List[RowViolation]
    integrality: List[RowViolation]

    @property
    def ok(self) -> bool:
        return self.complete and not (self.violations or self.bound_violations or self.integrality)

    def summary(self, limit: int = 8) -> str:
        if self.ok:
            return "warm start valid"
        parts = []
        if self.missing:
            parts.append(f"{len(self.missing)} unassigned variables, e.g. {self.missing[:limit]}")
        for label, rows in (("rows", self.violations), ("bounds", self.bound_violations),
                            ("integrality", self.integrality)):
            if rows:
                shown = ", ".join(f"{r.row} ({r.amount:.3g})" for r in rows[:limit])
                parts.append(f"{len(rows)} violated {label}: {shown}")
        return "; ".join(parts)


class WarmStartError(ModelError):
    def __init__(self, report: WarmStartReport):
        super().__init__("invalid warm start: " + report.summary())
        self.report = report


def validate_warm_start(model: MilpModel, assignment, tol: float = 1e-6,
                        int_tol: float = 1e-6) -> WarmStartReport:
    """Check an assignment against every row, bound and integrality."""
    if isinstance(assignment, Mapping) and not assignment and model.num_vars:
        return WarmStartReport(False, ["<empty>"], [], [], [])
    v, missing = model.assignment_vector(assignment)
    if missing:
        return WarmStartReport(False, missing, [], [], [])
    act = model.matrix() @ v
    lo, hi = model.row_bounds()
    excess = np.maximum(lo - act, act - hi)
    bad_rows = [RowViolation(model.row_names[r], float(excess[r])) for r in np.flatnonzero(excess > tol)]
    lb, ub = np.array(model.lb), np.array(model.ub)
    bexcess = np.maximum(lb - v, v - ub)
    bad_bounds = [RowViolation(model.var_names[j], float(bexcess[j])) for j in np.flatnonzero(bexcess > tol)]
    ints = model.is_integer()
    frac = np.abs(v - np.round(v))
    bad_int = [RowViolation(model.var_names[j], float(frac[j])) for j in np.flatnonzero(ints & (frac > int_tol))]
    return WarmStartReport(True, [], bad_rows, bad_bounds, bad_int)
