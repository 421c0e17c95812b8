"""Export to the CPLEX-style LP text format."""
from __future__ import annotations

import math
import re
from pathlib import Path

from .model import BINARY, EQ, GE, INTEGER, LE, MilpModel

_BAD = re.compile(r"[^A-Za-z0-9_.{}!\"#$%&()/,;?@'`|~]")
_BRACKETS = str.maketrans("[]", "()")  # square brackets are reserved for quadratic terms
_LINE = 510


def _clean(name: str) -> str:
    s = _BAD.sub("_", name.translate(_BRACKETS))
    if not s or s[0].isdigit() or s[0] in ".eE":
        s = "_" + s
    return s


def _fmt(a: float) -> str:
    return repr(float(a))


def _expr(pairs, names) -> list:
    out = []
    for j, a in pairs:
        if a == 0:
            continue
        sign = "-" if a < 0 else "+"
        out.append(f"{sign} {_fmt(abs(a))} {names[j]}")
    if not out:
        out.append(f"0 {names[0]}" if names else "0")
    return out


def _wrap(head: str, tokens: list) -> str:
    lines, cur = [], head
    for t in tokens:
        if len(cur) + len(t) + 1 > _LINE:
            lines.append(cur)
            cur = "   "
        cur += " " + t
    lines.append(cur)
    return "\n".join(lines)


def to_lp_string(model: MilpModel) -> str:
    names = [_clean(n) for n in model.var_names]
    seen = {}
    for k, n in enumerate(names):
        if n in seen:
            names[k] = f"{n}_{k}"
        seen[names[k]] = k
    parts = [f"\\ Problem: {model.name}", "Minimize"]
    obj = [(j, a) for j, a in enumerate(model.obj) if a]
    tokens = _expr(obj, names)
    if model.obj_const:
        tokens.append(f"{'+' if model.obj_const >= 0 else '-'} {_fmt(abs(model.obj_const))}")
    parts.append(_wrap(" obj:", tokens))
    parts.append("Subject To")
    op = {LE: "<=", GE: ">=", EQ: "="}
    for r in range(model.num_rows):
        pairs = zip(model.row_idx[r].tolist(), model.row_val[r].tolist())
        tokens = _expr(pairs, names) + [op[model.senses[r]], _fmt(model.rhs[r])]
        parts.append(_wrap(f" {_clean(model.row_names[r])}_{r}:", tokens))
    parts.append("Bounds")
    for j in range(model.num_vars):
        lb, ub = model.lb[j], model.ub[j]
        if model.kinds[j] == BINARY and lb == 0 and ub == 1:
            continue
        lo = "-inf" if lb == -math.inf else _fmt(lb)
        hi = "+inf" if ub == math.inf else _fmt(ub)
        if lb == ub:
            parts.append(f" {names[j]} = {_fmt(lb)}")
        else:
            parts.append(f" {lo} <= {names[j]} <= {hi}")
    gens = [names[j] for j in range(model.num_vars) if model.kinds[j] == INTEGER]
    bins = [names[j] for j in range(model.num_vars) if model.kinds[j] == BINARY]
    if gens:
        parts.append("Generals")
        parts.append(_wrap("", gens))
    if bins:
        parts.append("Binaries")
        parts.append(_wrap("", bins))
    parts.append("End")
    return "\n".join(parts) + "\n"


def write_lp(model: MilpModel, path) -> None:
    Path(path).write_text(to_lp_string(model), encoding="utf-8")
