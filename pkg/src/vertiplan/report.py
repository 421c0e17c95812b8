"""Aggregate run outputs into summary tables and figures."""
from __future__ import annotations

import csv
import io
import math
import re
from collections import defaultdict
from pathlib import Path
from typing import Dict, Iterable, List, Sequence, Tuple

from .adaptive import TRACE_HEADER, BoundsTrace
from .benchmarks import CSV_HEADER as MODE_HEADER

BOUNDS_HEADER = ("group", "instances", "mean_ub", "mean_gap", "mean_cpu_s", "mean_iterations")
MODES_TABLE_HEADER = ("mode", "Q", "instances", "mean_cost_cny", "mean_lead_min")

_SEED = re.compile(r"-s\d+$")


def instance_group(path) -> str:
    """``gen-20-8-4-s7.trace.csv`` -> ``gen-20-8-4``; matheuristic traces
    (``*.mh.trace.csv``) form their own group."""
    name = Path(path).name
    group = _SEED.sub("", name.split(".")[0])
    return group + "/mh" if ".mh." in name else group


def _header(path) -> Tuple[str, ...]:
    with open(path, encoding="utf-8") as fh:
        return tuple(next(csv.reader(fh), ()))


def classify(path) -> str:
    h = _header(path)
    if h == TRACE_HEADER:
        return "trace"
    if h == MODE_HEADER:
        return "modes"
    return "unknown"


def _mean(vals: List[float]) -> float:
    vals = [v for v in vals if math.isfinite(v)]
    return sum(vals) / len(vals) if vals else math.nan


def _fmt(v: float) -> str:
    return "" if not math.isfinite(v) else f"{v:.6g}"


def bounds_table(trace_paths: Iterable) -> List[Tuple]:
    """One row per instance group: mean final UB, gap, CPU seconds, iterations."""
    groups: Dict[str, List[BoundsTrace]] = defaultdict(list)
    for p in trace_paths:
        groups[instance_group(p)].append(BoundsTrace.read_csv(p))
    rows = []
    for g in sorted(groups):
        ts = [t for t in groups[g] if t.records]
        rows.append((g, len(ts),
                     _mean([t.ub for t in ts]),
                     _mean([t.gap for t in ts]),
                     _mean([t.records[-1].seconds for t in ts]),
                     _mean([float(t.records[-1].iteration) for t in ts])))
    return rows


def read_modes(path) -> List[dict]:
    with open(path, encoding="utf-8") as fh:
        out = []
        for r in csv.DictReader(fh):
            out.append({"mode": r["mode"], "Q": float(r["Q"]),
                        "cost": float(r["mean_cost_cny"]) if r["mean_cost_cny"] else math.nan,
                        "lead": float(r["mean_lead_min"]) if r["mean_lead_min"] else math.nan,
                        "status": r["status"]})
        return out


def mode_table(mode_paths: Iterable) -> List[Tuple]:
    cells: Dict[Tuple[str, float], List[dict]] = defaultdict(list)
    for p in mode_paths:
        for r in read_modes(p):
            cells[r["mode"], r["Q"]].append(r)
    rows = []
    for (mode, Q) in sorted(cells, key=lambda k: (k[1], k[0])):
        rs = cells[mode, Q]
        rows.append((mode, Q, len(rs), _mean([r["cost"] for r in rs]), _mean([r["lead"] for r in rs])))
    return rows


def rows_to_csv(header: Sequence[str], rows: Iterable[Tuple]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(v) if isinstance(v, float) else v for v in r])
    return buf.getvalue()


# ---------------------------------------------------------------------------
# figures
# ---------------------------------------------------------------------------

def _pyplot():
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    return plt


def plot_convergence(trace_paths: Sequence, path) -> None:
    """UB and LB per iteration, one line pair per trace."""
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(6, 4))
    for p in trace_paths:
        t = BoundsTrace.read_csv(p)
        last: Dict[int, Tuple[float, float]] = {}
        for r in t.records:
            last[r.iteration] = (r.ub, r.lb)
        its = sorted(last)
        ub = [last[k][0] for k in its]
        lb = [last[k][1] if math.isfinite(last[k][1]) else math.nan for k in its]
        line, = ax.plot(its, ub, marker="o", label=f"{Path(p).name.split('.')[0]} UB")
        ax.plot(its, lb, marker="s", linestyle="--", color=line.get_color())
    ax.set_xlabel("iteration")
    ax.set_ylabel("daily cost (CNY)")
    ax.set_title("bounds by iteration (solid UB, dashed LB)")
    if len(trace_paths) <= 8:
        ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_cost_lead(mode_paths: Sequence, path) -> None:
    """Mean cost against mean lead time, one marker per mode and pooling size."""
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(6, 4))
    markers = {"D2D-C": "o", "H&S-C": "s", "H&S-D&C": "^"}
    for mode, Q, _, cost, lead in mode_table(mode_paths):
        if math.isfinite(cost) and math.isfinite(lead):
            ax.scatter(lead, cost, marker=markers.get(mode, "x"), label=f"{mode} Q={Q:g}")
    ax.set_xlabel("mean lead time (min)")
    ax.set_ylabel("mean operating cost (CNY/kg)")
    ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def build_report(paths: Sequence, out_dir) -> Dict[str, Path]:
    """Write whichever tables and figures the inputs support."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    traces = [p for p in paths if classify(p) == "trace"]
    modes = [p for p in paths if classify(p) == "modes"]
    unknown = [p for p in paths if p not in traces and p not in modes]
    if unknown:
        raise ValueError(f"unrecognized CSV layout: {', '.join(map(str, unknown))}")
    written: Dict[str, Path] = {}
    if traces:
        written["bounds_table"] = out / "bounds_table.csv"
        written["bounds_table"].write_text(rows_to_csv(BOUNDS_HEADER, bounds_table(traces)), encoding="utf-8")
        written["convergence"] = out / "convergence.png"
        plot_convergence(traces, written["convergence"])
    if modes:
        written["mode_table"] = out / "mode_table.csv"
        written["mode_table"].write_text(rows_to_csv(MODES_TABLE_HEADER, mode_table(modes)), encoding="utf-8")
        written["cost_lead"] = out / "cost_lead.png"
        plot_cost_lead(modes, written["cost_lead"])
    return written
