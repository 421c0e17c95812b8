"""Shared fixture builders for the test suite."""
from __future__ import annotations

import functools
from typing import Dict, List, Tuple

from vertiplan.adaptive import feasibility_probe
from vertiplan.generate import DroneParameters, generate_feasible, medium_config, tiny_config
from vertiplan.instance import Instance, euclidean
from vertiplan.model import flight_time_from_distance


def make_instance(points: Dict[str, Tuple[float, float]], candidates: Dict[str, Tuple[float, float]],
                  demand: Dict[Tuple[str, str], float], **kw) -> Instance:
    """Hand-built instance with generator-style costs on explicit coordinates."""
    p = DroneParameters()
    cd, ct, cc = {}, {}, {}
    for r, pr in points.items():
        for i, pc in candidates.items():
            d = euclidean(pr, pc) * p.detour
            cd[r, i], ct[r, i], cc[r, i] = d, d * 1000 / p.courier_mps / 60, p.courier_fare * d * 720
    fd, ft, fc = {}, {}, {}
    for i, a in candidates.items():
        for j, b in candidates.items():
            d = euclidean(a, b)
            fd[i, j], ft[i, j], fc[i, j] = d, flight_time_from_distance(d, p.cruise_mps), p.flight_cost_per_trip(d) * 720
    base = dict(demand_points=points, candidates=candidates, demand=demand, courier_dist=cd, flight_dist=fd,
                max_vertiports=2, apron_options=(2, 4, 6), market_share=0.2, pooling_size=1.0,
                payload_capacity=12.0, service_range_km=5.0, flight_range_km=15.0, flight_time=ft,
                courier_time=ct, drone_daily_cost=p.daily_cost, flight_cost=fc, courier_cost=cc,
                operating_minutes=720.0, name="handmade")
    base.update(kw)
    return Instance(**base)


def two_hub_instance(**kw) -> Instance:
    """Two demand clusters 8 km apart, one candidate in each."""
    pts = {"a": (0.0, 0.0), "b": (0.5, 0.0), "c": (8.0, 0.0), "d": (8.5, 0.0)}
    cands = {"h1": (0.2, 0.0), "h2": (8.2, 0.0)}
    dem = {("a", "c"): 0.05, ("b", "d"): 0.03, ("c", "a"): 0.02}
    return make_instance(pts, cands, dem, **kw)


@functools.lru_cache(maxsize=None)
def _probed(kind: str, k: int) -> Instance:
    cfg = tiny_config(100 * k) if kind == "tiny" else medium_config(100 * k)
    return generate_feasible(cfg)


@functools.lru_cache(maxsize=None)
def fixtures(kind: str, n: int) -> List[Instance]:
    """The first ``n`` generated instances of a size class whose conservative
    model on the initial grid is feasible."""
    out, seen, k = [], set(), 0
    while len(out) < n:
        inst = _probed(kind, k)
        k += 1
        if inst.name in seen:
            continue
        seen.add(inst.name)
        if feasibility_probe(inst) == "feasible":
            out.append(inst)
        if k > 40 * n:
            raise RuntimeError(f"could not find {n} feasible {kind} fixtures")
    return out


def random_small_milp(seed: int, max_binaries: int = 12):
    """Random bounded model: up to ``max_binaries`` binaries, a few bounded
    continuous columns and mixed-sense rows.  Most draws are built around a
    hidden feasible point; about one in eight has free right-hand sides and
    is often infeasible."""
    import numpy as np
    from vertiplan.milp import BINARY, CONTINUOUS, EQ, GE, LE, MilpModel

    rng = np.random.default_rng(seed)
    m = MilpModel(f"random-{seed}")
    nb = int(rng.integers(1, max_binaries + 1))
    nc = int(rng.integers(0, 4))
    for j in range(nb):
        m.add_var(f"b{j}", BINARY, obj=float(rng.integers(-10, 11)))
    for j in range(nc):
        m.add_var(f"c{j}", CONTINUOUS, 0.0, float(rng.integers(1, 8)), obj=float(rng.normal()))
    n = nb + nc
    anchored = rng.random() >= 0.125
    point = np.concatenate((rng.integers(0, 2, size=nb), rng.uniform(0, np.array(m.ub[nb:]))))
    for r in range(int(rng.integers(1, 7))):
        cols = rng.choice(n, size=int(rng.integers(1, n + 1)), replace=False)
        coefs = rng.integers(-6, 7, size=len(cols)).astype(float)
        sense = [LE, LE, GE, EQ][int(rng.integers(0, 4))] if nc else [LE, GE][int(rng.integers(0, 2))]
        if anchored:
            act = float(coefs @ point[cols])
            slack = float(rng.integers(0, 4))
            rhs = act if sense == EQ else (act + slack if sense == LE else act - slack)
        else:
            rhs = float(rng.integers(-3, 9))
        m.add_constr(list(zip(cols.tolist(), coefs.tolist())), sense, rhs, f"row{r}")
    return m


def enumerate_milp(model):
    """Optimum by listing every binary vector and solving the continuous
    remainder with scipy's LP.  Returns ``inf`` when nothing is feasible."""
    import itertools
    import math

    import numpy as np
    from scipy.optimize import linprog

    ints = np.flatnonzero(model.is_integer())
    cont = np.flatnonzero(~model.is_integer())
    A = model.matrix().toarray()
    lo, hi = model.row_bounds()
    c = np.array(model.obj)
    best = math.inf
    for bits in itertools.product((0.0, 1.0), repeat=len(ints)):
        b = np.array(bits)
        if np.any(b < np.array(model.lb)[ints]) or np.any(b > np.array(model.ub)[ints]):
            continue
        act = A[:, ints] @ b
        base = float(c[ints] @ b) + model.obj_const
        if not len(cont):
            if np.all(act >= lo - 1e-9) and np.all(act <= hi + 1e-9):
                best = min(best, base)
            continue
        Ac = A[:, cont]
        ub_rows, ub_rhs = [], []
        for r in range(len(lo)):
            if np.isfinite(hi[r]):
                ub_rows.append(Ac[r]); ub_rhs.append(hi[r] - act[r])
            if np.isfinite(lo[r]):
                ub_rows.append(-Ac[r]); ub_rhs.append(act[r] - lo[r])
        res = linprog(c[cont], A_ub=np.array(ub_rows) if ub_rows else None,
                      b_ub=np.array(ub_rhs) if ub_rhs else None,
                      bounds=[(model.lb[j], model.ub[j]) for j in cont], method="highs")
        if res.status == 0:
            best = min(best, base + float(res.fun))
    return best
