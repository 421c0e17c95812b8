"""Acceptance criteria 1-10.  Each test prints one PASS/FAIL line, repeated
in the terminal summary.  Expensive solves are shared through module-scoped
fixtures, so run the file as a whole."""
import math
import time

import numpy as np
import pytest

from conftest import record
from helpers import enumerate_milp, fixtures, random_small_milp
from vertiplan.adaptive import SolverConfig, iteration_bounds, solve_exact, solve_static
from vertiplan.benchmarks import (MODES, NO_CAPACITY, CourierParams, check_courier_feasibility, compare_modes,
                                  courier_hub_instance, solve_fixed_design, two_stage_heuristic)
from vertiplan.matheuristic import solve_matheuristic
from vertiplan.milp import solve
from vertiplan.model import check_nonlinear_feasibility, queue_length
from vertiplan.oracle import solve_oracle
from vertiplan.queuesim import ServiceDist, SimConfig, simulate_travel_queue, simulate_vertiport_queue
from vertiplan.report import MODES_TABLE_HEADER, mode_table

pytestmark = pytest.mark.slow

CERT_TOL = 1e-8


@pytest.fixture(scope="module")
def tiny():
    return fixtures("tiny", 20)


@pytest.fixture(scope="module")
def medium():
    return fixtures("medium", 10)


@pytest.fixture(scope="module")
def exact_runs(tiny, medium):
    out = []
    for inst in tiny + medium:
        t0 = time.perf_counter()
        res = solve_exact(inst)
        out.append((inst, res, time.perf_counter() - t0))
    return out


@pytest.fixture(scope="module")
def mh_runs(tiny, medium):
    return [(inst, solve_matheuristic(inst)) for inst in tiny + medium]


@pytest.fixture(scope="module")
def two_stage_runs(tiny, medium):
    return [(inst, two_stage_heuristic(inst)) for inst in tiny + medium]


@pytest.fixture(scope="module")
def mode_runs(medium):
    return [(inst, compare_modes(inst, (1, 2, 4))) for inst in medium[:5]]


def test_criterion_1_bound_sandwich(tiny, exact_runs):
    t0 = time.perf_counter()
    worst, bad = math.inf, []
    by_name = {inst.name: res for inst, res, _ in exact_runs}
    for inst in tiny:
        res = by_name[inst.name]
        ora = solve_oracle(inst, grid_unit=0.005)
        ub, lb = res.trace.ub, res.trace.lb
        scale = max(1.0, abs(ora.objective))
        slack = min((ora.objective - lb) / scale, (ub - ora.objective) / scale)
        worst = min(worst, slack)
        if ora.status != "optimal" or slack < -1e-6:
            bad.append(f"{inst.name} lb={lb:.6f} oracle={ora.objective:.6f} ub={ub:.6f} ({ora.status})")
    secs = time.perf_counter() - t0 + sum(s for inst, _, s in exact_runs if inst in tiny)
    ok = not bad and secs <= 900
    record(1, ok, f"{len(tiny)} tiny instances, worst relative slack {worst:.2e}, {secs:.0f} s"
           + (f"; violations: {bad}" if bad else ""))
    assert ok


def test_criterion_2_monotone_static_refinement(tiny):
    bad = []
    gaps = []
    for inst in tiny[:10]:
        runs = [solve_static(inst, d) for d in (0.2, 0.1, 0.05)]
        zc = [r.conservative_objective for r in runs]
        zr = [r.relaxed_bound for r in runs]
        tol = 1e-9 * max(abs(z) for z in zc + zr)
        if any(b > a + tol for a, b in zip(zc, zc[1:])) or any(b < a - tol for a, b in zip(zr, zr[1:])):
            bad.append(f"{inst.name} not monotone: Zc={zc} Zr={zr}")
        if not runs[2].gap < runs[0].gap:
            bad.append(f"{inst.name} gap {runs[0].gap:.4%} -> {runs[2].gap:.4%}")
        gaps.append((runs[0].gap, runs[2].gap))
    g0, g2 = np.mean([a for a, _ in gaps]), np.mean([b for _, b in gaps])
    record(2, not bad, f"10 instances, mean gap {g0:.2%} at 0.2 -> {g2:.2%} at 0.05" + (f"; {bad}" if bad else ""))
    assert not bad


def test_criterion_3_convergence(exact_runs):
    bad = []
    for inst, res, secs in exact_runs:
        if not (res.status == "optimal" and res.trace.gap <= 0.01 and res.trace.iterations <= 10 and secs <= 300):
            bad.append(f"{inst.name}: {res.status}, gap {res.trace.gap:.4%}, {res.trace.iterations} it, {secs:.0f} s")
    its = max(r.trace.iterations for _, r, _ in exact_runs)
    slowest = max(s for *_, s in exact_runs)
    record(3, not bad, f"{len(exact_runs)} runs, max {its} iterations, slowest {slowest:.1f} s" + (f"; {bad}" if bad else ""))
    assert not bad


def test_criterion_4_certification(exact_runs, mh_runs, two_stage_runs, mode_runs):
    checked, bad = 0, []
    for inst, res, _ in exact_runs:
        checked += 1
        if res.solution is None or not check_nonlinear_feasibility(inst, res.solution, CERT_TOL).ok:
            bad.append(f"exact {inst.name}")
    for inst, res in mh_runs:
        if res.solution is not None:
            checked += 1
            if not check_nonlinear_feasibility(inst, res.solution, CERT_TOL).ok:
                bad.append(f"matheuristic {inst.name}")
    for inst, res in two_stage_runs:
        if res.solution is not None:
            checked += 1
            if not check_nonlinear_feasibility(inst, res.solution, CERT_TOL).ok:
                bad.append(f"two-stage {inst.name}")
    for inst, cmp in mode_runs:
        for row in cmp.rows:
            checked += 1
            if row.feasible is not True:
                bad.append(f"{row.mode} Q={row.Q:g} {inst.name}")
    ok = not bad and checked > 0
    record(4, ok, f"{checked} incumbents checked at {CERT_TOL:g}" + (f"; failures: {bad}" if bad else ""))
    assert ok


def test_mode_rows_use_their_own_checkers(mode_runs):
    # compare_modes marks rows with the checker matching each mode; re-derive two of them here
    inst, cmp = mode_runs[0]
    from vertiplan.benchmarks import solve_d2d_courier, solve_hs_courier
    p = CourierParams.from_instance(inst)
    sol, _ = solve_d2d_courier(inst, p)
    assert check_courier_feasibility(inst, sol, p, CERT_TOL) == {}
    res, sub = solve_hs_courier(inst, p)
    assert check_nonlinear_feasibility(sub, res.solution, CERT_TOL, NO_CAPACITY).ok


def test_criterion_5_queueing_formulas():
    t0 = time.perf_counter()
    parts, bad = [], []
    for rho in (0.3, 0.5, 0.7, 0.9):
        rep = simulate_vertiport_queue(SimConfig(arrival_rate=1.0, rho=rho, horizon=1_000_000, seed=0))
        rel = abs(rep.mean_queue_length - queue_length(rho)) / queue_length(rho)
        tv = rep.tv_distance_geometric()
        parts.append(f"rho={rho}: rel {rel:.2%}, TV {tv:.4f}")
        if rel > 0.03 or tv > 0.01:
            bad.append(rho)
    for kind in ("deterministic", "exponential"):
        tr = simulate_travel_queue(2.0, ServiceDist(kind, 3.0), 1_000_000, seed=0)
        rel = abs(tr.mean_occupancy - tr.analytic) / tr.analytic
        parts.append(f"M/G/inf {kind}: rel {rel:.2%}")
        if rel > 0.03:
            bad.append(kind)
    secs = time.perf_counter() - t0
    ok = not bad and secs <= 120
    record(5, ok, "; ".join(parts) + f"; {secs:.0f} s")
    assert ok


def test_criterion_6_warm_starts(exact_runs, mh_runs):
    events = bad_chain = bad_installed = bad_mcn = 0
    traces = [r.trace for _, r, _ in exact_runs] + [r.trace for _, r in mh_runs]
    for tr in traces:
        for e in tr.warm_starts:
            events += 1
            if e.source == "conservative" and e.violations:
                bad_chain += 1
            if e.installed and e.violations:
                bad_installed += 1
    for _, res, _ in exact_runs:
        by_it = {}
        for r in res.trace.records:
            by_it.setdefault(r.iteration, {})[r.model] = r.objective
        for objs in by_it.values():
            if "MC" in objs and "MCN" in objs and objs["MCN"] > objs["MC"] * (1 + 1e-9):
                bad_mcn += 1
    ok = events > 0 and not (bad_chain or bad_installed or bad_mcn)
    record(6, ok, f"{events} warm-start candidates validated, {bad_chain} chain violations, "
                  f"{bad_installed} invalid installs, {bad_mcn} iterations with neighborhood above conservative")
    assert ok


def test_criterion_7_matheuristic_quality(exact_runs, mh_runs):
    exact = {inst.name: res for inst, res, _ in exact_runs}
    rows, bad = [], []
    for inst, res in mh_runs:
        ex = exact[inst.name]
        if ex.status != "optimal":
            continue
        h = [u for u in res.ub_history if math.isfinite(u)]
        mono = all(b <= a for a, b in zip(h, h[1:]))
        ratio = res.solution.objective / ex.trace.ub - 1 if res.solution is not None else math.inf
        rows.append(ratio)
        if not mono or ratio > 0.05:
            bad.append(f"{inst.name} +{ratio:.1%}" + ("" if mono else " (UB increased)"))
    ok = not bad and bool(rows)
    record(7, ok, f"{len(rows)} fixtures, worst excess {max(rows):.2%}, {len(bad)} outside 5%"
           + (f": {bad}" if bad else ""))
    assert ok


def test_criterion_8_two_stage(exact_runs, two_stage_runs):
    exact = {inst.name: res for inst, res, _ in exact_runs}
    feasible = infeasible = 0
    bad = []
    for inst, ts in two_stage_runs:
        ex = exact[inst.name]
        if ts.status == "feasible":
            feasible += 1
            if ex.solution is not None and ts.solution.objective < ex.solution.objective * (1 - 1e-9):
                bad.append(f"{inst.name} two-stage {ts.solution.objective:.2f} < exact {ex.solution.objective:.2f}")
        else:
            infeasible += 1
            # flagged outcomes carry no plan, and the fixed design really has no stage-2 solution
            plan, raw = solve_fixed_design(inst, ts.stage1.x, ts.stage1.y)
            if ts.status != "infeasible" or ts.solution is not None or plan is not None or raw.status != "infeasible":
                bad.append(f"{inst.name} status {ts.status} not backed by an infeasible stage 2")
    ok = not bad
    record(8, ok, f"{feasible} feasible two-stage plans all >= exact, {infeasible} infeasible stage-2 outcomes flagged"
           + (f"; {bad}" if bad else ""))
    assert ok


def test_criterion_9_mode_comparison(mode_runs, tmp_path):
    wins = {}
    for inst, cmp in mode_runs:
        for Q in (1, 2, 4):
            hub, d2d = cmp.get("H&S-D&C", Q), cmp.get("D2D-C", Q)
            wins.setdefault(Q, []).append(hub.mean_lead_min < d2d.mean_lead_min)
    paths = []
    for inst, cmp in mode_runs:
        p = tmp_path / f"{inst.name}.modes.csv"
        cmp.write_csv(p)
        paths.append(p)
    rows = mode_table(paths)
    layout_ok = len(rows) == 9 and {(r[0], r[1]) for r in rows} == {(m, float(q)) for m in MODES for q in (1, 2, 4)}
    assert MODES_TABLE_HEADER == ("mode", "Q", "instances", "mean_cost_cny", "mean_lead_min")
    ok = layout_ok and all(sum(v) >= 4 for v in wins.values())
    counts = ", ".join(f"Q={q}: {sum(v)}/5" for q, v in sorted(wins.items()))
    record(9, ok, f"hub lead time below door-to-door in {counts}; mode-table layout {'ok' if layout_ok else 'wrong'}")
    assert ok


def test_criterion_10_milp_kernel():
    mismatches, infeasible, nondet = [], 0, 0
    for seed in range(50):
        m = random_small_milp(seed, max_binaries=12)
        want = enumerate_milp(m)
        a, b = solve(m), solve(m)
        if a.status != b.status or a.objective != b.objective or (
                a.has_solution and not np.array_equal(a.values, b.values)):
            nondet += 1
        if math.isinf(want):
            infeasible += 1
            if a.status != "infeasible":
                mismatches.append(seed)
        elif a.status != "optimal" or abs(a.objective - want) > 1e-6 * max(1.0, abs(want)):
            mismatches.append(seed)
    ok = not mismatches and not nondet
    record(10, ok, f"50 models ({infeasible} infeasible), {len(mismatches)} mismatches, {nondet} nondeterministic")
    assert ok
