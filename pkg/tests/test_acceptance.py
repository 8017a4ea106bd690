"""One test per acceptance criterion, each at its stated tolerance.

Every test records a single PASS/FAIL line (shown in the terminal summary)
before asserting.
"""

import logging
import time
import timeit

import numpy as np
import pytest

from chemosched.analysis import baseline_schedule, compute_vss, run_method, solve_mean_value
from chemosched.cli import main
from chemosched.core import FirstStageSolution, make_instance
from chemosched.evaluator import evaluate_expected, evaluate_scenario
from chemosched.milp import HighsBackend, SolveError, evaluate_fixed_first_stage, solve_exact
from chemosched.sampler import ClinicParams, SamplerSpec, instance_seeds, sample_instance
from chemosched.sgbd import group_closest, group_furthest, group_random
from conftest import EXAMPLE_APPOINTMENTS, EXAMPLE_CHAIR, EXAMPLE_DURATIONS, EXAMPLE_NURSE
from oracles import brute_force, random_first_stage, second_stage_lp

DESK_SEED = 2026
DESK_COUNT = 10


def test_criterion_01_worked_example_golden(criterion):
    inst = make_instance([EXAMPLE_DURATIONS], n_nurses=2, n_chairs=3, flex_limit=0)
    sol = FirstStageSolution.from_appointments(EXAMPLE_APPOINTMENTS, EXAMPLE_NURSE, EXAMPLE_CHAIR)
    out = evaluate_scenario(inst, sol, 0)
    runtime = min(timeit.repeat(lambda: evaluate_scenario(inst, sol, 0), number=50, repeat=5)) / 50
    want_waits = np.zeros(9)
    want_waits[[4, 3, 8, 6]] = [34, 23, 10, 8]
    waits_ok = np.array_equal(out.waits, want_waits)
    over_ok = np.array_equal(out.overtimes, [59, 4])
    cost_ok = abs(out.cost - 66.6) <= 1e-9
    ok = waits_ok and over_ok and cost_ok and runtime < 1e-3
    criterion(
        1,
        ok,
        f"waits {'ok' if waits_ok else out.waits.tolist()}; overtimes {out.overtimes.tolist()} (want [59, 4]); "
        f"cost {out.cost:.4f} (want 66.6); {runtime * 1e3:.3f} ms",
    )
    assert waits_ok
    assert out.overtimes.tolist() == [59, 4]
    assert out.cost == pytest.approx(66.6, abs=1e-9)
    assert runtime < 1e-3


def test_criterion_02_lp_oracle(criterion):
    rng = np.random.default_rng(DESK_SEED)
    backend = HighsBackend()
    start = time.perf_counter()
    matched = infeasible = worst = 0
    mismatches = []
    while matched < 200:
        p = int(rng.integers(1, 7))
        m = int(rng.integers(1, 4))
        inst = make_instance(
            rng.uniform(15, 220, (m, p)),
            n_nurses=int(rng.integers(1, 4)),
            n_chairs=int(rng.integers(1, 4)),
            wait_weight=float(rng.uniform(0, 1)),
            flex_limit=int(rng.integers(0, p + 1)),
        )
        sol = random_first_stage(inst, rng)
        w = int(rng.integers(m))
        out = evaluate_scenario(inst, sol, w)
        try:
            lp = evaluate_fixed_first_stage(inst, sol, [w], backend=backend)
        except SolveError:
            infeasible += 1
            if out.feasible or second_stage_lp(inst, sol, w) is not None:
                mismatches.append(("feasibility", p, w))
            continue
        ref = second_stage_lp(inst, sol, w)
        err = max(abs(out.cost - lp), abs(out.cost - ref[0]))
        if 0 < inst.wait_weight < 1:
            err = max(err, abs(out.waits.sum() - ref[1].sum()), abs(out.overtimes.sum() - ref[2].sum()))
        worst = max(worst, err)
        if not out.feasible or err > 1e-6:
            mismatches.append((err, p, w))
        matched += 1
    elapsed = time.perf_counter() - start
    ok = not mismatches and elapsed < 120
    criterion(2, ok, f"{matched} feasible triples (+{infeasible} infeasible agreed), max abs error {worst:.2e}, {elapsed:.1f} s")
    assert not mismatches
    assert elapsed < 120


def test_criterion_03_brute_force(criterion):
    rng = np.random.default_rng(DESK_SEED + 3)
    start = time.perf_counter()
    worst, rows, infeasible, disagree = 0.0, [], 0, 0
    k = 0
    while len(rows) < 20:
        p = 3 if k % 2 else 4
        k += 1
        m = int(rng.integers(1, 4))
        inst = make_instance(
            rng.uniform(60, 170, (m, p)),
            n_nurses=2,
            n_chairs=int(rng.integers(1, 4)) if p == 3 else 2,
            wait_weight=float(rng.uniform(0.05, 0.95)),
            flex_limit=int(rng.integers(0, 3)),
        )
        ref = brute_force(inst)
        try:
            _, rep = solve_exact(inst)
        except SolveError as exc:
            infeasible += 1
            disagree += exc.status != "infeasible" or np.isfinite(ref)
            continue
        worst = max(worst, abs(rep.objective - ref))
        rows.append((p, m, rep.objective, ref))
    elapsed = time.perf_counter() - start
    nontrivial = sum(1 for r in rows if r[3] > 1e-6)
    ok = worst <= 1e-5 and not disagree and elapsed < 600
    criterion(
        3,
        ok,
        f"20 instances ({nontrivial} with positive optimum, {infeasible} infeasible skipped, {disagree} disagreements), "
        f"max |exact - enumeration| {worst:.2e}, {elapsed:.0f} s",
    )
    assert worst <= 1e-5 and not disagree
    assert elapsed < 600


@pytest.fixture(scope="module")
def desk_runs():
    """Ten |P|=6, |C|=2, |Omega|=16 instances solved by every method needed below.

    Seeds come from a fixed child-seed stream. A seed is dropped only when
    the exact model is proven infeasible (the overtime cap cannot be met);
    such seeds are listed in the results.
    """
    logging.getLogger("chemosched").setLevel(logging.ERROR)
    runs, dropped = [], []
    k = 0
    while len(runs) < DESK_COUNT:
        seed = instance_seeds(DESK_SEED, k + 1)[k]
        k += 1
        inst = sample_instance(SamplerSpec(n_patients=6, n_scenarios=16, seed=seed), ClinicParams(n_chairs=2))
        t0 = time.perf_counter()
        try:
            _, exact = solve_exact(inst)
        except SolveError as exc:
            if exc.status == "infeasible":
                dropped.append(seed)
                continue
            raise
        t_exact = time.perf_counter() - t0
        t0 = time.perf_counter()
        try:
            _, sgbd, _ = run_method(inst, "f-sgbd", group_size=4, seed=seed)
        except SolveError:
            sgbd = None
        t_sgbd = time.perf_counter() - t0
        base = evaluate_expected(inst, baseline_schedule(inst), method="baseline")
        _, mvp = solve_mean_value(inst)
        runs.append(dict(seed=seed, inst=inst, exact=exact, sgbd=sgbd, base=base, mvp=mvp, t_exact=t_exact, t_sgbd=t_sgbd))
    return runs, dropped


def test_criterion_04_sgbd_gap(desk_runs, criterion):
    runs, dropped = desk_runs
    gaps = [
        np.inf if r["sgbd"] is None else 100 * (r["sgbd"].objective - r["exact"].objective) / r["exact"].objective
        for r in runs
    ]
    elapsed = sum(r["t_exact"] + r["t_sgbd"] for r in runs)
    mean_gap = float(np.mean(gaps))
    ok = mean_gap <= 5 and min(gaps) >= -1e-6 and elapsed <= 1800
    criterion(
        4,
        ok,
        f"mean gap {mean_gap:.2f}% (gaps {', '.join(f'{g:.2f}' for g in gaps)}), "
        f"min {min(gaps):.2e}, {elapsed:.0f} s; infeasible seeds dropped: {len(dropped)}",
    )
    assert all(np.isfinite(gaps))
    assert mean_gap <= 5
    assert min(gaps) >= -1e-6
    assert elapsed <= 1800


def test_criterion_05_grouping(criterion):
    start = time.perf_counter()
    toy = np.array([[0.0], [1.0], [10.0], [11.0]])
    f = group_furthest(toy, 2, anchors=[0]).groups
    c = group_closest(toy, 2, anchors=[0]).groups
    traces = f[0] == (0, 3) and set(f[1]) == {1, 2} and c[0] == (0, 1) and set(c[1]) == {2, 3}
    t = np.random.default_rng(DESK_SEED).uniform(15, 220, (48, 9))
    bad = [
        (grouper.__name__, seed, z)
        for seed in range(100)
        for grouper in (group_furthest, group_closest, group_random)
        for z in (5, 8)
        if not grouper(t, z, seed=seed).is_partition(48)
    ]
    elapsed = time.perf_counter() - start
    ok = traces and not bad and elapsed < 1
    criterion(5, ok, f"hand traces {'ok' if traces else (f, c)}; {600 - len(bad)}/600 plans are partitions; {elapsed:.2f} s")
    assert traces and not bad and elapsed < 1


def test_criterion_06_baseline_dominance(desk_runs, criterion):
    runs, _ = desk_runs
    pairs = [(r["base"].objective, r["sgbd"].objective if r["sgbd"] else r["exact"].objective) for r in runs]
    strictly = all(opt < base for base, opt in pairs)
    ratios = [base / opt for base, opt in pairs]
    mean_ratio = float(np.mean(ratios))
    elapsed = sum(r["t_sgbd"] for r in runs)
    ok = strictly and mean_ratio > 1.5 and elapsed <= 1800
    criterion(6, ok, f"optimized below baseline on {sum(o < b for b, o in pairs)}/10; mean ratio {mean_ratio:.2f}")
    assert strictly and mean_ratio > 1.5


def test_criterion_07_flexibility(criterion):
    insts = [
        sample_instance(SamplerSpec(n_patients=5, n_scenarios=4, seed=s), ClinicParams(n_chairs=2))
        for s in instance_seeds(DESK_SEED + 7, 6)
    ]
    rows, monotone, improved = [], True, 0
    for inst in insts:
        objs = [solve_exact(inst.with_params(flex_limit=j))[1].objective for j in (0, 1, inst.n_patients)]
        rows.append(objs)
        monotone &= objs[0] >= objs[1] - 1e-6 and objs[1] >= objs[2] - 1e-6
        improved += objs[0] - objs[1] > 1e-6
    ok = monotone and 2 * improved >= len(insts)
    mean_gain = np.mean([100 * (a - b) / a for a, b, _ in rows if a > 0])
    criterion(7, ok, f"monotone {monotone}; J=0->1 improves {improved}/{len(insts)} (mean {mean_gain:.2f}%)")
    assert monotone and 2 * improved >= len(insts)


def test_criterion_08_lambda_trend(criterion):
    lambdas = (0.1, 0.3, 0.5, 0.7, 0.9)
    insts = [
        sample_instance(SamplerSpec(n_patients=5, n_scenarios=4, seed=s), ClinicParams(n_chairs=2))
        for s in instance_seeds(DESK_SEED + 8, 4)
    ]
    waits, overs = [], []
    for lam in lambdas:
        reps = [solve_exact(inst.with_params(wait_weight=lam))[1] for inst in insts]
        waits.append(np.mean([r.expected_wait for r in reps]))
        overs.append(np.mean([r.expected_overtime for r in reps]))
    w_ok = all(b <= a + 1e-6 for a, b in zip(waits, waits[1:]))
    o_ok = all(b >= a - 1e-6 for a, b in zip(overs, overs[1:]))
    criterion(
        8,
        w_ok and o_ok,
        "wait " + " ".join(f"{w:.2f}" for w in waits) + " | overtime " + " ".join(f"{o:.2f}" for o in overs),
    )
    assert w_ok and o_ok


def test_criterion_09_vss(desk_runs, criterion):
    runs, _ = desk_runs
    det = []
    for s in instance_seeds(DESK_SEED + 9, 3):
        inst = sample_instance(SamplerSpec(n_patients=5, n_scenarios=1, seed=s), ClinicParams(n_chairs=2))
        det.append(compute_vss(inst.with_params(durations=np.repeat(inst.durations, 3, axis=0))).vss)
    zero_ok = all(abs(v) <= 1e-6 for v in det)
    vss = [r["mvp"].objective - r["exact"].objective for r in runs]
    pct = [100 * v / r["mvp"].objective for v, r in zip(vss, runs)]
    positive = sum(v > 1e-6 for v in vss)
    ok = zero_ok and positive >= 8 and min(vss) >= -1e-6
    criterion(
        9,
        ok,
        f"deterministic VSS max |{max(map(abs, det)):.1e}|; positive on {positive}/10, mean {np.mean(pct):.2f}% "
        f"(min {min(pct):.2f}%)",
    )
    assert zero_ok and positive >= 8 and min(vss) >= -1e-6


def test_criterion_10_determinism(tmp_path, criterion):
    out = tmp_path / "run"

    def run():
        assert main(["sample", "--patients", "5", "--scenarios", "8", "--chairs", "2", "--seed", "42", "--count", "2",
                     "--out", str(out / "inst")]) == 0
        inst = str(out / "inst" / "instance_02.json")
        assert main(["group", inst, "--method", "f-sgbd", "--group-size", "3", "--method-seed", "9", "--out", str(out / "g")]) == 0
        assert main(["solve", inst, "--method", "f-sgbd", "--group-size", "4", "--method-seed", "9", "--out", str(out / "s")]) == 0
        assert main(["solve", inst, "--method", "p-sgbd", "--iterations", "2", "--out", str(out / "p")]) == 0
        return {str(p.relative_to(out)): p.read_bytes() for p in sorted(out.rglob("*.json")) if p.name != "timing.json"}

    a = run()
    b = run()
    same = a.keys() == b.keys() and all(a[k] == b[k] for k in a)
    criterion(10, same, f"{len(a)} files compared byte for byte")
    assert same
