import numpy as np
import pytest
from scipy.optimize import Bounds, LinearConstraint, milp

from chemosched.core import make_instance, validate_first_stage
from chemosched.evaluator import evaluate_expected
from chemosched.milp import (
    HighsBackend,
    Limits,
    SolveError,
    build_extensive_form,
    build_mean_value_problem,
    evaluate_fixed_first_stage,
    mean_value_instance,
    recourse_values,
    solve,
    solve_exact,
)
from chemosched.sampler import SamplerSpec, sample_instance
from oracles import brute_force, random_first_stage, read_mps


def test_family_counts_nine_patients():
    inst = make_instance(np.full((1, 9), 60.0), n_chairs=3)
    model = build_extensive_form(inst)
    assert model.count_vars("u") == 72
    assert model.count_rows("tournament") == 36
    assert model.count_rows("chair_seq", scenario=0) == 216
    assert model.count_rows("order") == 72
    assert model.count_rows("nurse_seq", scenario=0) == 9 * 8 * 2
    assert model.count_rows("overtime", scenario=0) == 9 * 2


def test_counts_scale_with_scenarios():
    inst = make_instance(np.full((3, 4), 60.0), n_chairs=2)
    model = build_extensive_form(inst, [0, 2])
    assert model.count_rows("chair_seq") == 2 * 4 * 3 * 2
    assert model.count_vars("w") == 8 and model.count_vars("o") == 4
    with pytest.raises(ValueError):
        build_extensive_form(inst, [])
    with pytest.raises(ValueError):
        build_extensive_form(inst, [3])


def test_two_patients_same_nurse_same_chair():
    inst = make_instance([[60.0, 60.0]], n_nurses=1, n_chairs=1, wait_weight=0.5, flex_limit=5)
    sol, rep = solve_exact(inst)
    assert rep.objective == pytest.approx(0.0, abs=1e-7)
    first, second = sol.order()
    assert sol.appointments[second] - sol.appointments[first] == pytest.approx(75.0, abs=1e-6)
    assert rep.status == "optimal"


def test_tiny_optimal_and_zero_gap():
    inst = sample_instance(SamplerSpec(n_patients=3, n_scenarios=2, seed=4))
    sol, rep = solve_exact(inst)
    assert rep.status == "optimal"
    assert rep.bound == pytest.approx(rep.objective, abs=1e-6)
    assert validate_first_stage(inst, sol) == []
    assert rep.params["model_objective"] == pytest.approx(rep.objective, abs=1e-6)


def loaded_instance(rng, p, m):
    return make_instance(rng.uniform(60, 160, (m, p)), n_nurses=2, n_chairs=2, flex_limit=int(rng.integers(0, 3)),
                         wait_weight=float(rng.uniform(0.1, 0.9)))


def test_brute_force_small(rng):
    for _ in range(3):
        inst = loaded_instance(rng, 3, 2)
        _, rep = solve_exact(inst)
        assert rep.objective == pytest.approx(brute_force(inst), abs=1e-5)


def test_options_do_not_change_optimum(rng):
    inst = loaded_instance(rng, 4, 2)
    ref = solve_exact(inst)[1].objective
    for opts in ({"symmetry_breaking": False}, {"tight_big_m": False}, {"load_cuts": False}):
        assert solve_exact(inst, **opts)[1].objective == pytest.approx(ref, abs=1e-6)
    assert solve_exact(inst, integer_appointments=True)[1].objective >= ref - 1e-6


def test_flexibility_relaxation(rng):
    inst = make_instance(rng.uniform(60, 160, (2, 4)), n_nurses=2, n_chairs=3, flex_limit=0)
    objs = [solve_exact(inst.with_params(flex_limit=j))[1].objective for j in (0, 1, 4)]
    assert objs[0] >= objs[1] - 1e-6 >= objs[2] - 2e-6


def test_recourse_matches_evaluator(rng):
    inst = loaded_instance(rng, 4, 3)
    model = build_extensive_form(inst)
    res = HighsBackend().solve(model)
    w, o = recourse_values(model, res.x)
    assert np.mean(inst.wait_weight * w.sum(1) + (1 - inst.wait_weight) * o.sum(1)) == pytest.approx(res.objective, abs=1e-6)


def test_fixed_first_stage_paths_agree(rng):
    backend = HighsBackend()
    checked = 0
    while checked < 10:
        inst = make_instance(rng.uniform(20, 120, (3, 5)), n_chairs=2, wait_weight=float(rng.uniform(0.1, 0.9)))
        sol = random_first_stage(inst, rng)
        if evaluate_expected(inst, sol).infeasible_scenarios:
            with pytest.raises(SolveError):
                evaluate_fixed_first_stage(inst, sol, backend=backend)
            continue
        lp = evaluate_fixed_first_stage(inst, sol, backend=backend)
        assert lp == pytest.approx(evaluate_fixed_first_stage(inst, sol), abs=1e-6)
        assert evaluate_fixed_first_stage(inst, sol, [1]) == pytest.approx(
            evaluate_fixed_first_stage(inst, sol, [1], backend=backend), abs=1e-6
        )
        checked += 1


def test_infeasible_raises():
    inst = make_instance([[300.0, 300.0]], n_nurses=1, n_chairs=1, overtime_limit=100)
    with pytest.raises(SolveError) as exc:
        solve_exact(inst)
    assert exc.value.status == "infeasible"


def test_mean_value_problem():
    inst = make_instance([[100.0, 50.0], [140.0, 70.0]], n_chairs=1)
    mvp = mean_value_instance(inst)
    assert mvp.durations.tolist() == [[120.0, 60.0]]
    single = make_instance([[100.0, 50.0]], n_chairs=1)
    a = solve(build_mean_value_problem(single))[1].objective
    b = solve_exact(single)[1].objective
    assert a == pytest.approx(b, abs=1e-9)


def test_mean_value_optimism():
    inst = sample_instance(SamplerSpec(n_patients=5, n_scenarios=6, seed=21), )
    inst = inst.with_params(n_chairs=2)
    sol, rep = solve(build_mean_value_problem(inst))
    assert rep.objective < evaluate_expected(inst, sol).objective


def test_mps_round_trip(tmp_path, rng):
    inst = loaded_instance(rng, 3, 2)
    model = build_extensive_form(inst)
    path = model.write_mps(tmp_path / "m.mps")
    text = path.read_text()
    for section in ("ROWS", "COLUMNS", "RHS", "BOUNDS", "ENDATA"):
        assert section in text
    c, A, lo, hi, bl, bu, ints = read_mps(path)
    assert A.shape == (model.n_rows, model.n_vars)
    res = milp(c, integrality=ints, bounds=Bounds(bl, bu), constraints=[LinearConstraint(A, lo, hi)])
    assert res.fun == pytest.approx(HighsBackend().solve(model).objective, abs=1e-6)


def test_time_limit_reports_status():
    inst = sample_instance(SamplerSpec(n_patients=7, n_scenarios=8, seed=2))
    try:
        _, rep = solve_exact(inst, Limits(time_limit=0.5))
    except SolveError as exc:
        assert exc.status == "time-limit"
    else:
        assert rep.status in ("optimal", "feasible-with-gap")
        assert rep.bound is None or rep.bound <= rep.objective + 1e-6
