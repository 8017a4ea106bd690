"""Two-stage stochastic chemotherapy appointment scheduling."""

__version__ = "0.1.0"

from .core import FirstStageSolution, Instance, ScenarioOutcome, SolveReport, make_instance, validate_first_stage, validate_instance
from .evaluator import evaluate_expected, evaluate_scenario, start_times
from .milp import Limits, SolveError, build_extensive_form, build_mean_value_problem, solve_exact
from .sampler import ClinicParams, SamplerSpec, sample_instance
from .sgbd import GroupingPlan, group_closest, group_furthest, group_random, run_sgbd
from .analysis import baseline_schedule, compute_vss, run_method, run_sweep

__all__ = [
    "ClinicParams",
    "FirstStageSolution",
    "GroupingPlan",
    "Instance",
    "Limits",
    "SamplerSpec",
    "ScenarioOutcome",
    "SolveError",
    "SolveReport",
    "baseline_schedule",
    "build_extensive_form",
    "build_mean_value_problem",
    "compute_vss",
    "evaluate_expected",
    "evaluate_scenario",
    "group_closest",
    "group_furthest",
    "group_random",
    "make_instance",
    "run_method",
    "run_sgbd",
    "run_sweep",
    "sample_instance",
    "solve_exact",
    "start_times",
    "validate_first_stage",
    "validate_instance",
]
