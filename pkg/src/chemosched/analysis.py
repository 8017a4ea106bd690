"""Clinic baseline rule, value of the stochastic solution, parameter sweeps."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

from .core import FirstStageSolution, Instance, SolveReport
from .evaluator import evaluate_expected
from .milp import Limits, SolveError, SolverBackend, build_mean_value_problem, solve, solve_exact
from .sampler import ClinicParams, SamplerSpec, expected_durations, instance_seeds, paper_instance_types, sample_instance
from .sgbd import GroupingPlan, run_sgbd

log = logging.getLogger(__name__)

SECOND_SLOT = 150.0  # 10:30 relative to an 8:00 shift start
METHODS = ("exact", "p-sgbd", "f-sgbd", "c-sgbd", "r-sgbd", "baseline", "mvp")


def baseline_schedule(inst: Instance, second_slot: float = SECOND_SLOT) -> FirstStageSolution:
    """The two-slot clinic rule.

    Longest expected infusions go to the first slot (ceil of half the
    patients at minute 0), the rest arrive at ``second_slot``. Everyone gets
    their primary nurse; chairs go to whichever is expected to free up first.
    """
    mean_t = expected_durations(inst)
    order = sorted(range(inst.n_patients), key=lambda i: (-mean_t[i], i))
    n_first = math.ceil(inst.n_patients / 2)
    a = np.zeros(inst.n_patients)
    for i in order[n_first:]:
        a[i] = second_slot
    free = np.zeros(inst.n_chairs)
    chair = [0] * inst.n_patients
    for i in order:
        c = int(np.argmin(free))
        chair[i] = c
        free[c] = max(free[c], a[i]) + inst.premed_duration + mean_t[i]
    return FirstStageSolution.from_order(order, a, inst.primary_nurse, chair)


def solve_mean_value(inst: Instance, limits: Limits = Limits(), backend: SolverBackend | None = None):
    """Schedule from the mean-duration problem, priced on the full scenario set."""
    sol, mvp = solve(build_mean_value_problem(inst), limits, backend, method="mvp")
    report = evaluate_expected(inst, sol, method="mvp")
    report.bound = None
    report.wall_time = mvp.wall_time
    report.params = {"mean_value_objective": mvp.objective}
    return sol, report


def run_method(
    inst: Instance,
    method: str,
    *,
    group_size: int = 8,
    seed: int = 0,
    alpha: int = 2,
    iterations: int = 4,
    limits: Limits = Limits(),
    backend: SolverBackend | None = None,
    jobs: int = 1,
) -> tuple[FirstStageSolution, SolveReport, GroupingPlan | None]:
    """Dispatch one of :data:`METHODS` on ``inst``."""
    if method == "exact":
        sol, rep = solve_exact(inst, limits, backend)
        return sol, rep, None
    if method == "baseline":
        sol = baseline_schedule(inst)
        return sol, evaluate_expected(inst, sol, method="baseline"), None
    if method == "mvp":
        sol, rep = solve_mean_value(inst, limits, backend)
        return sol, rep, None
    if method in ("p-sgbd", "f-sgbd", "c-sgbd", "r-sgbd"):
        return run_sgbd(inst, method, group_size, seed, alpha, iterations, limits, backend, jobs)
    raise ValueError(f"unknown method {method!r}; choose from {', '.join(METHODS)}")


@dataclass(frozen=True)
class VssResult:
    stochastic: float  # z_T
    mean_value: float  # z_MVP
    vss_percent: float
    mean_value_feasible: bool = True

    @property
    def vss(self) -> float:
        return self.mean_value - self.stochastic


def compute_vss(
    inst: Instance,
    method: str = "exact",
    limits: Limits = Limits(),
    backend: SolverBackend | None = None,
    **method_opts,
) -> VssResult:
    _, stoch, _ = run_method(inst, method, limits=limits, backend=backend, **method_opts)
    _, mvp = solve_mean_value(inst, limits, backend)
    z_t, z_mvp = stoch.objective, mvp.objective
    pct = 100.0 * (z_mvp - z_t) / z_mvp if z_mvp > 0 else 0.0
    return VssResult(z_t, z_mvp, pct, not mvp.infeasible_scenarios)


# ---------------------------------------------------------------------------
# sweeps

SWEEP_PARAMS = ("J", "lambda", "nurses", "chairs")


def apply_param(inst: Instance, param: str, value: float) -> Instance:
    if param == "J":
        return inst.with_params(flex_limit=int(value))
    if param == "lambda":
        return inst.with_params(wait_weight=float(value))
    if param == "chairs":
        return inst.with_params(n_chairs=int(value))
    if param == "nurses":
        k = int(value)
        n = inst.n_patients
        return inst.with_params(
            n_nurses=k,
            primary_nurse=tuple(i % k for i in range(n)),
            eligible_nurses=tuple(tuple(range(k)) for _ in range(n)),
        )
    raise ValueError(f"unknown sweep parameter {param!r}; choose from {', '.join(SWEEP_PARAMS)}")


@dataclass
class SweepSpec:
    param: str
    values: Sequence[float]
    instance_seeds: Sequence[int] = (0,)
    n_patients: int = 6
    n_scenarios: int = 8
    paper_types: bool = False
    base: ClinicParams = field(default_factory=ClinicParams)
    method: str = "exact"
    method_opts: dict[str, Any] = field(default_factory=dict)
    limits: Limits = field(default_factory=Limits)

    def problems(self) -> list[str]:
        out = []
        if self.param not in SWEEP_PARAMS:
            out.append(f"param: {self.param!r} is not one of {SWEEP_PARAMS}")
        if not self.values:
            out.append("values: at least one value required")
        if not self.instance_seeds:
            out.append("instance_seeds: at least one seed required")
        for v in self.values:
            if self.param == "lambda" and not 0 <= v <= 1:
                out.append(f"values: lambda {v} outside [0, 1]")
            if self.param in ("J", "nurses", "chairs") and (v != int(v) or v < (self.param != "J")):
                out.append(f"values: {self.param} {v} is not a valid count")
        if self.method not in METHODS:
            out.append(f"method: unknown {self.method!r}")
        return out

    def instances(self) -> list[Instance]:
        out = []
        for k, seed in enumerate(self.instance_seeds):
            types = tuple(paper_instance_types(k % 10 + 1)) if self.paper_types else None
            spec = SamplerSpec(patient_types=types, n_patients=self.n_patients, n_scenarios=self.n_scenarios, seed=seed)
            out.append(sample_instance(spec, self.base))
        return out


@dataclass
class SweepRow:
    value: float
    objective: float
    wait: float
    overtime: float
    solved: int
    failures: list[str] = field(default_factory=list)


def run_sweep(spec: SweepSpec, instances: Sequence[Instance] | None = None) -> list[SweepRow]:
    """Re-solve every instance at every parameter value and average the results."""
    bad = spec.problems()
    if bad:
        raise ValueError("invalid sweep: " + "; ".join(bad))
    instances = list(instances) if instances is not None else spec.instances()
    rows = []
    for value in spec.values:
        objs, waits, overs, failures = [], [], [], []
        for k, inst in enumerate(instances):
            try:
                _, rep, _ = run_method(apply_param(inst, spec.param, value), spec.method, limits=spec.limits, **spec.method_opts)
            except (SolveError, ValueError) as exc:
                log.warning("sweep %s=%s instance %d failed: %s", spec.param, value, k, exc)
                failures.append(f"instance {k}: {exc}")
                continue
            objs.append(rep.objective)
            waits.append(rep.expected_wait)
            overs.append(rep.expected_overtime)
        mean = lambda xs: float(np.mean(xs)) if xs else math.nan  # noqa: E731
        rows.append(SweepRow(float(value), mean(objs), mean(waits), mean(overs), len(objs), failures))
    return rows


def default_seeds(seed: int, count: int) -> list[int]:
    return instance_seeds(seed, count)
