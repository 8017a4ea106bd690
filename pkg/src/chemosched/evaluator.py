"""Exact second-stage evaluation of a fixed schedule.

With the sequence, appointments and assignments fixed, each scenario's waits
and overtimes are the componentwise-smallest values satisfying the resource
precedence constraints. They come from one longest-path pass over the
precedence DAG, vectorised across scenarios:

    start_j = max(a_j, max_i start_i + d_ij)
    d_ij    = s + t_i  if i and j share a chair, else s (shared nurse)
"""

from __future__ import annotations

import graphlib
from dataclasses import dataclass

import numpy as np

from .core import TOL, FirstStageSolution, Instance, ScenarioOutcome, SolveReport, resource_edges


class CyclicScheduleError(ValueError):
    """The precedence relation among patients sharing a resource has a cycle."""


@dataclass(frozen=True)
class PrecedenceDag:
    order: tuple[int, ...]
    preds: tuple[tuple[tuple[int, bool], ...], ...]  # per patient: (pred, shares_chair)

    @classmethod
    def build(cls, inst: Instance, sol: FirstStageSolution) -> "PrecedenceDag":
        n = inst.n_patients
        preds = [[] for _ in range(n)]
        for i, j, same_chair in resource_edges(inst, sol):
            preds[j].append((i, same_chair))
        graph = {j: {i for i, _ in preds[j]} for j in range(n)}
        try:
            order = tuple(graphlib.TopologicalSorter(graph).static_order())
        except graphlib.CycleError as exc:
            raise CyclicScheduleError(f"resource precedence cycle {exc.args[1]}") from exc
        return cls(order, tuple(tuple(p) for p in preds))


def _check_dims(inst: Instance, sol: FirstStageSolution) -> None:
    n = inst.n_patients
    if sol.n_patients != n or sol.precedence.shape != (n, n) or sol.appointments.shape != (n,):
        raise ValueError(f"solution has {sol.n_patients} patients, instance has {n}")


def start_times(inst: Instance, sol: FirstStageSolution, durations: np.ndarray | None = None) -> np.ndarray:
    """Treatment start of every patient, shape (n_scenarios, n_patients)."""
    _check_dims(inst, sol)
    t = inst.durations if durations is None else np.atleast_2d(durations)
    dag = PrecedenceDag.build(inst, sol)
    s = inst.premed_duration
    a = sol.appointments
    start = np.empty_like(t, dtype=float)
    for j in dag.order:
        col = np.full(t.shape[0], a[j])
        for i, same_chair in dag.preds[j]:
            ready = start[:, i] + s
            if same_chair:
                ready = ready + t[:, i]
            np.maximum(col, ready, out=col)
        start[:, j] = col
    return start


def _outcomes(inst: Instance, sol: FirstStageSolution, t: np.ndarray):
    start = start_times(inst, sol, t)
    waits = start - sol.appointments[None, :]
    # exact zeros where no precedence pushes the start
    waits[waits < 0] = 0.0
    finish = start + inst.premed_duration + t - inst.shift_length
    over = np.zeros((t.shape[0], inst.n_nurses))
    nurse = np.asarray(sol.nurse)
    for n in range(inst.n_nurses):
        mine = nurse == n
        if mine.any():
            over[:, n] = np.maximum(0.0, finish[:, mine].max(axis=1))
    lam = inst.wait_weight
    cost = lam * waits.sum(axis=1) + (1.0 - lam) * over.sum(axis=1)
    return waits, over, cost


def evaluate_scenario(inst: Instance, sol: FirstStageSolution, scenario: int) -> ScenarioOutcome:
    t = inst.durations[[scenario]]
    waits, over, cost = _outcomes(inst, sol, t)
    return ScenarioOutcome(
        waits=waits[0],
        overtimes=over[0],
        cost=float(cost[0]),
        feasible=bool(np.all(over[0] <= inst.overtime_limit + TOL)),
    )


def evaluate_expected(inst: Instance, sol: FirstStageSolution, method: str = "evaluate") -> SolveReport:
    """Scenario-mean cost, wait total and overtime total of a fixed schedule."""
    waits, over, cost = _outcomes(inst, sol, inst.durations)
    bad = np.nonzero(np.any(over > inst.overtime_limit + TOL, axis=1))[0]
    return SolveReport(
        method=method,
        objective=float(np.mean(cost)),
        expected_wait=float(np.mean(waits.sum(axis=1))),
        expected_overtime=float(np.mean(over.sum(axis=1))),
        status="evaluated" if bad.size == 0 else "overtime-limit-violated",
        infeasible_scenarios=[int(w) for w in bad],
    )
