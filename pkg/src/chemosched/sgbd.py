"""Scenario-grouping decomposition heuristics.

Every variant partitions the scenarios into groups, solves the extensive form
restricted to each group, prices each group's schedule on the full scenario
set with the closed-form evaluator, and keeps the cheapest one.

Groupings:

* furthest / closest: grow each group from a random anchor by repeatedly
  adding the ungrouped scenario furthest from (closest to) the running
  centroid of the group's duration vectors;
* random: a seeded random partition;
* progressive: start from singletons, rank groups by their full-set cost and
  merge every ``alpha`` consecutive ones, for ``T`` rounds.
"""

from __future__ import annotations

import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

from .core import FirstStageSolution, Instance, SolveReport
from .evaluator import evaluate_expected
from .milp import Limits, SolveError, SolverBackend, build_extensive_form, solve

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class GroupingPlan:
    groups: tuple[tuple[int, ...], ...]
    method: str
    params: dict[str, Any] = field(default_factory=dict)
    seed: int | None = None

    @property
    def n_groups(self) -> int:
        return len(self.groups)

    def sizes(self) -> list[int]:
        return [len(g) for g in self.groups]

    def is_partition(self, n_scenarios: int) -> bool:
        flat = [w for g in self.groups for w in g]
        return len(flat) == n_scenarios and sorted(flat) == list(range(n_scenarios))

    def to_dict(self) -> dict[str, Any]:
        return {
            "kind": "chemosched.grouping",
            "method": self.method,
            "seed": self.seed,
            "params": dict(self.params),
            "groups": [list(g) for g in self.groups],
        }

    @classmethod
    def from_dict(cls, doc: dict[str, Any]) -> "GroupingPlan":
        return cls(
            groups=tuple(tuple(int(w) for w in g) for g in doc["groups"]),
            method=doc["method"],
            params=dict(doc.get("params", {})),
            seed=doc.get("seed"),
        )


def scenario_distance(t_a, t_b) -> float:
    """Euclidean distance between two infusion-duration vectors."""
    t_a = np.asarray(t_a, dtype=float)
    t_b = np.asarray(t_b, dtype=float)
    if t_a.shape != t_b.shape:
        raise ValueError(f"length mismatch: {t_a.shape} vs {t_b.shape}")
    return float(np.sqrt(np.sum((t_a - t_b) ** 2)))


def group_sizes(n_scenarios: int, group_size: int) -> list[int]:
    if not 1 <= group_size <= n_scenarios:
        raise ValueError(f"group size must be in 1..{n_scenarios}, got {group_size}")
    ng = math.ceil(n_scenarios / group_size)
    return [group_size] * (ng - 1) + [n_scenarios - group_size * (ng - 1)]


def _durations(source) -> np.ndarray:
    t = source.durations if isinstance(source, Instance) else source
    t = np.asarray(t, dtype=float)
    return t.reshape(len(t), -1)


def _centroid_grouping(t: np.ndarray, group_size: int, rng, furthest: bool, anchors) -> list[tuple[int, ...]]:
    grouped = np.zeros(len(t), dtype=bool)
    groups = []
    for g, size in enumerate(group_sizes(len(t), group_size)):
        free = np.flatnonzero(~grouped)
        if anchors is not None and g < len(anchors):
            anchor = int(anchors[g])
            if grouped[anchor]:
                raise ValueError(f"anchor scenario {anchor} is already grouped")
        else:
            anchor = int(free[rng.integers(len(free))])
        grouped[anchor] = True
        members = [anchor]
        centroid = t[anchor].copy()
        for z in range(1, size):
            free = np.flatnonzero(~grouped)
            dist = np.sqrt(((t[free] - centroid) ** 2).sum(axis=1))
            # argmax/argmin return the first hit, i.e. the lowest scenario index on ties
            pick = int(free[np.argmax(dist) if furthest else np.argmin(dist)])
            grouped[pick] = True
            members.append(pick)
            centroid = (z * centroid + t[pick]) / (z + 1)
        groups.append(tuple(members))
    return groups


def group_furthest(source, group_size: int, seed: int = 0, anchors: Sequence[int] | None = None) -> GroupingPlan:
    """Groups grown towards the scenarios furthest from the running centroid.

    ``anchors`` optionally fixes the starting scenario of the first groups;
    otherwise each anchor is drawn uniformly from the ungrouped scenarios.
    """
    rng = np.random.default_rng(seed)
    groups = _centroid_grouping(_durations(source), group_size, rng, True, anchors)
    return GroupingPlan(tuple(groups), "f-sgbd", {"group_size": group_size}, seed)


def group_closest(source, group_size: int, seed: int = 0, anchors: Sequence[int] | None = None) -> GroupingPlan:
    """Like :func:`group_furthest`, adding the closest scenario instead."""
    rng = np.random.default_rng(seed)
    groups = _centroid_grouping(_durations(source), group_size, rng, False, anchors)
    return GroupingPlan(tuple(groups), "c-sgbd", {"group_size": group_size}, seed)


def group_random(source, group_size: int, seed: int = 0) -> GroupingPlan:
    n = len(_durations(source))
    perm = np.random.default_rng(seed).permutation(n)
    groups, k = [], 0
    for size in group_sizes(n, group_size):
        groups.append(tuple(int(w) for w in perm[k : k + size]))
        k += size
    return GroupingPlan(tuple(groups), "r-sgbd", {"group_size": group_size}, seed)


GROUPERS = {"f-sgbd": group_furthest, "c-sgbd": group_closest, "r-sgbd": group_random}


# ---------------------------------------------------------------------------
# decomposition drivers


@dataclass
class Candidate:
    group: tuple[int, ...]
    solution: FirstStageSolution | None
    objective: float  # full-set expected cost, inf when unusable
    report: SolveReport | None = None
    note: str = ""


def _solve_group(inst: Instance, group, limits: Limits, backend, build_opts) -> Candidate:
    try:
        sol, sub = solve(build_extensive_form(inst, group, **build_opts), limits, backend, method="subproblem")
    except SolveError as exc:
        log.warning("subproblem on scenarios %s failed: %s", list(group), exc)
        return Candidate(tuple(group), None, math.inf, note=exc.status)
    full = evaluate_expected(inst, sol)
    if full.infeasible_scenarios:
        log.warning("schedule from group %s breaks the overtime limit on the full set", list(group))
        return Candidate(tuple(group), sol, math.inf, sub, note="overtime-limit")
    return Candidate(tuple(group), sol, full.objective, sub)


def _solve_groups(inst, groups, limits, backend, build_opts, jobs: int) -> list[Candidate]:
    if jobs > 1 and len(groups) > 1:
        with ProcessPoolExecutor(max_workers=min(jobs, len(groups))) as pool:
            futures = [pool.submit(_solve_group, inst, g, limits, backend, build_opts) for g in groups]
            return [f.result() for f in futures]
    return [_solve_group(inst, g, limits, backend, build_opts) for g in groups]


def _per_group(limits: Limits, n_solves: int) -> Limits:
    if limits.time_limit is None:
        return limits
    return Limits(limits.time_limit / max(1, n_solves), limits.rel_gap)


def _finish(inst, method, cands: list[Candidate], start, extra) -> tuple[FirstStageSolution, SolveReport]:
    usable = [k for k, c in enumerate(cands) if math.isfinite(c.objective)]
    if not usable:
        notes = {c.note for c in cands}
        status = "time-limit" if notes == {"time-limit"} else "infeasible"
        raise SolveError(status, f"every scenario-group subproblem failed ({', '.join(sorted(notes))})")
    best = min(usable, key=lambda k: (cands[k].objective, k))
    sol = cands[best].solution
    report = evaluate_expected(inst, sol, method=method)
    report.status = "heuristic"
    report.candidates = [c.objective if math.isfinite(c.objective) else None for c in cands]
    report.wall_time = time.perf_counter() - start
    report.params = {"best_group": best, "groups": [list(c.group) for c in cands], **extra}
    return sol, report


def run_static_sgbd(
    inst: Instance,
    plan: GroupingPlan,
    limits: Limits = Limits(),
    backend: SolverBackend | None = None,
    jobs: int = 1,
    **build_opts,
) -> tuple[FirstStageSolution, SolveReport]:
    """Solve one subproblem per group and keep the schedule cheapest on all scenarios."""
    if not plan.is_partition(inst.n_scenarios):
        raise ValueError("grouping plan is not a partition of the scenarios")
    start = time.perf_counter()
    cands = _solve_groups(inst, plan.groups, _per_group(limits, plan.n_groups), backend, build_opts, jobs)
    extra = {"plan_method": plan.method, "seed": plan.seed, **plan.params}
    return _finish(inst, plan.method, cands, start, extra)


def merge_sorted(groups: Sequence[Sequence[int]], objectives: Sequence[float], alpha: int) -> list[tuple[int, ...]]:
    """Rank groups by objective (ties by position) and merge each run of ``alpha``.

    The last merged group takes whatever is left when the count is not a
    multiple of ``alpha``.
    """
    ranked = sorted(range(len(groups)), key=lambda g: (objectives[g], g))
    merged = []
    for k in range(0, len(ranked), alpha):
        merged.append(tuple(sorted(w for g in ranked[k : k + alpha] for w in groups[g])))
    return merged


def run_progressive_sgbd(
    inst: Instance,
    alpha: int = 2,
    iterations: int = 4,
    limits: Limits = Limits(),
    backend: SolverBackend | None = None,
    jobs: int = 1,
    **build_opts,
) -> tuple[FirstStageSolution, SolveReport]:
    """Solution-based grouping: singletons first, merged by rank each round."""
    if alpha < 2 or iterations < 1:
        raise ValueError("need alpha >= 2 and at least one iteration")
    start = time.perf_counter()
    groups: list[tuple[int, ...]] = [(w,) for w in range(inst.n_scenarios)]
    history = []
    total = sum(math.ceil(inst.n_scenarios / alpha**k) for k in range(iterations))
    per = _per_group(limits, total)
    for it in range(1, iterations + 1):
        cands = _solve_groups(inst, groups, per, backend, build_opts, jobs)
        objs = [c.objective for c in cands]
        history.append([len(g) for g in groups])
        if it < iterations:
            groups = merge_sorted(groups, objs, alpha)
    return _finish(inst, "p-sgbd", cands, start, {"alpha": alpha, "iterations": iterations, "group_sizes": history})


def run_sgbd(
    inst: Instance,
    method: str,
    group_size: int = 8,
    seed: int = 0,
    alpha: int = 2,
    iterations: int = 4,
    limits: Limits = Limits(),
    backend: SolverBackend | None = None,
    jobs: int = 1,
    **build_opts,
) -> tuple[FirstStageSolution, SolveReport, GroupingPlan | None]:
    if method == "p-sgbd":
        sol, rep = run_progressive_sgbd(inst, alpha, iterations, limits, backend, jobs, **build_opts)
        return sol, rep, None
    if method not in GROUPERS:
        raise ValueError(f"unknown decomposition method {method!r}")
    plan = GROUPERS[method](inst, min(group_size, inst.n_scenarios), seed)
    sol, rep = run_static_sgbd(inst, plan, limits, backend, jobs, **build_opts)
    return sol, rep, plan
