"""Domain types and validators shared by every part of the scheduler.

Times are minutes throughout. Patients, nurses, chairs and scenarios are
0-based indices; a patient's ``patient_type`` (1..4) is only metadata used by
the sampler and the baseline rule.
"""

from __future__ import annotations

import graphlib
from dataclasses import dataclass, field, replace
from typing import Any, Sequence

import numpy as np

TOL = 1e-6


def _frozen(values, dtype) -> np.ndarray:
    arr = np.array(values, dtype=dtype)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class PatientSpec:
    index: int
    patient_type: int | None = None


@dataclass(frozen=True, eq=False)
class Instance:
    """One daily scheduling problem: patients, staff, chairs and scenarios.

    ``durations`` has shape (n_scenarios, n_patients); every scenario has
    probability ``1 / n_scenarios``. ``big_m`` defaults to the smallest value
    that provably deactivates every relaxed big-M row (see ``safe_big_m``).
    """

    patients: tuple[PatientSpec, ...]
    n_nurses: int
    n_chairs: int
    primary_nurse: tuple[int, ...]
    eligible_nurses: tuple[tuple[int, ...], ...]
    durations: np.ndarray
    premed_duration: float = 15.0
    shift_length: float = 240.0
    overtime_limit: float = 240.0
    wait_weight: float = 0.3
    flex_limit: int = 2
    big_m: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "durations", _frozen(self.durations, float))
        object.__setattr__(self, "patients", tuple(self.patients))
        object.__setattr__(self, "primary_nurse", tuple(int(n) for n in self.primary_nurse))
        object.__setattr__(
            self, "eligible_nurses", tuple(tuple(int(n) for n in ns) for ns in self.eligible_nurses)
        )
        if not self.big_m:
            object.__setattr__(self, "big_m", safe_big_m(self))

    @property
    def n_patients(self) -> int:
        return len(self.patients)

    @property
    def n_scenarios(self) -> int:
        return int(self.durations.shape[0])

    def restrict(self, scenarios: Sequence[int]) -> "Instance":
        """Same instance over a subset of the scenarios (big-M kept)."""
        idx = list(scenarios)
        return replace(self, durations=self.durations[idx])

    def with_params(self, **changes) -> "Instance":
        """Copy with some parameters changed; big-M is recomputed unless given."""
        changes.setdefault("big_m", 0.0)
        return replace(self, **changes)

    def is_primary(self, patient: int, nurse: int) -> bool:
        return self.primary_nurse[patient] == nurse


def safe_big_m(inst: Instance) -> float:
    if inst.durations.size == 0:
        return float(inst.shift_length + inst.overtime_limit)
    per_scenario = (inst.premed_duration + inst.durations).sum(axis=1)
    return float(inst.shift_length + inst.overtime_limit + per_scenario.max())


def make_instance(
    durations,
    *,
    n_nurses: int = 2,
    n_chairs: int = 3,
    patient_types: Sequence[int | None] | None = None,
    primary_nurse: Sequence[int] | None = None,
    eligible_nurses: Sequence[Sequence[int]] | None = None,
    premed_duration: float = 15.0,
    shift_length: float = 240.0,
    overtime_limit: float | None = None,
    wait_weight: float = 0.3,
    flex_limit: int = 2,
    big_m: float = 0.0,
) -> Instance:
    """Build an :class:`Instance` with the usual defaults.

    Primary nurses default to ``i mod n_nurses``, every nurse is eligible for
    every patient, and the overtime limit defaults to the shift length.
    """
    t = np.atleast_2d(np.asarray(durations, dtype=float))
    n_pat = t.shape[1]
    if patient_types is None:
        patient_types = [None] * n_pat
    if primary_nurse is None:
        primary_nurse = [i % n_nurses for i in range(n_pat)]
    if eligible_nurses is None:
        eligible_nurses = [tuple(range(n_nurses))] * n_pat
    return Instance(
        patients=tuple(PatientSpec(i, k) for i, k in enumerate(patient_types)),
        n_nurses=n_nurses,
        n_chairs=n_chairs,
        primary_nurse=tuple(primary_nurse),
        eligible_nurses=tuple(tuple(ns) for ns in eligible_nurses),
        durations=t,
        premed_duration=premed_duration,
        shift_length=shift_length,
        overtime_limit=shift_length if overtime_limit is None else overtime_limit,
        wait_weight=wait_weight,
        flex_limit=flex_limit,
        big_m=big_m,
    )


@dataclass(frozen=True, eq=False)
class FirstStageSolution:
    """Sequence, appointment times, nurse and chair of every patient.

    ``precedence[i, j] == 1`` means patient i precedes patient j in the daily
    list; the diagonal is ignored.
    """

    precedence: np.ndarray
    appointments: np.ndarray
    nurse: tuple[int, ...]
    chair: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "precedence", _frozen(self.precedence, np.int8))
        object.__setattr__(self, "appointments", _frozen(self.appointments, float))
        object.__setattr__(self, "nurse", tuple(int(n) for n in self.nurse))
        object.__setattr__(self, "chair", tuple(int(c) for c in self.chair))

    @classmethod
    def from_order(cls, order: Sequence[int], appointments, nurse, chair) -> "FirstStageSolution":
        """Build the precedence tournament from a full patient ordering."""
        n = len(order)
        pos = np.empty(n, dtype=int)
        pos[list(order)] = np.arange(n)
        u = (pos[:, None] < pos[None, :]).astype(np.int8)
        return cls(u, appointments, nurse, chair)

    @classmethod
    def from_appointments(cls, appointments, nurse, chair) -> "FirstStageSolution":
        """Sequence patients by appointment time, ties by index."""
        a = np.asarray(appointments, dtype=float)
        order = sorted(range(len(a)), key=lambda i: (a[i], i))
        return cls.from_order(order, a, nurse, chair)

    @property
    def n_patients(self) -> int:
        return len(self.nurse)

    def order(self) -> list[int]:
        """Patients sorted by number of predecessors (a total order when u is transitive)."""
        wins = self.precedence.sum(axis=0) - np.diag(self.precedence)
        return sorted(range(self.n_patients), key=lambda j: (wins[j], self.appointments[j], j))

    def n_alternative(self, inst: Instance) -> int:
        return sum(1 for i, n in enumerate(self.nurse) if n != inst.primary_nurse[i])

    def same_as(self, other: "FirstStageSolution") -> bool:
        return (
            np.array_equal(self.precedence, other.precedence)
            and np.array_equal(self.appointments, other.appointments)
            and self.nurse == other.nurse
            and self.chair == other.chair
        )


@dataclass(frozen=True)
class ScenarioOutcome:
    waits: np.ndarray
    overtimes: np.ndarray
    cost: float
    feasible: bool = True


@dataclass
class SolveReport:
    """Outcome of a solve or an evaluation over the full scenario set.

    ``objective`` is the expected weighted cost; ``expected_wait`` and
    ``expected_overtime`` are scenario means of the patient-wait total and the
    nurse-overtime total.
    """

    method: str
    objective: float
    expected_wait: float
    expected_overtime: float
    wall_time: float = 0.0
    status: str = "evaluated"
    bound: float | None = None
    exact_reference: float | None = None
    gap_percent: float | None = None
    candidates: list[float] = field(default_factory=list)
    infeasible_scenarios: list[int] = field(default_factory=list)
    params: dict[str, Any] = field(default_factory=dict)

    def set_reference(self, exact: float) -> None:
        self.exact_reference = float(exact)
        self.gap_percent = 100.0 * (self.objective - exact) / exact if exact else 0.0

    def to_dict(self, *, timing: bool = False) -> dict[str, Any]:
        out = {
            "method": self.method,
            "status": self.status,
            "objective": self.objective,
            "expected_wait": self.expected_wait,
            "expected_overtime": self.expected_overtime,
            "bound": self.bound,
            "exact_reference": self.exact_reference,
            "gap_percent": self.gap_percent,
            "candidates": list(self.candidates),
            "infeasible_scenarios": list(self.infeasible_scenarios),
            "params": dict(self.params),
        }
        if timing:
            out["wall_time"] = self.wall_time
        return _plain(out)


def _plain(value):
    """Strip numpy scalar and array types so the report is JSON-ready."""
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple, np.ndarray)):
        return [_plain(v) for v in value]
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    if isinstance(value, np.bool_):
        return bool(value)
    return value


def validate_instance(inst: Instance) -> list[str]:
    """Describe every broken instance invariant; empty when the instance is sound."""
    problems = []
    n_pat = inst.n_patients
    if [p.index for p in inst.patients] != list(range(n_pat)):
        problems.append("patients: indices must be 0..n-1 in order")
    for p in inst.patients:
        if p.patient_type is not None and p.patient_type not in (1, 2, 3, 4):
            problems.append(f"patients: patient {p.index} has type {p.patient_type}, expected 1..4")
    if inst.n_nurses < 1:
        problems.append("n_nurses: need at least one nurse")
    if inst.n_chairs < 1:
        problems.append("n_chairs: need at least one chair")
    if len(inst.primary_nurse) != n_pat:
        problems.append("primary_nurse: one entry per patient required")
    if len(inst.eligible_nurses) != n_pat:
        problems.append("eligible_nurses: one entry per patient required")
    else:
        for i, ns in enumerate(inst.eligible_nurses):
            if not ns or any(n < 0 or n >= inst.n_nurses for n in ns) or len(set(ns)) != len(ns):
                problems.append(f"eligible_nurses: patient {i} has an invalid nurse set {list(ns)}")
            elif i < len(inst.primary_nurse) and inst.primary_nurse[i] not in ns:
                problems.append(
                    f"primary_nurse: patient {i} has primary nurse {inst.primary_nurse[i]} "
                    "outside its eligible set"
                )
    t = inst.durations
    if t.ndim != 2 or t.shape[0] < 1 or t.shape[1] != n_pat:
        problems.append(f"durations: expected shape (n_scenarios>=1, {n_pat}), got {t.shape}")
    elif not np.all(np.isfinite(t)) or np.any(t <= 0):
        problems.append("durations: every infusion duration must be finite and positive")
    if inst.premed_duration < 0:
        problems.append("premed_duration: must be nonnegative")
    if not 0.0 <= inst.wait_weight <= 1.0:
        problems.append(f"wait_weight (lambda): {inst.wait_weight} outside [0, 1]")
    if inst.shift_length <= 0:
        problems.append("shift_length: must be positive")
    if inst.overtime_limit < 0:
        problems.append("overtime_limit: must be nonnegative")
    if inst.flex_limit < 0 or int(inst.flex_limit) != inst.flex_limit:
        problems.append("flex_limit: must be a nonnegative integer")
    if t.ndim == 2 and t.size and inst.big_m < safe_big_m(inst) - TOL:
        problems.append(f"big_m: {inst.big_m} is below the safe value {safe_big_m(inst)}")
    return problems


def resource_edges(inst: Instance, sol: FirstStageSolution) -> list[tuple[int, int, bool]]:
    """Precedence edges (i, j, shares_chair) between patients sharing a nurse or a chair."""
    edges = []
    u = sol.precedence
    for i in range(sol.n_patients):
        for j in range(sol.n_patients):
            if i == j or not u[i, j]:
                continue
            same_chair = sol.chair[i] == sol.chair[j]
            if same_chair or sol.nurse[i] == sol.nurse[j]:
                edges.append((i, j, same_chair))
    return edges


def find_cycle(n: int, edges) -> list[int] | None:
    graph = {j: set() for j in range(n)}
    for i, j, *_ in edges:
        graph[j].add(i)
    try:
        tuple(graphlib.TopologicalSorter(graph).static_order())
    except graphlib.CycleError as exc:
        return list(exc.args[1])
    return None


def validate_first_stage(inst: Instance, sol: FirstStageSolution, tol: float = TOL) -> list[str]:
    """Describe every broken first-stage rule; empty when the schedule is valid."""
    n = inst.n_patients
    u = sol.precedence
    if u.shape != (n, n) or sol.appointments.shape != (n,) or len(sol.nurse) != n or len(sol.chair) != n:
        return [f"dimensions: solution does not match an instance with {n} patients"]
    problems = []
    off = ~np.eye(n, dtype=bool)
    if np.any((u[off] != 0) & (u[off] != 1)):
        problems.append("precedence: entries must be 0 or 1")
    for i in range(n):
        for j in range(i + 1, n):
            if u[i, j] + u[j, i] != 1:
                problems.append(f"precedence: tournament rule broken for patients {i} and {j}")
    a = sol.appointments
    if np.any(a < -tol):
        problems.append("appointments: must be nonnegative")
    for i in range(n):
        for j in range(n):
            if i != j and u[i, j] == 1 and a[j] < a[i] - tol:
                problems.append(
                    f"appointments: patient {i} precedes {j} but is booked later ({a[i]} > {a[j]})"
                )
    for i in range(n):
        if sol.nurse[i] not in inst.eligible_nurses[i]:
            problems.append(f"nurse: patient {i} assigned to ineligible nurse {sol.nurse[i]}")
        if not 0 <= sol.chair[i] < inst.n_chairs:
            problems.append(f"chair: patient {i} assigned to unknown chair {sol.chair[i]}")
    n_alt = sol.n_alternative(inst)
    if n_alt > inst.flex_limit:
        problems.append(
            f"flexibility: {n_alt} alternative-nurse assignments exceed the limit {inst.flex_limit}"
        )
    cycle = find_cycle(n, resource_edges(inst, sol))
    if cycle is not None:
        problems.append(f"precedence: cycle among patients sharing a resource {cycle}")
    return problems
