"""Extensive-form stochastic MILP and a thin solver-backend layer.

The model is assembled into a :class:`LinearModel`, a backend-neutral sparse
representation whose variables and rows are keyed by (symbol, indices) and
(family, indices). Families are named after what they enforce:

    tournament   u_ij + u_ji = 1
    order        a_j >= a_i - M (1 - u_ij)
    chair_one    sum_c y_ic = 1
    nurse_one    sum_n x_in = 1
    flex         alternative-nurse assignments <= J
    nurse_seq    a_j + w_j >= a_i + w_i + s - M (3 - u_ij - x_in - x_jn)          per scenario
    chair_seq    a_j + w_j >= a_i + w_i + s + t_i - M (3 - u_ij - y_ic - y_jc)    per scenario
    overtime     o_n >= a_i + w_i + s + t_i - H - M (1 - x_in)                   per scenario
    overtime_cap o_n <= L                                                       per scenario
    chair_sym    lexicographic chair use (optional)
    chair_load   sum_n o_n >= sum_i (s + t_i) y_ic - H                           per scenario (optional)
"""

from __future__ import annotations

import graphlib
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Protocol, Sequence

import numpy as np
from scipy import sparse
from scipy.optimize import Bounds, LinearConstraint, milp

from .core import FirstStageSolution, Instance, SolveReport, resource_edges, validate_first_stage
from .evaluator import evaluate_expected

log = logging.getLogger(__name__)

INF = np.inf


class SolveError(RuntimeError):
    def __init__(self, status: str, message: str = ""):
        super().__init__(message or status)
        self.status = status


@dataclass
class LinearModel:
    """Sparse MILP with named variables and rows (minimisation)."""

    instance: Instance
    scenarios: tuple[int, ...]
    var_index: dict[tuple, int] = field(default_factory=dict)
    lb: list[float] = field(default_factory=list)
    ub: list[float] = field(default_factory=list)
    integer: list[bool] = field(default_factory=list)
    cost: list[float] = field(default_factory=list)
    row_index: dict[tuple, int] = field(default_factory=dict)
    row_lo: list[float] = field(default_factory=list)
    row_hi: list[float] = field(default_factory=list)
    _rows: list[int] = field(default_factory=list, repr=False)
    _cols: list[int] = field(default_factory=list, repr=False)
    _vals: list[float] = field(default_factory=list, repr=False)

    def add_var(self, symbol: str, idx: tuple, lb=0.0, ub=INF, integer=False, cost=0.0) -> int:
        key = (symbol, *idx)
        if key in self.var_index:
            raise KeyError(f"duplicate variable {key}")
        k = len(self.lb)
        self.var_index[key] = k
        self.lb.append(lb)
        self.ub.append(ub)
        self.integer.append(integer)
        self.cost.append(cost)
        return k

    def add_row(self, family: str, idx: tuple, coeffs: Iterable[tuple[int, float]], lo=-INF, hi=INF) -> int:
        key = (family, *idx)
        if key in self.row_index:
            raise KeyError(f"duplicate row {key}")
        r = len(self.row_lo)
        self.row_index[key] = r
        for col, val in coeffs:
            self._rows.append(r)
            self._cols.append(col)
            self._vals.append(val)
        self.row_lo.append(lo)
        self.row_hi.append(hi)
        return r

    def var(self, symbol: str, *idx) -> int:
        return self.var_index[(symbol, *idx)]

    def count_vars(self, symbol: str) -> int:
        return sum(1 for k in self.var_index if k[0] == symbol)

    def count_rows(self, family: str, scenario: int | None = None) -> int:
        if scenario is None:
            return sum(1 for k in self.row_index if k[0] == family)
        return sum(1 for k in self.row_index if k[0] == family and k[1] == scenario)

    @property
    def n_vars(self) -> int:
        return len(self.lb)

    @property
    def n_rows(self) -> int:
        return len(self.row_lo)

    def matrix(self) -> sparse.csr_matrix:
        return sparse.csr_matrix(
            (self._vals, (self._rows, self._cols)), shape=(self.n_rows, self.n_vars)
        )

    def fix(self, symbol: str, idx: tuple, value: float) -> None:
        k = self.var(symbol, *idx)
        self.lb[k] = self.ub[k] = float(value)

    def fix_first_stage(self, sol: FirstStageSolution) -> None:
        """Pin u, a, x, y to ``sol`` so only the recourse variables remain free."""
        inst = self.instance
        n = inst.n_patients
        for i in range(n):
            self.fix("a", (i,), sol.appointments[i])
            for c in range(inst.n_chairs):
                self.fix("y", (i, c), 1.0 if sol.chair[i] == c else 0.0)
            for nn in inst.eligible_nurses[i]:
                self.fix("x", (i, nn), 1.0 if sol.nurse[i] == nn else 0.0)
            for j in range(n):
                if i != j:
                    self.fix("u", (i, j), float(sol.precedence[i, j]))

    def write_mps(self, path: str | Path, name: str = "CHEMOSCHED") -> Path:
        return write_mps(self, path, name)


# ---------------------------------------------------------------------------
# backends


@dataclass
class BackendResult:
    status: str  # optimal | feasible-with-gap | infeasible | time-limit | error
    x: np.ndarray | None
    objective: float | None
    bound: float | None
    message: str = ""


class SolverBackend(Protocol):
    name: str

    def solve(self, model: LinearModel, time_limit: float | None = None, rel_gap: float = 0.0) -> BackendResult:
        ...


class HighsBackend:
    """HiGHS branch-and-cut through :func:`scipy.optimize.milp`.

    HiGHS runs single-threaded here and is deterministic for a given model.
    """

    name = "highs"

    def __init__(self, presolve: bool = True):
        self.presolve = presolve

    def solve(self, model: LinearModel, time_limit: float | None = None, rel_gap: float = 0.0) -> BackendResult:
        options = {"presolve": self.presolve, "mip_rel_gap": rel_gap}
        if time_limit is not None:
            options["time_limit"] = float(time_limit)
        constraints = []
        if model.n_rows:
            constraints.append(LinearConstraint(model.matrix(), model.row_lo, model.row_hi))
        res = milp(
            c=np.asarray(model.cost),
            integrality=np.asarray(model.integer, dtype=int),
            bounds=Bounds(model.lb, model.ub),
            constraints=constraints,
            options=options,
        )
        x = None if res.x is None else np.asarray(res.x)
        bound = getattr(res, "mip_dual_bound", None)
        if res.status == 0:
            status = "optimal"
            if bound is None or not np.isfinite(bound):
                bound = res.fun
        elif res.status == 1:
            status = "feasible-with-gap" if x is not None else "time-limit"
        elif res.status == 2:
            status = "infeasible"
        else:
            status = "error"
        return BackendResult(
            status=status,
            x=x,
            objective=None if x is None else float(res.fun),
            bound=None if bound is None or not np.isfinite(bound) else float(bound),
            message=str(res.message),
        )


DEFAULT_BACKEND = HighsBackend()


# ---------------------------------------------------------------------------
# model construction


def build_extensive_form(
    inst: Instance,
    scenarios: Sequence[int] | None = None,
    *,
    symmetry_breaking: bool = True,
    integer_appointments: bool = False,
    tight_big_m: bool = True,
    load_cuts: bool = True,
) -> LinearModel:
    """Deterministic equivalent over ``scenarios`` (all of them by default).

    With ``tight_big_m`` each relaxed row gets the smallest constant that the
    overtime cap makes safe (a_i + w_i + s + t_i <= H + L); otherwise the
    instance-wide ``big_m`` is used everywhere. ``load_cuts`` adds the valid
    inequality "total overtime >= work queued on one chair - H" per chair and
    scenario. Neither option changes the optimum.
    """
    if scenarios is None:
        scenarios = range(inst.n_scenarios)
    scenarios = tuple(int(w) for w in scenarios)
    if not scenarios:
        raise ValueError("scenario subset must be non-empty")
    if any(not 0 <= w < inst.n_scenarios for w in scenarios):
        raise ValueError("scenario index out of range")

    m = LinearModel(inst, scenarios)
    P = range(inst.n_patients)
    C = range(inst.n_chairs)
    s = inst.premed_duration
    H = inst.shift_length
    L = inst.overtime_limit
    lam = inst.wait_weight
    t_sub = inst.durations[list(scenarios)]
    # latest feasible appointment of each patient
    a_max = H + L - s - t_sub.min(axis=0)
    weight = 1.0 / len(scenarios)
    if tight_big_m:
        m_order = lambda i: a_max[i]  # noqa: E731
        m_nurse = lambda w, i: H + L - inst.durations[w, i]  # noqa: E731
        m_chair = H + L
        m_over = L
    else:
        m_order = lambda i: inst.big_m  # noqa: E731
        m_nurse = lambda w, i: inst.big_m  # noqa: E731
        m_chair = m_over = inst.big_m

    for i in P:
        for j in P:
            if i != j:
                m.add_var("u", (i, j), 0, 1, True)
    for i in P:
        for c in C:
            # chairs are identical: patient i only needs the first i+1 labels
            ub = 0 if symmetry_breaking and c > i else 1
            m.add_var("y", (i, c), 0, ub, True)
    for i in P:
        for n in inst.eligible_nurses[i]:
            m.add_var("x", (i, n), 0, 1, True)
    for i in P:
        m.add_var("a", (i,), 0, a_max[i], integer_appointments)
    for w in scenarios:
        for i in P:
            m.add_var("w", (w, i), 0, H + L - s - inst.durations[w, i], False, weight * lam)
        for n in range(inst.n_nurses):
            m.add_var("o", (w, n), 0, INF, False, weight * (1.0 - lam))

    u = lambda i, j: m.var("u", i, j)  # noqa: E731
    y = lambda i, c: m.var("y", i, c)  # noqa: E731
    x = lambda i, n: m.var("x", i, n)  # noqa: E731
    a = lambda i: m.var("a", i)  # noqa: E731

    for i in P:
        for j in P:
            if j > i:
                m.add_row("tournament", (i, j), [(u(i, j), 1.0), (u(j, i), 1.0)], 1.0, 1.0)
    for i in P:
        for j in P:
            if i != j:
                M = m_order(i)
                m.add_row("order", (i, j), [(a(j), 1.0), (a(i), -1.0), (u(i, j), -M)], -M)
    for i in P:
        m.add_row("chair_one", (i,), [(y(i, c), 1.0) for c in C], 1.0, 1.0)
    for i in P:
        m.add_row("nurse_one", (i,), [(x(i, n), 1.0) for n in inst.eligible_nurses[i]], 1.0, 1.0)
    m.add_row(
        "flex",
        (),
        [(x(i, n), 1.0) for i in P for n in inst.eligible_nurses[i] if n != inst.primary_nurse[i]],
        -INF,
        inst.flex_limit,
    )
    if symmetry_breaking:
        for i in P:
            for c in C:
                if 1 <= c <= i:
                    # chair c is opened only after chair c-1 has been used by an earlier patient
                    coeffs = [(y(i, c), 1.0)] + [(y(k, c - 1), -1.0) for k in range(i)]
                    m.add_row("chair_sym", (i, c), coeffs, -INF, 0.0)

    for w in scenarios:
        t = inst.durations[w]
        W = lambda i: m.var("w", w, i)  # noqa: E731
        O = lambda n: m.var("o", w, n)  # noqa: E731
        for i in P:
            for j in P:
                if i == j:
                    continue
                shared = set(inst.eligible_nurses[i]) & set(inst.eligible_nurses[j])
                M = m_nurse(w, i)
                for n in sorted(shared):
                    m.add_row(
                        "nurse_seq",
                        (w, i, j, n),
                        [(a(j), 1.0), (W(j), 1.0), (a(i), -1.0), (W(i), -1.0),
                         (u(i, j), -M), (x(i, n), -M), (x(j, n), -M)],
                        s - 3 * M,
                    )
                M = m_chair
                for c in C:
                    m.add_row(
                        "chair_seq",
                        (w, i, j, c),
                        [(a(j), 1.0), (W(j), 1.0), (a(i), -1.0), (W(i), -1.0),
                         (u(i, j), -M), (y(i, c), -M), (y(j, c), -M)],
                        s + t[i] - 3 * M,
                    )
        for i in P:
            for n in inst.eligible_nurses[i]:
                m.add_row(
                    "overtime",
                    (w, i, n),
                    [(O(n), 1.0), (a(i), -1.0), (W(i), -1.0), (x(i, n), -m_over)],
                    s + t[i] - H - m_over,
                )
        for n in range(inst.n_nurses):
            m.add_row("overtime_cap", (w, n), [(O(n), 1.0)], -INF, L)
        if load_cuts:
            for c in C:
                coeffs = [(O(n), 1.0) for n in range(inst.n_nurses)]
                coeffs += [(y(i, c), -(s + t[i])) for i in P]
                m.add_row("chair_load", (w, c), coeffs, -H)
    return m


def mean_value_instance(inst: Instance) -> Instance:
    """Single-scenario copy with every infusion time replaced by its scenario mean."""
    return inst.with_params(durations=inst.durations.mean(axis=0, keepdims=True))


def build_mean_value_problem(inst: Instance, **kwargs) -> LinearModel:
    return build_extensive_form(mean_value_instance(inst), **kwargs)


# ---------------------------------------------------------------------------
# solving


@dataclass(frozen=True)
class Limits:
    time_limit: float | None = None
    rel_gap: float = 0.0


def extract_first_stage(model: LinearModel, xval: np.ndarray) -> FirstStageSolution:
    """Read (and tidy) the first-stage values from a backend solution vector.

    The sequence is rebuilt as a total order by appointment time, with ties
    following the resource precedence, and appointments are made monotone
    along it; this only absorbs solver tolerances.
    """
    inst = model.instance
    n = inst.n_patients
    u = np.zeros((n, n), dtype=np.int8)
    for i in range(n):
        for j in range(n):
            if i != j:
                u[i, j] = int(round(xval[model.var("u", i, j)]))
    a = np.array([max(0.0, xval[model.var("a", i)]) for i in range(n)])
    if any(model.integer[model.var("a", i)] for i in range(n)):
        a = np.round(a)
    nurse = [max(inst.eligible_nurses[i], key=lambda k: xval[model.var("x", i, k)]) for i in range(n)]
    chair = [max(range(inst.n_chairs), key=lambda c: xval[model.var("y", i, c)]) for i in range(n)]
    raw = FirstStageSolution(u, a, nurse, chair)
    return canonical_order(inst, raw)


def canonical_order(inst: Instance, sol: FirstStageSolution, tol: float = 1e-6) -> FirstStageSolution:
    n = inst.n_patients
    preds = {j: set() for j in range(n)}
    for i, j, _ in resource_edges(inst, sol):
        preds[j].add(i)
    topo = {p: k for k, p in enumerate(graphlib.TopologicalSorter(preds).static_order())}
    a = sol.appointments
    # group appointment times that agree within tolerance
    order = sorted(range(n), key=lambda i: (a[i], i))
    key = {}
    anchor = None
    for i in order:
        if anchor is None or a[i] - anchor > tol:
            anchor = a[i]
        key[i] = (anchor, topo[i], i)
    order = sorted(range(n), key=key.__getitem__)
    fixed = np.array(a, dtype=float)
    for prev, cur in zip(order, order[1:]):
        fixed[cur] = max(fixed[cur], fixed[prev])
    return FirstStageSolution.from_order(order, fixed, sol.nurse, sol.chair)


def solve(
    model: LinearModel,
    limits: Limits = Limits(),
    backend: SolverBackend | None = None,
    method: str = "exact",
) -> tuple[FirstStageSolution, SolveReport]:
    """Solve ``model``; the report re-evaluates the incumbent on the model's scenarios."""
    backend = backend or DEFAULT_BACKEND
    start = time.perf_counter()
    res = backend.solve(model, limits.time_limit, limits.rel_gap)
    if res.x is None:
        raise SolveError(res.status, f"no incumbent ({res.status}): {res.message}")
    sol = extract_first_stage(model, res.x)
    problems = validate_first_stage(model.instance, sol)
    if problems:
        raise SolveError("error", "backend returned an invalid schedule: " + "; ".join(problems))
    report = evaluate_expected(model.instance.restrict(model.scenarios), sol, method=method)
    report.status = res.status
    report.bound = res.bound
    report.wall_time = time.perf_counter() - start
    report.params = {"backend": backend.name, "model_objective": res.objective, "n_scenarios": len(model.scenarios)}
    return sol, report


def solve_exact(inst: Instance, limits: Limits = Limits(), backend: SolverBackend | None = None, **build):
    return solve(build_extensive_form(inst, **build), limits, backend, method="exact")


def evaluate_fixed_first_stage(
    inst: Instance,
    sol: FirstStageSolution,
    scenarios: Sequence[int] | None = None,
    backend: SolverBackend | None = None,
) -> float:
    """Expected cost of a fixed schedule over ``scenarios``.

    Without a backend this is the closed-form evaluator; with one, the
    recourse LP is solved by the backend on the fixed model (cross-check path).
    """
    if scenarios is None:
        scenarios = range(inst.n_scenarios)
    scenarios = list(scenarios)
    if backend is None:
        return evaluate_expected(inst.restrict(scenarios), sol).objective
    model = build_extensive_form(inst, scenarios, symmetry_breaking=False)
    model.fix_first_stage(sol)
    res = backend.solve(model)
    if res.x is None:
        raise SolveError(res.status, f"fixed-schedule recourse problem is {res.status}")
    return float(res.objective)


def recourse_values(model: LinearModel, xval: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Backend waits (scenario x patient) and overtimes (scenario x nurse)."""
    inst = model.instance
    w = np.array([[xval[model.var("w", s, i)] for i in range(inst.n_patients)] for s in model.scenarios])
    o = np.array([[xval[model.var("o", s, n)] for n in range(inst.n_nurses)] for s in model.scenarios])
    return w, o


# ---------------------------------------------------------------------------
# MPS export


def _fmt(v: float) -> str:
    return repr(float(v))


def write_mps(model: LinearModel, path: str | Path, name: str = "CHEMOSCHED") -> Path:
    """Fixed-form-compatible free MPS text (names have no spaces)."""
    vname = {k: "_".join(map(str, key)) for key, k in model.var_index.items()}
    rname = {r: "R_" + "_".join(map(str, key)) for key, r in model.row_index.items()}
    A = model.matrix().tocsc()
    lines = [f"NAME {name}", "ROWS", " N OBJ"]
    ranges = []
    for r in range(model.n_rows):
        lo, hi = model.row_lo[r], model.row_hi[r]
        if lo == hi:
            kind = "E"
        elif np.isinf(lo):
            kind = "L"
        elif np.isinf(hi):
            kind = "G"
        else:
            kind = "G"
            ranges.append(r)
        lines.append(f" {kind} {rname[r]}")
    lines.append("COLUMNS")
    in_int = False
    for k in range(model.n_vars):
        if model.integer[k] and not in_int:
            lines.append(" MARKER 'MARKER' 'INTORG'")
            in_int = True
        elif not model.integer[k] and in_int:
            lines.append(" MARKER 'MARKER' 'INTEND'")
            in_int = False
        if model.cost[k]:
            lines.append(f" {vname[k]} OBJ {_fmt(model.cost[k])}")
        col = A.getcol(k)
        for r, v in zip(col.indices, col.data):
            lines.append(f" {vname[k]} {rname[r]} {_fmt(v)}")
        if not model.cost[k] and col.nnz == 0:
            lines.append(f" {vname[k]} OBJ 0.0")
    if in_int:
        lines.append(" MARKER 'MARKER' 'INTEND'")
    lines.append("RHS")
    for r in range(model.n_rows):
        lo, hi = model.row_lo[r], model.row_hi[r]
        rhs = hi if np.isinf(lo) else lo
        if rhs:
            lines.append(f" RHS {rname[r]} {_fmt(rhs)}")
    if ranges:
        lines.append("RANGES")
        for r in ranges:
            lines.append(f" RNG {rname[r]} {_fmt(model.row_hi[r] - model.row_lo[r])}")
    lines.append("BOUNDS")
    for k in range(model.n_vars):
        lo, hi = model.lb[k], model.ub[k]
        if lo == hi:
            lines.append(f" FX BND {vname[k]} {_fmt(lo)}")
            continue
        if lo != 0:
            lines.append(f" LO BND {vname[k]} {_fmt(lo)}")
        if np.isinf(hi):
            if model.integer[k]:
                lines.append(f" PL BND {vname[k]}")
        else:
            lines.append(f" UP BND {vname[k]} {_fmt(hi)}")
    lines.append("ENDATA")
    path = Path(path)
    path.write_text("\n".join(lines) + "\n")
    return path
