"""JSON documents for instances, solutions, reports and grouping plans.

Floats are written with ``repr`` precision so a write-then-read cycle is
bit-exact, and keys are emitted in a fixed order so identical inputs give
byte-identical files.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any

import numpy as np

from .core import FirstStageSolution, Instance, PatientSpec, SolveReport

INSTANCE_KIND = "chemosched.instance"
SOLUTION_KIND = "chemosched.solution"
SCHEMA_VERSION = 1


def _num(x: float) -> float | int:
    x = float(x)
    return int(x) if x.is_integer() and abs(x) < 2**53 else x


def instance_to_dict(inst: Instance) -> dict[str, Any]:
    return {
        "kind": INSTANCE_KIND,
        "version": SCHEMA_VERSION,
        "n_nurses": inst.n_nurses,
        "n_chairs": inst.n_chairs,
        "premed_duration": _num(inst.premed_duration),
        "shift_length": _num(inst.shift_length),
        "overtime_limit": _num(inst.overtime_limit),
        "wait_weight": _num(inst.wait_weight),
        "flex_limit": int(inst.flex_limit),
        "big_m": _num(inst.big_m),
        "patients": [
            {
                "index": p.index,
                "patient_type": p.patient_type,
                "primary_nurse": inst.primary_nurse[p.index],
                "eligible_nurses": list(inst.eligible_nurses[p.index]),
            }
            for p in inst.patients
        ],
        "durations": [[_num(v) for v in row] for row in inst.durations],
    }


def instance_from_dict(doc: dict[str, Any]) -> Instance:
    if doc.get("kind", INSTANCE_KIND) != INSTANCE_KIND:
        raise ValueError(f"not an instance document: kind={doc.get('kind')!r}")
    n_nurses = int(doc["n_nurses"])
    patients = doc["patients"]
    shift = float(doc.get("shift_length", 240.0))
    durations = np.asarray(doc["durations"], dtype=float).reshape(-1, len(patients))
    return Instance(
        patients=tuple(PatientSpec(int(p["index"]), p.get("patient_type")) for p in patients),
        n_nurses=n_nurses,
        n_chairs=int(doc["n_chairs"]),
        primary_nurse=tuple(int(p.get("primary_nurse", p["index"] % n_nurses)) for p in patients),
        eligible_nurses=tuple(
            tuple(p.get("eligible_nurses", range(n_nurses))) for p in patients
        ),
        durations=durations,
        premed_duration=float(doc.get("premed_duration", 15.0)),
        shift_length=shift,
        overtime_limit=float(doc.get("overtime_limit", shift)),
        wait_weight=float(doc.get("wait_weight", 0.3)),
        flex_limit=int(doc.get("flex_limit", 2)),
        big_m=float(doc.get("big_m", 0.0)),
    )


def solution_to_dict(sol: FirstStageSolution) -> dict[str, Any]:
    return {
        "kind": SOLUTION_KIND,
        "version": SCHEMA_VERSION,
        "order": sol.order(),
        "appointments": [_num(v) for v in sol.appointments],
        "nurse": list(sol.nurse),
        "chair": list(sol.chair),
        "precedence": sol.precedence.astype(int).tolist(),
    }


def solution_from_dict(doc: dict[str, Any]) -> FirstStageSolution:
    if doc.get("kind", SOLUTION_KIND) != SOLUTION_KIND:
        raise ValueError(f"not a solution document: kind={doc.get('kind')!r}")
    if "precedence" in doc:
        return FirstStageSolution(doc["precedence"], doc["appointments"], doc["nurse"], doc["chair"])
    return FirstStageSolution.from_order(doc["order"], doc["appointments"], doc["nurse"], doc["chair"])


def dumps(doc: Any) -> str:
    return json.dumps(doc, indent=2, allow_nan=False) + "\n"


def write_json(path: str | Path, doc: Any) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps(doc))
    return path


def read_json(path: str | Path) -> Any:
    return json.loads(Path(path).read_text())


def save_instance(path, inst: Instance) -> Path:
    return write_json(path, instance_to_dict(inst))


def load_instance(path) -> Instance:
    return instance_from_dict(read_json(path))


def save_solution(path, sol: FirstStageSolution) -> Path:
    return write_json(path, solution_to_dict(sol))


def load_solution(path) -> FirstStageSolution:
    return solution_from_dict(read_json(path))


def save_report(path, report: SolveReport) -> Path:
    return write_json(path, report.to_dict())
