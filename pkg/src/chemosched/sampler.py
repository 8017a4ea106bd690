"""Instance generation from patient-type tables.

Randomness comes from ``numpy.random.default_rng`` (the PCG64 bit generator),
seeded explicitly. For a fixed seed the generated instance is identical across
runs and platforms.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .core import Instance, make_instance


@dataclass(frozen=True)
class TypeRow:
    patient_type: int
    fraction: float
    low: float
    high: float

    @property
    def midpoint(self) -> float:
        return 0.5 * (self.low + self.high)


# Share of each patient type and its infusion-duration range in minutes.
_TYPE_TABLE = (
    TypeRow(1, 0.2696, 16.0, 44.0),
    TypeRow(2, 0.0785, 29.0, 80.0),
    TypeRow(3, 0.3333, 74.0, 132.0),
    TypeRow(4, 0.3186, 125.0, 217.0),
)

# Patient-type labels 0..3 of the ten published nine-patient instances.
_PAPER_LABELS = (
    (0, 2, 0, 0, 3, 2, 1, 3, 2),
    (0, 3, 2, 2, 1, 2, 3, 3, 0),
    (2, 0, 2, 2, 2, 2, 3, 2, 3),
    (3, 0, 3, 0, 2, 0, 3, 2, 2),
    (3, 0, 3, 2, 0, 2, 2, 2, 2),
    (3, 2, 0, 2, 1, 0, 3, 2, 0),
    (0, 3, 3, 2, 0, 2, 2, 3, 0),
    (1, 2, 3, 3, 3, 2, 3, 0, 0),
    (2, 0, 1, 2, 2, 3, 0, 1, 3),
    (0, 0, 3, 2, 2, 3, 0, 2, 0),
)


def default_type_table() -> tuple[TypeRow, ...]:
    return _TYPE_TABLE


def paper_instance_types(instance_no: int) -> list[int]:
    """Patient types (1..4) of published instance ``instance_no`` (1..10)."""
    if not 1 <= instance_no <= len(_PAPER_LABELS):
        raise ValueError(f"instance_no must be in 1..{len(_PAPER_LABELS)}, got {instance_no}")
    return [k + 1 for k in _PAPER_LABELS[instance_no - 1]]


@dataclass(frozen=True)
class SamplerSpec:
    type_table: tuple[TypeRow, ...] = _TYPE_TABLE
    patient_types: tuple[int, ...] | None = None
    n_patients: int = 9
    n_scenarios: int = 48
    seed: int = 0

    def problems(self) -> list[str]:
        out = []
        total = sum(r.fraction for r in self.type_table)
        if abs(total - 1.0) > 1e-9:
            out.append(f"type_table: fractions sum to {total}, expected 1")
        for r in self.type_table:
            if not r.low <= r.high or r.low <= 0:
                out.append(f"type_table: type {r.patient_type} has a bad interval [{r.low}, {r.high}]")
        known = {r.patient_type for r in self.type_table}
        if self.patient_types is not None and any(k not in known for k in self.patient_types):
            out.append("patient_types: unknown type label")
        if self.n_scenarios < 1:
            out.append("n_scenarios: must be at least 1")
        if self.patient_types is None and self.n_patients < 1:
            out.append("n_patients: must be at least 1")
        return out


@dataclass(frozen=True)
class ClinicParams:
    """Resources and cost parameters shared by every sampled instance."""

    n_nurses: int = 2
    n_chairs: int = 3
    premed_duration: float = 15.0
    shift_length: float = 240.0
    overtime_limit: float | None = None
    wait_weight: float = 0.3
    flex_limit: int = 2
    primary_nurse: tuple[int, ...] | None = field(default=None)


def sample_instance(spec: SamplerSpec, base: ClinicParams = ClinicParams()) -> Instance:
    """Draw patient types (if not fixed) and uniform infusion durations."""
    bad = spec.problems()
    if bad:
        raise ValueError("invalid sampler spec: " + "; ".join(bad))
    rng = np.random.default_rng(spec.seed)
    table = {r.patient_type: r for r in spec.type_table}
    if spec.patient_types is not None:
        types = list(spec.patient_types)
    else:
        labels = [r.patient_type for r in spec.type_table]
        probs = np.array([r.fraction for r in spec.type_table])
        types = [int(k) for k in rng.choice(labels, size=spec.n_patients, p=probs / probs.sum())]
    low = np.array([table[k].low for k in types])
    high = np.array([table[k].high for k in types])
    durations = rng.uniform(low, high, size=(spec.n_scenarios, len(types)))
    return make_instance(
        durations,
        n_nurses=base.n_nurses,
        n_chairs=base.n_chairs,
        patient_types=types,
        primary_nurse=base.primary_nurse,
        premed_duration=base.premed_duration,
        shift_length=base.shift_length,
        overtime_limit=base.overtime_limit,
        wait_weight=base.wait_weight,
        flex_limit=base.flex_limit,
    )


def expected_durations(inst: Instance, table: Sequence[TypeRow] = _TYPE_TABLE) -> np.ndarray:
    """Per-patient expected infusion time: type midpoint, else the scenario mean."""
    mids = {r.patient_type: r.midpoint for r in table}
    sample_mean = inst.durations.mean(axis=0)
    return np.array(
        [mids.get(p.patient_type, sample_mean[p.index]) for p in inst.patients], dtype=float
    )


def paper_set(n_scenarios: int, seed: int, base: ClinicParams = ClinicParams()) -> list[Instance]:
    """The ten published patient mixes, each with its own derived seed."""
    seeds = instance_seeds(seed, len(_PAPER_LABELS))
    return [
        sample_instance(
            SamplerSpec(patient_types=tuple(paper_instance_types(k + 1)), n_scenarios=n_scenarios, seed=s),
            base,
        )
        for k, s in enumerate(seeds)
    ]


def instance_seeds(seed: int, count: int) -> list[int]:
    """Independent child seeds; child k is the same regardless of ``count``."""
    return [int(np.random.SeedSequence([seed, k]).generate_state(1, np.uint64)[0]) for k in range(count)]
