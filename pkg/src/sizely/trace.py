"""Task-execution data model: CSV trace ingestion, synthetic trace generation,
and dataset validation.

Trace CSV header:
    task_id,task_type,machine,input_size_bytes,peak_mem_bytes,runtime_seconds,preset_mem_bytes,submit_index
(the submit_index column may be omitted; row order is used instead).

Machine CSV header:
    machine,mem_capacity_bytes
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

GIB = 1024 ** 3
DEFAULT_CAPACITY = 128 * GIB

TRACE_HEADER = [
    "task_id",
    "task_type",
    "machine",
    "input_size_bytes",
    "peak_mem_bytes",
    "runtime_seconds",
    "preset_mem_bytes",
    "submit_index",
]
MACHINE_HEADER = ["machine", "mem_capacity_bytes"]

RELATIONS = ("linear", "quadratic", "step", "constant")

# multiplicative noise is clipped here so peaks stay positive
NOISE_FLOOR = -0.9


class TraceParseError(ValueError):
    """Raised for malformed trace/machine files; message names the bad line."""


@dataclass(frozen=True)
class TaskRecord:
    """One historical (or replayed) task execution."""

    task_id: str
    task_type: str
    machine: str
    input_size: float      # bytes
    peak_mem: float        # bytes, ground truth
    runtime: float         # seconds
    preset_mem: float      # bytes, user-provided estimate
    submit_index: int


@dataclass(frozen=True)
class MachineSpec:
    name: str
    mem_capacity: float


@dataclass(frozen=True)
class TraceDataset:
    """Replayable dataset: records ordered by submit_index plus machine specs."""

    records: tuple[TaskRecord, ...]
    machines: dict[str, MachineSpec]

    def capacity_of(self, machine: str) -> float:
        return self.machines[machine].mem_capacity


@dataclass(frozen=True)
class TaskTypeSpec:
    """Generator parameters for one synthetic task type."""

    name: str
    relation: str                      # linear | quadratic | step | constant
    base_mem: float                    # bytes
    slope: float = 0.0                 # bytes per input byte
    noise_sigma: float = 0.0           # relative, >= 0
    instance_count: int = 1
    input_range: tuple[float, float] = (0.0, 0.0)
    runtime_range: tuple[float, float] = (60.0, 60.0)
    preset_multiplier: float = 2.0     # applied to the type's max generated peak


@dataclass(frozen=True)
class SyntheticSpec:
    task_types: tuple[TaskTypeSpec, ...]
    seed: int = 0


def _positive(value: str, what: str, line: int) -> float:
    v = float(value)
    if v <= 0:
        raise TraceParseError(f"line {line}: {what} must be > 0, got {value!r}")
    return v


def parse_trace(
    path: str | Path,
    machines_path: str | Path | None = None,
    default_capacity: float = DEFAULT_CAPACITY,
) -> TraceDataset:
    """Read a trace CSV into a TraceDataset sorted by submit_index.

    Machines come from the sidecar machine file when given, otherwise every
    machine named in the trace gets ``default_capacity``.
    """
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise TraceParseError(f"{path}: empty file") from None
        if header == TRACE_HEADER:
            has_index = True
        elif header == TRACE_HEADER[:-1]:
            has_index = False
        else:
            raise TraceParseError(f"{path}: unexpected header {header!r}")

        records = []
        seen_ids: set[str] = set()
        for line, row in enumerate(reader, start=2):
            if not row:
                continue
            expected = 8 if has_index else 7
            if len(row) != expected:
                raise TraceParseError(f"line {line}: expected {expected} fields, got {len(row)}")
            try:
                task_id = row[0]
                rec = TaskRecord(
                    task_id=task_id,
                    task_type=row[1],
                    machine=row[2],
                    input_size=float(row[3]),
                    peak_mem=_positive(row[4], "peak_mem_bytes", line),
                    runtime=_positive(row[5], "runtime_seconds", line),
                    preset_mem=_positive(row[6], "preset_mem_bytes", line),
                    submit_index=int(row[7]) if has_index else len(records),
                )
            except TraceParseError:
                raise
            except ValueError as exc:
                raise TraceParseError(f"line {line}: {exc}") from None
            if rec.input_size < 0:
                raise TraceParseError(f"line {line}: input_size_bytes must be >= 0")
            if task_id in seen_ids:
                raise TraceParseError(f"line {line}: duplicate task_id {task_id!r}")
            seen_ids.add(task_id)
            records.append(rec)

    records.sort(key=lambda r: r.submit_index)

    if machines_path is not None:
        machines = parse_machines(machines_path)
    else:
        machines = {
            name: MachineSpec(name, default_capacity)
            for name in sorted({r.machine for r in records})
        }
    return TraceDataset(records=tuple(records), machines=machines)


def parse_machines(path: str | Path) -> dict[str, MachineSpec]:
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != MACHINE_HEADER:
            raise TraceParseError(f"{path}: unexpected machine header {header!r}")
        machines = {}
        for line, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 2:
                raise TraceParseError(f"line {line}: expected 2 fields, got {len(row)}")
            cap = _positive(row[1], "mem_capacity_bytes", line)
            machines[row[0]] = MachineSpec(row[0], cap)
    return machines


def _fmt(value: float) -> str:
    # integers stay integers so hand-written CSVs round-trip cleanly
    if float(value).is_integer():
        return str(int(value))
    return repr(float(value))


def write_trace(ds: TraceDataset, path: str | Path) -> None:
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(TRACE_HEADER)
        for r in ds.records:
            writer.writerow([
                r.task_id,
                r.task_type,
                r.machine,
                _fmt(r.input_size),
                _fmt(r.peak_mem),
                _fmt(r.runtime),
                _fmt(r.preset_mem),
                r.submit_index,
            ])


def write_machines(ds: TraceDataset, path: str | Path) -> None:
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(MACHINE_HEADER)
        for name in sorted(ds.machines):
            writer.writerow([name, _fmt(ds.machines[name].mem_capacity)])


def _validate_spec(spec: SyntheticSpec) -> None:
    if not spec.task_types:
        raise ValueError("spec has no task types")
    for t in spec.task_types:
        if t.relation not in RELATIONS:
            raise ValueError(f"{t.name}: unknown relation {t.relation!r}")
        if t.base_mem <= 0:
            raise ValueError(f"{t.name}: base_mem must be > 0")
        if t.slope < 0:
            raise ValueError(f"{t.name}: slope must be >= 0")
        if t.noise_sigma < 0:
            raise ValueError(f"{t.name}: noise_sigma must be >= 0")
        if t.instance_count < 1:
            raise ValueError(f"{t.name}: instance_count must be >= 1")
        if t.preset_multiplier < 1:
            raise ValueError(f"{t.name}: preset_multiplier must be >= 1")
        lo, hi = t.input_range
        if lo < 0 or hi < lo:
            raise ValueError(f"{t.name}: bad input_range {t.input_range}")
        rlo, rhi = t.runtime_range
        if rlo <= 0 or rhi < rlo:
            raise ValueError(f"{t.name}: bad runtime_range {t.runtime_range}")


def _type_peaks(t: TaskTypeSpec, inputs: np.ndarray, eps: np.ndarray) -> np.ndarray:
    lo, hi = t.input_range
    if t.relation == "linear":
        return t.base_mem + t.slope * inputs * (1.0 + eps)
    if t.relation == "quadratic":
        denom = hi if hi > 0 else 1.0
        return t.base_mem + t.slope * inputs * inputs / denom * (1.0 + eps)
    if t.relation == "step":
        mid = 0.5 * (lo + hi)
        level = np.where(inputs > mid, 2.0 * t.base_mem, t.base_mem)
        return level * (1.0 + eps)
    # constant
    return np.full_like(eps, t.base_mem) * (1.0 + eps)


def generate_synthetic(spec: SyntheticSpec, machine_name: str = "m0") -> TraceDataset:
    """Generate a seeded synthetic trace; identical spec+seed gives an
    identical dataset.

    Instances of different types are interleaved round-robin in submit order.
    """
    _validate_spec(spec)
    rng = np.random.default_rng(spec.seed)

    per_type: list[list[TaskRecord]] = []
    max_peak = 0.0
    for t in spec.task_types:
        n = t.instance_count
        lo, hi = t.input_range
        inputs = rng.integers(int(lo), int(hi) + 1, size=n).astype(float)
        runtimes = rng.uniform(t.runtime_range[0], t.runtime_range[1], size=n)
        if t.noise_sigma > 0:
            eps = np.maximum(rng.normal(0.0, t.noise_sigma, size=n), NOISE_FLOOR)
        else:
            eps = np.zeros(n)
        peaks = _type_peaks(t, inputs, eps)
        preset = t.preset_multiplier * float(peaks.max())
        max_peak = max(max_peak, float(peaks.max()))
        per_type.append([
            TaskRecord(
                task_id=f"{t.name}_{i:04d}",
                task_type=t.name,
                machine=machine_name,
                input_size=float(inputs[i]),
                peak_mem=float(peaks[i]),
                runtime=float(runtimes[i]),
                preset_mem=preset,
                submit_index=0,  # assigned below
            )
            for i in range(n)
        ])

    # round-robin interleave so the replay sees all types throughout
    records = []
    idx = 0
    longest = max(len(rs) for rs in per_type)
    for i in range(longest):
        for rs in per_type:
            if i < len(rs):
                r = rs[i]
                records.append(
                    TaskRecord(
                        r.task_id, r.task_type, r.machine, r.input_size,
                        r.peak_mem, r.runtime, r.preset_mem, submit_index=idx,
                    )
                )
                idx += 1

    capacity = max(DEFAULT_CAPACITY, 1.25 * max_peak)
    machines = {machine_name: MachineSpec(machine_name, capacity)}
    return TraceDataset(records=tuple(records), machines=machines)


def filter_dataset(
    ds: TraceDataset, min_runtime: float = 0.0, min_instances: int = 0
) -> TraceDataset:
    """Drop short-running records and types with too few instances.

    Defaults keep everything.
    """
    records = [r for r in ds.records if r.runtime >= min_runtime]
    if min_instances > 0:
        counts: dict[str, int] = {}
        for r in records:
            counts[r.task_type] = counts.get(r.task_type, 0) + 1
        records = [r for r in records if counts[r.task_type] >= min_instances]
    return TraceDataset(records=tuple(records), machines=ds.machines)


def validate(ds: TraceDataset) -> list[str]:
    """Check dataset invariants; returns one message per violation."""
    violations = []
    seen_ids: set[str] = set()
    seen_idx: set[int] = set()
    prev = None
    for r in ds.records:
        if r.task_id in seen_ids:
            violations.append(f"{r.task_id}: duplicate task_id")
        seen_ids.add(r.task_id)
        if r.submit_index in seen_idx:
            violations.append(f"{r.task_id}: duplicate submit_index {r.submit_index}")
        seen_idx.add(r.submit_index)
        if prev is not None and r.submit_index < prev:
            violations.append(f"{r.task_id}: records not sorted by submit_index")
        prev = r.submit_index
        if r.peak_mem <= 0:
            violations.append(f"{r.task_id}: peak_mem must be > 0")
        if r.runtime <= 0:
            violations.append(f"{r.task_id}: runtime must be > 0")
        if r.preset_mem <= 0:
            violations.append(f"{r.task_id}: preset_mem must be > 0")
        if r.input_size < 0:
            violations.append(f"{r.task_id}: input_size must be >= 0")
        if r.machine not in ds.machines:
            violations.append(f"{r.task_id}: unknown machine {r.machine!r}")
        elif r.peak_mem > ds.machines[r.machine].mem_capacity:
            violations.append(
                f"{r.task_id}: peak_mem {r.peak_mem:.0f} exceeds capacity of {r.machine}"
            )
    return violations
