"""Deterministic trace replay.

Each record is sized by the configured method, attempted against its true
peak, retried through the method's failure handling when under-allocated,
and folded back into the method's state on success. Wastage is accounted in
gigabyte-hours: over-allocation for the full runtime on success, the whole
allocation for ttf of the runtime on a failed attempt.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field

from .baselines import (
    BASELINE_CLASSES,
    BaselineKind,
    TovarPpmMethod,
    WittWastageMethod,
)
from .raq import GatingConfig
from .sizer import AllocationMethod, AllocationSource, CapacityError, MemorySizer
from .trace import GIB, TaskRecord, TraceDataset

SECONDS_PER_HOUR = 3600.0

SIZEY = "sizey"
METHOD_NAMES = (SIZEY,) + tuple(k.value for k in BaselineKind)

REPORT_CSV_HEADER = "method,task_type,wasted_gbh,failures,runtime_hours,permanent_failures"


@dataclass(frozen=True)
class SimulationConfig:
    method: str = SIZEY
    ttf: float = 1.0
    gating: GatingConfig = field(default_factory=GatingConfig)
    update_mode: str = "full"
    offset_mode: str = "dynamic"
    seed: int = 42
    max_attempts: int | None = None   # None: retry until capacity is exhausted

    def __post_init__(self):
        if not 0.0 < self.ttf <= 1.0:
            raise ValueError("ttf must be in (0, 1]")
        if self.method not in METHOD_NAMES:
            raise ValueError(f"unknown method {self.method!r}")


@dataclass(frozen=True)
class AttemptOutcome:
    task_id: str
    task_type: str
    attempt: int
    allocated: float
    succeeded: bool
    elapsed: float        # seconds
    wasted_gbh: float
    source: str
    raw_estimate: float


@dataclass(frozen=True)
class MetricRow:
    wasted_gbh: float = 0.0
    failures: int = 0
    runtime_hours: float = 0.0
    permanent_failures: int = 0


@dataclass
class WastageReport:
    method: str
    total: MetricRow
    per_type: dict[str, MetricRow]
    attempts: list[AttemptOutcome]
    # wall time of each observe_completion call; diagnostic only, never serialized
    update_seconds: list[float] = field(default_factory=list)


def build_method(cfg: SimulationConfig, machines) -> AllocationMethod:
    if cfg.method == SIZEY:
        return MemorySizer(
            machines,
            gating=cfg.gating,
            offset_mode=cfg.offset_mode,
            update_mode=cfg.update_mode,
            ttf=cfg.ttf,
            seed=cfg.seed,
        )
    kind = BaselineKind(cfg.method)
    cls = BASELINE_CLASSES[kind]
    if cls in (WittWastageMethod, TovarPpmMethod):
        return cls(machines, ttf=cfg.ttf)
    return cls(machines)


def attempt_task(alloc: float, rec: TaskRecord, ttf: float, attempt: int = 1,
                 source: str = "", raw_estimate: float = 0.0) -> AttemptOutcome:
    """Run one attempt: success iff the allocation covers the true peak.

    A failed attempt yields nothing, so its whole allocation counts as
    wasted for the ttf fraction of the runtime it occupied.
    """
    if alloc <= 0:
        raise ValueError("allocation must be > 0")
    succeeded = alloc >= rec.peak_mem
    if succeeded:
        elapsed = rec.runtime
        wasted = (alloc - rec.peak_mem) * elapsed
    else:
        elapsed = ttf * rec.runtime
        wasted = alloc * elapsed
    return AttemptOutcome(
        task_id=rec.task_id,
        task_type=rec.task_type,
        attempt=attempt,
        allocated=alloc,
        succeeded=succeeded,
        elapsed=elapsed,
        wasted_gbh=wasted / GIB / SECONDS_PER_HOUR,
        source=source,
        raw_estimate=raw_estimate,
    )


def aggregate(method: str, outcomes: list[AttemptOutcome],
              permanent_by_type: dict[str, int] | None = None) -> WastageReport:
    """Sum attempt wastage, failed-attempt counts, and elapsed hours per type."""
    permanent_by_type = permanent_by_type or {}
    acc: dict[str, dict] = {}
    for out in outcomes:
        row = acc.setdefault(
            out.task_type, {"wasted_gbh": 0.0, "failures": 0, "runtime_hours": 0.0}
        )
        row["wasted_gbh"] += out.wasted_gbh
        row["failures"] += 0 if out.succeeded else 1
        row["runtime_hours"] += out.elapsed / SECONDS_PER_HOUR
    for t in permanent_by_type:
        acc.setdefault(t, {"wasted_gbh": 0.0, "failures": 0, "runtime_hours": 0.0})
    per_type = {
        t: MetricRow(
            wasted_gbh=row["wasted_gbh"],
            failures=row["failures"],
            runtime_hours=row["runtime_hours"],
            permanent_failures=permanent_by_type.get(t, 0),
        )
        for t, row in acc.items()
    }
    total = MetricRow(
        wasted_gbh=sum(r.wasted_gbh for r in per_type.values()),
        failures=sum(r.failures for r in per_type.values()),
        runtime_hours=sum(r.runtime_hours for r in per_type.values()),
        permanent_failures=sum(r.permanent_failures for r in per_type.values()),
    )
    return WastageReport(method=method, total=total, per_type=per_type, attempts=list(outcomes))


def run_simulation(ds: TraceDataset, cfg: SimulationConfig) -> WastageReport:
    """Replay the dataset in submit order with the configured method.

    Permanently failed tasks (capacity exhausted or attempt cap reached) are
    recorded in the report; they never feed the learning step because their
    true peak was never observed.
    """
    method = build_method(cfg, ds.machines)
    outcomes: list[AttemptOutcome] = []
    permanent: dict[str, int] = {}
    update_seconds: list[float] = []

    for rec in ds.records:
        cap = ds.capacity_of(rec.machine)
        sizing = method.size(rec)   # submission-time decision, scored prequentially
        dec = sizing
        attempt = 1
        while True:
            out = attempt_task(
                dec.allocated, rec, cfg.ttf, attempt, dec.source.value, dec.raw_estimate
            )
            outcomes.append(out)
            if out.succeeded:
                agg_pred = (
                    sizing.raw_estimate
                    if sizing.source is AllocationSource.Model
                    else None
                )
                t0 = time.perf_counter()
                method.observe_completion(
                    rec, rec.peak_mem, sizing.model_predictions, agg_pred
                )
                update_seconds.append(time.perf_counter() - t0)
                break
            if dec.allocated >= cap or (
                cfg.max_attempts is not None and attempt >= cfg.max_attempts
            ):
                permanent[rec.task_type] = permanent.get(rec.task_type, 0) + 1
                break
            attempt += 1
            try:
                dec = method.handle_failure(rec, attempt, dec.allocated)
            except CapacityError:
                permanent[rec.task_type] = permanent.get(rec.task_type, 0) + 1
                break

    report = aggregate(cfg.method, outcomes, permanent)
    report.update_seconds = update_seconds
    return report


def _row_dict(row: MetricRow) -> dict:
    return {
        "wasted_gbh": row.wasted_gbh,
        "failures": row.failures,
        "runtime_hours": row.runtime_hours,
        "permanent_failures": row.permanent_failures,
    }


def report_to_json(report: WastageReport) -> str:
    payload = {
        "method": report.method,
        "total": _row_dict(report.total),
        "per_type": {t: _row_dict(r) for t, r in sorted(report.per_type.items())},
        "attempts": [
            {
                "task_id": a.task_id,
                "task_type": a.task_type,
                "attempt": a.attempt,
                "allocated": a.allocated,
                "succeeded": a.succeeded,
                "elapsed": a.elapsed,
                "wasted_gbh": a.wasted_gbh,
                "source": a.source,
                "raw_estimate": a.raw_estimate,
            }
            for a in report.attempts
        ],
    }
    return json.dumps(payload, indent=2, sort_keys=True)


def write_report_json(report: WastageReport, path) -> None:
    with open(path, "w") as fh:
        fh.write(report_to_json(report))
        fh.write("\n")


def report_to_csv(report: WastageReport) -> str:
    lines = [REPORT_CSV_HEADER]
    for t in sorted(report.per_type):
        r = report.per_type[t]
        lines.append(
            f"{report.method},{t},{r.wasted_gbh!r},{r.failures},"
            f"{r.runtime_hours!r},{r.permanent_failures}"
        )
    return "\n".join(lines) + "\n"


def write_report_csv(report: WastageReport, path) -> None:
    with open(path, "w") as fh:
        fh.write(report_to_csv(report))
