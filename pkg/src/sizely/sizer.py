"""Online memory sizing pipeline.

Keeps one model pool per (task_type, machine) pair: four regressors, their
prequential prediction ledger, observed-peak statistics, and the offset
error history. Sizing falls back to the user preset for unseen pairs, to a
max-observed heuristic while history is short, and otherwise gates the model
predictions by RAQ and adds a safety offset. Failed attempts escalate to the
maximum observed peak and then double until machine capacity is exhausted.
"""

from __future__ import annotations

import abc
import math
import zlib
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .models import (
    KINDS,
    DEFAULT_PARAMS,
    HyperParams,
    Regressor,
    RegressorKind,
    TrainingSample,
    fit,
    tune,
)
from .raq import GatingConfig, PredictionLedger, accuracy_score, efficiency_score, gate, raq_score
from .trace import MachineSpec, TaskRecord


class AllocationSource(Enum):
    Preset = "preset"
    ColdStart = "cold_start"
    Model = "model"
    FailureMaxObserved = "failure_max_observed"
    FailureDoubling = "failure_doubling"


class OffsetKind(Enum):
    # declaration order is the tie-break order for dynamic selection
    StdDev = "stddev"
    StdDevUnder = "stddev-under"
    MedianErr = "median"
    MedianErrUnder = "median-under"


OFFSET_MODES = ("dynamic",) + tuple(k.value for k in OffsetKind)


class CapacityError(RuntimeError):
    """Allocation cannot grow: the task failed at machine capacity."""


def clamp_allocation(value: float, capacity: float) -> float:
    """Round up to a whole byte (memory grants are integral) and cap."""
    return min(float(math.ceil(value)), capacity)


@dataclass(frozen=True)
class AllocationDecision:
    allocated: float
    raw_estimate: float
    offset: float
    source: AllocationSource
    attempt: int = 1
    model_predictions: tuple[float, ...] | None = None


class AllocationMethod(abc.ABC):
    """Contract every sizing method implements so the replay driver is
    method-agnostic."""

    name: str = "method"

    @abc.abstractmethod
    def size(self, task: TaskRecord) -> AllocationDecision: ...

    @abc.abstractmethod
    def observe_completion(
        self,
        task: TaskRecord,
        actual_peak: float,
        model_predictions: tuple[float, ...] | None = None,
        aggregate_prediction: float | None = None,
    ) -> None: ...

    @abc.abstractmethod
    def handle_failure(
        self, task: TaskRecord, attempt: int, failed_alloc: float
    ) -> AllocationDecision: ...


def offset_candidates(errors: np.ndarray) -> dict[OffsetKind, float]:
    """All four offset statistics from signed aggregate errors (pred - actual).

    Underprediction statistics come from the negative errors only; an empty
    underprediction set yields 0 for those candidates.
    """
    errors = np.asarray(errors, dtype=float)
    under = errors[errors < 0]
    return {
        OffsetKind.StdDev: float(errors.std()) if errors.size else 0.0,
        OffsetKind.StdDevUnder: float(under.std()) if under.size else 0.0,
        OffsetKind.MedianErr: float(np.median(np.abs(errors))) if errors.size else 0.0,
        OffsetKind.MedianErrUnder: float(np.median(np.abs(under))) if under.size else 0.0,
    }


def replay_wastage(
    predictions: np.ndarray,
    actuals: np.ndarray,
    runtimes: np.ndarray,
    offset: float,
    ttf: float,
) -> float:
    """Retrospective wastage (byte-seconds) had every past task been sized at
    prediction + offset.

    Under-allocations cost the full allocation for ttf of the runtime and
    double until they fit, mirroring the failure handling of the replay
    driver.
    """
    a = np.asarray(predictions, dtype=float) + offset
    y = np.asarray(actuals, dtype=float)
    rt = np.asarray(runtimes, dtype=float)
    fails = a < y
    m = np.zeros_like(a)
    if fails.any():
        m[fails] = np.ceil(np.log2(y[fails] / a[fails]))
        # guard the float edge where a * 2^m still falls short
        short = a * np.exp2(m) < y
        m[short] += 1
    failed_cost = a * (np.exp2(m) - 1.0) * ttf * rt
    final_over = (a * np.exp2(m) - y) * rt
    return float(np.sum(failed_cost + final_over))


@dataclass
class PairState:
    """Everything the sizer tracks for one (task_type, machine) pair."""

    params: HyperParams = DEFAULT_PARAMS
    models: dict[RegressorKind, Regressor] | None = None
    ledger: PredictionLedger = field(default_factory=lambda: PredictionLedger(len(KINDS)))
    samples: list[TrainingSample] = field(default_factory=list)
    peaks: list[float] = field(default_factory=list)
    # aggregate-estimate history for offset statistics: (raw, actual, runtime)
    agg_history: list[tuple[float, float, float]] = field(default_factory=list)

    @property
    def completions(self) -> int:
        return len(self.peaks)


class MemorySizer(AllocationMethod):
    """RAQ-gated multi-model sizing with dynamic offsets and online updates."""

    name = "sizey"

    COLD_START_FACTOR = 1.1

    def __init__(
        self,
        machines: dict[str, MachineSpec],
        gating: GatingConfig | None = None,
        offset_mode: str = "dynamic",
        update_mode: str = "full",
        min_train: int = 4,
        ttf: float = 1.0,
        seed: int = 0,
        tune_interval: int = 10,
    ):
        if offset_mode not in OFFSET_MODES:
            raise ValueError(f"unknown offset mode {offset_mode!r}")
        if update_mode not in ("full", "incremental"):
            raise ValueError(f"unknown update mode {update_mode!r}")
        self.machines = machines
        self.gating = gating or GatingConfig()
        self.offset_mode = offset_mode
        self.update_mode = update_mode
        self.min_train = min_train
        self.ttf = ttf
        self.seed = seed
        self.tune_interval = tune_interval
        self.pairs: dict[tuple[str, str], PairState] = {}

    # -- helpers -----------------------------------------------------------

    def _capacity(self, machine: str) -> float:
        try:
            return self.machines[machine].mem_capacity
        except KeyError:
            raise ValueError(f"unknown machine {machine!r}") from None

    def _pair(self, task: TaskRecord) -> PairState:
        key = (task.task_type, task.machine)
        if key not in self.pairs:
            self.pairs[key] = PairState()
        return self.pairs[key]

    def _model_seed(self, task: TaskRecord, kind: RegressorKind) -> int:
        tag = f"{self.seed}:{task.task_type}:{task.machine}:{kind.name}"
        return zlib.crc32(tag.encode())

    def _fit_all(self, pair: PairState, task: TaskRecord) -> None:
        pair.models = {
            kind: fit(kind, pair.samples, pair.params, self._model_seed(task, kind))
            for kind in KINDS
        }

    # -- sizing ------------------------------------------------------------

    def size(self, task: TaskRecord) -> AllocationDecision:
        cap = self._capacity(task.machine)
        pair = self.pairs.get((task.task_type, task.machine))

        if pair is None or pair.completions == 0:
            alloc = clamp_allocation(min(task.preset_mem, cap), cap)
            return AllocationDecision(alloc, alloc, 0.0, AllocationSource.Preset)

        if pair.completions < self.min_train:
            raw = min(self.COLD_START_FACTOR * max(pair.peaks), task.preset_mem)
            alloc = clamp_allocation(raw, cap)
            return AllocationDecision(alloc, alloc, 0.0, AllocationSource.ColdStart)

        if pair.models is None:
            self._fit_all(pair, task)
        preds = [pair.models[kind].predict(task.input_size) for kind in KINDS]
        if pair.ledger.size > 0:
            accs = [accuracy_score(pair.ledger, i) for i in range(len(KINDS))]
        else:
            accs = [1.0] * len(KINDS)  # no history yet: neutral optimistic prior
        effs = [efficiency_score(preds, i) for i in range(len(KINDS))]
        raqs = [raq_score(a, e, self.gating.alpha) for a, e in zip(accs, effs)]
        decision = gate(preds, raqs, self.gating)
        _, offset = self.select_offset(pair)
        alloc = clamp_allocation(decision.estimate + offset, cap)
        return AllocationDecision(
            allocated=alloc,
            raw_estimate=decision.estimate,
            offset=offset,
            source=AllocationSource.Model,
            model_predictions=tuple(preds),
        )

    def select_offset(self, pair: PairState) -> tuple[OffsetKind, float]:
        """Pick the offset statistic for the pair's next allocation.

        Dynamic mode scores all four candidates by the wastage they would
        have caused on the pair's aggregate-prediction history and takes the
        cheapest (ties fall to declaration order).
        """
        if not pair.agg_history:
            kind = OffsetKind.StdDev if self.offset_mode == "dynamic" else OffsetKind(self.offset_mode)
            return kind, 0.0
        raw = np.array([h[0] for h in pair.agg_history])
        actual = np.array([h[1] for h in pair.agg_history])
        rt = np.array([h[2] for h in pair.agg_history])
        cands = offset_candidates(raw - actual)
        if self.offset_mode != "dynamic":
            kind = OffsetKind(self.offset_mode)
            return kind, cands[kind]
        best_kind = None
        best_cost = np.inf
        for kind in OffsetKind:
            cost = replay_wastage(raw, actual, rt, cands[kind], self.ttf)
            if cost < best_cost:
                best_kind, best_cost = kind, cost
        return best_kind, cands[best_kind]

    # -- failure recovery ----------------------------------------------------

    def _failure_allocation(
        self, max_peak: float, attempt: int, failed_alloc: float, cap: float
    ) -> tuple[float, AllocationSource]:
        if failed_alloc >= cap:
            raise CapacityError("task failed at machine capacity")
        if attempt == 2 and max_peak > failed_alloc:
            return clamp_allocation(max_peak, cap), AllocationSource.FailureMaxObserved
        return clamp_allocation(2.0 * failed_alloc, cap), AllocationSource.FailureDoubling

    def handle_failure(
        self, task: TaskRecord, attempt: int, failed_alloc: float
    ) -> AllocationDecision:
        if attempt < 2:
            raise ValueError("handle_failure applies from the second attempt on")
        cap = self._capacity(task.machine)
        pair = self.pairs.get((task.task_type, task.machine))
        max_peak = max(pair.peaks) if pair and pair.peaks else 0.0
        alloc, source = self._failure_allocation(max_peak, attempt, failed_alloc, cap)
        return AllocationDecision(alloc, alloc, 0.0, source, attempt=attempt)

    # -- online learning -----------------------------------------------------

    def observe_completion(
        self,
        task: TaskRecord,
        actual_peak: float,
        model_predictions: tuple[float, ...] | None = None,
        aggregate_prediction: float | None = None,
    ) -> None:
        """Fold a completed task back into the pair state and update models."""
        pair = self._pair(task)
        if model_predictions is not None:
            pair.ledger.record(list(model_predictions), actual_peak)
            if aggregate_prediction is not None:
                pair.agg_history.append((aggregate_prediction, actual_peak, task.runtime))
        sample = TrainingSample(task.input_size, actual_peak)
        pair.samples.append(sample)
        pair.peaks.append(actual_peak)

        if pair.completions < self.min_train:
            return
        if pair.models is None:
            self._fit_all(pair, task)
        else:
            pair.models = {
                kind: model.updated(sample, self.update_mode)
                for kind, model in pair.models.items()
            }
        if pair.completions % self.tune_interval == 0:
            self._retune(pair, task)

    def _retune(self, pair: PairState, task: TaskRecord) -> None:
        old = pair.params
        params = old
        for kind in (RegressorKind.KNN, RegressorKind.RandomForest, RegressorKind.MLP):
            params = tune(kind, pair.samples, base=params, seed=self._model_seed(task, kind))
        pair.params = params
        if params == old or pair.models is None:
            return
        changed = []
        if params.knn_k != old.knn_k:
            changed.append(RegressorKind.KNN)
        if (params.rf_trees, params.rf_max_depth) != (old.rf_trees, old.rf_max_depth):
            changed.append(RegressorKind.RandomForest)
        if params.mlp_hidden != old.mlp_hidden:
            changed.append(RegressorKind.MLP)
        for kind in changed:
            pair.models[kind] = fit(kind, pair.samples, params, self._model_seed(task, kind))
