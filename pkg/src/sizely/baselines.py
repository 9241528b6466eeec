"""Reference sizing methods the replay driver compares against: percentile
history, linear regression with an error offset, wastage-minimizing shifted
regression lines, peak-probability cost minimization, and the raw workflow
presets. All share the size/observe/handle-failure contract of the sizer.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .models import RegressorKind, TrainingSample, fit
from .sizer import (
    AllocationDecision,
    AllocationMethod,
    AllocationSource,
    CapacityError,
    clamp_allocation,
    replay_wastage,
)
from .trace import MachineSpec, TaskRecord

WASTAGE_QUANTILES = (0.5, 0.75, 0.9, 0.95, 0.99)


class BaselineKind(Enum):
    WittPercentile = "witt-percentile"
    WittLR = "witt-lr"
    WittWastage = "witt-wastage"
    TovarPPM = "tovar-ppm"
    WorkflowPresets = "presets"


def percentile_predict(peaks: list[float], q: float = 95.0) -> float:
    """Linear-interpolated q-th percentile of observed peaks."""
    if not peaks:
        raise ValueError("peaks must be non-empty")
    return float(np.percentile(np.asarray(peaks, dtype=float), q))


def _ols_predict(samples: list[TrainingSample], input_size: float) -> float:
    # shares the model pool's OLS incl. mean fallback and positivity floor
    return fit(RegressorKind.Linear, samples).predict(input_size)


def lr_offset_predict(
    samples: list[TrainingSample],
    input_size: float,
    abs_errors: list[float] | None = None,
) -> float:
    """OLS prediction plus the mean absolute error of past predictions."""
    offset = float(np.mean(abs_errors)) if abs_errors else 0.0
    return _ols_predict(samples, input_size) + offset


def low_wastage_predict(
    samples: list[TrainingSample],
    input_size: float,
    ttf: float = 1.0,
    runtimes: list[float] | None = None,
    quantiles: tuple[float, ...] = WASTAGE_QUANTILES,
) -> float:
    """Prediction of the residual-quantile-shifted OLS line that would have
    wasted the least on the sample history.

    Candidate lines are the OLS fit shifted vertically to each residual
    quantile; replayed failures cost the whole allocation for ttf of the
    runtime and double until the task fits. Ties keep the lowest quantile.
    """
    if len(samples) < 2:
        raise ValueError("need at least 2 samples")
    x = np.array([s.input_size for s in samples], dtype=float)
    y = np.array([s.peak_mem for s in samples], dtype=float)
    model = fit(RegressorKind.Linear, samples)
    intercept, slope = model.coefficients
    if np.ptp(x) == 0:
        line = np.full_like(y, y.mean())
        query = float(y.mean())
    else:
        line = intercept + slope * x
        query = intercept + slope * input_size
    residuals = y - line
    rt = np.asarray(runtimes, dtype=float) if runtimes is not None else np.ones_like(y)
    best_shift = 0.0
    best_cost = np.inf
    floor = float(y.min())
    for q in quantiles:
        shift = float(np.quantile(residuals, q))
        cand = line + shift
        preds = np.where(cand > 0, cand, floor)  # same floor rule as the final value
        cost = replay_wastage(preds, y, rt, 0.0, ttf)
        if cost < best_cost:
            best_shift, best_cost = shift, cost
    raw = query + best_shift
    if not np.isfinite(raw) or raw <= 0:
        return float(y.min())
    return float(raw)


def ppm_predict(
    peaks: list[float],
    preset: float,
    capacity: float,
    ttf: float = 1.0,
    mean_runtime: float = 1.0,
) -> float:
    """Observed peak minimizing the expected cost of allocating it.

    Cost per historical peak p at allocation a: the over-allocation (a - p)
    when p fits, else the failed attempt (a * ttf) plus a retry at node
    capacity. The runtime factor is common to all candidates.
    """
    if not peaks:
        return preset
    arr = np.asarray(peaks, dtype=float)
    best_a = None
    best_cost = np.inf
    for a in np.unique(arr):  # ascending, so ties keep the smaller allocation
        fits = arr <= a
        cost = np.where(fits, a - arr, a * ttf + capacity).mean() * mean_runtime
        if cost < best_cost:
            best_a, best_cost = float(a), cost
    return best_a


def preset_predict(task: TaskRecord) -> float:
    """The workflow developer's estimate, unchanged; never learns."""
    return task.preset_mem


@dataclass
class _PairHistory:
    peaks: list[float] = field(default_factory=list)
    samples: list[TrainingSample] = field(default_factory=list)
    runtimes: list[float] = field(default_factory=list)
    abs_errors: list[float] = field(default_factory=list)


class _BaselineMethod(AllocationMethod):
    """History bookkeeping and doubling failure recovery shared by baselines."""

    def __init__(self, machines: dict[str, MachineSpec]):
        self.machines = machines
        self.pairs: dict[tuple[str, str], _PairHistory] = {}

    def _capacity(self, machine: str) -> float:
        try:
            return self.machines[machine].mem_capacity
        except KeyError:
            raise ValueError(f"unknown machine {machine!r}") from None

    def _pair(self, task: TaskRecord) -> _PairHistory:
        key = (task.task_type, task.machine)
        if key not in self.pairs:
            self.pairs[key] = _PairHistory()
        return self.pairs[key]

    def _decision(self, raw: float, cap: float, source=AllocationSource.Model) -> AllocationDecision:
        alloc = clamp_allocation(raw, cap)
        return AllocationDecision(alloc, alloc, 0.0, source)

    def observe_completion(self, task, actual_peak, model_predictions=None,
                           aggregate_prediction=None):
        pair = self._pair(task)
        pair.peaks.append(actual_peak)
        pair.samples.append(TrainingSample(task.input_size, actual_peak))
        pair.runtimes.append(task.runtime)
        if aggregate_prediction is not None:
            pair.abs_errors.append(abs(aggregate_prediction - actual_peak))

    def handle_failure(self, task, attempt, failed_alloc):
        cap = self._capacity(task.machine)
        if failed_alloc >= cap:
            raise CapacityError("task failed at machine capacity")
        alloc = clamp_allocation(2.0 * failed_alloc, cap)
        return AllocationDecision(alloc, alloc, 0.0, AllocationSource.FailureDoubling, attempt)


class WittPercentileMethod(_BaselineMethod):
    name = BaselineKind.WittPercentile.value

    def __init__(self, machines, q: float = 95.0):
        super().__init__(machines)
        self.q = q

    def size(self, task):
        cap = self._capacity(task.machine)
        pair = self.pairs.get((task.task_type, task.machine))
        if pair is None or not pair.peaks:
            return self._decision(task.preset_mem, cap, AllocationSource.Preset)
        return self._decision(percentile_predict(pair.peaks, self.q), cap)

    def handle_failure(self, task, attempt, failed_alloc):
        # escalate straight to the observed maximum when that beats doubling
        cap = self._capacity(task.machine)
        if failed_alloc >= cap:
            raise CapacityError("task failed at machine capacity")
        pair = self.pairs.get((task.task_type, task.machine))
        max_peak = max(pair.peaks) if pair and pair.peaks else 0.0
        if max_peak >= 2.0 * failed_alloc:
            alloc, source = clamp_allocation(max_peak, cap), AllocationSource.FailureMaxObserved
        else:
            alloc, source = clamp_allocation(2.0 * failed_alloc, cap), AllocationSource.FailureDoubling
        return AllocationDecision(alloc, alloc, 0.0, source, attempt)


class WittLrMethod(_BaselineMethod):
    name = BaselineKind.WittLR.value

    def size(self, task):
        cap = self._capacity(task.machine)
        pair = self.pairs.get((task.task_type, task.machine))
        if pair is None or len(pair.samples) < 2:
            return self._decision(task.preset_mem, cap, AllocationSource.Preset)
        raw = _ols_predict(pair.samples, task.input_size)
        offset = float(np.mean(pair.abs_errors)) if pair.abs_errors else 0.0
        return AllocationDecision(
            clamp_allocation(raw + offset, cap), raw, offset, AllocationSource.Model
        )


class WittWastageMethod(_BaselineMethod):
    name = BaselineKind.WittWastage.value

    def __init__(self, machines, ttf: float = 1.0):
        super().__init__(machines)
        self.ttf = ttf

    def size(self, task):
        cap = self._capacity(task.machine)
        pair = self.pairs.get((task.task_type, task.machine))
        if pair is None or len(pair.samples) < 2:
            return self._decision(task.preset_mem, cap, AllocationSource.Preset)
        raw = low_wastage_predict(
            pair.samples, task.input_size, self.ttf, pair.runtimes
        )
        return self._decision(raw, cap)


class TovarPpmMethod(_BaselineMethod):
    name = BaselineKind.TovarPPM.value

    def __init__(self, machines, ttf: float = 1.0):
        super().__init__(machines)
        self.ttf = ttf

    def size(self, task):
        cap = self._capacity(task.machine)
        pair = self.pairs.get((task.task_type, task.machine))
        if pair is None or not pair.peaks:
            return self._decision(task.preset_mem, cap, AllocationSource.Preset)
        mean_rt = float(np.mean(pair.runtimes)) if pair.runtimes else 1.0
        raw = ppm_predict(pair.peaks, task.preset_mem, cap, self.ttf, mean_rt)
        return self._decision(raw, cap)

    def handle_failure(self, task, attempt, failed_alloc):
        # retries always get the node's full memory
        cap = self._capacity(task.machine)
        if failed_alloc >= cap:
            raise CapacityError("task failed at machine capacity")
        return AllocationDecision(cap, cap, 0.0, AllocationSource.FailureMaxObserved, attempt)


class WorkflowPresetsMethod(_BaselineMethod):
    name = BaselineKind.WorkflowPresets.value

    def size(self, task):
        cap = self._capacity(task.machine)
        return self._decision(preset_predict(task), cap, AllocationSource.Preset)

    def observe_completion(self, task, actual_peak, model_predictions=None,
                           aggregate_prediction=None):
        pass  # presets never learn


BASELINE_CLASSES = {
    BaselineKind.WittPercentile: WittPercentileMethod,
    BaselineKind.WittLR: WittLrMethod,
    BaselineKind.WittWastage: WittWastageMethod,
    BaselineKind.TovarPPM: TovarPpmMethod,
    BaselineKind.WorkflowPresets: WorkflowPresetsMethod,
}
