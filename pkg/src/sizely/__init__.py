"""Online peak-memory prediction for workflow tasks plus a trace-driven
wastage simulator and baseline comparison suite."""

from .models import HyperParams, RegressorKind, TrainingSample, fit, tune
from .raq import GatingConfig, PredictionLedger, accuracy_score, efficiency_score, gate, raq_score
from .sim import SimulationConfig, WastageReport, run_simulation
from .sizer import AllocationDecision, MemorySizer, OffsetKind
from .trace import (
    SyntheticSpec,
    TaskRecord,
    TaskTypeSpec,
    TraceDataset,
    generate_synthetic,
    parse_trace,
)

__version__ = "0.1.0"

__all__ = [
    "AllocationDecision",
    "GatingConfig",
    "HyperParams",
    "MemorySizer",
    "OffsetKind",
    "PredictionLedger",
    "RegressorKind",
    "SimulationConfig",
    "SyntheticSpec",
    "TaskRecord",
    "TaskTypeSpec",
    "TraceDataset",
    "TrainingSample",
    "WastageReport",
    "accuracy_score",
    "efficiency_score",
    "fit",
    "gate",
    "generate_synthetic",
    "parse_trace",
    "raq_score",
    "run_simulation",
    "tune",
    "__version__",
]
