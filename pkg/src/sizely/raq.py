"""Resource allocation quality scoring and predictor gating.

A model's RAQ combines its accuracy score (mean clamped relative-error
complement over its prediction history) with an efficiency score that
penalizes estimates large relative to the other models' outputs. Gating
turns per-model RAQs into either a single winner (argmax) or softmax
weights over all predictions (interpolation).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field


@dataclass
class PredictionLedger:
    """Prequential (prediction, actual) pairs per model, recorded in replay
    order: predictions logged at submission, actuals at completion."""

    n_models: int
    pairs: list[list[tuple[float, float]]] = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        if self.pairs is None:
            self.pairs = [[] for _ in range(self.n_models)]

    @property
    def size(self) -> int:
        return len(self.pairs[0]) if self.pairs else 0

    def record(self, predictions: list[float], actual: float) -> None:
        if len(predictions) != self.n_models:
            raise ValueError("one prediction per model required")
        if actual <= 0:
            raise ValueError("actual peak must be > 0")
        for i, p in enumerate(predictions):
            self.pairs[i].append((float(p), float(actual)))


@dataclass(frozen=True)
class GatingConfig:
    alpha: float = 0.0
    strategy: str = "interpolation"   # "argmax" | "interpolation"
    beta: float = 4.0

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must be in [0, 1]")
        if self.strategy not in ("argmax", "interpolation"):
            raise ValueError(f"unknown gating strategy {self.strategy!r}")
        if self.strategy == "interpolation" and self.beta < 1.0:
            raise ValueError("beta must be >= 1 for interpolation gating")


@dataclass(frozen=True)
class GateDecision:
    raqs: tuple[float, ...]
    weights: tuple[float, ...]
    estimate: float
    chosen_model: int | None   # set for argmax, None for interpolation


def accuracy_score(ledger: PredictionLedger, model_index: int) -> float:
    """Mean over history of 1 - min(|prediction - actual| / actual, 1).

    Each error term is clamped at one so a single wild estimate cannot
    dominate the mean.
    """
    history = ledger.pairs[model_index]
    if not history:
        raise ValueError("empty history; use the sizer cold-start path")
    total = 0.0
    for pred, actual in history:
        total += 1.0 - min(abs(pred - actual) / actual, 1.0)
    return total / len(history)


def efficiency_score(predictions: list[float], model_index: int) -> float:
    """1 - prediction / max(predictions); the largest estimate scores 0."""
    if not predictions:
        raise ValueError("predictions must be non-empty")
    if any(p <= 0 for p in predictions):
        raise ValueError("predictions must be > 0")
    return 1.0 - predictions[model_index] / max(predictions)


def raq_score(accuracy: float, efficiency: float, alpha: float) -> float:
    """Convex combination: alpha=0 scores accuracy only, alpha=1 efficiency only."""
    if not 0.0 <= alpha <= 1.0:
        raise ValueError("alpha must be in [0, 1]")
    return (1.0 - alpha) * accuracy + alpha * efficiency


def gate(predictions: list[float], raqs: list[float], cfg: GatingConfig) -> GateDecision:
    """Combine per-model predictions into one estimate.

    argmax: the highest-RAQ model wins (ties break to the lowest index).
    interpolation: softmax(beta * raq) weights blend all predictions.
    """
    if len(predictions) != len(raqs) or not predictions:
        raise ValueError("predictions and raqs must be equal-length and non-empty")
    if cfg.strategy == "argmax":
        best = max(range(len(raqs)), key=lambda i: (raqs[i], -i))
        weights = tuple(1.0 if i == best else 0.0 for i in range(len(raqs)))
        return GateDecision(tuple(raqs), weights, float(predictions[best]), best)
    top = max(cfg.beta * r for r in raqs)
    exps = [math.exp(cfg.beta * r - top) for r in raqs]
    norm = sum(exps)
    weights = tuple(e / norm for e in exps)
    estimate = sum(p * w for p, w in zip(predictions, weights))
    return GateDecision(tuple(raqs), weights, float(estimate), None)
