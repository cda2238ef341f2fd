"""Confusion-matrix metrics for binary Normal/Attack predictions.

Metric functions return 0.0 when their denominator is zero instead of
raising; :func:`metric_report` records which metrics hit that case.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .dataset import Label


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int
    fp: int
    tn: int
    fn: int
    positive_class: Label = Label.ATTACK

    def __post_init__(self):
        if min(self.tp, self.fp, self.tn, self.fn) < 0:
            raise ValueError("confusion counts must be non-negative")

    @property
    def positives(self) -> int:
        return self.tp + self.fn

    @property
    def negatives(self) -> int:
        return self.fp + self.tn

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    def swapped(self) -> "ConfusionMatrix":
        """Same predictions scored with the other class as positive."""
        other = Label.NORMAL if self.positive_class == Label.ATTACK else Label.ATTACK
        return ConfusionMatrix(tp=self.tn, fp=self.fn, tn=self.tp, fn=self.fp,
                               positive_class=other)


def confusion(predicted, actual, positive_class: Label = Label.ATTACK) -> ConfusionMatrix:
    predicted = np.asarray(predicted)
    actual = np.asarray(actual)
    if predicted.shape != actual.shape or predicted.ndim != 1:
        raise ValueError("predicted and actual must be 1-D and of equal length")
    if len(actual) == 0:
        raise ValueError("no samples to score")
    pp = predicted == positive_class
    ap = actual == positive_class
    return ConfusionMatrix(
        tp=int(np.sum(pp & ap)),
        fp=int(np.sum(pp & ~ap)),
        tn=int(np.sum(~pp & ~ap)),
        fn=int(np.sum(~pp & ap)),
        positive_class=Label(positive_class),
    )


def _ratio(num: int, den: int) -> float:
    return num / den if den else 0.0


def accuracy(cm: ConfusionMatrix) -> float:
    return _ratio(cm.tp + cm.tn, cm.total)


def error_rate(cm: ConfusionMatrix) -> float:
    return _ratio(cm.fp + cm.fn, cm.total)


def sensitivity(cm: ConfusionMatrix) -> float:
    return _ratio(cm.tp, cm.tp + cm.fn)


def precision(cm: ConfusionMatrix) -> float:
    return _ratio(cm.tp, cm.tp + cm.fp)


def f_measure(cm: ConfusionMatrix) -> float:
    p, s = precision(cm), sensitivity(cm)
    return 2 * p * s / (p + s) if p + s > 0 else 0.0


@dataclass(frozen=True)
class MetricReport:
    tp: int
    fp: int
    tn: int
    fn: int
    accuracy: float
    sensitivity: float
    precision: float
    f_measure: float
    positive_class: str
    warnings: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "tp": self.tp, "fp": self.fp, "tn": self.tn, "fn": self.fn,
            "accuracy": self.accuracy, "sensitivity": self.sensitivity,
            "precision": self.precision, "f_measure": self.f_measure,
            "positive_class": self.positive_class,
            "warnings": list(self.warnings),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


def metric_report(cm: ConfusionMatrix) -> MetricReport:
    flags = []
    if cm.total == 0:
        flags.append("accuracy_undefined")
    if cm.tp + cm.fn == 0:
        flags.append("sensitivity_undefined")
    if cm.tp + cm.fp == 0:
        flags.append("precision_undefined")
    if precision(cm) + sensitivity(cm) == 0:
        flags.append("f_measure_undefined")
    return MetricReport(
        tp=cm.tp, fp=cm.fp, tn=cm.tn, fn=cm.fn,
        accuracy=accuracy(cm), sensitivity=sensitivity(cm),
        precision=precision(cm), f_measure=f_measure(cm),
        positive_class=cm.positive_class.name.lower(), warnings=flags,
    )
