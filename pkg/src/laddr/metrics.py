"""Accept/reject tallies and the degradation, peril and ineptitude ratios.

A ratio whose denominator is zero is undefined and returned as ``None``;
it is never folded into 0 or 1.
"""
from __future__ import annotations

import enum
import json
from dataclasses import dataclass

import numpy as np

from .core import LaddrError

__all__ = [
    "Cell",
    "ConfusionCounts",
    "AcceptanceCriterion",
    "accepts",
    "classify",
    "tally",
    "degradation",
    "peril",
    "ineptitude",
    "metrics_report",
]


class Cell(str, enum.Enum):
    ACCEPTED_CORRECT = "A_o"
    ACCEPTED_INCORRECT = "A_x"
    REJECTED_CORRECT = "R_o"
    REJECTED_INCORRECT = "R_x"


@dataclass(frozen=True)
class ConfusionCounts:
    accepted_correct: int = 0
    accepted_incorrect: int = 0
    rejected_correct: int = 0
    rejected_incorrect: int = 0

    def __post_init__(self):
        for name in ("accepted_correct", "accepted_incorrect", "rejected_correct", "rejected_incorrect"):
            v = getattr(self, name)
            if int(v) != v or v < 0:
                raise LaddrError(f"{name} must be a non-negative integer, got {v!r}")
            object.__setattr__(self, name, int(v))

    @classmethod
    def from_table_row(cls, correct_accept, correct_reject, incorrect_accept, incorrect_reject):
        """Counts laid out as "correct/incorrect accept/reject" report columns.

        A "correct reject" is a rejection that was the right call, i.e. an
        incorrect prediction that was rejected; an "incorrect reject" threw
        away a correct prediction.
        """
        return cls(accepted_correct=correct_accept, rejected_incorrect=correct_reject,
                   accepted_incorrect=incorrect_accept, rejected_correct=incorrect_reject)

    @property
    def total(self) -> int:
        return self.accepted_correct + self.accepted_incorrect + self.rejected_correct + self.rejected_incorrect

    def __add__(self, other: "ConfusionCounts") -> "ConfusionCounts":
        return ConfusionCounts(self.accepted_correct + other.accepted_correct,
                               self.accepted_incorrect + other.accepted_incorrect,
                               self.rejected_correct + other.rejected_correct,
                               self.rejected_incorrect + other.rejected_incorrect)

    def add(self, cell: Cell) -> "ConfusionCounts":
        return self + ConfusionCounts(**{_CELL_FIELD[Cell(cell)]: 1})

    def to_json(self) -> dict:
        return {"A_o": self.accepted_correct, "A_x": self.accepted_incorrect,
                "R_o": self.rejected_correct, "R_x": self.rejected_incorrect}


_CELL_FIELD = {
    Cell.ACCEPTED_CORRECT: "accepted_correct",
    Cell.ACCEPTED_INCORRECT: "accepted_incorrect",
    Cell.REJECTED_CORRECT: "rejected_correct",
    Cell.REJECTED_INCORRECT: "rejected_incorrect",
}


@dataclass(frozen=True)
class AcceptanceCriterion:
    """A prediction is correct when within ``epsilon`` of the truth (raw units)."""

    epsilon: float

    def __post_init__(self):
        if not np.isfinite(self.epsilon) or self.epsilon <= 0:
            raise LaddrError(f"epsilon must be positive, got {self.epsilon}")

    def is_correct(self, prediction, truth):
        return np.abs(np.asarray(prediction, dtype=np.float64) - np.asarray(truth, dtype=np.float64)) <= self.epsilon


def accepts(score, accept_threshold: float):
    """Accept when the score reaches the threshold (boundary accepted)."""
    return np.asarray(score) >= accept_threshold


def classify(prediction: float, truth: float, score, config, criterion: AcceptanceCriterion) -> Cell:
    """Confusion cell of one prediction.

    ``score`` may be a :class:`~laddr.reliability.ReliabilityScore` or a
    bare float. ``prediction`` and ``truth`` are in raw target units.
    """
    value = float(getattr(score, "value", score))
    if not all(np.isfinite([prediction, truth, value])):
        raise LaddrError("classify needs finite prediction, truth and score")
    accepted = bool(accepts(value, config.accept_threshold))
    correct = bool(criterion.is_correct(prediction, truth))
    if accepted:
        return Cell.ACCEPTED_CORRECT if correct else Cell.ACCEPTED_INCORRECT
    return Cell.REJECTED_CORRECT if correct else Cell.REJECTED_INCORRECT


def tally(scores, predictions, truths, accept_threshold: float, criterion: AcceptanceCriterion) -> ConfusionCounts:
    """Vectorised :func:`classify` summed over samples."""
    scores = np.asarray(scores, dtype=np.float64)
    predictions = np.asarray(predictions, dtype=np.float64)
    truths = np.asarray(truths, dtype=np.float64)
    if not (scores.shape == predictions.shape == truths.shape):
        raise LaddrError("scores, predictions and truths must have the same length")
    if not (np.all(np.isfinite(scores)) and np.all(np.isfinite(predictions)) and np.all(np.isfinite(truths))):
        raise LaddrError("tally needs finite scores, predictions and truths")
    acc = accepts(scores, accept_threshold)
    ok = criterion.is_correct(predictions, truths)
    return ConfusionCounts(int(np.sum(acc & ok)), int(np.sum(acc & ~ok)),
                           int(np.sum(~acc & ok)), int(np.sum(~acc & ~ok)))


def _ratio(num: int, den: int) -> float | None:
    return None if den == 0 else num / den


def degradation(c: ConfusionCounts) -> float | None:
    """Share of correct predictions that were rejected."""
    return _ratio(c.rejected_correct, c.rejected_correct + c.accepted_correct)


def peril(c: ConfusionCounts) -> float | None:
    """Share of accepted predictions that were incorrect."""
    return _ratio(c.accepted_incorrect, c.accepted_incorrect + c.accepted_correct)


def ineptitude(c: ConfusionCounts) -> float | None:
    """Share of all filtered predictions handled wrongly.

    Wrong handling is rejecting a correct prediction or accepting an
    incorrect one.
    """
    return _ratio(c.rejected_correct + c.accepted_incorrect, c.total)


def metrics_report(c: ConfusionCounts, threshold: float | None = None, epsilon: float | None = None) -> dict:
    return {
        "counts": c.to_json(),
        "peril": peril(c),
        "degradation": degradation(c),
        "ineptitude": ineptitude(c),
        "threshold": threshold,
        "epsilon": epsilon,
    }


def dumps_report(report: dict) -> str:
    return json.dumps(report, indent=2, sort_keys=False)
