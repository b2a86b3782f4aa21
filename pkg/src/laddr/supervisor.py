"""Runtime supervision: gate each model prediction on its reliability.

Every sample gets a :class:`Decision`. Rejected predictions are still
recorded; rejection only flags that auxiliary handling should take over.
When truth values are supplied the supervisor also keeps running confusion
counts.
"""
from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass
from typing import Iterable, Iterator, Protocol, Sequence

import numpy as np

from .core import KnowledgeBase, LaddrError, ReliabilityConfig, SchemaError
from .index import NeighborIndex, build_index
from .metrics import AcceptanceCriterion, Cell, ConfusionCounts, accepts, classify, metrics_report
from .reliability import build_query, decay

__all__ = [
    "PredictorPort",
    "Sample",
    "Decision",
    "Supervisor",
    "supervise_stream",
    "read_samples",
    "decision_log_csv",
    "DECISION_COLUMNS",
]

log = logging.getLogger(__name__)

DECISION_COLUMNS = ("id", "time", "score", "accept", "prediction", "truth", "correct", "engaged_auxiliary", "error")


class PredictorPort(Protocol):
    def __call__(self, inputs: np.ndarray) -> float: ...


@dataclass(frozen=True)
class Sample:
    """One operational row: raw inputs plus optional truth/prediction/time."""

    id: int | str
    inputs: tuple[float, ...]
    truth: float | None = None
    prediction: float | None = None
    time: float | None = None


@dataclass(frozen=True)
class Decision:
    sample_id: int | str
    timestamp: float | None
    score: float
    accept: bool
    prediction: float
    truth: float | None = None
    correct: bool | None = None
    error: str | None = None

    @property
    def engaged_auxiliary(self) -> bool:
        return not self.accept

    @property
    def cell(self) -> Cell | None:
        if self.correct is None or self.error:
            return None
        if self.accept:
            return Cell.ACCEPTED_CORRECT if self.correct else Cell.ACCEPTED_INCORRECT
        return Cell.REJECTED_CORRECT if self.correct else Cell.REJECTED_INCORRECT


class Supervisor:
    """Holds the knowledge base, its index and the decision settings.

    ``predictor`` may be omitted when every sample already carries a
    prediction (externally produced model output).
    """

    def __init__(self, kb: KnowledgeBase, config: ReliabilityConfig, criterion: AcceptanceCriterion | None = None,
                 predictor: PredictorPort | None = None, index: NeighborIndex | None = None):
        self.kb = kb
        self.config = config
        self.criterion = criterion
        self.predictor = predictor
        V = config.covariance
        if index is None:
            index = build_index(kb, V, config.mode)
        elif index.covariance != V or index.dim != len(kb.schema.mode_indices(config.mode)):
            raise SchemaError("supplied index does not match the configuration")
        self.index = index
        self.counts = ConfusionCounts()
        self.n_decisions = 0
        self.n_errors = 0
        self.malformed: list[tuple[int, str]] = []

    def decide(self, sample: Sample) -> Decision:
        try:
            if sample.prediction is not None:
                pred = float(sample.prediction)
            elif self.predictor is not None:
                pred = float(self.predictor(np.asarray(sample.inputs, dtype=np.float64)))
            else:
                raise LaddrError("no predictor and no prediction column")
            if not math.isfinite(pred):
                raise LaddrError(f"prediction is not finite ({pred})")
        except Exception as err:  # predictor failures must not stop the stream
            self.n_decisions += 1
            self.n_errors += 1
            return Decision(sample.id, sample.time, math.nan, False, math.nan, sample.truth, None,
                            error=f"predictor: {err}")

        q = build_query(self.kb, sample.inputs, pred, self.config)
        dist, _ = self.index.nearest(q)
        score = float(decay(dist))
        accepted = bool(accepts(score, self.config.accept_threshold))
        correct = None
        if sample.truth is not None and self.criterion is not None:
            cell = classify(pred, sample.truth, score, self.config, self.criterion)
            correct = cell in (Cell.ACCEPTED_CORRECT, Cell.REJECTED_CORRECT)
            self.counts = self.counts.add(cell)
        self.n_decisions += 1
        return Decision(sample.id, sample.time, score, accepted, pred, sample.truth, correct)

    def run(self, samples: Iterable[Sample | tuple[int, str]]) -> Iterator[Decision]:
        """Decide each sample in order; ``(row, message)`` items are malformed rows."""
        for s in samples:
            if isinstance(s, Sample):
                yield self.decide(s)
            else:
                row, msg = s
                log.warning("row %s skipped: %s", row, msg)
                self.malformed.append((row, msg))

    def summary(self) -> dict:
        has_truth = self.counts.total > 0
        out = {
            "decisions": self.n_decisions,
            "predictor_errors": self.n_errors,
            "malformed_rows": [{"row": r, "error": m} for r, m in self.malformed],
            "config": self.config.to_json(),
            "epsilon": None if self.criterion is None else self.criterion.epsilon,
        }
        if has_truth:
            out["metrics"] = metrics_report(self.counts, self.config.accept_threshold,
                                            None if self.criterion is None else self.criterion.epsilon)
        else:
            out["metrics"] = None
        return out


def supervise_stream(samples: Iterable[Sample], predictor: PredictorPort | None, kb: KnowledgeBase,
                     config: ReliabilityConfig, criterion: AcceptanceCriterion | None = None,
                     index: NeighborIndex | None = None) -> tuple[list[Decision], dict]:
    """Run a whole stream; returns the ordered decisions and the end-of-stream summary."""
    sup = Supervisor(kb, config, criterion, predictor, index)
    decisions = list(sup.run(samples))
    return decisions, sup.summary()


def read_samples(lines: Iterable[str], input_names: Sequence[str], truth_column: str | None = "truth",
                 prediction_column: str | None = "prediction", id_column: str | None = "id",
                 time_column: str | None = "time") -> Iterator[Sample | tuple[int, str]]:
    """Parse CSV text into samples; bad rows come out as ``(row_number, message)``.

    Row numbers count data rows from 1. Lines starting with ``#`` are ignored.
    Optional columns are used only when present in the header.
    """
    rows = csv.reader(ln for ln in lines if ln.strip() and not ln.lstrip().startswith("#"))
    try:
        header = [h.strip() for h in next(rows)]
    except StopIteration:
        return
    missing = [n for n in input_names if n not in header]
    if missing:
        raise SchemaError(f"input columns {missing} missing from stream header {header}")
    in_idx = [header.index(n) for n in input_names]

    def col(name):
        return header.index(name) if name and name in header else None

    t_idx, p_idx, id_idx, time_idx = col(truth_column), col(prediction_column), col(id_column), col(time_column)
    for rowno, rec in enumerate(rows, start=1):
        if len(rec) != len(header):
            yield rowno, f"expected {len(header)} fields, got {len(rec)}"
            continue
        try:
            inputs = tuple(float(rec[i]) for i in in_idx)
            if not all(math.isfinite(v) for v in inputs):
                raise ValueError("non-finite input")
            truth = float(rec[t_idx]) if t_idx is not None and rec[t_idx] != "" else None
            pred = float(rec[p_idx]) if p_idx is not None and rec[p_idx] != "" else None
            tval = float(rec[time_idx]) if time_idx is not None and rec[time_idx] != "" else None
            if truth is not None and not math.isfinite(truth):
                raise ValueError("non-finite truth")
        except ValueError as err:
            yield rowno, str(err)
            continue
        sid = rec[id_idx] if id_idx is not None else rowno - 1
        yield Sample(sid, inputs, truth, pred, tval)


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def decision_log_csv(decisions: Iterable[Decision], comment: str | None = None) -> str:
    buf = io.StringIO()
    if comment:
        buf.write(f"# {comment}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(DECISION_COLUMNS)
    for d in decisions:
        w.writerow([_fmt(d.sample_id), _fmt(d.timestamp), _fmt(d.score), _fmt(d.accept), _fmt(d.prediction),
                    _fmt(d.truth), _fmt(d.correct), _fmt(d.engaged_auxiliary), d.error or ""])
    return buf.getvalue()
