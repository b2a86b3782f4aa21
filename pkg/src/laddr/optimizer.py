"""Exhaustive grid search over extrapolation diameters.

The metrics are step functions of the diameters (they change only when a
sample crosses the accept threshold), so the search simply evaluates every
candidate on a Cartesian grid and keeps the best one.
"""
from __future__ import annotations

import csv
import io
import itertools
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .core import DiameterVector, KnowledgeBase, LaddrError, Mode, ReliabilityConfig, as_points, atomic_write_text
from .index import build_index, brute_force_nearest
from .metrics import AcceptanceCriterion, ConfusionCounts, degradation, ineptitude, peril, tally
from .reliability import decay, reliability_many

__all__ = [
    "OBJECTIVES",
    "UndefinedObjectiveError",
    "EvaluationSet",
    "SearchSpec",
    "CandidateResult",
    "OptimizationResult",
    "normalized_queries",
    "evaluate_candidate",
    "evaluate_candidate_brute_force",
    "optimize",
    "write_trace_csv",
]

OBJECTIVES = {"peril": peril, "degradation": degradation, "ineptitude": ineptitude}


class UndefinedObjectiveError(LaddrError):
    pass


@dataclass(frozen=True)
class EvaluationSet:
    """Raw inputs with the model's prediction and the truth for each sample."""

    inputs: np.ndarray
    predictions: np.ndarray
    truths: np.ndarray

    def __post_init__(self):
        x = as_points(self.inputs, name="evaluation inputs")
        p = np.asarray(self.predictions, dtype=np.float64).reshape(-1)
        t = np.asarray(self.truths, dtype=np.float64).reshape(-1)
        if x.shape[0] == 0:
            raise LaddrError("evaluation set is empty")
        if not (x.shape[0] == p.shape[0] == t.shape[0]):
            raise LaddrError("evaluation inputs, predictions and truths differ in length")
        if not (np.all(np.isfinite(p)) and np.all(np.isfinite(t))):
            raise LaddrError("evaluation set contains non-finite values")
        for name, arr in (("inputs", x), ("predictions", p), ("truths", t)):
            arr = np.array(arr, copy=True)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    def __len__(self) -> int:
        return self.inputs.shape[0]

    @classmethod
    def from_predictor(cls, inputs, truths, predictor) -> "EvaluationSet":
        x = np.asarray(inputs, dtype=np.float64)
        preds = np.array([predictor(row) for row in x], dtype=np.float64)
        return cls(x, preds, truths)


def _grid(spec) -> np.ndarray:
    if isinstance(spec, tuple) and len(spec) == 3 and isinstance(spec[2], (int, np.integer)):
        lo, hi, steps = spec
        if not (lo > 0 and hi >= lo and steps >= 1):
            raise LaddrError(f"invalid grid axis {spec}: need 0 < min <= max and steps >= 1")
        return np.linspace(lo, hi, steps) if steps > 1 else np.array([float(lo)])
    vals = np.asarray(spec, dtype=np.float64).reshape(-1)
    if vals.size == 0 or np.any(vals <= 0) or not np.all(np.isfinite(vals)):
        raise LaddrError(f"candidate diameters must be a non-empty list of positive values, got {spec}")
    return vals


@dataclass(frozen=True)
class SearchSpec:
    """Candidate diameters per feature plus the objective to minimise.

    Each entry of ``axes`` is either ``(min, max, steps)`` (linearly spaced)
    or an explicit list of candidates. ``frozen`` maps a feature index to a
    fixed diameter that replaces that axis.
    """

    axes: tuple
    objective: str = "ineptitude"
    frozen: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.objective not in OBJECTIVES:
            raise LaddrError(f"unknown objective {self.objective!r}; choose from {sorted(OBJECTIVES)}")
        object.__setattr__(self, "axes", tuple(self.axes))
        for k in self.frozen:
            if not 0 <= int(k) < len(self.axes):
                raise LaddrError(f"frozen feature {k} out of range")

    def candidates(self) -> list[tuple[float, ...]]:
        grids = []
        for i, ax in enumerate(self.axes):
            if i in self.frozen:
                grids.append(_grid([self.frozen[i]]))
            else:
                grids.append(_grid(ax))
        return [tuple(float(v) for v in c) for c in itertools.product(*grids)]


@dataclass(frozen=True)
class CandidateResult:
    diameters: tuple[float, ...]
    counts: ConfusionCounts
    peril: float | None
    degradation: float | None
    ineptitude: float | None

    def objective(self, name: str) -> float | None:
        return getattr(self, name)

    def to_json(self) -> dict:
        return {"diameters": list(self.diameters), "counts": self.counts.to_json(),
                "peril": self.peril, "degradation": self.degradation, "ineptitude": self.ineptitude}


@dataclass(frozen=True)
class OptimizationResult:
    best: CandidateResult
    objective: str
    trace: tuple[CandidateResult, ...]

    @property
    def diameters(self) -> DiameterVector:
        return DiameterVector(self.best.diameters)


def normalized_queries(kb: KnowledgeBase, eval_set: EvaluationSet, mode: Mode) -> np.ndarray:
    """Query vectors for every evaluation sample in ``mode`` (normalized units)."""
    schema = kb.schema
    if eval_set.inputs.shape[1] != len(schema.input_indices):
        raise LaddrError(f"evaluation set has {eval_set.inputs.shape[1]} inputs, "
                         f"knowledge base has {len(schema.input_indices)}")
    q = kb.scaler.normalize(eval_set.inputs, schema.input_indices)
    if Mode(mode) is Mode.INPUT_PLUS_TARGET:
        idx = schema.mode_indices(mode)[-1]
        q = np.column_stack([q, kb.scaler.normalize(eval_set.predictions, [idx])])
    return q


def _result(diameters, counts) -> CandidateResult:
    return CandidateResult(tuple(float(d) for d in diameters), counts,
                           peril(counts), degradation(counts), ineptitude(counts))


def evaluate_candidate(kb: KnowledgeBase, diameters, eval_set: EvaluationSet, config: ReliabilityConfig,
                       criterion: AcceptanceCriterion, queries: np.ndarray | None = None) -> CandidateResult:
    """Score every evaluation sample under ``diameters`` and tally the outcome."""
    cfg = config.with_diameters(diameters)
    if queries is None:
        queries = normalized_queries(kb, eval_set, cfg.mode)
    index = build_index(kb, cfg.covariance, cfg.mode)
    scores, _, _ = reliability_many(queries, index)
    counts = tally(scores, eval_set.predictions, eval_set.truths, cfg.accept_threshold, criterion)
    return _result(cfg.diameters.values, counts)


def evaluate_candidate_brute_force(kb, diameters, eval_set, config, criterion) -> CandidateResult:
    """Same as :func:`evaluate_candidate` but scoring each sample by linear scan."""
    cfg = config.with_diameters(diameters)
    V = cfg.covariance
    queries = normalized_queries(kb, eval_set, cfg.mode)
    scores = np.array([decay(brute_force_nearest(kb, V, q, cfg.mode)[0]) for q in queries])
    counts = tally(scores, eval_set.predictions, eval_set.truths, cfg.accept_threshold, criterion)
    return _result(cfg.diameters.values, counts)


def optimize(kb: KnowledgeBase, search: SearchSpec, eval_set: EvaluationSet, config: ReliabilityConfig,
             criterion: AcceptanceCriterion) -> OptimizationResult:
    """Evaluate the full grid and return the candidate with the lowest objective.

    Candidates whose objective is undefined are skipped. Ties go to the
    lexicographically smallest diameter vector. The trace lists every
    candidate in grid order.
    """
    dims = len(kb.schema.mode_indices(config.mode))
    if len(search.axes) != dims:
        raise LaddrError(f"search has {len(search.axes)} axes, mode {config.mode.value} needs {dims}")
    queries = normalized_queries(kb, eval_set, config.mode)
    trace = tuple(evaluate_candidate(kb, c, eval_set, config, criterion, queries=queries)
                  for c in search.candidates())
    defined = [r for r in trace if r.objective(search.objective) is not None]
    if not defined:
        raise UndefinedObjectiveError(f"{search.objective} is undefined for every candidate")
    best = min(defined, key=lambda r: (r.objective(search.objective), r.diameters))
    return OptimizationResult(best, search.objective, trace)


def _fmt(v) -> str:
    return "" if v is None else repr(float(v))


def write_trace_csv(result: OptimizationResult, feature_names: Sequence[str], path=None,
                    comment: str | None = None) -> str:
    buf = io.StringIO()
    if comment:
        buf.write(f"# {comment}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([f"gamma_{n}" for n in feature_names] + ["A_o", "A_x", "R_o", "R_x", "peril", "degradation", "ineptitude"])
    for r in result.trace:
        c = r.counts
        w.writerow([repr(d) for d in r.diameters]
                   + [c.accepted_correct, c.accepted_incorrect, c.rejected_correct, c.rejected_incorrect]
                   + [_fmt(r.peril), _fmt(r.degradation), _fmt(r.ineptitude)])
    text = buf.getvalue()
    if path is not None:
        atomic_write_text(path, text)
    return text
