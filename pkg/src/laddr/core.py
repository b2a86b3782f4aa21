"""Domain types, min-max normalization, and knowledge-base I/O.

All distances and diameters downstream operate on min-max normalized
coordinates. The knowledge base stores normalized points together with the
scaler that produced them so raw operational samples can be mapped into the
same space.
"""
from __future__ import annotations

import csv
import datetime as _dt
import enum
import io
import json
import math
import os
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

__all__ = [
    "SCALE_FACTOR",
    "LaddrError",
    "DimensionError",
    "SchemaError",
    "Mode",
    "Feature",
    "Schema",
    "FeatureScaler",
    "KnowledgeBase",
    "DiameterVector",
    "CovarianceStructure",
    "ReliabilityConfig",
    "as_feature_vector",
    "as_points",
    "build_knowledge_base",
    "solve_covariance",
    "read_raw_csv",
    "save_knowledge_base",
    "load_knowledge_base",
    "atomic_write_text",
]

# Laplacian scale factor; fixed so that a query on a training point scores 1.
SCALE_FACTOR = 0.5

KB_FORMAT_VERSION = 1


class LaddrError(ValueError):
    """Base class for invalid inputs rejected by this package."""


class DimensionError(LaddrError):
    pass


class SchemaError(LaddrError):
    pass


class Mode(str, enum.Enum):
    """Which coordinates form a reliability query."""

    INPUT_ONLY = "input_only"
    INPUT_PLUS_TARGET = "input_plus_target"


def as_feature_vector(values, dim: int | None = None, *, name: str = "vector") -> np.ndarray:
    """Return ``values`` as a finite 1-D float64 array, checking its length."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim == 0:
        arr = arr.reshape(1)
    if arr.ndim != 1:
        raise DimensionError(f"{name} must be 1-D, got shape {arr.shape}")
    if dim is not None and arr.shape[0] != dim:
        raise DimensionError(f"{name} has {arr.shape[0]} features, expected {dim}")
    if not np.all(np.isfinite(arr)):
        raise LaddrError(f"{name} contains non-finite values")
    return arr


def as_points(values, dim: int | None = None, *, name: str = "points") -> np.ndarray:
    """Return ``values`` as a finite (n, d) float64 array."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr.reshape(-1, 1) if dim in (None, 1) else arr.reshape(1, -1)
    if arr.ndim != 2:
        raise DimensionError(f"{name} must be 2-D, got shape {arr.shape}")
    if dim is not None and arr.shape[1] != dim:
        raise DimensionError(f"{name} have {arr.shape[1]} features, expected {dim}")
    if not np.all(np.isfinite(arr)):
        raise LaddrError(f"{name} contain non-finite values")
    return arr


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, dtype=np.float64, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Feature:
    name: str
    target: bool = False


@dataclass(frozen=True)
class Schema:
    """Ordered feature names, each flagged as an input or the target.

    At most one feature may be the target.
    """

    features: tuple[Feature, ...]

    def __post_init__(self):
        if not self.features:
            raise SchemaError("schema has no features")
        names = [f.name for f in self.features]
        if len(set(names)) != len(names):
            raise SchemaError(f"duplicate feature names in schema: {names}")
        if sum(f.target for f in self.features) > 1:
            raise SchemaError("schema may contain at most one target feature")

    @classmethod
    def from_names(cls, inputs: Sequence[str], target: str | None = None) -> "Schema":
        feats = [Feature(n) for n in inputs]
        if target is not None:
            feats.append(Feature(target, target=True))
        return cls(tuple(feats))

    @property
    def names(self) -> list[str]:
        return [f.name for f in self.features]

    @property
    def input_indices(self) -> list[int]:
        return [i for i, f in enumerate(self.features) if not f.target]

    @property
    def input_names(self) -> list[str]:
        return [self.features[i].name for i in self.input_indices]

    @property
    def target_index(self) -> int | None:
        for i, f in enumerate(self.features):
            if f.target:
                return i
        return None

    @property
    def target_name(self) -> str | None:
        i = self.target_index
        return None if i is None else self.features[i].name

    def __len__(self) -> int:
        return len(self.features)

    def mode_indices(self, mode: Mode) -> list[int]:
        """Feature indices that make up a query in ``mode``.

        Inputs come first in schema order; the target (when used) is last.
        """
        mode = Mode(mode)
        if mode is Mode.INPUT_ONLY:
            return self.input_indices
        if self.target_index is None:
            raise SchemaError("mode input_plus_target needs a target feature in the schema")
        return self.input_indices + [self.target_index]

    def to_json(self) -> list[dict]:
        return [{"name": f.name, "role": "target" if f.target else "input"} for f in self.features]

    @classmethod
    def from_json(cls, data: Iterable[Mapping]) -> "Schema":
        feats = []
        for item in data:
            role = item.get("role", "input")
            if role not in ("input", "target"):
                raise SchemaError(f"unknown feature role {role!r}")
            feats.append(Feature(str(item["name"]), target=role == "target"))
        return cls(tuple(feats))


@dataclass(frozen=True)
class FeatureScaler:
    """Per-feature min-max bounds in raw engineering units."""

    minimum: np.ndarray
    maximum: np.ndarray

    def __post_init__(self):
        lo = as_feature_vector(self.minimum, name="scaler minimum")
        hi = as_feature_vector(self.maximum, dim=lo.shape[0], name="scaler maximum")
        bad = np.flatnonzero(hi <= lo)
        if bad.size:
            raise LaddrError(f"scaler bounds must satisfy max > min; violated for features {bad.tolist()}")
        object.__setattr__(self, "minimum", _frozen(lo))
        object.__setattr__(self, "maximum", _frozen(hi))

    @classmethod
    def fit(cls, raw: np.ndarray, names: Sequence[str] | None = None) -> "FeatureScaler":
        raw = np.asarray(raw, dtype=np.float64)
        lo, hi = raw.min(axis=0), raw.max(axis=0)
        const = np.flatnonzero(hi == lo)
        if const.size:
            label = [names[i] for i in const] if names else const.tolist()
            raise LaddrError(f"constant column(s) {label}: normalization undefined")
        return cls(lo, hi)

    @property
    def dim(self) -> int:
        return self.minimum.shape[0]

    @property
    def span(self) -> np.ndarray:
        return self.maximum - self.minimum

    def normalize(self, raw, features: Sequence[int] | None = None) -> np.ndarray:
        lo, span = self._select(features)
        return (np.asarray(raw, dtype=np.float64) - lo) / span

    def denormalize(self, values, features: Sequence[int] | None = None) -> np.ndarray:
        lo, span = self._select(features)
        return np.asarray(values, dtype=np.float64) * span + lo

    def _select(self, features):
        if features is None:
            return self.minimum, self.span
        idx = list(features)
        return self.minimum[idx], self.span[idx]


@dataclass(frozen=True)
class KnowledgeBase:
    """Normalized training points used as evidence for predictions.

    Build with :func:`build_knowledge_base` from raw rows, or with
    :meth:`from_normalized` when points are already in scaled units.
    Instances and their arrays are read-only.
    """

    schema: Schema
    scaler: FeatureScaler
    points: np.ndarray
    source: str = ""
    created: str = ""

    def __post_init__(self):
        pts = as_points(self.points, dim=len(self.schema), name="knowledge-base points")
        if pts.shape[0] == 0:
            raise LaddrError("knowledge base is empty")
        if self.scaler.dim != len(self.schema):
            raise DimensionError("scaler and schema dimensions differ")
        object.__setattr__(self, "points", _frozen(pts))

    @classmethod
    def from_normalized(cls, points, schema: Schema, scaler: FeatureScaler | None = None,
                        source: str = "", created: str = "") -> "KnowledgeBase":
        if scaler is None:
            n = len(schema)
            scaler = FeatureScaler(np.zeros(n), np.ones(n))
        return cls(schema, scaler, points, source=source, created=created)

    @property
    def count(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def project(self, mode: Mode) -> np.ndarray:
        """Points restricted to the coordinates queried in ``mode``."""
        return self.points[:, self.schema.mode_indices(mode)]

    @property
    def metadata(self) -> dict:
        return {"source": self.source, "created": self.created, "count": self.count}


@dataclass(frozen=True)
class DiameterVector:
    """Per-feature extrapolation diameters in normalized units."""

    values: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.values, dtype=np.float64).reshape(-1)
        if arr.size == 0:
            raise LaddrError("diameter vector is empty")
        if not np.all(np.isfinite(arr)) or np.any(arr <= 0):
            raise LaddrError(f"diameters must be positive and finite, got {arr.tolist()}")
        object.__setattr__(self, "values", _frozen(arr))

    def __len__(self) -> int:
        return self.values.shape[0]

    def scaled(self, factor: float) -> "DiameterVector":
        return DiameterVector(self.values * factor)

    def tolist(self) -> list[float]:
        return self.values.tolist()


@dataclass(frozen=True)
class CovarianceStructure:
    """Diagonal decay rates; the Mahalanobis weight matrix is diag(``betas``).

    This is a shape parameter for the decay kernel, not the data covariance.
    """

    betas: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.betas, dtype=np.float64).reshape(-1)
        if arr.size == 0:
            raise LaddrError("covariance structure is empty")
        if not np.all(np.isfinite(arr)) or np.any(arr <= 0):
            raise LaddrError(f"decay rates must be positive and finite, got {arr.tolist()}")
        object.__setattr__(self, "betas", _frozen(arr))

    def __len__(self) -> int:
        return self.betas.shape[0]

    def __eq__(self, other):
        if not isinstance(other, CovarianceStructure):
            return NotImplemented
        return self.betas.shape == other.betas.shape and bool(np.array_equal(self.betas, other.betas))

    def __hash__(self):
        return hash(self.betas.tobytes())

    @classmethod
    def identity(cls, dim: int) -> "CovarianceStructure":
        return cls(np.ones(dim))

    @property
    def matrix(self) -> np.ndarray:
        return np.diag(self.betas)


@dataclass(frozen=True)
class ReliabilityConfig:
    diameters: DiameterVector
    decay_threshold: float = 0.2
    accept_threshold: float = 0.5
    mode: Mode = Mode.INPUT_PLUS_TARGET

    def __post_init__(self):
        if not isinstance(self.diameters, DiameterVector):
            object.__setattr__(self, "diameters", DiameterVector(self.diameters))
        object.__setattr__(self, "mode", Mode(self.mode))
        if not 0.0 < self.decay_threshold < 1.0:
            raise LaddrError(f"decay threshold must lie in (0, 1), got {self.decay_threshold}")
        if not 0.0 < self.accept_threshold < 1.0:
            raise LaddrError(f"accept threshold must lie in (0, 1), got {self.accept_threshold}")

    @property
    def scale_factor(self) -> float:
        return SCALE_FACTOR

    @property
    def covariance(self) -> CovarianceStructure:
        return solve_covariance(self.diameters, self.decay_threshold)

    def with_diameters(self, diameters) -> "ReliabilityConfig":
        return ReliabilityConfig(DiameterVector(np.asarray(getattr(diameters, "values", diameters))),
                                 self.decay_threshold, self.accept_threshold, self.mode)

    def to_json(self) -> dict:
        return {
            "diameters": self.diameters.tolist(),
            "decay_threshold": self.decay_threshold,
            "accept_threshold": self.accept_threshold,
            "scale_factor": SCALE_FACTOR,
            "mode": self.mode.value,
        }


def solve_covariance(diameters, decay_threshold: float = 0.2) -> CovarianceStructure:
    """Decay rates that put the reliability at ``decay_threshold`` at half a diameter.

    Along feature n, an isolated training point scores exactly
    ``decay_threshold`` at offset ``gamma_n / 2``, which requires

        beta_n = (gamma_n / ln(1 / decay_threshold)) ** 2

    Parameters
    ----------
    diameters : DiameterVector or array_like
        Extrapolation diameters, normalized units, all > 0.
    decay_threshold : float
        Reliability level that defines the diameter, in (0, 1).
    """
    if not 0.0 < decay_threshold < 1.0:
        raise LaddrError(f"decay threshold must lie in (0, 1), got {decay_threshold}")
    if not isinstance(diameters, DiameterVector):
        diameters = DiameterVector(diameters)
    return CovarianceStructure((diameters.values / math.log(1.0 / decay_threshold)) ** 2)


def build_knowledge_base(rows, schema: Schema, *, source: str = "", created: str | None = None,
                         scaler: FeatureScaler | None = None) -> KnowledgeBase:
    """Fit a min-max scaler on ``rows`` and store the normalized points.

    ``rows`` is any 2-D table of raw values with columns in schema order.
    Passing ``scaler`` skips fitting (points may then fall outside [0, 1]).
    Duplicate rows are kept; row order is preserved.
    """
    data = [list(r) for r in rows] if not isinstance(rows, np.ndarray) else rows
    if len(data) == 0:
        raise LaddrError("empty input: knowledge base needs at least one row")
    width = len(schema)
    for i, r in enumerate(data):
        if len(r) != width:
            raise DimensionError(f"row {i} has {len(r)} values, schema has {width} features")
    raw = np.asarray(data, dtype=np.float64)
    bad = np.argwhere(~np.isfinite(raw))
    if bad.size:
        r, c = bad[0]
        raise LaddrError(f"non-finite value at row {r}, column {schema.names[c]!r}")
    if scaler is None:
        scaler = FeatureScaler.fit(raw, schema.names)
    if created is None:
        created = _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")
    points = scaler.normalize(raw)
    return KnowledgeBase(schema, scaler, points, source=source, created=created)


def read_raw_csv(path_or_file, columns: Sequence[str] | None = None):
    """Read a CSV with a header row; lines starting with ``#`` are skipped.

    Returns ``(header, array)`` where the array holds the selected columns
    (all columns when ``columns`` is None) as float64.
    """
    if hasattr(path_or_file, "read"):
        text = path_or_file.read()
    else:
        text = Path(path_or_file).read_text()
    lines = [ln for ln in text.splitlines() if ln.strip() and not ln.lstrip().startswith("#")]
    if not lines:
        raise LaddrError("empty input: no header row")
    reader = csv.reader(lines)
    header = [h.strip() for h in next(reader)]
    idx = list(range(len(header)))
    if columns is not None:
        missing = [c for c in columns if c not in header]
        if missing:
            raise SchemaError(f"columns {missing} not found in header {header}")
        idx = [header.index(c) for c in columns]
    rows = []
    for lineno, rec in enumerate(reader, start=2):
        if len(rec) != len(header):
            raise LaddrError(f"line {lineno}: expected {len(header)} fields, got {len(rec)}")
        try:
            rows.append([float(rec[i]) for i in idx])
        except ValueError as err:
            raise LaddrError(f"line {lineno}: {err}") from None
    names = [header[i] for i in idx]
    return names, np.asarray(rows, dtype=np.float64).reshape(len(rows), len(idx))


def atomic_write_text(path, text: str | bytes) -> None:
    """Write ``text`` to ``path`` through a temporary file and rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        if isinstance(text, str):
            text = text.encode("utf-8")
        with os.fdopen(fd, "wb") as fh:
            fh.write(text)
        umask = os.umask(0)
        os.umask(umask)
        os.chmod(tmp, 0o666 & ~umask)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


def _kb_paths(path) -> tuple[Path, Path]:
    p = Path(path)
    name = p.name
    for suffix in (".kb.json", ".kb.csv"):
        if name.endswith(suffix):
            name = name[: -len(suffix)]
            return p.with_name(name + ".kb.json"), p.with_name(name + ".kb.csv")
    # a plain "kb.json" / "kb.csv" names one file of the pair directly
    if p.suffix in (".json", ".csv"):
        return p.with_suffix(".json"), p.with_suffix(".csv")
    return p.with_name(name + ".kb.json"), p.with_name(name + ".kb.csv")


def save_knowledge_base(kb: KnowledgeBase, path, extra: Mapping | None = None) -> tuple[Path, Path]:
    """Write ``<name>.kb.json`` (header) and ``<name>.kb.csv`` (points).

    ``path`` may be the stem or either file name. Values are written with
    ``repr`` so they round-trip exactly.
    """
    header_path, csv_path = _kb_paths(path)
    header = {
        "format": "laddr-kb",
        "format_version": KB_FORMAT_VERSION,
        "schema": kb.schema.to_json(),
        "scaler": {"min": kb.scaler.minimum.tolist(), "max": kb.scaler.maximum.tolist()},
        "metadata": kb.metadata,
        "points_file": csv_path.name,
    }
    if extra:
        header.update(extra)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(kb.schema.names)
    for row in kb.points:
        writer.writerow([repr(float(v)) for v in row])
    atomic_write_text(csv_path, buf.getvalue())
    atomic_write_text(header_path, json.dumps(header, indent=2) + "\n")
    return header_path, csv_path


def load_knowledge_base(path) -> KnowledgeBase:
    header_path, csv_path = _kb_paths(path)
    try:
        header = json.loads(header_path.read_text())
    except json.JSONDecodeError as err:
        raise LaddrError(f"{header_path}: invalid JSON header ({err})") from None
    if header.get("format") != "laddr-kb":
        raise SchemaError(f"{header_path} is not a knowledge-base header")
    schema = Schema.from_json(header["schema"])
    scaler = FeatureScaler(header["scaler"]["min"], header["scaler"]["max"])
    points_path = header_path.with_name(header.get("points_file", csv_path.name))
    names, points = read_raw_csv(points_path)
    if names != schema.names:
        raise SchemaError(f"{points_path} columns {names} do not match schema {schema.names}")
    meta = header.get("metadata", {})
    kb = KnowledgeBase(schema, scaler, points, source=meta.get("source", ""),
                       created=meta.get("created", ""))
    if "count" in meta and meta["count"] != kb.count:
        raise SchemaError(f"header count {meta['count']} != {kb.count} stored points")
    return kb
