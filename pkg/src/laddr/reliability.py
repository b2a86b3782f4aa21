"""Relative reliability scores and reliability maps.

A query's reliability is the Laplacian decay ``exp(-D / alpha)`` with
``alpha = 0.5`` evaluated at the nearest training point. Taking the nearest
point is the same as taking the maximum decay over every training point,
so a query that coincides with any training point scores exactly 1.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .core import (
    SCALE_FACTOR,
    DimensionError,
    KnowledgeBase,
    LaddrError,
    Mode,
    ReliabilityConfig,
    SchemaError,
    as_feature_vector,
    atomic_write_text,
)
from .index import NeighborIndex, build_index

__all__ = [
    "ReliabilityScore",
    "ReliabilityMap",
    "decay",
    "reliability",
    "reliability_many",
    "reliability_mode_select",
    "build_query",
    "generate_map",
    "write_map_csv",
    "write_map_image",
]


def decay(distance):
    """Laplacian decay of a non-negative distance, in (0, 1]."""
    return np.exp(-np.asarray(distance, dtype=np.float64) / SCALE_FACTOR)


@dataclass(frozen=True)
class ReliabilityScore:
    value: float
    nearest_point_id: int
    nearest_distance: float


def reliability(query, index: NeighborIndex) -> ReliabilityScore:
    dist, idx = index.nearest(query)
    return ReliabilityScore(float(decay(dist)), idx, dist)


def reliability_many(queries, index: NeighborIndex, workers: int = 1):
    """Scores for many queries at once.

    Returns ``(values, nearest_ids, nearest_distances)`` as arrays.
    """
    dist, idx = index.nearest_many(queries, workers=workers)
    return decay(dist), idx, dist


def reliability_mode_select(inputs, prediction, config: ReliabilityConfig, schema=None) -> np.ndarray:
    """Assemble the normalized query vector for ``config.mode``.

    ``inputs`` and ``prediction`` are normalized values. In input-plus-target
    mode the prediction is appended as the last coordinate, matching
    :meth:`Schema.mode_indices`.
    """
    x = as_feature_vector(inputs, name="inputs")
    if schema is not None:
        if len(schema.input_indices) != x.shape[0]:
            raise DimensionError(f"{x.shape[0]} inputs given, schema has {len(schema.input_indices)}")
        if config.mode is Mode.INPUT_PLUS_TARGET and schema.target_index is None:
            raise SchemaError("mode input_plus_target needs a target feature in the schema")
    if config.mode is Mode.INPUT_ONLY:
        return x
    if prediction is None:
        raise LaddrError("mode input_plus_target requires a prediction")
    p = float(prediction)
    if not np.isfinite(p):
        raise LaddrError("prediction is not finite")
    return np.append(x, p)


def build_query(kb: KnowledgeBase, raw_inputs, raw_prediction, config: ReliabilityConfig) -> np.ndarray:
    """Normalize raw inputs (and prediction) with the KB scaler, then select by mode."""
    schema = kb.schema
    inputs = kb.scaler.normalize(as_feature_vector(raw_inputs, dim=len(schema.input_indices), name="inputs"),
                                 schema.input_indices)
    pred = None
    if config.mode is Mode.INPUT_PLUS_TARGET:
        if schema.target_index is None:
            raise SchemaError("mode input_plus_target needs a target feature in the schema")
        if raw_prediction is None:
            raise LaddrError("mode input_plus_target requires a prediction")
        pred = kb.scaler.normalize(raw_prediction, [schema.target_index])[0]
    return reliability_mode_select(inputs, pred, config)


@dataclass(frozen=True)
class ReliabilityMap:
    """Reliability evaluated on a 2-D grid slice.

    ``values[i, j]`` is the score at ``axis_values[0][i]`` along the first
    axis and ``axis_values[1][j]`` along the second.
    """

    axes: tuple[int, int]
    axis_names: tuple[str, str]
    axis_values: tuple[np.ndarray, np.ndarray]
    fixed_values: dict = field(default_factory=dict)
    values: np.ndarray = None

    @property
    def shape(self):
        return self.values.shape


def generate_map(kb: KnowledgeBase, config: ReliabilityConfig, axis_pair: Sequence[int] = (0, 1),
                 fixed_values: Mapping[int, float] | Sequence[float] | None = None,
                 resolution: int | Sequence[int] = 201,
                 value_range: Sequence[float] | Sequence[Sequence[float]] = (-0.1, 1.1),
                 index: NeighborIndex | None = None) -> ReliabilityMap:
    """Evaluate reliability over a grid in two of the query coordinates.

    Axes index the query coordinates for ``config.mode`` (inputs in schema
    order, then the target). Coordinates not on the grid are held at
    ``fixed_values`` (a mapping from coordinate to value, or a full vector
    whose grid entries are ignored); unspecified ones default to 0.5.
    """
    mode_idx = kb.schema.mode_indices(config.mode)
    dim = len(mode_idx)
    a0, a1 = (int(a) for a in axis_pair)
    for a in (a0, a1):
        if not 0 <= a < dim:
            raise LaddrError(f"axis {a} out of range for {dim} query coordinates")
    if a0 == a1:
        raise LaddrError("map axes must be distinct")
    res = (resolution, resolution) if np.isscalar(resolution) else tuple(resolution)
    if len(res) != 2 or min(res) < 2:
        raise LaddrError("map resolution must be at least 2 per axis")
    rng = np.asarray(value_range, dtype=np.float64)
    rng = np.vstack([rng, rng]) if rng.ndim == 1 else rng

    base = np.full(dim, 0.5)
    fixed: dict[int, float] = {}
    if fixed_values is not None:
        if isinstance(fixed_values, Mapping):
            items = fixed_values.items()
        else:
            vec = as_feature_vector(fixed_values, dim=dim, name="fixed values")
            items = enumerate(vec)
        for k, v in items:
            k = int(k)
            if not 0 <= k < dim:
                raise LaddrError(f"fixed coordinate {k} out of range")
            if k not in (a0, a1):
                base[k] = float(v)
                fixed[k] = float(v)
    for k in range(dim):
        if k not in (a0, a1):
            fixed.setdefault(k, float(base[k]))

    g0 = np.linspace(rng[0][0], rng[0][1], int(res[0]))
    g1 = np.linspace(rng[1][0], rng[1][1], int(res[1]))
    mesh0, mesh1 = np.meshgrid(g0, g1, indexing="ij")
    queries = np.tile(base, (mesh0.size, 1))
    queries[:, a0] = mesh0.ravel()
    queries[:, a1] = mesh1.ravel()

    if index is None:
        index = build_index(kb, config.covariance, config.mode)
    values, _, _ = reliability_many(queries, index)
    names = [kb.schema.names[i] for i in mode_idx]
    return ReliabilityMap((a0, a1), (names[a0], names[a1]), (g0, g1), fixed,
                          values.reshape(mesh0.shape))


def write_map_csv(rmap: ReliabilityMap, path=None, header_comment: str | None = None) -> str:
    """CSV with one row per grid cell: axis-1 value, axis-2 value, reliability."""
    buf = io.StringIO()
    if header_comment:
        buf.write(f"# {header_comment}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([rmap.axis_names[0], rmap.axis_names[1], "reliability"])
    g0, g1 = rmap.axis_values
    for i, x in enumerate(g0):
        for j, y in enumerate(g1):
            w.writerow([repr(float(x)), repr(float(y)), repr(float(rmap.values[i, j]))])
    text = buf.getvalue()
    if path is not None:
        atomic_write_text(path, text)
    return text


def _colormap(v: np.ndarray) -> np.ndarray:
    # dark blue -> cyan -> yellow -> white
    stops = np.array([[0.0, 0, 0, 80], [0.33, 0, 170, 200], [0.66, 250, 220, 30], [1.0, 255, 255, 255]])
    out = np.empty(v.shape + (3,))
    for c in range(3):
        out[..., c] = np.interp(v, stops[:, 0], stops[:, c + 1])
    return np.clip(np.rint(out), 0, 255).astype(np.uint8)


def write_map_image(rmap: ReliabilityMap, path) -> None:
    """Binary PPM heatmap; first axis runs left to right, second bottom to top."""
    rgb = _colormap(rmap.values.T[::-1])
    h, w = rgb.shape[:2]
    atomic_write_text(path, f"P6\n{w} {h}\n255\n".encode("ascii") + rgb.tobytes())
