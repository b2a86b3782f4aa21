"""Exact nearest-neighbour search over knowledge-base points.

Queries run against a kd-tree built in scaled space, where Euclidean
distance equals the Mahalanobis distance. ``brute_force_nearest`` is the
reference linear scan used to verify the tree.
"""
from __future__ import annotations

import numpy as np
from scipy.spatial import cKDTree

from .core import CovarianceStructure, DimensionError, KnowledgeBase, LaddrError, Mode, as_feature_vector, as_points
from .metric import ScaledSpaceTransform, pairwise_to_point

__all__ = ["StaleIndexError", "NeighborIndex", "build_index", "nearest", "brute_force_nearest"]


class StaleIndexError(LaddrError):
    """Raised when a query names a covariance structure other than the build one."""


def _kb_points(kb, mode: Mode | None) -> np.ndarray:
    if isinstance(kb, KnowledgeBase):
        return kb.points if mode is None else kb.project(mode)
    return as_points(kb)


class NeighborIndex:
    """Immutable kd-tree over points after the scaled-space transform.

    Parameters
    ----------
    points : (n, d) array
        Normalized knowledge-base points (already projected for the mode).
    covariance : CovarianceStructure
        Decay rates; fixed for the lifetime of the index.
    leafsize : int
        Passed to :class:`scipy.spatial.cKDTree`.
    """

    def __init__(self, points, covariance: CovarianceStructure, leafsize: int = 16):
        pts = as_points(points, name="index points")
        if pts.shape[0] == 0:
            raise LaddrError("cannot index an empty point set")
        if len(covariance) != pts.shape[1]:
            raise DimensionError(
                f"covariance structure has {len(covariance)} features, points have {pts.shape[1]}")
        self._points = pts.copy()
        self._points.setflags(write=False)
        self.covariance = covariance
        self.transform = ScaledSpaceTransform.from_covariance(covariance)
        # balanced_tree/compact_nodes defaults keep builds deterministic for a fixed order
        self._tree = cKDTree(self.transform.apply(self._points), leafsize=leafsize)

    @property
    def points(self) -> np.ndarray:
        return self._points

    @property
    def dim(self) -> int:
        return self._points.shape[1]

    def __len__(self) -> int:
        return self._points.shape[0]

    def _check(self, covariance):
        if covariance is not None and covariance != self.covariance:
            raise StaleIndexError("index was built for a different covariance structure; rebuild it")

    def nearest(self, query, covariance: CovarianceStructure | None = None) -> tuple[float, int]:
        """Distance to, and id of, the closest indexed point."""
        self._check(covariance)
        q = as_feature_vector(query, dim=self.dim, name="query")
        dist, idx = self._tree.query(self.transform.apply(q), k=1)
        return float(dist), int(idx)

    def nearest_many(self, queries, covariance: CovarianceStructure | None = None,
                     workers: int = 1) -> tuple[np.ndarray, np.ndarray]:
        """Vectorised :meth:`nearest` over the rows of ``queries``."""
        self._check(covariance)
        q = as_points(queries, dim=self.dim, name="queries")
        if q.shape[0] == 0:
            return np.empty(0), np.empty(0, dtype=np.intp)
        dist, idx = self._tree.query(self.transform.apply(q), k=1, workers=workers)
        return np.asarray(dist, dtype=np.float64), np.asarray(idx, dtype=np.intp)


def build_index(kb, V: CovarianceStructure, mode: Mode | None = None) -> NeighborIndex:
    """Index a knowledge base (optionally projected onto ``mode``'s features)."""
    return NeighborIndex(_kb_points(kb, mode), V)


def nearest(index: NeighborIndex, query, V: CovarianceStructure | None = None) -> tuple[float, int]:
    return index.nearest(query, V)


def brute_force_nearest(kb, V: CovarianceStructure, query, mode: Mode | None = None) -> tuple[float, int]:
    """Linear scan; returns the first point achieving the minimum distance."""
    pts = _kb_points(kb, mode)
    if pts.shape[0] == 0:
        raise LaddrError("cannot search an empty point set")
    d = pairwise_to_point(pts, query, V)
    i = int(np.argmin(d))
    return float(d[i]), i
