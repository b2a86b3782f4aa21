"""Mahalanobis distance under a diagonal weight matrix.

Because the matrix is diagonal, dividing each axis by sqrt(beta_n) turns the
Mahalanobis distance into a plain Euclidean one; the spatial index relies on
that transform.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import CovarianceStructure, DimensionError, _frozen, as_feature_vector, as_points

__all__ = ["mahalanobis", "pairwise_to_point", "ScaledSpaceTransform", "to_scaled_space"]


def _betas(V, dim: int) -> np.ndarray:
    if len(V) != dim:
        raise DimensionError(f"covariance structure has {len(V)} features, vectors have {dim}")
    return V.betas


def mahalanobis(a, b, V: CovarianceStructure) -> float:
    """sqrt(sum_n (a_n - b_n)^2 / beta_n)."""
    a = as_feature_vector(a, name="a")
    b = as_feature_vector(b, dim=a.shape[0], name="b")
    betas = _betas(V, a.shape[0])
    d = a - b
    return float(np.sqrt(np.sum(d * d / betas)))


def pairwise_to_point(points, query, V: CovarianceStructure) -> np.ndarray:
    """Mahalanobis distance from every row of ``points`` to ``query``."""
    q = as_feature_vector(query, name="query")
    pts = as_points(points, dim=q.shape[0])
    betas = _betas(V, q.shape[0])
    d = pts - q
    return np.sqrt(np.sum(d * d / betas, axis=1))


@dataclass(frozen=True)
class ScaledSpaceTransform:
    multipliers: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.multipliers, dtype=np.float64)
        if not np.all(np.isfinite(m)) or np.any(m <= 0):
            raise ValueError("scale multipliers must be positive and finite")
        object.__setattr__(self, "multipliers", _frozen(m))

    @classmethod
    def from_covariance(cls, V: CovarianceStructure) -> "ScaledSpaceTransform":
        return cls(1.0 / np.sqrt(V.betas))

    def apply(self, points) -> np.ndarray:
        arr = np.asarray(points, dtype=np.float64)
        if arr.shape[-1] != self.multipliers.shape[0]:
            raise DimensionError(
                f"points have {arr.shape[-1]} features, transform has {self.multipliers.shape[0]}")
        return arr * self.multipliers


def to_scaled_space(points, V: CovarianceStructure) -> np.ndarray:
    pts = as_points(points, dim=len(V))
    return ScaledSpaceTransform.from_covariance(V).apply(pts)
