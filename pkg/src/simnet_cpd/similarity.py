"""Pairwise similarity between sensor windows.

Pearson correlation is computed as the inner product of standardized
(centered, unit-norm) windows. The sample mean divides by ``w`` and the
denominator is the product of both centered norms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from simnet_cpd.errors import DegenerateWindowError, DimensionError


class Measure(str, Enum):
    PEARSON = "pearson"
    INNER_PRODUCT = "inner_product"
    NEG_EUCLIDEAN = "neg_euclidean"


@dataclass(frozen=True)
class StandardizedWindow:
    """Centered window scaled to unit length.

    ``u`` is all zeros when ``degenerate`` is set.
    """

    u: np.ndarray
    degenerate: bool


def _as_window(x) -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    if arr.ndim != 1:
        raise DimensionError("window must be one-dimensional")
    if arr.shape[0] < 2:
        raise DimensionError(f"window length must be at least 2, got {arr.shape[0]}")
    return arr


def standardize(x) -> StandardizedWindow:
    """Center ``x`` on its sample mean and scale it to unit norm."""
    arr = _as_window(x)
    centered = arr - arr.mean()
    norm = float(np.linalg.norm(centered))
    # a constant window can leave rounding residue after centering
    if norm == 0.0 or not math.isfinite(norm) or arr.max() == arr.min():
        return StandardizedWindow(np.zeros_like(arr), True)
    return StandardizedWindow(centered / norm, False)


def standardize_batch(windows: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized :func:`standardize` over the last axis.

    Returns:
        ``(u, degenerate)`` where degenerate rows of ``u`` are zero.
    """
    x = np.asarray(windows, dtype=float)
    u = x - x.mean(axis=-1, keepdims=True)
    sq = np.einsum("...w,...w->...", u, u)
    degenerate = (sq == 0.0) | (x.max(axis=-1) == x.min(axis=-1))
    u /= np.sqrt(np.where(degenerate, 1.0, sq))[..., None]
    u[degenerate] = 0.0
    return u, degenerate


def _check_pair(x, y) -> tuple[np.ndarray, np.ndarray]:
    a = _as_window(x)
    b = _as_window(y)
    if a.shape != b.shape:
        raise DimensionError(f"window lengths differ: {a.shape[0]} vs {b.shape[0]}")
    return a, b


def pearson(x, y) -> float:
    """Pearson correlation of two equal-length windows, clamped to [-1, 1].

    Raises:
        DegenerateWindowError: if either window has zero variance.
    """
    a, b = _check_pair(x, y)
    sa, sb = standardize(a), standardize(b)
    if sa.degenerate or sb.degenerate:
        raise DegenerateWindowError("zero-variance window")
    return min(1.0, max(-1.0, float(sa.u @ sb.u)))


def measure(kind: Measure | str, x, y) -> float:
    """Similarity of two windows; larger means more similar for every kind."""
    kind = Measure(kind)
    if kind is Measure.PEARSON:
        return pearson(x, y)
    a, b = _check_pair(x, y)
    if kind is Measure.INNER_PRODUCT:
        return float(a @ b)
    return -float(np.linalg.norm(a - b))


def similarity_matrix(windows: np.ndarray, kind: Measure | str = Measure.PEARSON) -> tuple[np.ndarray, np.ndarray]:
    """All pairwise similarities of ``(..., N, w)`` windows.

    Degenerate windows get similarity 0 to every other window under Pearson.
    The diagonal is left as computed; callers mask it.

    Returns:
        ``(y, degenerate)`` with ``y`` of shape ``(..., N, N)``.
    """
    kind = Measure(kind)
    x = np.asarray(windows, dtype=float)
    if x.shape[-1] < 2:
        raise DimensionError("window length must be at least 2")
    if kind is Measure.PEARSON:
        u, degenerate = standardize_batch(x)
        y = np.clip(u @ np.swapaxes(u, -1, -2), -1.0, 1.0)
        return y, degenerate
    degenerate = np.zeros(x.shape[:-1], dtype=bool)
    if kind is Measure.INNER_PRODUCT:
        return x @ np.swapaxes(x, -1, -2), degenerate
    diff = x[..., :, None, :] - x[..., None, :, :]
    return -np.linalg.norm(diff, axis=-1), degenerate
