"""Per-tick similarity network built from a window bank."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np

from simnet_cpd.errors import NotReadyError
from simnet_cpd.similarity import Measure, similarity_matrix
from simnet_cpd.stream_window import WindowBank


def complete_mask(n: int) -> np.ndarray:
    mask = np.ones((n, n), dtype=bool)
    np.fill_diagonal(mask, False)
    return mask


def validate_mask(mask, n: int) -> np.ndarray:
    """Return ``mask`` as a symmetric boolean array with an empty diagonal."""
    m = np.array(mask, dtype=bool)
    if m.shape != (n, n):
        raise ValueError(f"edge mask must be {n}x{n}, got {m.shape}")
    if not np.array_equal(m, m.T):
        raise ValueError("edge mask must be symmetric")
    np.fill_diagonal(m, False)
    return m


@dataclass(frozen=True)
class SimilaritySnapshot:
    """Similarity network at tick ``t``.

    Masked-out entries of ``y`` (including the diagonal) hold NaN so that any
    accidental read poisons downstream arithmetic.
    """

    t: int
    y: np.ndarray
    mask: np.ndarray
    degenerate: frozenset[int] = frozenset()
    kind: str = Measure.PEARSON.value

    def __post_init__(self) -> None:
        y = np.array(self.y, dtype=float)
        mask = np.array(self.mask, dtype=bool)
        if y.ndim != 2 or y.shape[0] != y.shape[1] or mask.shape != y.shape:
            raise ValueError("y and mask must be matching square matrices")
        np.fill_diagonal(mask, False)
        if not np.array_equal(mask, mask.T):
            raise ValueError("mask must be symmetric")
        y = np.where(mask, y, math.nan)
        if not np.array_equal(np.where(mask, y, 0.0), np.where(mask, y, 0.0).T):
            raise ValueError("y must be symmetric on observed edges")
        y.setflags(write=False)
        mask.setflags(write=False)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "mask", mask)
        object.__setattr__(self, "degenerate", frozenset(int(i) for i in self.degenerate))

    @property
    def n(self) -> int:
        return int(self.y.shape[0])

    def weights(self) -> np.ndarray:
        """Dense copy of ``y`` with unobserved entries set to 0."""
        return np.where(self.mask, self.y, 0.0)

    def to_dict(self) -> dict[str, Any]:
        rows = [[None if not self.mask[i, j] else float(self.y[i, j]) for j in range(self.n)] for i in range(self.n)]
        return {"t": self.t, "n": self.n, "y": rows, "degenerate": sorted(self.degenerate), "kind": self.kind}

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "SimilaritySnapshot":
        n = int(data["n"])
        rows = data["y"]
        if len(rows) != n or any(len(r) != n for r in rows):
            raise ValueError(f"snapshot y must be {n}x{n}")
        mask = np.array([[v is not None for v in r] for r in rows], dtype=bool)
        y = np.array([[math.nan if v is None else float(v) for v in r] for r in rows], dtype=float)
        return cls(
            t=int(data.get("t", 0)),
            y=y,
            mask=mask,
            degenerate=frozenset(data.get("degenerate", ())),
            kind=data.get("kind", Measure.PEARSON.value),
        )

    @classmethod
    def from_matrix(cls, y, mask=None, t: int = 0, kind: str = Measure.PEARSON.value) -> "SimilaritySnapshot":
        y = np.asarray(y, dtype=float)
        if mask is None:
            mask = complete_mask(y.shape[0])
        return cls(t=t, y=y, mask=mask, kind=kind)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def load(cls, path: str | Path) -> "SimilaritySnapshot":
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass(frozen=True)
class Neighborhood:
    node: int
    members: frozenset[int]


def build_snapshot(bank: WindowBank, kind: Measure | str = Measure.PEARSON, edge_mask=None) -> SimilaritySnapshot:
    """Compute the similarity network for the bank's current tick.

    Only pairs allowed by ``edge_mask`` whose windows are both complete are
    observed; everything else is masked out.

    Raises:
        NotReadyError: fewer than two sensors have a complete window.
    """
    kind = Measure(kind)
    complete = bank.complete_sensors()
    if bank.t is None or int(complete.sum()) < 2:
        raise NotReadyError("fewer than two complete windows")
    base = complete_mask(bank.n) if edge_mask is None else validate_mask(edge_mask, bank.n)
    mask = base & complete[:, None] & complete[None, :]
    idx = np.flatnonzero(complete)
    y = np.full((bank.n, bank.n), math.nan)
    sub, degenerate = similarity_matrix(np.stack([bank.window(int(i)) for i in idx]), kind)
    y[np.ix_(idx, idx)] = sub
    # symmetrize exactly; matmul can differ in the last bit between (i,j) and (j,i)
    y = np.triu(y, 1) + np.triu(y, 1).T
    flagged = frozenset(int(idx[k]) for k in np.flatnonzero(degenerate))
    return SimilaritySnapshot(t=int(bank.t), y=y, mask=mask, degenerate=flagged, kind=kind.value)


def neighborhood(snap: SimilaritySnapshot, i: int) -> Neighborhood:
    if not 0 <= i < snap.n:
        raise IndexError(f"node {i} out of range for {snap.n} nodes")
    return Neighborhood(i, frozenset(int(j) for j in np.flatnonzero(snap.mask[i]) if j != i))
