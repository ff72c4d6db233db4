"""Node-wise average-similarity statistic and the stopping rule built on it.

The statistic of node ``i`` is the negative mean similarity to its
neighbors; an alarm is raised at the first tick where the largest statistic
over active nodes strictly exceeds the threshold ``b``.

Two evaluation paths exist. :func:`run` drives the streaming pipeline
(window bank, snapshot, :func:`step`) one tick at a time. :class:`BatchEvaluator`
computes the same per-tick maxima for whole blocks of ticks with array
operations and backs the Monte Carlo routines.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Iterator, TextIO

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from simnet_cpd.errors import NotReadyError, UsageError
from simnet_cpd.graph_snapshot import SimilaritySnapshot, build_snapshot, complete_mask, validate_mask
from simnet_cpd.similarity import Measure, similarity_matrix, standardize_batch
from simnet_cpd.stream_window import ObservationFrame, WindowBank


def node_statistic(snap: SimilaritySnapshot, i: int) -> float:
    """Negative average similarity of node ``i`` over its neighborhood.

    Raises:
        NotReadyError: the node has no observed neighbors.
    """
    members = snap.mask[i]
    k = int(members.sum())
    if k == 0:
        raise NotReadyError(f"node {i} has an empty neighborhood")
    return -math.fsum(snap.y[i, members]) / k


def node_statistics(snap: SimilaritySnapshot) -> np.ndarray:
    """Statistic of every node; NaN where the neighborhood is empty."""
    counts = snap.mask.sum(axis=1)
    sums = snap.weights().sum(axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        rho = np.where(counts > 0, -sums / np.maximum(counts, 1), math.nan)
    return rho


@dataclass(frozen=True)
class DetectorState:
    """Stopping-rule state after the last processed tick."""

    b: float
    t: int = 0
    rho: np.ndarray | None = None
    alarmed: bool = False
    T: int | None = None
    argmax_node: int | None = None


def step(state: DetectorState, snap: SimilaritySnapshot) -> DetectorState:
    """Advance the stopping rule by one snapshot.

    Ties in the maximum go to the smallest node index; a statistic exactly
    equal to ``b`` does not alarm.
    """
    if state.alarmed:
        raise UsageError("detector already alarmed")
    if snap.t != state.t + 1:
        raise UsageError(f"snapshot tick {snap.t} does not follow state tick {state.t}")
    rho = node_statistics(snap)
    active = ~np.isnan(rho)
    if not active.any():
        raise NotReadyError(f"no active nodes at tick {snap.t}")
    top = int(np.flatnonzero(active)[np.argmax(rho[active])])
    if rho[top] > state.b:
        return replace(state, t=snap.t, rho=rho, alarmed=True, T=snap.t, argmax_node=top)
    return replace(state, t=snap.t, rho=rho, argmax_node=top)


@dataclass
class RunResult:
    """Outcome of one detection run.

    ``T`` is ``None`` when the run was censored at ``horizon`` ticks.
    ``trace`` holds ``(t, rho)`` for every evaluated tick.
    """

    T: int | None
    horizon: int
    argmax_node: int | None = None
    trace: list[tuple[int, np.ndarray]] = field(default_factory=list)

    @property
    def censored(self) -> bool:
        return self.T is None


def run(
    stream: Iterable[ObservationFrame],
    w: int,
    kind: Measure | str = Measure.PEARSON,
    edge_mask=None,
    b: float = 0.0,
    n_sensors: int | None = None,
) -> RunResult:
    """Feed frames through window bank, snapshot and stopping rule.

    Ticks on which no statistic can be formed (warm-up, too few complete
    windows, no active node) are skipped.
    """
    bank: WindowBank | None = None
    state = DetectorState(b=float(b))
    trace: list[tuple[int, np.ndarray]] = []
    last_t = 0
    for frame in stream:
        if bank is None:
            bank = WindowBank(n_sensors or frame.n, w)
            state = replace(state, t=frame.t - 1)
        bank.push(frame)
        last_t = frame.t
        try:
            snap = build_snapshot(bank, kind, edge_mask)
            state = step(state, snap)
        except NotReadyError:
            state = replace(state, t=frame.t)
            continue
        trace.append((frame.t, state.rho))
        if state.alarmed:
            return RunResult(state.T, last_t, state.argmax_node, trace)
    return RunResult(None, last_t, None, trace)


def write_trace(trace: Iterable[tuple[int, np.ndarray]], sink: str | Path | TextIO) -> None:
    """Write a trace as CSV rows ``t,node,rho``; inactive nodes are skipped."""
    if isinstance(sink, (str, Path)):
        with open(sink, "w", newline="") as fh:
            write_trace(trace, fh)
            return
    writer = csv.writer(sink, lineterminator="\n")
    writer.writerow(["t", "node", "rho"])
    for t, rho in trace:
        for i, r in enumerate(rho):
            if not math.isnan(r):
                writer.writerow([t, i, repr(float(r))])


def read_trace(source: str | Path | TextIO) -> dict[int, dict[int, float]]:
    if isinstance(source, (str, Path)):
        with open(source, newline="") as fh:
            return read_trace(fh)
    out: dict[int, dict[int, float]] = {}
    for row in csv.DictReader(source):
        out.setdefault(int(row["t"]), {})[int(row["node"])] = float(row["rho"])
    return out


class BatchEvaluator:
    """Per-tick maximum statistic for a fully observed raw-stream source.

    Pulls ticks from ``source.take`` in blocks and evaluates all windows of a
    block at once. With Pearson similarity on a complete graph the neighbor
    sum uses ``u_i . sum_j u_j``, which is ``O(N w)`` per tick.

    Args:
        source: Object with ``n`` and ``take(k) -> (k, N) array``.
        w: Window length.
        kind: Similarity measure.
        edge_mask: Optional ``N x N`` boolean mask; ``None`` means complete.
        block: Ticks evaluated per array operation.
    """

    def __init__(self, source, w: int, kind: Measure | str = Measure.PEARSON, edge_mask=None, block: int = 1024) -> None:
        self.source = source
        self.w = int(w)
        self.kind = Measure(kind)
        n = source.n
        self.mask = complete_mask(n) if edge_mask is None else validate_mask(edge_mask, n)
        self._complete = bool(self.mask.sum() == n * (n - 1))
        self._counts = self.mask.sum(axis=1)
        self._active = self._counts > 0
        self.block = int(block)
        self._tail = np.empty((0, n))
        self.t = 0  # last tick pulled from the source

    def next_block(self, k: int | None = None) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Evaluate the next ``k`` ticks.

        Returns:
            ``(ticks, max_rho, argmax)`` for the evaluable ticks among them
            (ticks before ``w`` are dropped).
        """
        k = self.block if k is None else int(k)
        fresh = self.source.take(k)
        self.t += k
        data = np.concatenate((self._tail, fresh), axis=0)
        self._tail = data[-(self.w - 1):] if self.w > 1 else data[:0]
        if data.shape[0] < self.w:
            empty = np.empty(0)
            return empty.astype(np.int64), empty, empty.astype(np.int64)
        windows = sliding_window_view(data, self.w, axis=0)  # (m, N, w)
        first_tick = self.t - data.shape[0] + self.w
        ticks = np.arange(first_tick, first_tick + windows.shape[0])
        rho = self.statistics(windows)
        masked = np.where(self._active[None, :], rho, -np.inf)
        arg = np.argmax(masked, axis=1)
        return ticks, masked[np.arange(masked.shape[0]), arg], arg

    def statistics(self, windows: np.ndarray) -> np.ndarray:
        """Statistic of every node for a stack of ``(m, N, w)`` windows."""
        if self.kind is Measure.PEARSON and self._complete:
            u, degenerate = standardize_batch(windows)
            total = u.sum(axis=1)
            dots = np.einsum("mnw,mw->mn", u, total)
            return -(dots - (~degenerate)) / (u.shape[1] - 1)
        y, _ = similarity_matrix(windows, self.kind)
        y = np.where(self.mask[None], y, 0.0)
        with np.errstate(invalid="ignore", divide="ignore"):
            return -y.sum(axis=2) / np.where(self._counts > 0, self._counts, 1)[None, :]

    def blocks(self, horizon: int) -> Iterator[tuple[np.ndarray, np.ndarray, np.ndarray]]:
        while self.t < horizon:
            yield self.next_block(min(self.block, horizon - self.t))


def first_alarm(source, w: int, b: float, horizon: int, kind: Measure | str = Measure.PEARSON, edge_mask=None, block: int = 128) -> tuple[int | None, int | None]:
    """Stopping time and alarming node of one replica, or ``(None, None)`` if censored."""
    ev = BatchEvaluator(source, w, kind, edge_mask, block)
    for ticks, top, arg in ev.blocks(horizon):
        hit = np.flatnonzero(top > b)
        if hit.size:
            j = int(hit[0])
            return int(ticks[j]), int(arg[j])
    return None, None


def record_path(source, w: int, horizon: int, kind: Measure | str = Measure.PEARSON, edge_mask=None, block: int = 1024) -> tuple[np.ndarray, np.ndarray]:
    """Ticks and values at which the running maximum statistic strictly increases.

    The stopping time for any threshold ``b`` is the first record whose value
    exceeds ``b``, so one pass over ``horizon`` ticks answers every ``b``.
    """
    ev = BatchEvaluator(source, w, kind, edge_mask, block)
    times: list[int] = []
    values: list[float] = []
    best = -math.inf
    for ticks, top, _ in ev.blocks(horizon):
        if top.size == 0:
            continue
        running = np.maximum.accumulate(np.concatenate(([best], top)))[1:]
        prev = np.concatenate(([best], running[:-1]))
        new = np.flatnonzero(top > prev)
        times.extend(int(t) for t in ticks[new])
        values.extend(float(v) for v in top[new])
        best = float(running[-1])
    return np.asarray(times, dtype=np.int64), np.asarray(values, dtype=float)


def stopping_time_from_records(times: np.ndarray, values: np.ndarray, b: float) -> int | None:
    k = int(np.searchsorted(values, b, side="right"))
    return int(times[k]) if k < times.shape[0] else None
