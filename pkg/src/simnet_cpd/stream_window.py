"""Per-sensor sliding windows over a multi-sensor stream.

A :class:`WindowBank` keeps one ring buffer of length ``w`` per sensor.
Missing readings freeze the affected buffer: nothing is pushed and the fill
count is unchanged, so a sensor only joins the similarity network once it
has ``w`` stored readings.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Sequence, TextIO

import numpy as np

from simnet_cpd.errors import SequencingError


@dataclass(frozen=True)
class ObservationFrame:
    """Readings of all ``N`` sensors at one tick.

    ``values`` holds NaN at the positions listed in ``missing``.
    """

    t: int
    values: np.ndarray
    missing: frozenset[int] = field(default_factory=frozenset)

    @classmethod
    def from_values(cls, t: int, values: Sequence[float | None]) -> "ObservationFrame":
        """Build a frame; ``None`` or NaN entries are treated as missing."""
        arr = np.array([math.nan if v is None else float(v) for v in values], dtype=float)
        missing = frozenset(int(i) for i in np.flatnonzero(np.isnan(arr)))
        return cls(int(t), arr, missing)

    @property
    def n(self) -> int:
        return int(self.values.shape[0])


class WindowBank:
    """Ring buffers holding the last ``w`` readings of each sensor.

    Memory is ``O(n_sensors * w)`` regardless of stream length.

    Args:
        n_sensors: Number of sensors ``N``; fixed for the life of the bank.
        w: Window length in ticks.
    """

    def __init__(self, n_sensors: int, w: int) -> None:
        if n_sensors < 1:
            raise ValueError("n_sensors must be positive")
        if w < 1:
            raise ValueError("window length must be positive")
        self.n = int(n_sensors)
        self.w = int(w)
        self._buf = np.zeros((self.n, self.w), dtype=float)
        self._head = np.zeros(self.n, dtype=np.int64)  # next write slot
        self._fill = np.zeros(self.n, dtype=np.int64)
        self.t: int | None = None

    @property
    def fill(self) -> tuple[int, ...]:
        return tuple(int(f) for f in self._fill)

    def push(self, frame: ObservationFrame) -> "WindowBank":
        """Append one frame, evicting the oldest reading of full buffers."""
        if frame.n != self.n:
            raise ValueError(f"frame has {frame.n} values, bank expects {self.n}")
        expected = 1 if self.t is None else self.t + 1
        if self.t is not None and frame.t != expected:
            raise SequencingError(f"expected tick {expected}, got {frame.t}")
        for i in range(self.n):
            if i in frame.missing:
                continue
            v = frame.values[i]
            if math.isnan(v):
                continue
            self._buf[i, self._head[i]] = v
            self._head[i] = (self._head[i] + 1) % self.w
            if self._fill[i] < self.w:
                self._fill[i] += 1
        self.t = int(frame.t)
        return self

    def is_complete(self, sensor: int) -> bool:
        self._check_index(sensor)
        return bool(self._fill[sensor] == self.w)

    def complete_sensors(self) -> np.ndarray:
        """Boolean vector marking sensors whose window is full."""
        return self._fill == self.w

    def window(self, sensor: int, t: int | None = None) -> np.ndarray | None:
        """Return the last ``w`` readings of ``sensor`` oldest first.

        Returns ``None`` while the sensor's buffer is still warming up.
        """
        self._check_index(sensor)
        if t is not None and t != self.t:
            raise ValueError(f"window requested at tick {t}, bank is at tick {self.t}")
        if self._fill[sensor] < self.w:
            return None
        h = int(self._head[sensor])
        return np.concatenate((self._buf[sensor, h:], self._buf[sensor, :h]))

    def windows(self) -> np.ndarray:
        """All windows as an ``(N, w)`` array; incomplete rows are NaN."""
        out = np.full((self.n, self.w), math.nan)
        for i in np.flatnonzero(self.complete_sensors()):
            out[i] = self.window(int(i))
        return out

    def _check_index(self, sensor: int) -> None:
        if not 0 <= sensor < self.n:
            raise IndexError(f"sensor index {sensor} out of range for {self.n} sensors")


def frames_from_array(data: np.ndarray, t0: int = 1) -> Iterator[ObservationFrame]:
    """Yield frames from a ``(T, N)`` array; NaN marks a missing reading."""
    data = np.asarray(data, dtype=float)
    for k, row in enumerate(data):
        missing = frozenset(int(i) for i in np.flatnonzero(np.isnan(row)))
        yield ObservationFrame(t0 + k, row.copy(), missing)


def read_csv(source: str | Path | TextIO) -> Iterator[ObservationFrame]:
    """Parse a stream CSV with header ``t,s1,...,sN``.

    Empty cells are missing readings. Any other non-numeric cell raises
    ``ValueError`` naming the row and column.
    """
    if isinstance(source, (str, Path)):
        with open(source, newline="") as fh:
            yield from read_csv(fh)
        return
    reader = csv.reader(source)
    try:
        header = next(reader)
    except StopIteration:
        raise ValueError("empty stream CSV") from None
    if not header or header[0].strip() != "t" or len(header) < 2:
        raise ValueError("stream CSV header must be 't,s1,...,sN'")
    n = len(header) - 1
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != n + 1:
            raise ValueError(f"line {lineno}: expected {n + 1} cells, got {len(row)}")
        try:
            t = int(row[0])
        except ValueError:
            raise ValueError(f"line {lineno}: tick {row[0]!r} is not an integer") from None
        values: list[float | None] = []
        for col, cell in zip(header[1:], row[1:]):
            cell = cell.strip()
            if cell == "":
                values.append(None)
                continue
            try:
                v = float(cell)
            except ValueError:
                raise ValueError(f"line {lineno}, column {col}: {cell!r} is not numeric") from None
            if not math.isfinite(v):
                raise ValueError(f"line {lineno}, column {col}: non-finite value {cell!r}")
            values.append(v)
        yield ObservationFrame.from_values(t, values)


def write_csv(frames: Iterable[ObservationFrame], sink: str | Path | TextIO, n: int | None = None) -> int:
    """Write frames in the stream CSV format; returns the number of rows."""
    if isinstance(sink, (str, Path)):
        with open(sink, "w", newline="") as fh:
            return write_csv(frames, fh, n)
    writer = csv.writer(sink, lineterminator="\n")
    rows = 0
    header_written = False
    for frame in frames:
        if not header_written:
            n = frame.n if n is None else n
            writer.writerow(["t"] + [f"s{i + 1}" for i in range(n)])
            header_written = True
        writer.writerow([frame.t] + ["" if i in frame.missing else repr(float(v)) for i, v in enumerate(frame.values)])
        rows += 1
    if not header_written and n is not None:
        writer.writerow(["t"] + [f"s{i + 1}" for i in range(n)])
    return rows
