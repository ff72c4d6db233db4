"""Monte Carlo estimation of ARL and EDD, and threshold calibration.

Replica ``r`` of an experiment with root seed ``s`` always draws from the
sub-stream derived from ``(s, r)``. Replicas may run in worker processes;
results are collected in replica order and reduced with :func:`math.fsum`,
so every reported number is independent of the worker count.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Any, Callable, Sequence

import numpy as np

from simnet_cpd.datagen import ModelSpec
from simnet_cpd.detector import first_alarm, record_path, stopping_time_from_records
from simnet_cpd.errors import CalibrationError
from simnet_cpd.similarity import Measure


def pmap(fn: Callable, items: Sequence, parallel: int = 1) -> list:
    """Ordered map, optionally over ``parallel`` worker processes."""
    items = list(items)
    if parallel <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    chunk = max(1, len(items) // (4 * parallel))
    with ProcessPoolExecutor(max_workers=parallel) as ex:
        return list(ex.map(fn, items, chunksize=chunk))


def mean_se(values: Sequence[float]) -> tuple[float, float]:
    """Mean and standard error (sample std over sqrt(n)); exact summation."""
    n = len(values)
    if n == 0:
        return math.nan, math.nan
    mean = math.fsum(values) / n
    if n == 1:
        return mean, 0.0
    var = math.fsum((v - mean) ** 2 for v in values) / (n - 1)
    return mean, math.sqrt(var / n)


@dataclass(frozen=True)
class DetectionSetup:
    """How raw streams are turned into statistics."""

    w: int = 25
    kind: str = Measure.PEARSON.value
    edge_mask: tuple[tuple[bool, ...], ...] | None = None

    def mask_array(self):
        return None if self.edge_mask is None else np.array(self.edge_mask, dtype=bool)

    def to_dict(self) -> dict[str, Any]:
        return {"w": self.w, "kind": self.kind, "edge_mask": None if self.edge_mask is None else [list(r) for r in self.edge_mask]}


@dataclass
class RunMetrics:
    """Aggregate over ``replicas`` seeded runs.

    ARL fields are filled by :func:`estimate_arl`, EDD fields by
    :func:`estimate_edd`; the other pair stays ``None``.
    """

    replicas: int
    seed: int
    b: float
    horizon: int
    arl: float | None = None
    arl_se: float | None = None
    edd: float | None = None
    edd_se: float | None = None
    censored: int = 0
    false_alarms: int = 0
    detected: int = 0
    stopping_times: list[int | None] = field(default_factory=list, repr=False)

    def to_dict(self, include_times: bool = False) -> dict[str, Any]:
        d = asdict(self)
        if not include_times:
            d.pop("stopping_times")
        return d


def _alarm_worker(args) -> tuple[int | None, int | None]:
    model, seed, replica, tag, setup, b, horizon = args
    return first_alarm(model.source(seed, replica, tag), setup.w, b, horizon, setup.kind, setup.mask_array())


def _records_worker(args) -> tuple[np.ndarray, np.ndarray]:
    model, seed, replica, tag, setup, horizon = args
    return record_path(model.source(seed, replica, tag), setup.w, horizon, setup.kind, setup.mask_array())


def stopping_times(
    model: ModelSpec,
    b: float,
    replicas: int,
    horizon: int,
    seed: int,
    setup: DetectionSetup = DetectionSetup(),
    parallel: int = 1,
    tag: str = "main",
) -> list[int | None]:
    """Stopping time of each replica (``None`` if censored at ``horizon``)."""
    jobs = [(model, seed, r, tag, setup, float(b), int(horizon)) for r in range(replicas)]
    return [t for t, _ in pmap(_alarm_worker, jobs, parallel)]


def _arl_metrics(times: Sequence[int | None], horizon: int, replicas: int, seed: int, b: float) -> RunMetrics:
    capped = [horizon if t is None else t for t in times]
    arl, se = mean_se(capped)
    censored = sum(t is None for t in times)
    return RunMetrics(
        replicas=replicas,
        seed=seed,
        b=float(b),
        horizon=horizon,
        arl=arl,
        arl_se=se,
        censored=censored,
        false_alarms=replicas - censored,
        stopping_times=list(times),
    )


def estimate_arl(
    model: ModelSpec,
    b: float,
    replicas: int,
    horizon: int,
    seed: int,
    setup: DetectionSetup = DetectionSetup(),
    parallel: int = 1,
    tag: str = "main",
) -> RunMetrics:
    """Mean stopping time under the null model.

    Censored runs contribute ``horizon``, which biases the estimate low; the
    number of censored runs is reported alongside.
    """
    if replicas < 1:
        raise ValueError("replicas must be at least 1")
    if getattr(model, "kappa", None) is not None:
        raise ValueError("ARL is defined under the null model (kappa=None)")
    times = stopping_times(model, b, replicas, horizon, seed, setup, parallel, tag)
    return _arl_metrics(times, horizon, replicas, seed, b)


def estimate_edd(
    model: ModelSpec,
    b: float,
    kappa: int,
    replicas: int,
    seed: int,
    horizon: int,
    setup: DetectionSetup = DetectionSetup(),
    parallel: int = 1,
    tag: str = "main",
) -> RunMetrics:
    """Mean of ``(T - kappa + 1)^+`` at a fixed change tick.

    Runs without an alarm before ``horizon`` are misses and excluded from the
    mean; alarms before ``kappa`` count as false alarms and contribute 0.
    """
    if kappa < setup.w:
        raise ValueError("kappa must be at least the window length")
    if getattr(model, "kappa", None) != kappa:
        raise ValueError(f"model change tick {getattr(model, 'kappa', None)} differs from kappa={kappa}")
    times = stopping_times(model, b, replicas, horizon, seed, setup, parallel, tag)
    delays = [max(t - kappa + 1, 0) for t in times if t is not None]
    edd, se = mean_se(delays)
    return RunMetrics(
        replicas=replicas,
        seed=seed,
        b=float(b),
        horizon=horizon,
        edd=edd,
        edd_se=se,
        censored=sum(t is None for t in times),
        false_alarms=sum(t is not None and t < kappa for t in times),
        detected=sum(t is not None and t >= kappa for t in times),
        stopping_times=list(times),
    )


@dataclass
class CalibrationResult:
    b: float
    metrics: RunMetrics
    probes: list[tuple[float, float]]
    iterations: int

    def to_dict(self) -> dict[str, Any]:
        return {
            "b": self.b,
            "metrics": self.metrics.to_dict(),
            "probes": [[b, a] for b, a in self.probes],
            "iterations": self.iterations,
        }


class RecordLadder:
    """Running-maximum records of a fixed set of replicas.

    Evaluating the ARL at any threshold reuses the same sample paths, so the
    estimate is monotone in ``b`` by construction.
    """

    def __init__(self, records: list[tuple[np.ndarray, np.ndarray]], horizon: int) -> None:
        self.records = records
        self.horizon = int(horizon)

    @classmethod
    def simulate(
        cls,
        model: ModelSpec,
        replicas: int,
        horizon: int,
        seed: int,
        setup: DetectionSetup = DetectionSetup(),
        parallel: int = 1,
        tag: str = "main",
    ) -> "RecordLadder":
        jobs = [(model, seed, r, tag, setup, int(horizon)) for r in range(replicas)]
        return cls(pmap(_records_worker, jobs, parallel), horizon)

    def times(self, b: float) -> list[int | None]:
        return [stopping_time_from_records(t, v, b) for t, v in self.records]

    def arl(self, b: float) -> float:
        return math.fsum(self.horizon if t is None else t for t in self.times(b)) / len(self.records)


def calibrate_threshold(
    model: ModelSpec,
    target_arl: float,
    replicas: int,
    seed: int,
    setup: DetectionSetup = DetectionSetup(),
    horizon: int | None = None,
    bracket: tuple[float, float] = (-1.0, 1.0),
    max_iter: int = 30,
    rel_tol: float = 0.1,
    parallel: int = 1,
    tag: str = "main",
) -> CalibrationResult:
    """Bisect on ``b`` until the estimated ARL matches ``target_arl``.

    All probes reuse one set of replica paths (common random numbers). The
    returned threshold is whichever final bracket end has ARL closest to the
    target.

    Raises:
        CalibrationError: the target lies outside the ARL range of the
            bracket, or the best probe misses the target by more than
            ``rel_tol``.
    """
    if target_arl < setup.w:
        raise ValueError("target ARL cannot be below the window length")
    horizon = int(round(20 * target_arl)) if horizon is None else int(horizon)
    ladder = RecordLadder.simulate(model, replicas, horizon, seed, setup, parallel, tag)
    lo, hi = map(float, bracket)
    probes: list[tuple[float, float]] = []

    def probe(b: float) -> float:
        a = ladder.arl(b)
        probes.append((b, a))
        return a

    a_lo, a_hi = probe(lo), probe(hi)
    diag = dict(probes)
    if a_lo >= target_arl:
        if abs(a_lo - target_arl) <= rel_tol * target_arl:
            return _finish(ladder, lo, probes, 0, replicas, seed)
        raise CalibrationError(f"ARL at lower bracket {lo} is {a_lo:.4g} > target {target_arl}", diag)
    if a_hi < target_arl:
        raise CalibrationError(f"ARL at upper bracket {hi} is {a_hi:.4g} < target {target_arl}", diag)
    it = 0
    for it in range(1, max_iter + 1):
        mid = 0.5 * (lo + hi)
        a = probe(mid)
        if a < target_arl:
            lo, a_lo = mid, a
        else:
            hi, a_hi = mid, a
        if a == target_arl:
            break
    b = lo if abs(a_lo - target_arl) < abs(a_hi - target_arl) else hi
    best = ladder.arl(b)
    if abs(best - target_arl) > rel_tol * target_arl:
        raise CalibrationError(f"closest ARL {best:.4g} at b={b:.6g} misses target {target_arl}", dict(probes))
    return _finish(ladder, b, probes, it, replicas, seed)


def _finish(ladder: RecordLadder, b: float, probes, iterations: int, replicas: int, seed: int) -> CalibrationResult:
    metrics = _arl_metrics(ladder.times(b), ladder.horizon, replicas, seed, b)
    return CalibrationResult(b=b, metrics=metrics, probes=probes, iterations=iterations)
