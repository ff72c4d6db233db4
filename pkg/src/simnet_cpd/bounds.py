"""Theoretical performance quantities for the average-similarity detector.

Covers the cut size of the anomalous set, Gaussian KL divergence, the
log-ARL over (cut x KL) delay expression, and the SNR-based false-alarm and
detection probability bounds at threshold zero. Bounds stated with
order-of-magnitude relations are returned next to their exact Gaussian-tail
counterparts.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Any, Iterable, Sequence

import numpy as np

from simnet_cpd.errors import DomainError
from simnet_cpd.graph_snapshot import complete_mask, validate_mask

ORDER_OF_MAGNITUDE = "order-of-magnitude"


def normal_sf(x: float) -> float:
    """Upper tail ``1 - Phi(x)`` of the standard normal."""
    return 0.5 * math.erfc(x / math.sqrt(2.0))


def cut_size(mask, S: Iterable[int]) -> int:
    """Number of observed edges with exactly one endpoint in ``S``."""
    m = np.asarray(mask, dtype=bool)
    n = m.shape[0]
    inside = np.zeros(n, dtype=bool)
    for i in S:
        if not 0 <= int(i) < n:
            raise IndexError(f"node {i} out of range for {n} nodes")
        inside[int(i)] = True
    m = m & ~np.eye(n, dtype=bool)
    return int(m[np.ix_(inside, ~inside)].sum())


def kl_gaussian(mu0: float, sigma0: float, mu1: float, sigma1: float) -> float:
    """``KL(N(mu1, sigma1^2) || N(mu0, sigma0^2))`` in nats."""
    if not (sigma0 > 0 and sigma1 > 0):
        raise DomainError("standard deviations must be positive")
    r = sigma1 / sigma0
    return math.log(sigma0 / sigma1) + 0.5 * (r * r + ((mu1 - mu0) / sigma0) ** 2) - 0.5


def edd_bound(gamma: float, cut: int, kl: float) -> float:
    """``log(gamma) / (cut * kl)``, without the unknown O(1) slack.

    Returns ``inf`` when nothing informative crosses the cut.
    """
    if not gamma > 1:
        raise DomainError("gamma must exceed 1")
    if cut < 0 or kl < 0:
        raise DomainError("cut and kl must be non-negative")
    if cut == 0 or kl == 0:
        return math.inf
    return math.log(gamma) / (cut * kl)


@dataclass(frozen=True)
class SNRResult:
    """Per-node SNR values and the maximum over the requested nodes.

    ``z`` holds the signed standardized neighborhood sums; squaring gives the
    SNR. Nodes with empty neighborhoods are absent.
    """

    per_node: dict[int, float]
    z: dict[int, float]
    extremum: float
    argmax: int | None


def snr(U, mask, sigma2: float, over: Iterable[int] | None = None) -> SNRResult:
    """``(sum_j u_i.u_j)^2 / (|N(i)| sigma2)`` per node and its max over ``over``."""
    if not sigma2 > 0:
        raise DomainError("sigma2 must be positive")
    u = np.asarray(U, dtype=float)
    n = u.shape[0]
    m = complete_mask(n) if mask is None else validate_mask(mask, n)
    nodes = range(n) if over is None else sorted({int(i) for i in over})
    gram = u @ u.T
    per_node: dict[int, float] = {}
    z: dict[int, float] = {}
    for i in nodes:
        members = np.flatnonzero(m[i])
        if members.size == 0:
            warnings.warn(f"node {i} has an empty neighborhood and is skipped", stacklevel=2)
            continue
        total = math.fsum(gram[i, members])
        z[i] = total / math.sqrt(members.size * sigma2)
        per_node[i] = z[i] ** 2
    if not per_node:
        return SNRResult({}, {}, math.nan, None)
    best = max(per_node, key=lambda k: (per_node[k], -k))
    return SNRResult(per_node, z, per_node[best], best)


def false_alarm_bound(n: int, snr_value: float) -> dict[str, Any]:
    """Union bound on the per-tick false-alarm probability at threshold 0."""
    if snr_value < 0:
        raise DomainError("SNR must be non-negative")
    root = math.sqrt(snr_value)
    return {
        "gaussian_tail": min(n * normal_sf(root), 1.0),
        "exponential": min(n * math.exp(-snr_value), 1.0),
        "exponential_label": ORDER_OF_MAGNITUDE,
    }


def sign_condition(z: dict[int, float], S: Iterable[int]) -> bool:
    """True when every anomalous node has a negative standardized sum."""
    S = list(S)
    return bool(S) and all(i in z and z[i] < 0 for i in S)


def detection_bound(snr_value: float, applicable: bool = True) -> dict[str, Any]:
    """Lower bound on the per-tick detection probability at threshold 0.

    ``applicable`` should carry the result of :func:`sign_condition`; when it
    is false the numbers are still reported but flagged.
    """
    if snr_value < 0:
        raise DomainError("SNR must be non-negative")
    root = math.sqrt(snr_value)
    return {
        "gaussian_tail": normal_sf(-root),
        "exponential": max(1.0 - math.exp(-snr_value), 0.0),
        "exponential_label": ORDER_OF_MAGNITUDE,
        "applicable": bool(applicable),
    }


def estimate_sigma2(edge_series: np.ndarray) -> float:
    """Pooled variance of edge weights around their per-edge time means.

    Args:
        edge_series: ``(T, E)`` array of ``E`` edges observed over a
            stretch of ``T`` ticks believed to be stationary.
    """
    y = np.asarray(edge_series, dtype=float)
    if y.ndim != 2 or y.shape[0] < 2:
        raise ValueError("need at least two ticks of edge weights")
    resid = y - y.mean(axis=0, keepdims=True)
    return float((resid**2).sum() / (y.shape[1] * (y.shape[0] - 1)))


def bounds_report(inputs: dict[str, Any]) -> dict[str, Any]:
    """Evaluate every bound from a JSON-style input mapping.

    Keys: ``gamma``, ``S``, ``mask`` (optional; complete graph otherwise),
    either ``kl`` or ``gaussian`` ({mu0, sigma0, mu1, sigma1}), and
    optionally ``U`` with ``sigma2`` for the SNR bounds.
    """
    S: Sequence[int] = [int(i) for i in inputs.get("S", [])]
    U = None if inputs.get("U") is None else np.asarray(inputs["U"], dtype=float)
    n = int(inputs["n"]) if "n" in inputs else (U.shape[0] if U is not None else len(inputs["mask"]))
    mask = complete_mask(n) if inputs.get("mask") is None else validate_mask(inputs["mask"], n)
    report: dict[str, Any] = {"n": n, "S": sorted(S)}

    cut = cut_size(mask, S)
    if "kl" in inputs:
        kl = float(inputs["kl"])
        kl_source = "supplied"
    elif "gaussian" in inputs:
        g = inputs["gaussian"]
        kl = kl_gaussian(g["mu0"], g["sigma0"], g["mu1"], g["sigma1"])
        kl_source = "gaussian"
    else:
        kl = None
        kl_source = None
    report["cut"] = cut
    if kl is not None and "gamma" in inputs:
        report["delay"] = {
            "gamma": float(inputs["gamma"]),
            "kl": kl,
            "kl_source": kl_source,
            "edd_bound": edd_bound(float(inputs["gamma"]), cut, kl),
            "additive_slack": "O(1), unknown",
            "direction_note": "introduced as a lower bound but stated as an upper bound on EDD; evaluated as written",
        }
    if U is not None:
        sigma2 = float(inputs["sigma2"])
        all_nodes = snr(U, mask, sigma2)
        report["snr"] = {
            "sigma2": sigma2,
            "per_node": {str(k): v for k, v in all_nodes.per_node.items()},
            "snr_max": all_nodes.extremum,
            "snr_min_over_all": min(all_nodes.per_node.values()) if all_nodes.per_node else None,
        }
        report["false_alarm"] = false_alarm_bound(n, all_nodes.extremum)
        if S:
            anomalous = snr(U, mask, sigma2, over=S)
            ok = sign_condition(all_nodes.z, S)
            report["snr"]["snr_anomalous_max"] = anomalous.extremum
            report["snr"]["snr_anomalous_min"] = min(anomalous.per_node.values()) if anomalous.per_node else None
            report["detection"] = detection_bound(anomalous.extremum, ok)
    return report
