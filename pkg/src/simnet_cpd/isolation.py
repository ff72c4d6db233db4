"""Post-alarm estimation of the anomalous sensor set.

The split is the ``+1/-1`` vector maximizing ``x^T Y x`` over observed
off-diagonal entries of the alarm-time similarity matrix. Solvers:

* :func:`brute_force_membership` - exact enumeration for small ``N``.
* :func:`spectral_membership` - sign of the leading eigenvector.
* :func:`local_search_refine` - greedy single flips from any start.
* :func:`naive_isolation` - per-node thresholding, kept for comparison.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from simnet_cpd.errors import ConvergenceError, DomainError, SizeError
from simnet_cpd.graph_snapshot import SimilaritySnapshot
from simnet_cpd.seeding import derive_rng

MAX_BRUTE_FORCE = 20


def weight_matrix(Y) -> np.ndarray:
    """Zero-diagonal dense weights; unobserved entries contribute 0."""
    if isinstance(Y, SimilaritySnapshot):
        return Y.weights()
    W = np.array(Y, dtype=float)
    if W.ndim != 2 or W.shape[0] != W.shape[1]:
        raise ValueError("Y must be a square matrix")
    W = np.where(np.isnan(W), 0.0, W)
    np.fill_diagonal(W, 0.0)
    return W


def _check_signs(x, n: int) -> np.ndarray:
    v = np.asarray(x, dtype=float)
    if v.shape != (n,):
        raise DomainError(f"membership vector must have length {n}")
    if not np.all((v == 1.0) | (v == -1.0)):
        raise DomainError("membership entries must be +1 or -1")
    return v


def objective(Y, x) -> float:
    """``sum_{i != j} x_i x_j y_ij`` over observed entries."""
    W = weight_matrix(Y)
    v = _check_signs(x, W.shape[0])
    return float(v @ W @ v)


@dataclass
class Membership:
    """Two-group split with the anomalous side coded ``+1``."""

    x: np.ndarray
    S: frozenset[int]
    objective: float
    method: str
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        order = sorted(range(len(self.x)), key=lambda i: (-self.x[i], i))
        return {
            "method": self.method,
            "x": [int(v) for v in self.x],
            "S": sorted(self.S),
            "objective": self.objective,
            "order": order,
            **self.diagnostics,
        }


def label_anomalous(Y, x) -> frozenset[int]:
    """Pick which side of a split is anomalous.

    The anomalous side has the smaller per-member similarity to the other
    side. Ties go to the smaller side, then to the side holding node 0.
    """
    W = weight_matrix(Y)
    v = _check_signs(x, W.shape[0])
    a = v > 0
    if a.all() or (~a).all():
        warnings.warn("membership vector does not split the nodes", stacklevel=2)
        return frozenset()
    cross = math.fsum(W[np.ix_(a, ~a)].ravel())
    score_a = cross / int(a.sum())
    score_b = cross / int((~a).sum())
    if score_a != score_b:
        side = a if score_a < score_b else ~a
    elif a.sum() != (~a).sum():
        side = a if a.sum() < (~a).sum() else ~a
    else:
        side = a if a[0] else ~a
    return frozenset(int(i) for i in np.flatnonzero(side))


def _membership(W: np.ndarray, x: np.ndarray, method: str, **diagnostics) -> Membership:
    S = label_anomalous(W, x)
    coded = -np.ones(W.shape[0])
    coded[list(S)] = 1.0
    return Membership(coded, S, objective(W, coded), method, diagnostics)


def _sign_patterns(n: int, lo: int, hi: int) -> np.ndarray:
    """Patterns ``lo..hi-1`` with ``x_0 = -1``; bit ``n-2-k`` sets ``x_{k+1}``."""
    idx = np.arange(lo, hi, dtype=np.int64)[:, None]
    shifts = np.arange(n - 2, -1, -1, dtype=np.int64)[None, :]
    bits = (idx >> shifts) & 1
    return np.concatenate((-np.ones((hi - lo, 1)), 2.0 * bits - 1.0), axis=1)


def brute_force_membership(Y, chunk: int = 1 << 14) -> Membership:
    """Exact maximizer by enumerating the ``2^(N-1)`` patterns with ``x_0 = -1``.

    Patterns are visited in lexicographic order (``-1 < +1``), so the first
    maximum found is the lexicographically smallest one.
    """
    W = weight_matrix(Y)
    n = W.shape[0]
    if n > MAX_BRUTE_FORCE:
        raise SizeError(f"brute force limited to N <= {MAX_BRUTE_FORCE}, got {n}")
    if n == 1:
        return _membership(W, np.array([-1.0]), "brute_force")
    total = 1 << (n - 1)
    best_val = -math.inf
    best_x = None
    for lo in range(0, total, chunk):
        X = _sign_patterns(n, lo, min(total, lo + chunk))
        vals = np.einsum("pi,ij,pj->p", X, W, X)
        k = int(np.argmax(vals))
        if vals[k] > best_val:
            best_val, best_x = float(vals[k]), X[k]
    return _membership(W, best_x, "brute_force", raw_x=[int(v) for v in best_x])


def _power_iteration(A: np.ndarray, start: np.ndarray, tol: float, max_iter: int) -> tuple[np.ndarray, int]:
    v = start / np.linalg.norm(start)
    for it in range(1, max_iter + 1):
        nxt = A @ v
        norm = np.linalg.norm(nxt)
        if norm == 0.0:
            raise ConvergenceError("iterate collapsed to zero", residual=math.inf)
        nxt /= norm
        if nxt @ v < 0:
            nxt = -nxt
        if np.linalg.norm(nxt - v) < tol:
            return nxt, it
        v = nxt
    residual = float(np.linalg.norm(A @ v - (v @ A @ v) * v))
    raise ConvergenceError(f"power iteration did not converge in {max_iter} iterations", residual=residual)


def spectral_membership(Y, seed: int = 0, tol: float = 1e-10, max_iter: int = 10_000) -> Membership:
    """Split by the sign of the leading eigenvector of the weight matrix.

    The matrix is shifted by its largest absolute row sum so that power
    iteration converges to the algebraically largest eigenvalue. Zero
    components are assigned ``+1``. The eigengap is reported as a
    confidence indicator; a zero matrix yields an arbitrary split flagged
    ``low_confidence``.
    """
    W = weight_matrix(Y)
    n = W.shape[0]
    if n < 2:
        raise ValueError("need at least two nodes")
    shift = float(np.abs(W).sum(axis=1).max())
    rng = derive_rng(seed, "spectral-start")
    start = np.where(np.arange(n) % 2 == 0, 1.0, -1.0) / math.sqrt(n) + 1e-3 * rng.standard_normal(n)
    eigvals = np.linalg.eigvalsh(W)
    gap = float(eigvals[-1] - eigvals[-2])
    if shift == 0.0:
        x = np.where(start >= 0, 1.0, -1.0)
        return _membership(W, x, "spectral", eigengap=0.0, iterations=0, low_confidence=True)
    v, iters = _power_iteration(W + shift * np.eye(n), start, tol, max_iter)
    x = np.where(v >= 0, 1.0, -1.0)
    return _membership(
        W,
        x,
        "spectral",
        eigengap=gap,
        iterations=iters,
        eigenvalue=float(v @ W @ v),
        low_confidence=bool(gap <= 1e-9 * max(1.0, abs(eigvals[-1]))),
    )


def local_search_refine(Y, x0, max_flips: int | None = None) -> Membership:
    """Greedy hill climbing with single-coordinate flips.

    Each step flips the coordinate with the largest strict gain (smallest
    index on ties) and stops when no flip improves the objective.
    """
    W = weight_matrix(Y)
    n = W.shape[0]
    x = _check_signs(x0, n).copy()
    scale = max(1.0, float(np.abs(W).sum()))
    limit = max_flips if max_flips is not None else n * (1 << min(n, 30))
    flips = 0
    while flips < limit:
        field_ = W @ x
        gain = -4.0 * x * field_
        k = int(np.argmax(gain))
        if gain[k] <= 1e-12 * scale:
            break
        x[k] = -x[k]
        flips += 1
    return _membership(W, x, "refine", flips=flips)


def naive_isolation(Y, threshold: float) -> frozenset[int]:
    """Nodes whose negative mean neighbor similarity exceeds ``threshold``."""
    if isinstance(Y, SimilaritySnapshot):
        mask = Y.mask
    else:
        arr = np.asarray(Y, dtype=float)
        mask = ~np.isnan(arr) & ~np.eye(arr.shape[0], dtype=bool)
    W = weight_matrix(Y)
    counts = mask.sum(axis=1)
    out = set()
    for i in range(W.shape[0]):
        if counts[i] == 0:
            continue
        rho = -math.fsum(W[i, mask[i]]) / counts[i]
        if rho > threshold:
            out.add(i)
    return frozenset(out)


def isolate(Y, method: str = "spectral+refine", seed: int = 0) -> Membership:
    """Run one of ``brute_force``, ``spectral`` or ``spectral+refine``."""
    if method == "brute_force":
        return brute_force_membership(Y)
    spec = spectral_membership(Y, seed=seed)
    if method == "spectral":
        return spec
    if method == "spectral+refine":
        refined = local_search_refine(Y, spec.x)
        refined.method = "spectral+refine"
        refined.diagnostics = {**spec.diagnostics, **refined.diagnostics}
        return refined
    raise ValueError(f"unknown isolation method {method!r}")
