"""Seeded generators for synthetic sensor streams and similarity networks.

Every generator is bit-reproducible from ``(spec, seed)``. Raw-stream
sources expose ``take(k)`` returning the next ``k`` ticks as a ``(k, N)``
array; drawing ``a`` then ``b`` ticks gives the same numbers as drawing
``a + b`` at once, so consumers may pull in any chunk size.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Any, Iterator, Sequence

import numpy as np

from simnet_cpd.graph_snapshot import SimilaritySnapshot, complete_mask, validate_mask
from simnet_cpd.seeding import derive_rng
from simnet_cpd.stream_window import ObservationFrame

PSD_TOL = 1e-10


def _node_set(nodes: Sequence[int], n: int) -> tuple[int, ...]:
    out = tuple(sorted({int(i) for i in nodes}))
    if any(i < 0 or i >= n for i in out):
        raise ValueError(f"anomalous nodes must lie in [0, {n})")
    return out


@dataclass(frozen=True)
class TrendModelSpec:
    """Gaussian sensors whose means drift linearly.

    Before ``kappa`` every mean is ``slope_null * t``. After it, anomalous
    sensors keep a continuous mean path but switch to ``slope_anomalous``.
    ``kappa=None`` is the null model.
    """

    n_sensors: int = 40
    anomalous: tuple[int, ...] = ()
    variance: float = 25.0
    slope_null: float = 1.0
    slope_anomalous: float = 1.0
    kappa: int | None = None
    horizon: int = 5000

    def __post_init__(self) -> None:
        if self.n_sensors < 1:
            raise ValueError("n_sensors must be positive")
        if not self.variance > 0:
            raise ValueError("variance must be positive")
        object.__setattr__(self, "anomalous", _node_set(self.anomalous, self.n_sensors))

    @property
    def model(self) -> str:
        return "trend"

    def null(self) -> "TrendModelSpec":
        return TrendModelSpec(self.n_sensors, self.anomalous, self.variance, self.slope_null, self.slope_anomalous, None, self.horizon)

    def to_dict(self) -> dict[str, Any]:
        return {"model": self.model, **asdict(self), "anomalous": list(self.anomalous)}

    def source(self, seed: int, replica: int = 0, tag: str = "main") -> "TrendStream":
        return TrendStream(self, seed, replica, tag)


@dataclass(frozen=True)
class CovarianceModelSpec:
    """Zero-mean Gaussian sensors whose correlation matrix changes at ``kappa``.

    Pre-change every pair has correlation ``rho_normal``. Post-change,
    anomalous/normal pairs switch to ``rho_cross`` and anomalous/anomalous
    pairs to ``rho_anomalous``.
    """

    n_sensors: int = 40
    anomalous: tuple[int, ...] = ()
    rho_normal: float = 0.5
    rho_cross: float = -0.2
    rho_anomalous: float = 0.5
    kappa: int | None = None
    horizon: int = 1000
    _factors: tuple = field(default=(), init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        if self.n_sensors < 1:
            raise ValueError("n_sensors must be positive")
        object.__setattr__(self, "anomalous", _node_set(self.anomalous, self.n_sensors))
        factors = []
        for label, corr in (("pre-change", self.pre_change_matrix()), ("post-change", self.post_change_matrix())):
            vals, vecs = np.linalg.eigh(corr)
            if vals[0] < -PSD_TOL:
                raise ValueError(f"{label} correlation matrix is not positive semidefinite: eigenvalue {vals[0]:.6g}")
            root = (vecs * np.sqrt(np.clip(vals, 0.0, None))) @ vecs.T
            factors.append(root)
        object.__setattr__(self, "_factors", tuple(factors))

    @property
    def model(self) -> str:
        return "covariance"

    def pre_change_matrix(self) -> np.ndarray:
        c = np.full((self.n_sensors, self.n_sensors), float(self.rho_normal))
        np.fill_diagonal(c, 1.0)
        return c

    def post_change_matrix(self) -> np.ndarray:
        c = self.pre_change_matrix()
        a = np.zeros(self.n_sensors, dtype=bool)
        a[list(self.anomalous)] = True
        c[np.ix_(a, ~a)] = self.rho_cross
        c[np.ix_(~a, a)] = self.rho_cross
        c[np.ix_(a, a)] = self.rho_anomalous
        np.fill_diagonal(c, 1.0)
        return c

    def null(self) -> "CovarianceModelSpec":
        return CovarianceModelSpec(
            self.n_sensors, self.anomalous, self.rho_normal, self.rho_cross, self.rho_anomalous, None, self.horizon
        )

    def to_dict(self) -> dict[str, Any]:
        d = {f: getattr(self, f) for f in ("n_sensors", "rho_normal", "rho_cross", "rho_anomalous", "kappa", "horizon")}
        return {"model": self.model, **d, "anomalous": list(self.anomalous)}

    def source(self, seed: int, replica: int = 0, tag: str = "main") -> "CovarianceStream":
        return CovarianceStream(self, seed, replica, tag)


ModelSpec = TrendModelSpec | CovarianceModelSpec


def spec_from_dict(data: dict[str, Any]) -> ModelSpec:
    """Inverse of ``to_dict`` for both raw-stream model specs."""
    d = dict(data)
    kind = d.pop("model", "trend")
    if "anomalous" in d:
        d["anomalous"] = tuple(d["anomalous"])
    if kind == "trend":
        return TrendModelSpec(**d)
    if kind == "covariance":
        return CovarianceModelSpec(**d)
    raise ValueError(f"unknown model {kind!r}")


class _StreamSource:
    """Common iteration logic for raw-stream generators."""

    def __init__(self, spec: ModelSpec, seed: int, replica: int = 0, tag: str = "main") -> None:
        self.spec = spec
        self.seed = int(seed)
        self.replica = int(replica)
        self.n = spec.n_sensors
        self._rng = derive_rng(seed, f"stream/{spec.model}/{tag}", replica)
        self._t = 0  # last tick produced

    def take(self, k: int) -> np.ndarray:
        """Next ``k`` ticks as a ``(k, N)`` array."""
        if k < 0:
            raise ValueError("k must be non-negative")
        ticks = np.arange(self._t + 1, self._t + k + 1)
        z = self._rng.standard_normal((k, self.n))
        self._t += k
        return self._render(ticks, z)

    def frames(self, horizon: int | None = None) -> Iterator[ObservationFrame]:
        horizon = self.spec.horizon if horizon is None else horizon
        while self._t < horizon:
            t = self._t + 1
            yield ObservationFrame(t, self.take(1)[0])

    def __iter__(self) -> Iterator[ObservationFrame]:
        return self.frames()

    def _render(self, ticks: np.ndarray, z: np.ndarray) -> np.ndarray:
        raise NotImplementedError


class TrendStream(_StreamSource):
    spec: TrendModelSpec

    def means(self, ticks: np.ndarray) -> np.ndarray:
        s = self.spec
        t = np.asarray(ticks, dtype=float)[:, None]
        m = np.broadcast_to(s.slope_null * t, (t.shape[0], self.n)).copy()
        if s.kappa is not None and s.anomalous:
            after = t[:, 0] > s.kappa
            a = list(s.anomalous)
            m[np.ix_(after, a)] = s.slope_null * s.kappa + s.slope_anomalous * (t[after] - s.kappa)
        return m

    def _render(self, ticks: np.ndarray, z: np.ndarray) -> np.ndarray:
        return self.means(ticks) + math.sqrt(self.spec.variance) * z


class CovarianceStream(_StreamSource):
    spec: CovarianceModelSpec

    def _render(self, ticks: np.ndarray, z: np.ndarray) -> np.ndarray:
        pre, post = self.spec._factors
        # row-wise reduction keeps each tick independent of the block size
        x = (z[:, None, :] * pre[None, :, :]).sum(axis=2)
        kappa = self.spec.kappa
        if kappa is not None:
            after = ticks > kappa
            if after.any():
                x[after] = (z[after][:, None, :] * post[None, :, :]).sum(axis=2)
        return x


def gen_trend(spec: TrendModelSpec, seed: int, replica: int = 0) -> TrendStream:
    return TrendStream(spec, seed, replica)


def gen_covariance(spec: CovarianceModelSpec, seed: int, replica: int = 0) -> CovarianceStream:
    return CovarianceStream(spec, seed, replica)


@dataclass(frozen=True)
class DirectSimilaritySpec:
    """Edge weights drawn as ``N(u_i . u_j, sigma2)`` independently per tick.

    ``U`` is an ``(N, w)`` array of unit vectors; ``U_post`` optionally
    replaces it after ``kappa``.
    """

    U: np.ndarray
    sigma2: float
    mask: np.ndarray | None = None
    horizon: int = 1000
    U_post: np.ndarray | None = None
    kappa: int | None = None

    def __post_init__(self) -> None:
        if not self.sigma2 > 0:
            raise ValueError("sigma2 must be positive")
        for name in ("U", "U_post"):
            u = getattr(self, name)
            if u is None:
                continue
            u = np.array(u, dtype=float)
            if u.ndim != 2:
                raise ValueError(f"{name} must be an (N, w) array")
            if not np.allclose(np.linalg.norm(u, axis=1), 1.0, atol=1e-9):
                raise ValueError(f"rows of {name} must have unit norm")
            u.setflags(write=False)
            object.__setattr__(self, name, u)
        n = self.U.shape[0]
        if self.U_post is not None and self.U_post.shape != self.U.shape:
            raise ValueError("U_post must match U in shape")
        mask = complete_mask(n) if self.mask is None else validate_mask(self.mask, n)
        mask.setflags(write=False)
        object.__setattr__(self, "mask", mask)

    @property
    def n(self) -> int:
        return int(self.U.shape[0])

    def mean_matrix(self, post: bool = False) -> np.ndarray:
        u = self.U_post if post and self.U_post is not None else self.U
        return u @ u.T


class DirectSimilaritySource:
    """Iterator of :class:`SimilaritySnapshot` under the Gaussian edge model."""

    def __init__(self, spec: DirectSimilaritySpec, seed: int, replica: int = 0) -> None:
        self.spec = spec
        self._rng = derive_rng(seed, "direct-similarity", replica)
        self._iu = np.triu_indices(spec.n, 1)
        self._edges = spec.mask[self._iu]
        self._t = 0

    def take_edges(self, k: int) -> tuple[np.ndarray, np.ndarray]:
        """Next ``k`` ticks of upper-triangle edge weights.

        Returns:
            ``(ticks, values)``; ``values`` has shape ``(k, n_edges)`` over the
            observed upper-triangle pairs in row-major order.
        """
        ticks = np.arange(self._t + 1, self._t + k + 1)
        iu = (self._iu[0][self._edges], self._iu[1][self._edges])
        pre = self.spec.mean_matrix(False)[iu]
        post = self.spec.mean_matrix(True)[iu]
        z = self._rng.standard_normal((k, iu[0].shape[0]))
        means = np.where(self._post(ticks)[:, None], post[None, :], pre[None, :])
        self._t += k
        return ticks, means + math.sqrt(self.spec.sigma2) * z

    def _post(self, ticks: np.ndarray) -> np.ndarray:
        if self.spec.kappa is None or self.spec.U_post is None:
            return np.zeros(ticks.shape, dtype=bool)
        return ticks > self.spec.kappa

    def __iter__(self) -> Iterator[SimilaritySnapshot]:
        n = self.spec.n
        iu = (self._iu[0][self._edges], self._iu[1][self._edges])
        while self._t < self.spec.horizon:
            ticks, vals = self.take_edges(1)
            y = np.zeros((n, n))
            y[iu] = vals[0]
            y = y + y.T
            yield SimilaritySnapshot(t=int(ticks[0]), y=y, mask=self.spec.mask)


def gen_direct_similarity(spec: DirectSimilaritySpec, seed: int, replica: int = 0) -> DirectSimilaritySource:
    return DirectSimilaritySource(spec, seed, replica)


def planted_isolation_instance(
    n: int,
    anomalous: Sequence[int],
    mu_in: float,
    mu_cross: float,
    sigma: float,
    seed: int,
    replica: int = 0,
) -> SimilaritySnapshot:
    """One complete-graph snapshot with a planted two-group split.

    Same-side pairs are ``N(mu_in, sigma^2)``, cross pairs ``N(mu_cross, sigma^2)``.
    """
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    s = np.zeros(n, dtype=bool)
    s[list(_node_set(anomalous, n))] = True
    if s.all():
        raise ValueError("anomalous set must be a proper subset")
    same = s[:, None] == s[None, :]
    rng = derive_rng(seed, "planted", replica)
    iu = np.triu_indices(n, 1)
    noise = rng.standard_normal(iu[0].shape[0])
    y = np.zeros((n, n))
    y[iu] = np.where(same[iu], mu_in, mu_cross) + sigma * noise
    y = y + y.T
    return SimilaritySnapshot(t=0, y=y, mask=complete_mask(n))
