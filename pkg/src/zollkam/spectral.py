"""Cluster spectral data of a Zoll manifold at finite truncation.

The spectrum of the Laplacian is organized in clusters k = 0..k_max. Cluster k
carries d_k eigenvalues Lambda_{k,j} = lambda_k**2 + eta_{k,j} with
lambda_k = k + lambda_shift. Each cluster is identified with the coordinate
frame of C^{d_k}.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import GapViolation, InvalidTruncation, ModelError


@dataclass(frozen=True)
class Cluster:
    k: int
    d_k: int
    lambda_k: float
    Lambda: tuple[float, ...]

    def __post_init__(self):
        if self.d_k < 1 or len(self.Lambda) != self.d_k:
            raise ModelError(f"cluster {self.k}: {len(self.Lambda)} eigenvalues for d_k={self.d_k}")
        if any(b < a for a, b in zip(self.Lambda, self.Lambda[1:])):
            raise ModelError(f"cluster {self.k}: eigenvalues not ascending")


@dataclass(frozen=True)
class SpectralModel:
    n: int
    lambda_shift: float
    clusters: tuple[Cluster, ...]
    dim_const: float = 1.0
    eta_bound: float = 0.0
    kind: str = "custom"
    _cache: dict = field(default_factory=dict, compare=False, repr=False, hash=False)

    def __post_init__(self):
        if self.n < 1:
            raise ModelError("manifold dimension must be positive")
        if not 0.0 <= self.lambda_shift < 1.0:
            raise ModelError("lambda_shift must lie in [0, 1)")
        for i, c in enumerate(self.clusters):
            if c.k != i:
                raise ModelError("clusters must be indexed 0..k_max without gaps")
            if c.lambda_k != c.k + self.lambda_shift:
                raise ModelError(f"cluster {c.k}: lambda_k must equal k + lambda_shift")

    # basic shape data
    @property
    def k_max(self) -> int:
        return len(self.clusters) - 1

    @property
    def n_clusters(self) -> int:
        return len(self.clusters)

    @property
    def dims(self) -> np.ndarray:
        return self._get("dims", lambda: np.array([c.d_k for c in self.clusters], dtype=int))

    @property
    def offsets(self) -> np.ndarray:
        """Start index of each cluster in the flattened spatial basis (length K+2)."""
        return self._get("offsets", lambda: np.concatenate([[0], np.cumsum(self.dims)]))

    @property
    def dim(self) -> int:
        return int(self.offsets[-1])

    @property
    def lam(self) -> np.ndarray:
        return self._get("lam", lambda: np.array([c.lambda_k for c in self.clusters]))

    @property
    def lam_reg(self) -> np.ndarray:
        """K0 eigenvalues floored at 1/2, used wherever a negative power is needed."""
        return np.maximum(self.lam, 0.5)

    @property
    def Lambda_flat(self) -> np.ndarray:
        return self._get("Lflat", lambda: np.concatenate([c.Lambda for c in self.clusters]))

    @property
    def eta_flat(self) -> np.ndarray:
        return self.Lambda_flat - self.lam[self.cluster_of] ** 2

    @property
    def cluster_of(self) -> np.ndarray:
        """Cluster index of each flattened basis vector."""
        return self._get("cof", lambda: np.repeat(np.arange(self.n_clusters), self.dims))

    def block_slice(self, k: int) -> slice:
        return slice(int(self.offsets[k]), int(self.offsets[k + 1]))

    def bracket_k(self) -> np.ndarray:
        """<k> = sqrt(1 + k^2) per flattened basis vector."""
        return np.sqrt(1.0 + self.cluster_of.astype(float) ** 2)

    def integer_spacing(self) -> bool:
        return all(c.lambda_k - self.lambda_shift == c.k for c in self.clusters)

    def header(self) -> tuple:
        return (self.n, float(self.lambda_shift), self.k_max, tuple(int(x) for x in self.dims))

    def _get(self, key, fn):
        if key not in self._cache:
            self._cache[key] = fn()
        return self._cache[key]


def _make(n, shift, k_max, d_of, Lambda_of, dim_const, eta_bound, kind) -> SpectralModel:
    if k_max < 1:
        raise InvalidTruncation("k_max must be at least 1")
    clusters = []
    for k in range(k_max + 1):
        d_k = int(d_of(k))
        Lam = tuple(sorted(float(x) for x in Lambda_of(k, d_k)))
        clusters.append(Cluster(k, d_k, k + shift, Lam))
    return SpectralModel(n, shift, tuple(clusters), dim_const, eta_bound, kind)


def build_circle(k_max: int) -> SpectralModel:
    """Laplacian on S^1: d_0 = 1, d_k = 2, Lambda_k = k^2."""
    return _make(1, 0.0, k_max, lambda k: 1 if k == 0 else 2,
                 lambda k, d: [float(k * k)] * d, 2.0, 0.0, "circle")


def build_sphere(k_max: int) -> SpectralModel:
    """Laplacian on S^2: d_k = 2k+1, Lambda_k = k(k+1), lambda_k = k + 1/2."""
    return _make(2, 0.5, k_max, lambda k: 2 * k + 1,
                 lambda k, d: [float(k * (k + 1))] * d, 3.0, 0.25, "sphere")


def uniform_eta(eta_bar: float) -> Callable[[np.random.Generator, int], np.ndarray]:
    def sampler(rng, size):
        return rng.uniform(-eta_bar, eta_bar, size)
    sampler.eta_bar = eta_bar
    return sampler


def build_synthetic(n: int, lambda_shift: float, k_max: int,
                    d_profile: Callable[[int], int],
                    eta_sampler: Callable[[np.random.Generator, int], np.ndarray] | float,
                    seed: int, dim_const: float | None = None) -> SpectralModel:
    """Generic cluster model with seeded eigenvalue corrections.

    ``eta_sampler`` is either a callable ``(rng, size) -> array`` or a bound
    eta_bar, meaning uniform corrections in [-eta_bar, eta_bar].
    """
    if not callable(eta_sampler):
        eta_sampler = uniform_eta(float(eta_sampler))
    eta_bar = float(getattr(eta_sampler, "eta_bar", np.nan))
    rng = np.random.default_rng(seed)
    dims = [int(d_profile(k)) for k in range(max(k_max, 0) + 1)]
    if dim_const is None:
        dim_const = max(d / max(k, 1) ** (n - 1) for k, d in enumerate(dims))
    for k, d in enumerate(dims):
        if d < 1 or d > dim_const * max(k, 1) ** (n - 1) + 1e-12:
            raise ModelError(f"d_profile({k}) = {d} violates d_k <= C k^(n-1)")
    etas = {k: np.asarray(eta_sampler(rng, dims[k]), float) for k in range(len(dims))}
    observed = max((np.max(np.abs(e)) for e in etas.values()), default=0.0)
    model = _make(n, float(lambda_shift), k_max, lambda k: dims[k],
                  lambda k, d: (k + lambda_shift) ** 2 + etas[k], dim_const,
                  observed if np.isnan(eta_bar) else eta_bar, "synthetic")
    report = verify_gaps(model)
    if not report.ok:
        raise GapViolation(f"sampled corrections break the cluster gaps: {report.violations[:3]}",
                           report.violations)
    return model


@dataclass
class GapReport:
    c0: float
    ok: bool
    violations: list = field(default_factory=list)


def verify_gaps(model: SpectralModel, c0_required: float = 0.0) -> GapReport:
    """Largest c0 with Lambda_{k,j} >= c0 k^2 (k >= 1) and
    |Lambda_{k,j} - Lambda_{k',j'}| >= c0 (k + k') (k != k').

    Violations are reported as tuples (k, j, k', j') (with k' = j' = -1 for the
    one-cluster lower bound) whose ratio is not above ``c0_required``.
    """
    if model is None or model.n_clusters == 0:
        raise InvalidTruncation("empty model")
    if model.k_max < 1 and model.n_clusters < 2:
        raise InvalidTruncation("model has no cluster with k >= 1")
    ratios = []
    for c in model.clusters:
        if c.k >= 1:
            for j, L in enumerate(c.Lambda):
                ratios.append((L / c.k ** 2, (c.k, j, -1, -1)))
    cl = model.clusters
    for a in range(len(cl)):
        La = np.asarray(cl[a].Lambda)
        for b in range(a + 1, len(cl)):
            Lb = np.asarray(cl[b].Lambda)
            diff = np.abs(La[:, None] - Lb[None, :])
            i, j = np.unravel_index(np.argmin(diff), diff.shape)
            ratios.append((diff[i, j] / (a + b), (a, int(i), b, int(j))))
    c0 = min(r for r, _ in ratios)
    violations = [w for r, w in ratios if not r > c0_required]
    return GapReport(float(c0), not violations, violations)
