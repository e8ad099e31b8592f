"""Frequency box sampling, non-resonance filters and excised-measure estimates."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import binomtest, qmc

from .errors import IncompleteTable
from .fbo import lattice

BOX = (0.5, 1.5)


@dataclass
class OmegaSet:
    """Finite sample of the frequency box [1/2, 3/2]^d with membership history."""
    d: int
    samples: np.ndarray
    weights: np.ndarray
    flags: dict = field(default_factory=dict)
    gamma: float = 0.0
    tau: float | None = None

    def __post_init__(self):
        self.samples = np.asarray(self.samples, float).reshape(-1, self.d)
        self.weights = np.asarray(self.weights, float)
        if self.tau is None:
            self.tau = self.d + 1.0

    def __len__(self):
        return len(self.samples)

    @property
    def alive(self) -> np.ndarray:
        out = np.ones(len(self), bool)
        for m in self.flags.values():
            out &= m
        return out

    def survivors(self) -> np.ndarray:
        return self.samples[self.alive]

    def with_flag(self, name: str, mask: np.ndarray, **kw) -> "OmegaSet":
        flags = dict(self.flags)
        prev = flags.get(name, np.ones(len(self), bool))
        flags[name] = prev & np.asarray(mask, bool)
        return OmegaSet(self.d, self.samples, self.weights, flags,
                        kw.get("gamma", self.gamma), kw.get("tau", self.tau))

    def fraction_alive(self) -> float:
        return float(np.sum(self.weights[self.alive]) / np.sum(self.weights))

    def to_csv(self, path):
        names = list(self.flags)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow([f"omega_{i}" for i in range(self.d)] + ["weight"] + names)
            for i, om in enumerate(self.samples):
                w.writerow([repr(float(x)) for x in om] + [repr(float(self.weights[i]))]
                           + [int(self.flags[n][i]) for n in names])


def sample_box(d: int, count: int, scheme: str = "grid", seed: int = 0) -> OmegaSet:
    """Samples of [1/2, 3/2]^d with uniform weights summing to 1.

    ``grid`` uses round(count**(1/d)) points per axis; ``low_discrepancy`` a
    scrambled Halton sequence; ``monte_carlo`` independent uniforms.
    """
    if count < 1:
        raise ValueError("count must be positive")
    lo, hi = BOX
    if scheme == "grid":
        m = max(1, int(round(count ** (1.0 / d))))
        ax = np.linspace(lo, hi, m) if m > 1 else np.array([0.5 * (lo + hi)])
        mesh = np.meshgrid(*([ax] * d), indexing="ij")
        pts = np.stack([x.ravel() for x in mesh], axis=1)
    elif scheme == "low_discrepancy":
        pts = lo + (hi - lo) * qmc.Halton(d, scramble=True, seed=seed).random(count)
    elif scheme == "monte_carlo":
        pts = np.random.default_rng(seed).uniform(lo, hi, (count, d))
    else:
        raise ValueError(f"unknown sampling scheme {scheme!r}")
    return OmegaSet(d, pts, np.full(len(pts), 1.0 / len(pts)))


def diophantine_margin(samples: np.ndarray, gamma: float, tau: float, l_max: int) -> np.ndarray:
    """min over 0 < |l|_inf <= l_max of |omega.l| |l|^tau / (4 gamma) per sample."""
    modes = lattice(samples.shape[1], l_max)
    modes = modes[_positive_half(modes)]
    nrm = np.max(np.abs(modes), axis=1).astype(float)
    vals = np.abs(samples @ modes.T) * nrm[None, :] ** tau
    m = vals.min(axis=1)
    return m / (4 * gamma) if gamma > 0 else np.full(len(samples), np.inf)


def _positive_half(modes):
    """One representative of each pair {l, -l}, l != 0."""
    keep = np.zeros(len(modes), bool)
    for i, l in enumerate(modes):
        nz = np.nonzero(l)[0]
        keep[i] = len(nz) > 0 and l[nz[0]] > 0
    return keep


def diophantine_filter(oset: OmegaSet, gamma: float, tau: float | None = None,
                       l_max: int = 10, name: str = "O0") -> OmegaSet:
    """Flag samples with |omega.l| < 4 gamma / |l|_inf^tau for some 0 < |l|_inf <= l_max."""
    if l_max < 1:
        raise ValueError("l_max must be at least 1")
    tau = oset.d + 1.0 if tau is None else tau
    if gamma <= 0:
        return oset.with_flag(name, np.ones(len(oset), bool), gamma=gamma, tau=tau)
    ok = diophantine_margin(oset.samples, gamma, tau, l_max) >= 1.0
    return oset.with_flag(name, ok, gamma=gamma, tau=tau)


def bracket2(k, kp):
    return np.sqrt(1.0 + np.asarray(k, float) ** 2 + np.asarray(kp, float) ** 2)


def melnikov_threshold(gamma, N, tau, n, k, kp):
    return 2.0 * gamma / (N ** tau * bracket2(k, kp) ** (2 * n + 2))


def _table(mu):
    """Flatten a per-cluster list of eigenvalue arrays into (values, cluster index)."""
    vals, ks = [], []
    for k, arr in enumerate(mu):
        arr = np.atleast_1d(np.asarray(arr, float))
        if arr.size == 0 or not np.all(np.isfinite(arr)):
            raise IncompleteTable(f"eigenvalue table has no entries for cluster {k}")
        vals.append(arr)
        ks.append(np.full(arr.size, k))
    return np.concatenate(vals), np.concatenate(ks)


def melnikov_violations(omega_batch: np.ndarray, mu, gamma: float, N: float, n: int,
                        tau: float | None = None, l_range: int | None = None,
                        first_only: bool = False):
    """Bad sample mask for the second Melnikov conditions, plus one witness per bad sample.

    Conditions: |omega.l + mu_a - mu_b| >= 2 gamma / (N^tau <k_a,k_b>^{2n+2}) for
    |l|_inf <= l_range (default N), excluding l = 0 with k_a = k_b. The same
    eigenvalue table ``mu`` is used for every sample in the batch.
    """
    omega_batch = np.atleast_2d(np.asarray(omega_batch, float))
    M, d = omega_batch.shape
    tau = d + 1.0 if tau is None else tau
    vals, ks = _table(mu)
    dm = vals[:, None] - vals[None, :]
    kk_a = np.broadcast_to(ks[:, None], dm.shape)
    kk_b = np.broadcast_to(ks[None, :], dm.shape)
    thr = melnikov_threshold(gamma, N, tau, n, kk_a, kk_b)
    ia = np.broadcast_to(np.arange(len(vals))[:, None], dm.shape).ravel()
    ib = np.broadcast_to(np.arange(len(vals))[None, :], dm.shape).ravel()
    dm, thr, same = dm.ravel(), thr.ravel(), (kk_a == kk_b).ravel()
    order = np.argsort(dm, kind="stable")
    dm_s, thr_s, same_s = dm[order], thr[order], same[order]
    tmax = thr.max(initial=0.0)
    bad = np.zeros(M, bool)
    witness = [None] * M
    if gamma <= 0:
        return bad, witness
    L = int(np.floor(N if l_range is None else min(N, l_range)))
    modes = lattice(d, L)
    for l in modes:
        x = omega_batch @ l
        lo = np.searchsorted(dm_s, -x - tmax, side="left")
        hi = np.searchsorted(dm_s, -x + tmax, side="right")
        width = int((hi - lo).max(initial=0))
        is_zero = not np.any(l)
        for off in range(width):
            idx = lo + off
            ok = idx < hi
            if not np.any(ok):
                break
            j = np.where(ok, idx, 0)
            viol = ok & (np.abs(x + dm_s[j]) < thr_s[j])
            if is_zero:
                viol &= ~same_s[j]
            newly = viol & ~bad
            for i in np.nonzero(newly)[0]:
                p = order[j[i]]
                witness[i] = (tuple(int(v) for v in l), int(ks[ia[p]]), int(ks[ib[p]]),
                              int(ia[p]), int(ib[p]))
            bad |= viol
        if first_only and bad.all():
            break
    return bad, witness


def melnikov_filter(oset: OmegaSet, mu, gamma: float, N: float, n: int,
                    tau: float | None = None, l_range: int | None = None,
                    name: str | None = None) -> OmegaSet:
    """Flag samples violating the second Melnikov conditions.

    ``mu`` is either one per-cluster table shared by all samples or a list of
    such tables, one per sample (None entries for samples already excluded).
    """
    tau = oset.tau if tau is None else tau
    name = name or f"O+(N={N:g})"
    alive = oset.alive
    mask = np.ones(len(oset), bool)
    per_sample = isinstance(mu, (list, tuple)) and len(mu) == len(oset) and \
        (len(mu) == 0 or mu[0] is None or isinstance(mu[0], (list, tuple)))
    if per_sample:
        for i in np.nonzero(alive)[0]:
            if mu[i] is None:
                raise IncompleteTable(f"no eigenvalue table for surviving sample {i}")
            b, _ = melnikov_violations(oset.samples[i:i + 1], mu[i], gamma, N, n, tau, l_range)
            mask[i] = not b[0]
    else:
        idx = np.nonzero(alive)[0]
        b, _ = melnikov_violations(oset.samples[idx], mu, gamma, N, n, tau, l_range)
        mask[idx] = ~b
    return oset.with_flag(name, mask)


@dataclass
class MeasureEstimate:
    value: float
    ci_low: float
    ci_high: float
    n_before: int
    n_excised: int

    def as_dict(self):
        return dict(value=self.value, ci_low=self.ci_low, ci_high=self.ci_high,
                    n_before=self.n_before, n_excised=self.n_excised)


def measure_estimate(before: OmegaSet, after: OmegaSet, confidence: float = 0.95) -> MeasureEstimate:
    """Weighted measure of samples alive in ``before`` and excised in ``after``.

    The value is a fraction of the box volume (weights sum to 1); the interval
    is the Wilson binomial interval on the excised count.
    """
    if len(before) != len(after):
        raise ValueError("after must be derived from before")
    b, a = before.alive, after.alive
    excised = b & ~a
    total = float(np.sum(before.weights))
    value = float(np.sum(before.weights[excised]) / total)
    n_b, n_e = int(b.sum()), int(excised.sum())
    nb_all = len(before)
    if nb_all == 0:
        return MeasureEstimate(0.0, 0.0, 0.0, 0, 0)
    ci = binomtest(n_e, nb_all).proportion_ci(confidence, method="wilson")
    return MeasureEstimate(value, float(ci.low), float(ci.high), n_b, n_e)


def loglog_slope(x, y) -> float:
    """Least-squares slope of log y against log x over points with y > 0."""
    x, y = np.asarray(x, float), np.asarray(y, float)
    ok = (x > 0) & (y > 0)
    if ok.sum() < 2:
        return float("nan")
    return float(np.polyfit(np.log(x[ok]), np.log(y[ok]), 1)[0])


def worst_survivor(oset: OmegaSet, gamma: float, tau: float, l_max: int,
                   exclude=()) -> int:
    """Index of the alive sample closest to the diophantine boundary."""
    margin = diophantine_margin(oset.samples, gamma, tau, l_max)
    margin = np.where(oset.alive, margin, np.inf)
    for i in exclude:
        margin[i] = np.inf
    return int(np.argmin(margin))
