"""Decay norms of Fourier-block operators and the associated inequality checks."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .fbo import FBO, StateVector, apply_state, fbo_mul


@dataclass
class NormReport:
    kind: str
    s: float
    value: float
    beta: float | None = None
    meta: dict = field(default_factory=dict)

    def as_dict(self):
        return {"kind": self.kind, "s": self.s, "beta": self.beta, "value": self.value,
                "meta": self.meta}


def _scaled_l2(x: np.ndarray) -> float:
    x = np.abs(np.asarray(x, float)).ravel()
    m = x.max(initial=0.0)
    if m == 0.0 or not np.isfinite(m):
        return float(m)
    return float(m * np.sqrt(np.sum((x / m) ** 2)))


def block_norms(a: FBO) -> np.ndarray:
    """Spectral norms ||A(l)_{[k]}^{[k']}||, shape (L, K+1, K+1) with l in lattice order."""
    model = a.model
    K = model.n_clusters
    flat = a.flat_coef()
    out = np.zeros((flat.shape[0], K, K))
    dims, off = model.dims, model.offsets
    groups: dict[tuple[int, int], list[tuple[int, int]]] = {}
    for k in range(K):
        for kp in range(K):
            groups.setdefault((int(dims[k]), int(dims[kp])), []).append((k, kp))
    for (dk, dkp), pairs in groups.items():
        ks = np.array([p[0] for p in pairs])
        kps = np.array([p[1] for p in pairs])
        rows = off[ks][:, None] + np.arange(dk)[None, :]
        cols = off[kps][:, None] + np.arange(dkp)[None, :]
        blocks = flat[:, rows[:, :, None], cols[:, None, :]]
        if dk == 1 or dkp == 1:
            nrm = np.sqrt(np.sum(np.abs(blocks) ** 2, axis=(-2, -1)))
        else:
            nrm = np.linalg.norm(blocks, ord=2, axis=(-2, -1))
        out[:, ks, kps] = nrm
    return out


def _decay_from_norms(nrm: np.ndarray, modes: np.ndarray, s: float) -> float:
    K = nrm.shape[1]
    kk = np.arange(K)
    h = np.abs(kk[:, None] - kk[None, :])
    sup = np.zeros((nrm.shape[0], K))
    for hh in range(K):
        mask = h == hh
        sup[:, hh] = nrm[:, mask].max(axis=1)
    l2 = np.sum(modes.astype(float) ** 2, axis=1)
    w = np.sqrt(1.0 + l2[:, None] + np.arange(K)[None, :] ** 2) ** s
    return _scaled_l2(w * sup)


def s_decay(a: FBO, s: float, norms: np.ndarray | None = None) -> float:
    """sum_{l,h} <l,h>^{2s} sup_{|k-k'|=h} ||A(l)_{[k]}^{[k']}||^2, square-rooted."""
    if norms is None:
        norms = block_norms(a)
    return _decay_from_norms(norms, a.modes(), s)


def beta_decay(a: FBO, beta: float, s: float, norms: np.ndarray | None = None) -> float:
    """|||D^beta A|||_s + |||A D^beta|||_s with D = diag(max(lambda_k, 1/2))."""
    if norms is None:
        norms = block_norms(a)
    w = a.model.lam_reg ** beta
    modes = a.modes()
    return (_decay_from_norms(norms * w[None, :, None], modes, s)
            + _decay_from_norms(norms * w[None, None, :], modes, s))


@dataclass
class LipReport:
    value: float
    sup: float
    lip: float
    warning: bool


def lipschitz_decay(samples, gamma: float, s: float, beta: float | None = None) -> LipReport:
    """sup_omega |||A(omega)||| + gamma * max pairwise difference quotient."""
    def nrm(a):
        return s_decay(a, s) if beta is None else beta_decay(a, beta, s)
    samples = list(samples)
    sup = max((nrm(a) for _, a in samples), default=0.0)
    if len(samples) < 2:
        return LipReport(sup, sup, 0.0, True)
    lip = 0.0
    for i in range(len(samples)):
        wi, ai = samples[i]
        for j in range(i + 1, len(samples)):
            wj, aj = samples[j]
            dw = float(np.linalg.norm(np.asarray(wi, float) - np.asarray(wj, float)))
            if dw == 0.0:
                continue
            lip = max(lip, nrm(ai - aj) / dw)
    return LipReport(sup + gamma * lip, sup, lip, False)


def cutoff_mask(a: FBO, N: float) -> np.ndarray:
    """Boolean mask over (l, k, k') of the head |l|_inf <= N, |k - k'| <= N."""
    modes = a.modes()
    lok = np.max(np.abs(modes), axis=1, initial=0) <= N
    c = a.model.cluster_of
    kok = np.abs(c[:, None] - c[None, :]) <= N
    return lok[:, None, None] & kok[None, :, :]


def cutoff(a: FBO, N: float) -> tuple[FBO, FBO]:
    """(Pi_N A, (1 - Pi_N) A)."""
    mask = cutoff_mask(a, N).reshape(a.coef.shape)
    head = FBO(a.model, a.d, a.n_max, np.where(mask, a.coef, 0), a.hermitian)
    tail = FBO(a.model, a.d, a.n_max, np.where(mask, 0, a.coef), a.hermitian)
    return head, tail


def weight_conjugate(a: FBO, alpha: float) -> FBO:
    """D^alpha A D^{-alpha} with the regularized cluster weight."""
    w = a.model.lam_reg[a.model.cluster_of] ** alpha
    return FBO(a.model, a.d, a.n_max, a.coef * (w[:, None] / w[None, :]), False)


# inequality checks -----------------------------------------------------------

def tame_check(a: FBO, b: FBO, s: float, s0: float, n_out: int | None = None) -> dict:
    """|||ab|||_s against |||a|||_s |||b|||_s0 + |||a|||_s0 |||b|||_s."""
    if n_out is None:
        n_out = a.n_max + b.n_max
    lhs = s_decay(fbo_mul(a, b, n_out=n_out), s)
    na, nb = block_norms(a), block_norms(b)
    rhs = (s_decay(a, s, na) * s_decay(b, s0, nb) + s_decay(a, s0, na) * s_decay(b, s, nb))
    return {"lhs": lhs, "rhs": rhs, "ratio": lhs / rhs if rhs > 0 else 0.0}


def action_check(a: FBO, z: StateVector, s: float, s0: float) -> dict:
    """||Az||_{l_s} against |||A|||_s ||z||_{l_s0} + |||A|||_s0 ||z||_{l_s}."""
    n_out = a.n_max + z.n_max
    zz = StateVector(z.model, z.d, n_out, _pad_state(z, n_out))
    lhs = apply_state(a, zz).ell_p(s)
    na = block_norms(a)
    rhs = s_decay(a, s, na) * z.ell_p(s0) + s_decay(a, s0, na) * z.ell_p(s)
    return {"lhs": lhs, "rhs": rhs, "ratio": lhs / rhs if rhs > 0 else 0.0}


def _pad_state(z: StateVector, n: int) -> np.ndarray:
    out = np.zeros((2 * n + 1,) * z.d + (z.model.dim,), complex)
    sl = tuple(slice(n - z.n_max, n + z.n_max + 1) for _ in range(z.d))
    out[sl] = z.coef
    return out


def conjugation_check(a: FBO, alpha: float, N: float, s: float) -> dict:
    """max over signs of |||D^{+-alpha} Pi_N A D^{-+alpha}|||_s against N^alpha |||A|||_s."""
    head, _ = cutoff(a, N)
    lhs = max(s_decay(weight_conjugate(head, alpha), s),
              s_decay(weight_conjugate(head, -alpha), s))
    rhs = N ** alpha * s_decay(a, s)
    return {"lhs": lhs, "rhs": rhs, "ratio": lhs / rhs if rhs > 0 else 0.0}


def tail_check(a: FBO, beta: float, N: float, s: float) -> dict:
    """|||(1 - Pi_N) A|||_s against N^{-beta} |||A|||_{s+beta}."""
    _, tail = cutoff(a, N)
    lhs = s_decay(tail, s)
    rhs = N ** (-beta) * s_decay(a, s + beta)
    return {"lhs": lhs, "rhs": rhs, "ratio": lhs / rhs if rhs > 0 else 0.0}


def op_norm_bound_check(a: FBO, s: float, s0: float, phis: np.ndarray) -> dict:
    """sup over sampled phi of ||A(phi)||_{L(h^s)} against |||A|||_{s+s0}."""
    wk = a.model.bracket_k() ** s
    vals = a.evaluate(np.atleast_2d(phis))
    if vals.ndim == 2:
        vals = vals[None]
    ops = [np.linalg.norm((wk[:, None] * V) / wk[None, :], 2) for V in vals]
    lhs = float(max(ops))
    rhs = s_decay(a, s + s0)
    return {"lhs": lhs, "rhs": rhs, "ratio": lhs / rhs if rhs > 0 else 0.0}
