"""Seeded Hermitian perturbations W(phi) with a prescribed order and decay."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fbo import FBO, lattice
from .norms import beta_decay
from .spectral import SpectralModel


@dataclass
class PerturbationSpec:
    delta: float = 0.5
    sigma_l: float = 4.0
    sigma_k: float = 8.0
    seed: int = 0
    sub_amp: float = 0.5
    off_amp: float = 0.5
    magnitude: float = 1.0
    norm_beta: float | None = None
    norm_s: float = 0.0


def _weight(x, sigma):
    if np.isinf(sigma):
        return (x == 0).astype(float)
    return x ** (-sigma)


def generate_perturbation(model: SpectralModel, d: int, n_max: int,
                          spec: PerturbationSpec | None = None) -> FBO:
    """Random Hermitian W = principal + subprincipal.

    Principal blocks are c(l, k - k') times the rectangular identity of shape
    d_k x d_k', weighted by <l>^{-sigma_l} <k - k'>^{-sigma_k} (lt_k lt_k')^{delta/2}
    with lt = max(lambda, 1/2); c(0, 0) = 1 so the diagonal sets the order.
    The subprincipal part is a Gaussian Hermitian family one order lower.
    W is scaled so that beta_decay(W, norm_beta, norm_s) = magnitude, with
    norm_beta = -delta by default.
    """
    spec = spec or PerturbationSpec()
    rng = np.random.default_rng(spec.seed)
    modes = lattice(d, n_max)
    L, K, D = len(modes), model.n_clusters, model.dim
    lbr = np.sqrt(1.0 + np.sum(modes ** 2, axis=1))
    wl = _weight(lbr, spec.sigma_l) if not np.isinf(spec.sigma_l) else \
        (np.sum(np.abs(modes), axis=1) == 0).astype(float)
    hs = np.arange(-model.k_max, model.k_max + 1)
    hbr = np.sqrt(1.0 + hs ** 2)
    wh = _weight(hbr, spec.sigma_k) if not np.isinf(spec.sigma_k) else (hs == 0).astype(float)

    # scalar symbols c(l, h) with c(-l, -h) = conj c(l, h)
    c = spec.off_amp * (rng.standard_normal((L, len(hs))) + 1j * rng.standard_normal((L, len(hs))))
    c = 0.5 * (c + np.conj(c[::-1, ::-1]))
    c[L // 2, model.k_max] = 1.0
    c *= wl[:, None] * wh[None, :]

    lt = model.lam_reg
    cof = model.cluster_of
    coef = np.zeros((L, D, D), complex)
    for k in range(K):
        sk = model.block_slice(k)
        for kp in range(K):
            sp = model.block_slice(kp)
            E = np.eye(model.dims[k], model.dims[kp])
            amp = (lt[k] * lt[kp]) ** (spec.delta / 2)
            coef[:, sk, sp] = (c[:, k - kp + model.k_max] * amp)[:, None, None] * E[None]

    g = rng.standard_normal((L, D, D)) + 1j * rng.standard_normal((L, D, D))
    # unit expected spectral norm per block
    sq = np.sqrt(model.dims[cof].astype(float))
    g /= np.sqrt(2.0) * (sq[:, None] + sq[None, :])
    h = np.abs(cof[:, None] - cof[None, :])
    ltf = lt[cof]
    # one order lower, damped by 1 + lambda so it never dominates the principal part
    lo = (ltf[:, None] * ltf[None, :]) ** (spec.delta / 2) \
        / np.sqrt((1.0 + model.lam[cof])[:, None] * (1.0 + model.lam[cof])[None, :])
    sub_w = wl[:, None, None] * _weight(np.sqrt(1.0 + h ** 2), spec.sigma_k)[None] * lo[None]
    coef = coef + spec.sub_amp * g * sub_w
    w = FBO(model, d, n_max, coef.reshape((2 * n_max + 1,) * d + (D, D)), False).hermitian_part()
    beta = -spec.delta if spec.norm_beta is None else spec.norm_beta
    nrm = beta_decay(w, beta, spec.norm_s)
    if nrm > 0:
        w = w.scale(spec.magnitude / nrm)
    return w
