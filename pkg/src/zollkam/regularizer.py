"""Averaging along the periodic K0-flow and elimination of the time dependence.

The quasi-energy operator is kept in the form Delta + W + A(phi) + R(phi):
W is phi-independent and block-diagonal in the cluster index, A is the part
still to be regularized and R collects everything already below the target
order. Each pass conjugates by exp(iS) (averaging) and then by exp(iT)
(time elimination).
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ModelError, SingularWeight, UndefinedOrder
from .fbo import FBO, conjugate_quasienergy, exp_map, fbo_commutator, omega_dphi_apply, \
    omega_dphi_invert

log = logging.getLogger(__name__)


def _require_integer_spacing(model):
    if not model.integer_spacing():
        raise ModelError("K0 eigenvalues are not spaced by integers")


def _cluster_diff(model) -> np.ndarray:
    """lambda_k - lambda_k' on the flattened basis (exact integers)."""
    c = model.cluster_of
    return (c[:, None] - c[None, :]).astype(float)


def average_K0(a: FBO) -> FBO:
    """Mean of exp(-i tau K0) A exp(i tau K0) over one period: the block-diagonal part."""
    _require_integer_spacing(a.model)
    mask = _cluster_diff(a.model) == 0
    return FBO(a.model, a.d, a.n_max, np.where(mask, a.coef, 0), a.hermitian)


def solve_Y(a: FBO) -> FBO:
    """Y with i[K0, Y] = A - <A>: off-diagonal blocks divided by i(lambda_k - lambda_k')."""
    _require_integer_spacing(a.model)
    dl = _cluster_diff(a.model)
    with np.errstate(divide="ignore", invalid="ignore"):
        w = np.where(dl == 0, 0.0, 1.0 / (1j * np.where(dl == 0, 1.0, dl)))
    return FBO(a.model, a.d, a.n_max, a.coef * w, False)


def k0_weight(model, regularized: bool = True) -> np.ndarray:
    """Diagonal of K0 on the flattened basis, floored at 1/2 when ``regularized``."""
    lam = model.lam[model.cluster_of]
    if regularized:
        return np.maximum(lam, 0.5)
    if np.any(lam <= 0):
        raise SingularWeight("K0 has a zero eigenvalue; K0^{-1} needs the regularized weight")
    return lam


def build_S(y: FBO, regularized: bool = True) -> FBO:
    """S = (Y K0^{-1} + K0^{-1} Y) / 4."""
    w = 1.0 / k0_weight(y.model, regularized)
    coef = 0.25 * y.coef * (w[None, :] + w[:, None])
    out = FBO(y.model, y.d, y.n_max, coef, False)
    # Y is anti-Hermitian divided by i, so S inherits Hermitian symmetry from A
    if out.hermitian_defect() <= 1e-12 * max(1.0, out.max_abs()):
        out.hermitian = True
    return out


def _rel(res: float, ref: float) -> float:
    return res / ref if ref > 0 else res


def cohomological_residual(y: FBO, a: FBO) -> float:
    """max|i[K0, Y] - (A - <A>)| / max|A|."""
    K = FBO.from_matrix(a.model, a.d, np.diag(a.model.lam[a.model.cluster_of]), hermitian=True)
    lhs = fbo_commutator(K, y, n_out=a.n_max).scale(1j)
    rhs = a - average_K0(a)
    return _rel(float(np.max(np.abs(lhs.coef - rhs.coef), initial=0.0)), a.max_abs())


def squared_weight_residual(s: FBO, a: FBO, regularized: bool = True) -> float:
    """Relative residual of i[K0^2, S] = A - <A> - [[A, K0], K0^{-1}] / 4."""
    lam = k0_weight(a.model, regularized)
    model, d, n = a.model, a.d, a.n_max
    K = FBO.from_matrix(model, d, np.diag(lam), hermitian=True)
    K2 = FBO.from_matrix(model, d, np.diag(lam ** 2), hermitian=True)
    Ki = FBO.from_matrix(model, d, np.diag(1.0 / lam), hermitian=True)
    lhs = fbo_commutator(K2, s, n_out=n).scale(1j)
    inner = fbo_commutator(a, K, n_out=n)
    rhs = a - average_K0(a) - fbo_commutator(inner, Ki, n_out=n).scale(0.25)
    return _rel(float(np.max(np.abs(lhs.coef - rhs.coef), initial=0.0)), a.max_abs())


def build_T(avg_a: FBO, omega, gamma: float | None = None, tau: float | None = None) -> FBO:
    """T(l) = <A>(l) / (i omega.l) for l != 0 and T(0) = 0."""
    d, n = avg_a.d, avg_a.n_max
    zm = avg_a.copy()
    zm.coef[(n,) * d] = 0
    t = omega_dphi_invert(zm, omega, gamma, tau)
    t.hermitian = avg_a.hermitian
    return t


def residual_T(t: FBO, avg_a: FBO, omega) -> float:
    """Relative residual of omega.d_phi T = <A> - mean_phi <A>."""
    lhs = omega_dphi_apply(t, omega)
    rhs = avg_a.copy()
    rhs.coef[(avg_a.n_max,) * avg_a.d] = 0
    return _rel(float(np.max(np.abs(lhs.coef - rhs.coef), initial=0.0)), avg_a.max_abs())


# order estimation ------------------------------------------------------------

def band_profile(a: FBO, band: int = 1) -> np.ndarray:
    """p_k = max over l and |k - k'| <= band of the spectral norm of block (l, k, k')."""
    from .norms import block_norms
    nrm = block_norms(a).max(axis=0)
    K = nrm.shape[0]
    kk = np.arange(K)
    near = np.abs(kk[:, None] - kk[None, :]) <= band
    return np.where(near, nrm, 0.0).max(axis=1)


def estimate_order(a: FBO, band: int = 1) -> float:
    """Least-squares slope of log p_k against log max(lambda_k, 1/2)."""
    p = band_profile(a, band)
    lam = a.model.lam_reg
    scale = p.max(initial=0.0)
    ok = p > 1e-300 + 1e-15 * scale
    if scale == 0.0 or ok.sum() < 2:
        raise UndefinedOrder("operator has fewer than two nonzero cluster rows")
    return float(np.polyfit(np.log(lam[ok]), np.log(p[ok]), 1)[0])


# regularization loop ---------------------------------------------------------

@dataclass
class RegularizationState:
    W: FBO
    A: FBO
    R: FBO
    omega: np.ndarray
    order_est: float = float("nan")
    transform_log: list = field(default_factory=list)
    step: int = 0
    avg_a: FBO | None = None
    Z1: FBO | None = None
    history: list = field(default_factory=list)
    c_ref: float | None = None

    @property
    def model(self):
        return self.A.model


def initial_state(v: FBO, omega) -> RegularizationState:
    z = FBO.zeros(v.model, v.d, 0, hermitian=True)
    r = FBO.zeros(v.model, v.d, v.n_max, hermitian=True)
    return RegularizationState(z, v.copy(), r, np.asarray(omega, float))


def order_constant(a: FBO, order: float, band: int = 1) -> float:
    """Smallest C with p_k <= C max(lambda_k, 1/2)^order for the band profile of ``a``."""
    p = band_profile(a, band)
    return float(np.max(p * a.model.lam_reg ** (-order), initial=0.0))


def split_by_order(res: FBO, target_order: float, c_ref: float | None = None
                   ) -> tuple[FBO, FBO]:
    """(high, low): blocks with norm <= c_ref * lambda_hat^target go to ``low``.

    lambda_hat = max(lambda_k, lambda_k') with the regularized weight; c_ref is
    the symbol constant of the input perturbation (defaults to the peak block
    norm scaled to the smallest weight).
    """
    from .norms import block_norms
    model = res.model
    nrm = block_norms(res)
    peak = nrm.max(initial=0.0)
    if peak == 0.0:
        return res.copy(), FBO.zeros(model, res.d, res.n_max)
    lam = model.lam_reg
    if c_ref is None:
        c_ref = peak * lam.min() ** (-target_order)
    lhat = np.maximum(lam[:, None], lam[None, :])
    thr = c_ref * lhat ** target_order
    low_blocks = nrm <= thr[None]
    c = model.cluster_of
    mask = low_blocks[:, c[:, None], c[None, :]].reshape(res.coef.shape)
    high = FBO(model, res.d, res.n_max, np.where(mask, 0, res.coef), res.hermitian)
    low = FBO(model, res.d, res.n_max, np.where(mask, res.coef, 0), res.hermitian)
    return high, low


def _delta_w(state: RegularizationState) -> FBO:
    lap = FBO.laplacian(state.model, state.A.d)
    return lap + state.W


def _conjugate(state, gen: FBO, base: FBO, n_phi: int, tol_unit: float):
    n = state.A.n_max
    phi = exp_map(gen, n_out=n_phi, tol_unit=tol_unit)
    phi_inv = exp_map(gen, n_out=n_phi, tol_unit=tol_unit, sign=-1.0)
    main = conjugate_quasienergy(phi, phi_inv, base, state.omega, n_out=n)
    rest = conjugate_quasienergy(phi, phi_inv, state.R, state.omega, n_out=n, with_time=False)
    return main, rest


def averaging_step(state: RegularizationState, target_order: float = -2.0,
                   n_phi: int | None = None, tol_unit: float = 1e-10,
                   regularized: bool = True) -> RegularizationState:
    """Conjugate by exp(iS), S from the K0-homological equation; keep <A> apart."""
    A = state.A
    avg = average_K0(A)
    if A.max_abs() == 0.0:
        return replace(state, avg_a=avg, transform_log=list(state.transform_log),
                       history=list(state.history))
    S = build_S(solve_Y(A), regularized)
    S.hermitian = True
    S = S.hermitian_part()
    n_phi = 2 * A.n_max if n_phi is None else n_phi
    base = _delta_w(state) + A
    main, rest = _conjugate(state, S, base, n_phi, tol_unit)
    res = main.m - _delta_w(state) - avg
    high, low = split_by_order(res, target_order, state.c_ref)
    log.debug("averaging step %d: |S|=%.3e herm defect %.2e", state.step, S.max_abs(),
              main.herm_defect)
    return replace(state, A=high.hermitian_part(), R=(rest.m + low).hermitian_part(),
                   transform_log=state.transform_log + [("S", state.step, S)], avg_a=avg,
                   history=list(state.history))


def time_elimination_step(state: RegularizationState, gamma: float | None = None,
                          tau: float | None = None, target_order: float = -2.0,
                          n_phi: int | None = None, tol_unit: float = 1e-10
                          ) -> RegularizationState:
    """Conjugate by exp(iT), T = (omega.d_phi)^{-1}(<A> - mean); W absorbs the mean of <A>."""
    if state.avg_a is None:
        avg = average_K0(state.A)
        rest_a = state.A - avg
    else:
        avg, rest_a = state.avg_a, state.A
    d, n = avg.d, avg.n_max
    mean = FBO.from_matrix(state.model, d, avg.mean(), hermitian=True).hermitian_part()
    W_new = (state.W + mean).hermitian_part()
    Z1 = state.Z1 if state.Z1 is not None else mean
    T = build_T(avg, state.omega, gamma, tau)
    T.hermitian = True
    T = T.hermitian_part()
    if T.max_abs() == 0.0:
        A_new, R_new, log_entry = rest_a, state.R, []
    else:
        n_phi = 2 * n if n_phi is None else n_phi
        base = _delta_w(state) + avg + rest_a
        main, rest = _conjugate(state, T, base, n_phi, tol_unit)
        res = main.m - FBO.laplacian(state.model, d) - W_new
        A_new, low = split_by_order(res, target_order, state.c_ref)
        R_new = rest.m + low
        log_entry = [("T", state.step, T)]
    return replace(state, W=W_new, A=A_new.hermitian_part(), R=R_new.hermitian_part(),
                   transform_log=state.transform_log + log_entry, step=state.step + 1,
                   avg_a=None, Z1=Z1, history=list(state.history))


@dataclass
class RegularizationResult:
    Z: FBO
    Z1: FBO
    R: FBO
    transform_log: list
    orders: list
    converged: bool
    state: RegularizationState


def _order_or_floor(a: FBO) -> float:
    try:
        return estimate_order(a)
    except UndefinedOrder:
        return float("-inf")


def regularize(v: FBO, omega, target_order: float = -2.0, max_steps: int = 8,
               gamma: float | None = None, tau: float | None = None,
               n_phi: int | None = None, tol_unit: float = 1e-10,
               regularized: bool = True) -> RegularizationResult:
    """Alternate averaging and time elimination until the fitted order of A is below target.

    Blocks of each new residue that satisfy the target-order bound with the
    symbol constant of ``v`` are moved to R. Returns Z = W (phi-independent,
    block-diagonal), its first-pass part Z1, the remainder R (which absorbs
    the final A) and the generator log [("S", 0, S0), ("T", 0, T0), ...] in
    application order.
    """
    state = initial_state(v, omega)
    orders = []
    d = v.d
    if v.max_abs() == 0.0:
        z = FBO.zeros(v.model, d, 0)
        return RegularizationResult(z, z, state.R, [], [], True, state)
    delta0 = estimate_order(v)
    state.c_ref = order_constant(v, delta0)
    converged = False
    for _ in range(max_steps):
        state = averaging_step(state, target_order, n_phi, tol_unit, regularized)
        state = time_elimination_step(state, gamma, tau, target_order, n_phi, tol_unit)
        o = _order_or_floor(state.A)
        state.order_est = o
        orders.append(o)
        state.history.append({"step": state.step, "order": o, "A_max": state.A.max_abs(), "R_max": state.R.max_abs()})
        if o <= target_order or state.A.max_abs() == 0.0:
            converged = True
            break
    R = (state.R + state.A).hermitian_part()
    Z = average_K0(FBO.from_matrix(v.model, d, state.W.mean(), hermitian=True)).hermitian_part()
    Z1 = state.Z1 if state.Z1 is not None else FBO.zeros(v.model, d, 0)
    return RegularizationResult(Z, Z1, R, state.transform_log, orders, converged, state)
