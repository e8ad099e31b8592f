"""KAM block-diagonalization of omega.d_phi + i(Delta + Z + R) and the dense Floquet oracle."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import (EmptySurvivors, ExcisionRequired, NonHermitian, OracleCapExceeded,
                     Stagnation)
from .fbo import FBO, exp_map, fbo_commutator, fbo_mul, omega_dphi_apply, quasienergy_dense
from .calibration import SMALLNESS_C
from .frequencies import melnikov_threshold, melnikov_violations
from .norms import beta_decay, block_norms, cutoff, cutoff_mask, s_decay

log = logging.getLogger(__name__)


@dataclass
class KamConfig:
    d: int
    n: int
    gamma: float
    b: float | None = None
    a: float | None = None
    tau: float | None = None
    rho: float | None = None
    kappa: float = 0.0
    s0: float | None = None
    s: float | None = None
    N0: float = 8.0
    chi: float = 1.5
    nu_max: int = 6
    tol_R: float = 1e-10
    tol_herm: float = 1e-9
    tol_unit: float = 1e-10
    tol_inv: float = 1e-6
    decay_gate: float = 0.2
    lie_tol: float = 1e-14
    lie_max: int = 40
    n_psi: int | None = None

    def __post_init__(self):
        if not 0.0 < self.gamma < 1.0:
            raise ValueError("gamma must lie in (0, 1)")
        if self.chi <= 1.0:
            raise ValueError("chi must exceed 1")
        if self.b is None:
            self.b = 6.0 * self.d + 15.0 * self.n + 23.0
        if self.a is None:
            self.a = self.b - 2.0
        if self.tau is None:
            self.tau = self.d + 1.0
        if self.rho is None:
            self.rho = 5.0 * self.n + 3.0
        if self.s0 is None:
            self.s0 = (self.d + self.n) / 2.0 + 0.5
        if self.s is None:
            self.s = self.s0

    @staticmethod
    def kappa_default(delta: float) -> float:
        return float(np.clip(1.0 - 2.0 * delta, 0.0, 1.0))

    def N(self, nu: int) -> float:
        return self.N0 ** (self.chi ** nu)


@dataclass
class KamState:
    nu: int
    Z: FBO
    R: FBO
    composed: FBO
    omega: np.ndarray
    mu: list
    frames: list
    history: list = field(default_factory=list)

    @property
    def model(self):
        return self.R.model


# block eigen-data ------------------------------------------------------------

def block_eigen(blocks, tol_herm: float = 1e-9):
    """Ascending eigenvalues and orthonormal frames of per-cluster Hermitian blocks."""
    mus, frames = [], []
    for k, B in enumerate(blocks):
        B = np.asarray(B, complex)
        defect = float(np.max(np.abs(B - B.conj().T), initial=0.0))
        if defect > tol_herm * max(1.0, float(np.max(np.abs(B), initial=0.0))):
            raise NonHermitian(f"cluster {k} block Hermitian defect {defect:.3e}", defect)
        w, U = np.linalg.eigh(0.5 * (B + B.conj().T))
        mus.append(w)
        frames.append(U)
    return mus, frames


def normal_form_blocks(Z: FBO) -> list:
    """Diagonal cluster blocks of Delta + mean(Z)."""
    m = Z.model
    H = np.diag(m.Lambda_flat).astype(complex) + Z.mean()
    return [H[m.block_slice(k), m.block_slice(k)] for k in range(m.n_clusters)]


def _frame_matrix(model, frames) -> np.ndarray:
    U = np.zeros((model.dim, model.dim), complex)
    for k, Uk in enumerate(frames):
        sl = model.block_slice(k)
        U[sl, sl] = Uk
    return U


def initial_state(Z: FBO, R: FBO, omega, composed: FBO | None = None, n_psi: int | None = None,
                  tol_herm: float = 1e-9) -> KamState:
    model, d = R.model, R.d
    if composed is None:
        composed = FBO.identity(model, d, n_psi if n_psi is not None else 2 * R.n_max)
    Z0 = FBO.from_matrix(model, d, Z.mean(), hermitian=True)
    mu, frames = block_eigen(normal_form_blocks(Z0), tol_herm)
    return KamState(0, Z0, R.copy(), composed, np.asarray(omega, float), mu, frames)


# homological equation --------------------------------------------------------

@dataclass
class HomologicalSolution:
    S: FBO
    Q: FBO
    diag_R: FBO
    min_divisor_ratio: float


def _diag_part(R: FBO) -> FBO:
    """phi-mean cluster-diagonal blocks of R."""
    m = R.model
    c = m.cluster_of
    out = FBO.zeros(m, R.d, 0, hermitian=R.hermitian)
    out.coef[(0,) * R.d] = np.where(c[:, None] == c[None, :], R.mean(), 0)
    return out


def homological_solve(R: FBO, Z: FBO, omega, gamma: float, N: float, config: KamConfig,
                      mu=None, frames=None) -> HomologicalSolution:
    """Hermitian S, Q with -omega.d_phi S + i[S, Delta + Z] + R = DiagR + Q.

    In the eigenframes U of the blocks of Delta + Z:
    S^(l)_{ab} = -i R^(l)_{ab} / (omega.l + mu_a - mu_b) on |l|_inf <= N,
    |k - k'| <= N, excluding (0, k, k); Q = (1 - Pi_N) R and DiagR holds the
    phi-mean diagonal cluster blocks.
    """
    model, d, n = R.model, R.d, R.n_max
    omega = np.asarray(omega, float)
    if mu is None or frames is None:
        mu, frames = block_eigen(normal_form_blocks(Z), config.tol_herm)
    U = _frame_matrix(model, frames)
    mu_flat = np.concatenate(mu)
    c = model.cluster_of
    head, Q = cutoff(R, N)
    diag_R = _diag_part(R)
    mask = cutoff_mask(R, N)
    mask[len(mask) // 2] &= c[:, None] != c[None, :]
    ol = R.modes() @ omega
    div = ol[:, None, None] + mu_flat[None, :, None] - mu_flat[None, None, :]
    thr = melnikov_threshold(gamma, N, config.tau, model.n, c[:, None], c[None, :])
    ratio = np.where(mask, np.abs(div) / thr[None], np.inf)
    worst = np.unravel_index(np.argmin(ratio), ratio.shape)
    min_ratio = float(ratio[worst])
    if min_ratio < 1.0:
        li, a, b = worst
        l = tuple(int(x) for x in R.modes()[li])
        ka, kb = int(c[a]), int(c[b])
        ja, jb = a - int(model.offsets[ka]), b - int(model.offsets[kb])
        raise ExcisionRequired(
            f"divisor {div[worst]:.3e} below threshold at l={l}, k={ka}, k'={kb}, j={ja}, j'={jb}",
            (l, ka, kb, ja, jb))
    Uh = U.conj().T
    Rt = np.matmul(np.matmul(Uh[None], head.flat_coef()), U[None])
    with np.errstate(divide="ignore", invalid="ignore"):
        St = np.where(mask, -1j * Rt / np.where(mask, div, 1.0), 0)
    S = np.matmul(np.matmul(U[None], St), Uh[None])
    S = FBO(model, d, n, S.reshape(R.coef.shape), True).hermitian_part()
    return HomologicalSolution(S, Q, diag_R, min_ratio)


def homological_residual(sol: HomologicalSolution, R: FBO, Z: FBO, omega, s: float) -> float:
    """s_decay of -omega.d_phi S + i[S, Delta + Z] + R - DiagR - Q relative to s_decay(R)."""
    model, d, n = R.model, R.d, R.n_max
    H = FBO.laplacian(model, d) + FBO.from_matrix(model, d, Z.mean(), hermitian=True)
    lhs = (omega_dphi_apply(sol.S, omega).scale(-1.0)
           + fbo_commutator(sol.S, H, n_out=n).scale(1j) + R - sol.diag_R - sol.Q)
    ref = s_decay(R, s)
    val = s_decay(lhs, s)
    return val / ref if ref > 0 else val


def lie_remainder(S: FBO, R: FBO, G: FBO, Q: FBO, ref_norm: float, s: float,
                  tol: float = 1e-14, max_terms: int = 40) -> tuple[FBO, int]:
    """Q + sum_{p>=2} i^{p-1}/p! ad_S^{p-1}(G) + sum_{p>=1} i^p/p! ad_S^p(R).

    G = DiagR + Q - R. Both series stop once the next term has s_decay below
    tol * ref_norm.
    """
    n = R.n_max
    out = Q.copy()
    floor = tol * ref_norm
    terms = 0
    # series in G: term_p = i^{p-1}/p! ad^{p-1} G, starting at p = 2
    cur = G
    for p in range(2, max_terms + 2):
        cur = fbo_commutator(S, cur, n_out=n)
        term = cur.scale((1j) ** (p - 1) / math.factorial(p))
        out = out + term
        terms += 1
        if s_decay(term, s) < floor:
            break
    cur = R
    for p in range(1, max_terms + 1):
        cur = fbo_commutator(S, cur, n_out=n)
        term = cur.scale((1j) ** p / math.factorial(p))
        out = out + term
        terms += 1
        if s_decay(term, s) < floor:
            break
    return out.hermitian_part(), terms


def _norms(R: FBO, config: KamConfig) -> tuple[float, float]:
    bn = block_norms(R)
    return (beta_decay(R, config.rho, config.s, bn), beta_decay(R, config.rho, config.s + config.b, bn))


def kam_step(state: KamState, config: KamConfig, N: float | None = None) -> KamState:
    """One reduction step: Z+ = Z + DiagR, R+ from the Lie series, composed <- e^{iS} composed."""
    if N is None:
        N = config.N(state.nu)
    R, Z = state.R, state.Z
    model, d = R.model, R.d
    low, high = _norms(R, config)
    if R.max_abs() == 0.0:
        return replace(state, nu=state.nu + 1, history=state.history + [
            dict(nu=state.nu, N_nu=N, norm_R_low=0.0, norm_R_high=0.0, lie_terms=0)])
    advisory = SMALLNESS_C / config.gamma * N ** (2 * config.tau + 1) * low
    sol = homological_solve(R, Z, state.omega, config.gamma, N, config, state.mu, state.frames)
    G = sol.diag_R + sol.Q - R
    ref = s_decay(R, config.s)
    R_new, terms = lie_remainder(sol.S, R, G, sol.Q, ref, config.s, config.lie_tol, config.lie_max)
    Z_new = (Z + sol.diag_R).hermitian_part()
    mu, frames = block_eigen(normal_form_blocks(Z_new), config.tol_herm)
    n_psi = state.composed.n_max
    if sol.S.max_abs() > 0.0:
        phi = exp_map(sol.S, n_out=n_psi, tol_unit=config.tol_unit)
        composed = fbo_mul(phi, state.composed, n_out=n_psi)
    else:
        composed = state.composed
    low_new, high_new = _norms(R_new, config)
    rec = dict(nu=state.nu, N_nu=N, norm_R_low=low, norm_R_high=high, norm_R_next=low_new,
               norm_R_next_high=high_new, smallness=advisory, smallness_ok=advisory <= 0.5,
               min_divisor_ratio=sol.min_divisor_ratio, lie_terms=terms,
               S_max=sol.S.max_abs())
    return KamState(state.nu + 1, Z_new, R_new, composed, state.omega, mu, frames,
                    state.history + [rec])


@dataclass
class KamResult:
    state: KamState
    converged: bool
    excised: bool
    witness: tuple | None
    ratios: list
    norms: list

    def record(self):
        return {"omega": [float(x) for x in self.state.omega], "converged": self.converged,
                "excised": self.excised, "nu": self.state.nu,
                "steps": [{k: _jsonable(v) for k, v in h.items()} for h in self.state.history],
                "mu_head": [float(x) for x in np.concatenate(self.state.mu)[:8]]}


def _jsonable(v):
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    if isinstance(v, np.bool_):
        return bool(v)
    return v


def iterate(state: KamState, config: KamConfig, raise_on_stagnation: bool = True) -> KamResult:
    """Melnikov check with the current eigenvalues, then kam_step, until norm <= tol_R.

    Raises Stagnation when the decay ratio exceeds decay_gate twice in a row.
    An excised frequency returns with ``excised=True`` and the violating witness.
    """
    norms = [_norms(state.R, config)[0]]
    ratios = []
    streak = 0
    n_lat = state.R.n_max
    while norms[-1] > config.tol_R and state.nu < config.nu_max:
        N = config.N(state.nu)
        bad, wit = melnikov_violations(state.omega[None], state.mu, config.gamma, N,
                                       state.model.n, config.tau, l_range=min(N, n_lat))
        if bad[0]:
            return KamResult(state, False, True, wit[0], ratios, norms)
        try:
            state = kam_step(state, config, N)
        except ExcisionRequired as exc:
            return KamResult(state, False, True, exc.where, ratios, norms)
        norms.append(state.history[-1]["norm_R_next"])
        ratio = norms[-1] / norms[-2] if norms[-2] > 0 else 0.0
        ratios.append(ratio)
        state.history[-1]["ratio"] = ratio
        streak = streak + 1 if ratio > config.decay_gate else 0
        if streak >= 2 and raise_on_stagnation:
            raise Stagnation(f"decay ratio above {config.decay_gate} twice in a row",
                             state.history)
    return KamResult(state, norms[-1] <= config.tol_R, False, None, ratios, norms)


def iterate_set(states: dict, config: KamConfig) -> dict:
    """Run iterate per sample index; failures flag the sample instead of aborting."""
    out = {}
    for i, st in states.items():
        try:
            out[i] = iterate(st, config)
        except Stagnation as exc:
            log.warning("sample %s stagnated", i)
            out[i] = KamResult(st, False, False, None, [], [])
            out[i].stagnation = exc.history
    if states and not any(not r.excised for r in out.values()):
        raise EmptySurvivors("every sample was excised")
    return out


def flat_mu(state: KamState) -> np.ndarray:
    return np.concatenate(state.mu)


# dense Floquet oracle --------------------------------------------------------

def floquet_oracle(M: FBO, omega, n_lattice: int | None = None, cap: int = 4000) -> np.ndarray:
    """Sorted eigenvalues of -i omega.d_phi + M on the lattice |l|_inf <= n_lattice."""
    if n_lattice is None:
        n_lattice = M.n_max
    size = (2 * n_lattice + 1) ** M.d * M.model.dim
    if size > cap:
        raise OracleCapExceeded(f"flattened dimension {size} exceeds cap {cap}")
    H = quasienergy_dense(M.resize(max(M.n_max, 0)), omega, n_lattice)
    return np.linalg.eigvalsh(0.5 * (H + H.conj().T))


def _shifts(omega, L):
    from .fbo import lattice
    return lattice(len(omega), L) @ np.asarray(omega, float)


def match_quasienergies(mu, oracle, omega, l_range: int = 2, tie: float = 1e-9) -> dict:
    """Mutual nearest-neighbour matching of mu + omega.Z^d against oracle eigenvalues.

    For each mu_j the closest oracle value over shifts omega.l (|l|_inf <= l_range)
    is taken; the pair is mutual if mu_j is (within ``tie``) the closest lifted
    mu to that oracle value. Returns distances and the mutual flags.
    """
    mu = np.asarray(mu, float)
    oracle = np.sort(np.asarray(oracle, float))
    sh = _shifts(omega, l_range)
    lifted = (mu[:, None] + sh[None, :])
    dist = np.empty(len(mu))
    mutual = np.empty(len(mu), bool)
    all_lift = np.sort(lifted.ravel())
    for j in range(len(mu)):
        cand = lifted[j]
        idx = np.clip(np.searchsorted(oracle, cand), 1, len(oracle) - 1)
        dl = np.minimum(np.abs(oracle[idx] - cand), np.abs(oracle[idx - 1] - cand))
        best = int(np.argmin(dl))
        dist[j] = dl[best]
        i = idx[best] if abs(oracle[idx[best]] - cand[best]) <= abs(oracle[idx[best] - 1] - cand[best]) \
            else idx[best] - 1
        e = oracle[i]
        p = np.clip(np.searchsorted(all_lift, e), 1, len(all_lift) - 1)
        nearest = min(abs(all_lift[p] - e), abs(all_lift[p - 1] - e))
        mutual[j] = abs(e - cand[best]) <= nearest + tie
    return {"max_dist": float(dist.max(initial=0.0)), "dist": dist, "mutual": mutual,
            "all_mutual": bool(mutual.all())}


def eigen_lipschitz_check(samples, kappa: float, gate: float = 0.25) -> dict:
    """<k>^kappa max_j |mu_kj(w) - mu_kj(w')| / |w - w'| per cluster over sample pairs."""
    samples = list(samples)
    if len(samples) < 2:
        return {"per_cluster": [], "max": 0.0, "ok": True, "warning": True}
    K = len(samples[0][1])
    per = np.zeros(K)
    for i in range(len(samples)):
        wi, mi = samples[i]
        for j in range(i + 1, len(samples)):
            wj, mj = samples[j]
            dw = float(np.linalg.norm(np.asarray(wi, float) - np.asarray(wj, float)))
            if dw == 0.0:
                continue
            for k in range(K):
                q = np.max(np.abs(np.asarray(mi[k]) - np.asarray(mj[k]))) / dw
                per[k] = max(per[k], (1.0 + k * k) ** (kappa / 2) * q)
    m = float(per.max(initial=0.0))
    return {"per_cluster": per.tolist(), "max": m, "ok": m <= gate, "warning": False}
