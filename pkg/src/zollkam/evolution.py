"""Time integration of i u_t = (Delta + eps W(omega t)) u and checks on the reduced flow."""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import MismatchedOmega
from .fbo import FBO


@dataclass
class EvolutionRun:
    model: object
    omega: np.ndarray
    epsilon: float
    W: FBO
    u0: np.ndarray
    t_max: float
    h: float = 0.01
    record_every: int = 100
    integrator: str = "exp_midpoint"
    s_list: tuple = (2.0,)
    times: np.ndarray | None = None
    states: np.ndarray | None = None
    records: dict = field(default_factory=dict)
    accuracy_alert: bool = False

    def __post_init__(self):
        self.omega = np.asarray(self.omega, float)
        u0 = np.asarray(self.u0, complex)
        self.u0 = u0[:, None] if u0.ndim == 1 else u0
        if self.integrator not in ("exp_midpoint", "strang_split"):
            raise ValueError(f"unknown integrator {self.integrator!r}")


def sobolev_norm(model, u: np.ndarray, s: float) -> np.ndarray:
    """||u||_{H^s} = ||<k>^s u|| per column (or per leading index)."""
    w = model.bracket_k() ** s
    return np.linalg.norm(w[:, None] * u, axis=0) if u.ndim == 2 else \
        np.linalg.norm(w[None, :, None] * u, axis=1)


def random_initial(model, count: int, s: float, seed: int) -> np.ndarray:
    """Columns with ||u0||_{H^s} = 1, Gaussian coefficients damped by <k>^{-s-1}."""
    rng = np.random.default_rng(seed)
    D = model.dim
    u = (rng.standard_normal((D, count)) + 1j * rng.standard_normal((D, count)))
    u *= model.bracket_k()[:, None] ** (-s - 1.0)
    return u / sobolev_norm(model, u, s)[None, :]


def _exp_apply(H: np.ndarray, h: float, u: np.ndarray) -> np.ndarray:
    """exp(-i h H) u for Hermitian H via its eigendecomposition (lower triangle used)."""
    w, V = np.linalg.eigh(H)
    return V @ (np.exp(-1j * h * w)[:, None] * (V.conj().T @ u))


def _propagate(run: EvolutionRun, u: np.ndarray, t0: float, n_steps: int, h: float):
    """Advance u from t0 by n_steps of size h and return the final state."""
    lap = run.model.Lambda_flat.astype(float)
    D = lap.size
    flat = run.W.flat_coef().reshape(-1, D * D) * run.epsilon
    ow = run.W.modes().astype(float) @ run.omega
    half = np.exp(-0.5j * h * lap)[:, None]
    base = np.diag(lap).astype(complex) if run.integrator == "exp_midpoint" else \
        np.zeros((D, D), complex)
    for m in range(n_steps):
        tm = t0 + (m + 0.5) * h
        H = base + (np.exp(1j * ow * tm) @ flat).reshape(D, D)
        if run.integrator == "exp_midpoint":
            u = _exp_apply(H, h, u)
        else:
            u = _exp_apply(H, h, half * u)
            u = half * u
    return u


def integrate(run: EvolutionRun, check_step: bool = True, tol_step: float = 1e-6) -> EvolutionRun:
    """Fill times, states and norm records; t_max must be a multiple of h * record_every."""
    n_rec = int(round(run.t_max / (run.h * run.record_every)))
    times = np.arange(n_rec + 1) * run.h * run.record_every
    states = np.empty((n_rec + 1,) + run.u0.shape, complex)
    u = run.u0.copy()
    states[0] = u
    for r in range(n_rec):
        u = _propagate(run, u, times[r], run.record_every, run.h)
        states[r + 1] = u
    run.times, run.states = times, states
    run.records = {"t": times, "L2": sobolev_norm(run.model, states, 0.0)}
    for s in run.s_list:
        run.records[f"H{s:g}"] = sobolev_norm(run.model, states, s)
    if check_step:
        run.accuracy_alert = step_error(run) > tol_step
        if run.accuracy_alert:
            warnings.warn("halved-step comparison exceeds tolerance; reduce h", RuntimeWarning)
    return run


def step_error(run: EvolutionRun, t_check: float = 1.0) -> float:
    """Max difference at t_check between step h and step h/2 (relative to ||u0||)."""
    n = max(1, int(round(t_check / run.h)))
    a = _propagate(run, run.u0, 0.0, n, run.h)
    b = _propagate(run, run.u0, 0.0, 2 * n, run.h / 2)
    return float(np.max(np.linalg.norm(a - b, axis=0) / np.linalg.norm(run.u0, axis=0)))


def l2_drift(run: EvolutionRun) -> float:
    L2 = run.records["L2"]
    return float(np.max(np.abs(L2 - L2[0][None, :])))


def sobolev_bound_check(run: EvolutionRun, C_gate: float = 10.0, s: float = 2.0,
                        informational: bool = False, floor: float = 1e-12) -> dict:
    """Range of ||u(t)||_{H^s} / ||u0||_{H^s} against [1 - C eps, 1 + C eps].

    ``floor`` widens the gate by a roundoff allowance so that eps = 0 passes.
    """
    Hs = sobolev_norm(run.model, run.states, s)
    ratio = Hs / Hs[0][None, :]
    lo, hi = float(ratio.min()), float(ratio.max())
    gate = C_gate * run.epsilon + floor
    ok = (lo >= 1 - gate) and (hi <= 1 + gate)
    return {"min": lo, "max": hi, "gate": gate, "ok": ok,
            "informational": informational}


def conjugacy_check(run: EvolutionRun, psi: FBO, Z: FBO, psi_omega, s: float = 2.0) -> dict:
    """defect(t) = ||Psi(omega t) u(t) - exp(-it(Delta + Z)) Psi(0) u0||_{H^s} / ||u0||_{H^s}."""
    if not np.allclose(np.asarray(psi_omega, float), run.omega, rtol=0, atol=0):
        raise MismatchedOmega("transform was built for a different frequency")
    model = run.model
    H = np.diag(model.Lambda_flat).astype(complex) + Z.mean()
    w, V = np.linalg.eigh(0.5 * (H + H.conj().T))
    P0 = psi.evaluate(np.zeros(psi.d))
    v0 = V.conj().T @ (P0 @ run.u0)
    norm0 = sobolev_norm(model, run.u0, s)
    defect = np.empty((len(run.times), run.u0.shape[1]))
    for i, t in enumerate(run.times):
        Pt = psi.evaluate(run.omega * t)
        lhs = Pt @ run.states[i]
        rhs = V @ (np.exp(-1j * t * w)[:, None] * v0)
        defect[i] = sobolev_norm(model, lhs - rhs, s) / norm0
    return {"t": run.times, "defect": defect, "max": float(defect.max(initial=0.0))}


def transform_bound_check(psi: FBO, s: float, delta: float, phis: np.ndarray) -> dict:
    """Dense norms of Psi(phi) - Id in L(H^s, H^{s-delta}) and of Psi(phi) in L(H^s)."""
    model = psi.model
    wk = model.bracket_k()
    vals = psi.evaluate(np.atleast_2d(phis))
    if vals.ndim == 2:
        vals = vals[None]
    I = np.eye(model.dim)
    dist, bound, unit = [], [], []
    for P in vals:
        dist.append(np.linalg.norm((wk[:, None] ** (s - delta)) * (P - I) / wk[None, :] ** s, 2))
        bound.append(np.linalg.norm((wk[:, None] ** s) * P / wk[None, :] ** s, 2))
        unit.append(np.max(np.abs(P.conj().T @ P - I)))
    return {"sup_dist": float(max(dist)), "sup_norm": float(max(bound)),
            "unitarity_defect": float(max(unit))}
