"""Fourier-block operators: phi-dependent operators in the cluster basis.

An FBO stores the coefficients A(l)_{[k]}^{[k']} of

    A(phi) = sum_l A(l) exp(i l.phi),   |l|_inf <= n_max,

as a dense array of shape (2n+1,)*d + (D, D), where D is the total spatial
dimension of the truncated model. Zero blocks stand for absent keys. Products
are evaluated as exact convolutions through an alias-free FFT grid.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Iterator

import numpy as np
import scipy.fft as sfft
import scipy.linalg as sla

from .errors import (AliasingError, DivisorViolation, InverseDefect, ModelMismatch,
                     NonHermitian, NonzeroMean, OutOfLattice, ShapeMismatch)
from .spectral import SpectralModel

TOL_HERM = 1e-9
TOL_UNIT = 1e-10


def lattice(d: int, n: int) -> np.ndarray:
    """All l with |l|_inf <= n, in the C order used by coefficient arrays."""
    if d == 0:
        return np.zeros((1, 0), dtype=int)
    axes = np.meshgrid(*([np.arange(-n, n + 1)] * d), indexing="ij")
    return np.stack([a.ravel() for a in axes], axis=1)


def _lat_shape(d, n):
    return (2 * n + 1,) * d


class FBO:
    """Immutable-by-convention Fourier-block operator."""

    __slots__ = ("model", "d", "n_max", "coef", "hermitian")

    def __init__(self, model: SpectralModel, d: int, n_max: int, coef: np.ndarray,
                 hermitian: bool = False):
        D = model.dim
        shape = _lat_shape(d, n_max) + (D, D)
        coef = np.asarray(coef, dtype=complex)
        if coef.shape != shape:
            raise ShapeMismatch(f"coefficient array has shape {coef.shape}, expected {shape}")
        self.model = model
        self.d = int(d)
        self.n_max = int(n_max)
        self.coef = coef
        self.hermitian = bool(hermitian)

    # constructors
    @classmethod
    def zeros(cls, model, d, n_max=0, hermitian=True):
        D = model.dim
        return cls(model, d, n_max, np.zeros(_lat_shape(d, n_max) + (D, D), complex), hermitian)

    @classmethod
    def from_matrix(cls, model, d, mat, n_max=0, hermitian=None):
        """phi-independent operator from a D x D matrix."""
        mat = np.asarray(mat, dtype=complex)
        out = cls.zeros(model, d, n_max, hermitian=False)
        out.coef[(n_max,) * d] = mat
        if hermitian is None:
            hermitian = bool(np.allclose(mat, mat.conj().T, atol=1e-14, rtol=0))
        out.hermitian = hermitian
        return out

    @classmethod
    def identity(cls, model, d, n_max=0):
        return cls.from_matrix(model, d, np.eye(model.dim), n_max, hermitian=True)

    @classmethod
    def diagonal(cls, model, d, values, n_max=0):
        values = np.asarray(values)
        return cls.from_matrix(model, d, np.diag(values), n_max,
                               hermitian=bool(np.all(np.isreal(values))))

    @classmethod
    def laplacian(cls, model, d, n_max=0):
        return cls.diagonal(model, d, model.Lambda_flat.astype(complex), n_max)

    @classmethod
    def from_blocks(cls, model, d, n_max, blocks: dict, hermitian=False):
        out = cls.zeros(model, d, n_max, hermitian=False)
        for (l, k, kp), b in blocks.items():
            out.coef[out._lidx(l)][model.block_slice(k), model.block_slice(kp)] = \
                _check_block(model, k, kp, b)
        out.hermitian = hermitian
        return out

    # indexing
    @property
    def shape_l(self):
        return _lat_shape(self.d, self.n_max)

    def _lidx(self, l):
        l = tuple(int(x) for x in l)
        if len(l) != self.d:
            raise OutOfLattice(f"mode {l} has wrong length for d={self.d}")
        if any(abs(x) > self.n_max for x in l):
            raise OutOfLattice(f"mode {l} outside |l|_inf <= {self.n_max}")
        return tuple(x + self.n_max for x in l)

    def get_block(self, l, k, kp) -> np.ndarray:
        m = self.model
        if not (0 <= k <= m.k_max and 0 <= kp <= m.k_max):
            raise OutOfLattice(f"cluster pair ({k},{kp}) outside 0..{m.k_max}")
        return self.coef[self._lidx(l)][m.block_slice(k), m.block_slice(kp)].copy()

    def with_block(self, l, k, kp, block, hermitian=False) -> "FBO":
        out = self.copy()
        out.coef[out._lidx(l)][self.model.block_slice(k), self.model.block_slice(kp)] = \
            _check_block(self.model, k, kp, block)
        out.hermitian = hermitian
        return out

    def modes(self) -> np.ndarray:
        return lattice(self.d, self.n_max)

    def blocks(self, tol: float = 0.0) -> Iterator[tuple[tuple, int, int, np.ndarray]]:
        """Yield (l, k, k', block) for every block with max-abs entry > tol."""
        m = self.model
        flat = self.coef.reshape((-1, m.dim, m.dim))
        for li, l in enumerate(self.modes()):
            A = flat[li]
            if not np.any(np.abs(A) > tol):
                continue
            for k in range(m.n_clusters):
                for kp in range(m.n_clusters):
                    b = A[m.block_slice(k), m.block_slice(kp)]
                    if np.any(np.abs(b) > tol):
                        yield tuple(int(x) for x in l), k, kp, b

    def mean(self) -> np.ndarray:
        """The l = 0 coefficient."""
        return self.coef[(self.n_max,) * self.d].copy()

    def flat_coef(self) -> np.ndarray:
        return self.coef.reshape((-1, self.model.dim, self.model.dim))

    # arithmetic
    def copy(self) -> "FBO":
        return FBO(self.model, self.d, self.n_max, self.coef.copy(), self.hermitian)

    def resize(self, n_new: int) -> "FBO":
        """Zero-pad or truncate the Fourier lattice to |l|_inf <= n_new."""
        if n_new == self.n_max:
            return self.copy()
        out = FBO.zeros(self.model, self.d, n_new, hermitian=self.hermitian)
        c = min(n_new, self.n_max)
        src = tuple(slice(self.n_max - c, self.n_max + c + 1) for _ in range(self.d))
        dst = tuple(slice(n_new - c, n_new + c + 1) for _ in range(self.d))
        out.coef[dst] = self.coef[src]
        return out

    def _compatible(self, other: "FBO"):
        if not isinstance(other, FBO):
            raise TypeError("operand is not an FBO")
        if other.model is not self.model and other.model.header() != self.model.header():
            raise ModelMismatch("operands live on different spectral models")
        if other.d != self.d:
            raise ModelMismatch(f"frequency dimensions differ: {self.d} vs {other.d}")

    def __add__(self, other: "FBO") -> "FBO":
        self._compatible(other)
        n = max(self.n_max, other.n_max)
        a, b = self.resize(n), other.resize(n)
        return FBO(self.model, self.d, n, a.coef + b.coef, self.hermitian and other.hermitian)

    def __sub__(self, other: "FBO") -> "FBO":
        return self + other.scale(-1.0)

    def __neg__(self) -> "FBO":
        return self.scale(-1.0)

    def scale(self, c) -> "FBO":
        herm = self.hermitian and bool(np.isreal(c))
        return FBO(self.model, self.d, self.n_max, self.coef * c, herm)

    def __mul__(self, c):
        return self.scale(c)

    __rmul__ = __mul__

    def __matmul__(self, other: "FBO") -> "FBO":
        return fbo_mul(self, other)

    def adjoint(self) -> "FBO":
        """A^dagger: block(l,k,k') -> conj transpose placed at (-l,k',k)."""
        flipped = np.flip(self.coef, axis=tuple(range(self.d))) if self.d else self.coef
        return FBO(self.model, self.d, self.n_max, np.conj(np.swapaxes(flipped, -1, -2)),
                   self.hermitian)

    def hermitian_part(self) -> "FBO":
        return FBO(self.model, self.d, self.n_max, 0.5 * (self.coef + self.adjoint().coef), True)

    def hermitian_defect(self) -> float:
        """max-abs entry of A - A^dagger."""
        return float(np.max(np.abs(self.coef - self.adjoint().coef), initial=0.0))

    def max_abs(self) -> float:
        return float(np.max(np.abs(self.coef), initial=0.0))

    def is_hermitian(self, tol: float = TOL_HERM) -> bool:
        return self.hermitian_defect() <= tol * max(1.0, self.max_abs())

    def is_phi_independent(self, tol: float = 0.0) -> bool:
        c = self.flat_coef().copy()
        c[len(c) // 2] = 0
        return not np.any(np.abs(c) > tol)

    def evaluate(self, phi) -> np.ndarray:
        """A(phi) by direct Fourier summation, phi of shape (d,) or (P, d)."""
        phi = np.atleast_2d(np.asarray(phi, float))
        ph = np.exp(1j * phi @ self.modes().T)
        out = np.tensordot(ph, self.flat_coef(), axes=(1, 0))
        return out[0] if out.shape[0] == 1 else out

    def __repr__(self):
        return (f"FBO(kind={self.model.kind}, k_max={self.model.k_max}, d={self.d}, "
                f"n_max={self.n_max}, hermitian={self.hermitian})")


def _check_block(model, k, kp, b):
    b = np.asarray(b, dtype=complex)
    want = (int(model.dims[k]), int(model.dims[kp]))
    if b.shape != want:
        raise ShapeMismatch(f"block ({k},{kp}) has shape {b.shape}, expected {want}")
    return b


class StateVector:
    """Coefficients z_{[k]}(l) of a phi-dependent state, shape (2n+1,)*d + (D,)."""

    __slots__ = ("model", "d", "n_max", "coef")

    def __init__(self, model: SpectralModel, d: int, n_max: int, coef: np.ndarray):
        shape = _lat_shape(d, n_max) + (model.dim,)
        coef = np.asarray(coef, dtype=complex)
        if coef.shape != shape:
            raise ShapeMismatch(f"state array has shape {coef.shape}, expected {shape}")
        self.model, self.d, self.n_max, self.coef = model, int(d), int(n_max), coef

    @classmethod
    def zeros(cls, model, d, n_max):
        return cls(model, d, n_max, np.zeros(_lat_shape(d, n_max) + (model.dim,), complex))

    def modes(self):
        return lattice(self.d, self.n_max)

    def flat_coef(self):
        return self.coef.reshape((-1, self.model.dim))

    def h_sr(self, s: float, r: float) -> float:
        """sum_l <l>^{2r} sum_k <k>^{2s} |z_k(l)|^2, square-rooted."""
        wl = np.sqrt(1.0 + np.sum(self.modes() ** 2, axis=1)) ** r
        wk = self.model.bracket_k() ** s
        return float(np.linalg.norm((wl[:, None] * wk[None, :]) * self.flat_coef()))

    def ell_p(self, p: float) -> float:
        """sum_{l,k} <l,k>^{2p} |z_k(l)|^2, square-rooted."""
        l2 = np.sum(self.modes() ** 2, axis=1)
        k2 = self.model.cluster_of.astype(float) ** 2
        w = np.sqrt(1.0 + l2[:, None] + k2[None, :]) ** p
        return float(np.linalg.norm(w * self.flat_coef()))


# FFT machinery -------------------------------------------------------------

def _grid_size(*need: int) -> int:
    return sfft.next_fast_len(max(1, *need))


def to_grid(coef: np.ndarray, d: int, n: int, G: int) -> np.ndarray:
    """Values sum_l c(l) e^{i l.phi_g} at phi_g = 2 pi g / G (shape (G,)*d + tail)."""
    if G < 2 * n + 1:
        raise AliasingError(f"grid of {G} points cannot hold |l| <= {n}")
    tail = coef.shape[d:]
    buf = np.zeros((G,) * d + tail, dtype=complex)
    buf[tuple(slice(0, 2 * n + 1) for _ in range(d))] = coef
    buf = np.roll(buf, shift=(-n,) * d, axis=tuple(range(d)))
    return sfft.ifftn(buf, axes=tuple(range(d)), norm="forward", workers=-1)


def from_grid(vals: np.ndarray, d: int, G: int, n_out: int) -> np.ndarray:
    """Fourier coefficients |l| <= n_out of grid samples (inverse of to_grid)."""
    if G < 2 * n_out + 1:
        raise AliasingError(f"grid of {G} points cannot resolve |l| <= {n_out}")
    c = sfft.fftn(vals, axes=tuple(range(d)), norm="forward", workers=-1)
    c = np.roll(c, shift=(n_out,) * d, axis=tuple(range(d)))
    return c[tuple(slice(0, 2 * n_out + 1) for _ in range(d))]


def grid_points(d: int, G: int) -> np.ndarray:
    """Collocation angles in the order of to_grid output, shape (G**d, d)."""
    g = 2 * np.pi * np.arange(G) / G
    axes = np.meshgrid(*([g] * d), indexing="ij")
    return np.stack([a.ravel() for a in axes], axis=1)


def fbo_mul(a: FBO, b: FBO, n_out: int | None = None) -> FBO:
    """Convolution product (ab)(l) = sum_p a(l-p) b(p), truncated to |l|_inf <= n_out."""
    a._compatible(b)
    if n_out is None:
        n_out = max(a.n_max, b.n_max)
    d = a.d
    if d == 0 or (a.n_max == 0 and b.n_max == 0):
        out = FBO.zeros(a.model, d, n_out, hermitian=False)
        out.coef[(n_out,) * d] = a.mean() @ b.mean()
        return out
    G = _grid_size(a.n_max + b.n_max + n_out + 1, 2 * max(a.n_max, b.n_max, n_out) + 1)
    va = to_grid(a.coef, d, a.n_max, G)
    vb = to_grid(b.coef, d, b.n_max, G)
    vc = np.matmul(va, vb)
    return FBO(a.model, d, n_out, from_grid(vc, d, G, n_out), False)


def fbo_commutator(a: FBO, b: FBO, n_out: int | None = None) -> FBO:
    """[a, b] = ab - ba on a shared grid."""
    a._compatible(b)
    if n_out is None:
        n_out = max(a.n_max, b.n_max)
    d = a.d
    if d == 0 or (a.n_max == 0 and b.n_max == 0):
        out = FBO.zeros(a.model, d, n_out, hermitian=False)
        A, B = a.mean(), b.mean()
        out.coef[(n_out,) * d] = A @ B - B @ A
        return out
    G = _grid_size(a.n_max + b.n_max + n_out + 1, 2 * max(a.n_max, b.n_max, n_out) + 1)
    va = to_grid(a.coef, d, a.n_max, G)
    vb = to_grid(b.coef, d, b.n_max, G)
    vc = np.matmul(va, vb) - np.matmul(vb, va)
    # the commutator of Hermitian operators is anti-Hermitian
    return FBO(a.model, d, n_out, from_grid(vc, d, G, n_out), False)


def apply_state(a: FBO, z: StateVector) -> StateVector:
    """(Az)(l) = sum_p A(l-p) z(p), truncated to the lattice of z."""
    if a.model.header() != z.model.header() or a.d != z.d:
        raise ModelMismatch("operator and state live on different models")
    d, n = a.d, z.n_max
    if d == 0:
        return StateVector(z.model, d, n, a.mean() @ z.coef)
    G = _grid_size(a.n_max + 2 * n + 1, 2 * max(a.n_max, n) + 1)
    va = to_grid(a.coef, d, a.n_max, G)
    vz = to_grid(z.coef, d, n, G)
    vc = np.einsum("...ij,...j->...i", va, vz)
    return StateVector(z.model, d, n, from_grid(vc, d, G, n))


# phi-derivative --------------------------------------------------------------

def _omega_l(shape_l, d, n, omega) -> np.ndarray:
    omega = np.asarray(omega, float)
    if omega.shape != (d,):
        raise ModelMismatch(f"frequency vector of length {omega.size} for d={d}")
    return (lattice(d, n) @ omega).reshape(shape_l)


def omega_dphi_apply(a, omega):
    """omega.d_phi: multiplies coefficient l by i omega.l (FBO or StateVector)."""
    w = 1j * _omega_l(a.coef.shape[:a.d], a.d, a.n_max, omega)
    w = w.reshape(w.shape + (1,) * (a.coef.ndim - a.d))
    if isinstance(a, StateVector):
        return StateVector(a.model, a.d, a.n_max, a.coef * w)
    return FBO(a.model, a.d, a.n_max, a.coef * w, a.hermitian)


def diophantine_violation(omega, d: int, n: int, gamma: float, tau: float):
    """First l (0 < |l|_inf <= n) with |omega.l| < 4 gamma / |l|_inf^tau, else None."""
    modes = lattice(d, n)
    ol = np.abs(modes @ np.asarray(omega, float))
    norm = np.max(np.abs(modes), axis=1)
    bad = (norm > 0) & (ol * np.maximum(norm, 1) ** tau < 4 * gamma)
    if np.any(bad):
        return tuple(int(x) for x in modes[np.argmax(bad)])
    return None


def omega_dphi_invert(a, omega, gamma: float | None = None, tau: float | None = None,
                      tol_mean: float = 0.0):
    """(omega.d_phi)^{-1} on zero-mean families: divides coefficient l != 0 by i omega.l."""
    d, n = a.d, a.n_max
    c0 = a.coef[(n,) * d]
    if np.max(np.abs(c0), initial=0.0) > tol_mean:
        raise NonzeroMean(f"phi-mean has max-abs entry {np.max(np.abs(c0)):.3e}")
    if gamma is not None and gamma > 0:
        bad = diophantine_violation(omega, d, n, gamma, d + 1 if tau is None else tau)
        if bad is not None:
            raise DivisorViolation(f"small divisor omega.l at l={bad}", bad)
    ol = _omega_l(a.coef.shape[:d], d, n, omega)
    tail = (1,) * (a.coef.ndim - d)
    nz = np.abs(a.coef).reshape(a.coef.shape[:d] + (-1,)).max(axis=-1) > 0
    zero_div = (ol == 0) & nz
    zero_div[(n,) * d] = False
    if np.any(zero_div):
        l = lattice(d, n)[np.argmax(zero_div.ravel())]
        raise DivisorViolation(f"omega.l = 0 at l={tuple(l)}", l)
    with np.errstate(divide="ignore", invalid="ignore"):
        w = np.where(ol == 0, 0.0, 1.0 / (1j * np.where(ol == 0, 1.0, ol)))
    w[(n,) * d] = 0.0
    coef = a.coef * w.reshape(w.shape + tail)
    if isinstance(a, StateVector):
        return StateVector(a.model, d, n, coef)
    return FBO(a.model, d, n, coef, a.hermitian)


# exponentials and conjugation ------------------------------------------------

def _polar_unitary(X: np.ndarray) -> np.ndarray:
    U, _, Vh = np.linalg.svd(X)
    return U @ Vh


def exp_map(s: FBO, phi_grid_size: int | None = None, n_out: int | None = None,
            tol_unit: float = TOL_UNIT, sign: float = 1.0) -> FBO:
    """Fourier coefficients of Phi(phi) = exp(i*sign*S(phi)) for Hermitian S.

    S is evaluated on a collocation grid, each point is exponentiated by
    scaling and squaring (scipy expm) followed by a polar unitarity cleanup,
    and the grid values are transformed back to |l|_inf <= n_out.
    """
    if not s.hermitian:
        raise NonHermitian("generator is not flagged Hermitian", s.hermitian_defect())
    defect = s.hermitian_defect()
    if defect > TOL_HERM * max(1.0, s.max_abs()):
        raise NonHermitian(f"generator Hermitian defect {defect:.3e}", defect)
    if n_out is None:
        n_out = s.n_max
    d = s.d
    need = 2 * max(s.n_max, n_out) + 1
    if phi_grid_size is None:
        phi_grid_size = _grid_size(2 * (s.n_max + n_out) + 1, need)
    G = int(phi_grid_size)
    if d > 0 and G < 2 * s.n_max + 1:
        raise AliasingError(f"phi grid of {G} points below 2*n_max+1 = {2 * s.n_max + 1}")
    if d == 0 or (s.n_max == 0):
        X = _polar_unitary(sla.expm(1j * sign * s.mean()))
        out = FBO.zeros(s.model, d, n_out, hermitian=False)
        out.coef[(n_out,) * d] = X
        _check_unitary(X[None], tol_unit)
        return out
    G = max(G, 2 * n_out + 1)
    vals = to_grid(s.coef, d, s.n_max, G)
    vals = 0.5 * (vals + np.conj(np.swapaxes(vals, -1, -2)))
    flat = vals.reshape((-1,) + vals.shape[-2:])
    X = _polar_unitary(sla.expm(1j * sign * flat))
    _check_unitary(X, tol_unit)
    coef = from_grid(X.reshape(vals.shape), d, G, n_out)
    return FBO(s.model, d, n_out, coef, False)


def _check_unitary(X, tol):
    D = X.shape[-1]
    err = np.max(np.abs(np.matmul(np.conj(np.swapaxes(X, -1, -2)), X) - np.eye(D)))
    if err > tol:
        raise NonHermitian(f"exponential not unitary to {tol:.1e}: defect {err:.3e}", err)


@dataclass
class ConjugationResult:
    m: FBO
    herm_defect: float
    inv_defect: float


def conjugate_quasienergy(phi: FBO, phi_inv: FBO, m: FBO, omega, n_out: int | None = None,
                          tol_inv: float = 1e-6, tol_herm: float = TOL_HERM,
                          with_time: bool = True) -> ConjugationResult:
    """M+ with i M+ = Phi (i M) Phi^{-1} + Phi (omega.d_phi Phi^{-1}).

    The result is re-symmetrized to (A + A^dagger)/2; the removed defect is
    reported relative to max(1, max|M+|). ``with_time=False`` drops the
    derivative term (plain similarity transform).
    """
    if n_out is None:
        n_out = m.n_max
    ident = fbo_mul(phi, phi_inv, n_out=0).mean()
    inv_defect = float(np.max(np.abs(ident - np.eye(m.model.dim))))
    if inv_defect > tol_inv:
        raise InverseDefect(f"Phi Phi^-1 differs from Id by {inv_defect:.3e}", inv_defect)
    left = fbo_mul(phi, m, n_out=phi.n_max + m.n_max)
    total = fbo_mul(left, phi_inv, n_out=n_out)
    if with_time:
        dinv = omega_dphi_apply(phi_inv, omega)
        total = total + fbo_mul(phi, dinv, n_out=n_out).scale(-1j)
    raw = total
    sym = raw.hermitian_part()
    defect = float(np.max(np.abs(raw.coef - sym.coef), initial=0.0)) / max(1.0, sym.max_abs())
    if m.hermitian and defect > tol_herm:
        raise NonHermitian(f"conjugated operator Hermitian defect {defect:.3e}", defect)
    if not m.hermitian:
        sym = raw
    return ConjugationResult(sym, defect, inv_defect)


# dense lattice realizations --------------------------------------------------

def to_dense(a: FBO, n_lattice: int | None = None) -> np.ndarray:
    """Matrix of the multiplication operator on the (l, k) lattice |l|_inf <= n_lattice."""
    if n_lattice is None:
        n_lattice = a.n_max
    modes = lattice(a.d, n_lattice)
    D = a.model.dim
    L = len(modes)
    out = np.zeros((L * D, L * D), complex)
    flat = a.flat_coef()
    stride = (2 * a.n_max + 1) ** np.arange(a.d - 1, -1, -1)
    for i, l in enumerate(modes):
        diff = l[None, :] - modes
        ok = np.all(np.abs(diff) <= a.n_max, axis=1)
        idx = (diff[ok] + a.n_max) @ stride
        for j, q in zip(np.nonzero(ok)[0], idx):
            out[i * D:(i + 1) * D, j * D:(j + 1) * D] = flat[q]
    return out


def quasienergy_dense(m: FBO, omega, n_lattice: int | None = None) -> np.ndarray:
    """Hermitian matrix of -i omega.d_phi + M on the truncated lattice."""
    if n_lattice is None:
        n_lattice = m.n_max
    modes = lattice(m.d, n_lattice)
    ol = modes @ np.asarray(omega, float)
    H = to_dense(m, n_lattice)
    H[np.diag_indices_from(H)] += np.repeat(ol, m.model.dim)
    return H


def random_fbo(model: SpectralModel, d: int, n_max: int, rng: np.random.Generator,
               decay: float = 1.0, hermitian: bool = True, zero_mean: bool = False) -> FBO:
    """Gaussian blocks damped by <l, k-k'>^{-decay}; Hermitian part if requested."""
    D = model.dim
    shape = _lat_shape(d, n_max) + (D, D)
    c = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    l2 = np.sum(lattice(d, n_max) ** 2, axis=1).reshape(_lat_shape(d, n_max))
    h = np.abs(model.cluster_of[:, None] - model.cluster_of[None, :])
    w = np.sqrt(1.0 + l2[..., None, None] + h ** 2) ** (-decay)
    out = FBO(model, d, n_max, c * w, False)
    if zero_mean:
        out.coef[(n_max,) * d] = 0
    return out.hermitian_part() if hermitian else out


def block_identity_projection(model: SpectralModel) -> np.ndarray:
    """Mask (D x D) of entries inside diagonal cluster blocks."""
    c = model.cluster_of
    return c[:, None] == c[None, :]


def iter_modes(d, n):
    return itertools.product(range(-n, n + 1), repeat=d)
