"""Independent reference computations used by the tests (no FFT, no package algebra)."""
import itertools

import numpy as np
import scipy.linalg as sla


def modes(d, n):
    return list(itertools.product(range(-n, n + 1), repeat=d))


def coef_at(a, l):
    """Coefficient A(l) read straight from the storage array (zero outside the lattice)."""
    if any(abs(x) > a.n_max for x in l):
        return np.zeros((a.model.dim, a.model.dim), complex)
    return a.coef[tuple(x + a.n_max for x in l)]


def flatten(a, L):
    """Matrix of phi-multiplication by A on the (l, k) lattice |l|_inf <= L."""
    ms = modes(a.d, L)
    D = a.model.dim
    out = np.zeros((len(ms) * D, len(ms) * D), complex)
    for i, l in enumerate(ms):
        for j, p in enumerate(ms):
            out[i * D:(i + 1) * D, j * D:(j + 1) * D] = coef_at(a, tuple(x - y for x, y in zip(l, p)))
    return out


def product_via_dense(a, b, n_out):
    """(ab)(l) read from column l=0 of the flattened product on a large lattice."""
    L = a.n_max + b.n_max + n_out
    ms = modes(a.d, L)
    D = a.model.dim
    P = flatten(a, L) @ flatten(b, L)
    j0 = ms.index((0,) * a.d)
    out = {}
    for l in modes(a.d, n_out):
        i = ms.index(l)
        out[l] = P[i * D:(i + 1) * D, j0 * D:(j0 + 1) * D]
    return out


def naive_product(a, b, n_out):
    out = {}
    for l in modes(a.d, n_out):
        acc = 0
        for p in modes(a.d, b.n_max):
            acc = acc + coef_at(a, tuple(x - y for x, y in zip(l, p))) @ coef_at(b, p)
        out[l] = acc
    return out


def evaluate(a, phi):
    acc = np.zeros((a.model.dim, a.model.dim), complex)
    for l in modes(a.d, a.n_max):
        acc += coef_at(a, l) * np.exp(1j * np.dot(l, phi))
    return acc


def evaluate_dphi(a, omega, phi):
    """(omega.d_phi A)(phi) by termwise differentiation."""
    acc = np.zeros((a.model.dim, a.model.dim), complex)
    for l in modes(a.d, a.n_max):
        acc += 1j * np.dot(omega, l) * coef_at(a, l) * np.exp(1j * np.dot(l, phi))
    return acc


def conjugated_pointwise(S, M, omega, phi):
    """Phi M Phi^-1 - i Phi (omega.d_phi Phi^-1) at phi, Phi = expm(iS(phi))."""
    s = evaluate(S, phi)
    ds = evaluate_dphi(S, omega, phi)
    P = sla.expm(1j * s)
    Pinv, dPinv = sla.expm_frechet(-1j * s, -1j * ds)
    return P @ evaluate(M, phi) @ Pinv - 1j * P @ dPinv


def quasienergy_flat(m, omega, L):
    ms = modes(m.d, L)
    H = flatten(m, L)
    D = m.model.dim
    H[np.diag_indices_from(H)] += np.repeat([np.dot(omega, l) for l in ms], D)
    return H


def rel(a, b):
    a, b = np.asarray(a), np.asarray(b)
    return float(np.max(np.abs(a - b)) / max(np.max(np.abs(b)), 1e-300))
