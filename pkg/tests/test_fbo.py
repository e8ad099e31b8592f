import numpy as np
import pytest
from hypothesis import given, strategies as st
from numpy.testing import assert_allclose

from zollkam.errors import (AliasingError, DivisorViolation, InverseDefect, ModelMismatch,
                            NonHermitian, NonzeroMean, OutOfLattice, ShapeMismatch)
from zollkam.fbo import (FBO, StateVector, apply_state, conjugate_quasienergy, exp_map,
                         fbo_commutator, fbo_mul, grid_points, omega_dphi_apply,
                         omega_dphi_invert, quasienergy_dense, random_fbo, to_dense)
from zollkam.spectral import build_circle, build_sphere

from oracles import (conjugated_pointwise, evaluate, flatten, naive_product, product_via_dense,
                     quasienergy_flat, rel)

CIRCLE = build_circle(4)
SPHERE = build_sphere(3)


def rand(model, d, n, seed, decay=1.0, herm=True, zero_mean=False):
    return random_fbo(model, d, n, np.random.default_rng(seed), decay, herm, zero_mean)


# arithmetic ------------------------------------------------------------------

def test_add_zero_and_adjoint_involution():
    for seed in range(20):
        a = rand(SPHERE, 2, 1, seed, herm=False)
        assert np.array_equal((a + FBO.zeros(SPHERE, 2, 1)).coef, a.coef)
        assert np.array_equal(a.adjoint().adjoint().coef, a.coef)
        assert a.hermitian_part().is_hermitian()


def test_adjoint_block_placement():
    a = FBO.zeros(CIRCLE, 1, 2, hermitian=False)
    b = np.array([[1 + 2j, 3j]])
    a = a.with_block((2,), 0, 1, b)
    adj = a.adjoint()
    assert_allclose(adj.get_block((-2,), 1, 0), b.conj().T)


def test_model_mismatch():
    with pytest.raises(ModelMismatch):
        FBO.zeros(CIRCLE, 1) + FBO.zeros(SPHERE, 1)
    with pytest.raises(ModelMismatch):
        FBO.zeros(CIRCLE, 1) + FBO.zeros(CIRCLE, 2)


def test_index_errors():
    a = FBO.zeros(CIRCLE, 1, 1)
    with pytest.raises(OutOfLattice):
        a.get_block((2,), 0, 0)
    with pytest.raises(OutOfLattice):
        a.get_block((0,), 0, 9)
    with pytest.raises(ShapeMismatch):
        a.with_block((0,), 1, 1, np.eye(3))


# products --------------------------------------------------------------------

def test_identity_product():
    a = rand(SPHERE, 2, 2, 1, herm=False)
    out = fbo_mul(FBO.identity(SPHERE, 2), a, n_out=2)
    assert_allclose(out.coef, a.coef, atol=1e-13)


def test_diagonal_product():
    x, y = np.arange(SPHERE.dim) + 1.0, np.linspace(-1, 1, SPHERE.dim)
    out = fbo_mul(FBO.diagonal(SPHERE, 1, x), FBO.diagonal(SPHERE, 1, y))
    assert_allclose(out.mean(), np.diag(x * y), atol=1e-14)


@pytest.mark.parametrize("d,n", [(1, 2), (2, 1)])
def test_product_matches_dense_oracle(d, n):
    model = build_circle(4)
    a = rand(model, d, n, 3, herm=False)
    b = rand(model, d, n, 4, herm=False)
    out = fbo_mul(a, b, n_out=2 * n)
    ref = product_via_dense(a, b, 2 * n)
    for l, blk in ref.items():
        assert rel(out.coef[tuple(x + 2 * n for x in l)], blk) < 1e-12 or np.abs(blk).max() < 1e-14


def test_product_matches_naive_convolution_truncated():
    a = rand(SPHERE, 1, 3, 5, herm=False)
    b = rand(SPHERE, 1, 2, 6, herm=False)
    out = fbo_mul(a, b, n_out=2)
    for l, blk in naive_product(a, b, 2).items():
        assert_allclose(out.coef[l[0] + 2], blk, atol=1e-12)


def test_commutator_properties():
    a = rand(SPHERE, 1, 2, 7, herm=False)
    assert fbo_commutator(a, a).max_abs() < 1e-12
    lam = SPHERE.lam[SPHERE.cluster_of]
    D = FBO.diagonal(SPHERE, 1, lam)
    c = fbo_commutator(D, a)
    assert_allclose(c.coef, a.coef * (lam[:, None] - lam[None, :]), atol=1e-12)


def test_apply_state_cases():
    rng = np.random.default_rng(0)
    z = StateVector(SPHERE, 1, 2, rng.standard_normal((5, SPHERE.dim)) + 0j)
    assert_allclose(apply_state(FBO.identity(SPHERE, 1), z).coef, z.coef, atol=1e-14)
    B = rand(SPHERE, 1, 0, 1, herm=False)
    assert_allclose(apply_state(B, z).coef, z.coef @ B.mean().T, atol=1e-13)
    a = rand(SPHERE, 1, 2, 2, herm=False)
    ref = flatten(a, 2) @ z.coef.ravel()
    assert rel(apply_state(a, z).coef.ravel(), ref) < 1e-12


@given(st.integers(0, 10_000))
def test_associativity(seed):
    a, b, c = (rand(CIRCLE, 1, 1, seed + i, herm=False) for i in range(3))
    left = fbo_mul(fbo_mul(a, b, n_out=2), c, n_out=3)
    right = fbo_mul(a, fbo_mul(b, c, n_out=2), n_out=3)
    assert rel(left.coef, right.coef) < 1e-10


@given(st.integers(0, 10_000))
def test_adjoint_of_product(seed):
    a, b = rand(CIRCLE, 2, 1, seed, herm=False), rand(CIRCLE, 2, 1, seed + 1, herm=False)
    lhs = fbo_mul(a, b, n_out=2).adjoint()
    rhs = fbo_mul(b.adjoint(), a.adjoint(), n_out=2)
    assert rel(lhs.coef, rhs.coef) < 1e-12


# derivative ------------------------------------------------------------------

def test_dphi_apply_and_invert():
    a = rand(CIRCLE, 1, 0, 1)
    assert omega_dphi_apply(a, [1.3]).max_abs() == 0.0
    b = rand(CIRCLE, 2, 2, 2, zero_mean=True)
    om = np.array([0.83, 1.27])
    back = omega_dphi_invert(omega_dphi_apply(b, om), om)
    assert_allclose(back.coef, b.coef, atol=1e-12)


def test_dphi_invert_scalar():
    a = FBO.zeros(CIRCLE, 1, 2, hermitian=False).with_block((2,), 0, 0, np.ones((1, 1)))
    out = omega_dphi_invert(a, [1.3])
    assert_allclose(out.get_block((2,), 0, 0), [[1 / 2.6j]])


def test_dphi_invert_errors():
    a = rand(CIRCLE, 1, 2, 3)
    with pytest.raises(NonzeroMean):
        omega_dphi_invert(a, [1.3])
    b = rand(CIRCLE, 2, 2, 3, zero_mean=True)
    with pytest.raises(DivisorViolation) as exc:
        omega_dphi_invert(b, [1.0, 1.0 + 1e-6], gamma=0.01, tau=3)
    assert exc.value.l is not None


# exponential -----------------------------------------------------------------

def test_exp_zero_is_identity():
    out = exp_map(FBO.zeros(SPHERE, 2, 1), n_out=1)
    assert_allclose(out.mean(), np.eye(SPHERE.dim), atol=1e-15)
    assert out.is_phi_independent()


def test_exp_phi_independent_matches_eigh():
    s = rand(SPHERE, 1, 0, 4)
    w, V = np.linalg.eigh(s.mean())
    ref = V @ np.diag(np.exp(1j * w)) @ V.conj().T
    assert_allclose(exp_map(s).mean(), ref, atol=1e-13)


def test_exp_pointwise_and_unitarity():
    s = rand(CIRCLE, 2, 1, 5, decay=2.0).scale(0.2)
    e = exp_map(s, n_out=10)
    for phi in np.random.default_rng(1).uniform(0, 2 * np.pi, (5, 2)):
        import scipy.linalg as sla
        assert rel(e.evaluate(phi), sla.expm(1j * evaluate(s, phi))) < 1e-10
    z = np.random.default_rng(2).standard_normal(CIRCLE.dim)
    for phi in grid_points(2, 6):
        assert_allclose(np.linalg.norm(e.evaluate(phi) @ z), np.linalg.norm(z), rtol=1e-10)


def test_exp_refuses_non_hermitian_and_aliasing():
    s = rand(CIRCLE, 1, 2, 6, herm=False)
    with pytest.raises(NonHermitian):
        exp_map(s)
    with pytest.raises(AliasingError):
        exp_map(rand(CIRCLE, 1, 2, 6), phi_grid_size=3)


# conjugation -----------------------------------------------------------------

def test_conjugate_identity_and_commuting():
    m = FBO.laplacian(SPHERE, 1) + rand(SPHERE, 1, 1, 1).scale(0.1)
    I = FBO.identity(SPHERE, 1, 1)
    out = conjugate_quasienergy(I, I, m, [1.1])
    assert_allclose(out.m.coef, m.coef, atol=1e-13)
    lap = FBO.laplacian(SPHERE, 1)
    mask = SPHERE.cluster_of[:, None] == SPHERE.cluster_of[None, :]
    s = FBO(SPHERE, 1, 0, rand(SPHERE, 1, 0, 2).coef * mask, True)
    out = conjugate_quasienergy(exp_map(s), exp_map(s, sign=-1), lap, [1.1])
    assert_allclose(out.m.coef, lap.coef, atol=1e-12)


def test_conjugate_matches_pointwise_oracle():
    model = build_circle(3)
    om = np.array([0.81, 1.23])
    s = rand(model, 2, 1, 8, decay=2.0).scale(0.1)
    m = FBO.laplacian(model, 2, 1) + rand(model, 2, 1, 9).scale(0.3)
    n = 10
    out = conjugate_quasienergy(exp_map(s, n_out=n), exp_map(s, n_out=n, sign=-1), m, om,
                                n_out=n)
    for phi in np.random.default_rng(3).uniform(0, 2 * np.pi, (4, 2)):
        assert rel(out.m.evaluate(phi), conjugated_pointwise(s, m, om, phi)) < 1e-10


def test_conjugate_inverse_defect():
    s = rand(CIRCLE, 1, 1, 1).scale(0.5)
    with pytest.raises(InverseDefect):
        conjugate_quasienergy(exp_map(s), exp_map(s), FBO.laplacian(CIRCLE, 1), [1.0])


def _central_eigs(H, model, d, L, inner):
    """Eigenvalues whose eigenvectors carry weight > 1 - 1e-3 on |l|_inf <= inner."""
    from oracles import modes
    w, V = np.linalg.eigh(H)
    keep = np.array([max(abs(x) for x in l) <= inner for l in modes(d, L)])
    mask = np.repeat(keep, model.dim)
    weight = np.sum(np.abs(V[mask]) ** 2, axis=0)
    return w[weight > 1 - 1e-3]


def test_conjugation_preserves_quasienergies():
    model = build_circle(3)
    om = np.array([0.77, 1.31])
    s = rand(model, 2, 1, 10, decay=3.0).scale(0.02)
    m = FBO.laplacian(model, 2, 1) + rand(model, 2, 1, 11, decay=3.0).scale(0.02)
    out = conjugate_quasienergy(exp_map(s, n_out=4), exp_map(s, n_out=4, sign=-1), m, om, n_out=4)
    L = 6
    e0 = _central_eigs(quasienergy_flat(m, om, L), model, 2, L, 1)
    e1 = np.linalg.eigvalsh(quasienergy_flat(out.m, om, L))
    assert len(e0) > 0
    assert max(np.min(np.abs(e1 - x)) for x in e0) < 1e-6


def test_dense_helpers_agree_with_oracle():
    m = rand(CIRCLE, 2, 1, 12)
    assert_allclose(to_dense(m, 2), flatten(m, 2), atol=0)
    assert_allclose(quasienergy_dense(m, [0.9, 1.1], 2), quasienergy_flat(m, [0.9, 1.1], 2),
                    atol=1e-15)
