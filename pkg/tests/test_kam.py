import numpy as np
import pytest
from numpy.testing import assert_allclose

from zollkam import kam
from zollkam.config import parse_config
from zollkam.errors import ExcisionRequired, NonHermitian, OracleCapExceeded
from zollkam.fbo import FBO, random_fbo
from zollkam.pipeline import build_model, build_perturbation, reduce_frequency
from zollkam.spectral import build_circle, build_synthetic

CIRCLE = build_circle(4)
OMEGA1 = np.array([np.sqrt(2)])


def config(d=1, gamma=1e-3, **kw):
    return kam.KamConfig(d=d, n=1, gamma=gamma, **kw)


def block_diag_z(model, seed, scale=0.1):
    rng = np.random.default_rng(seed)
    g = rng.standard_normal((model.dim, model.dim)) + 1j * rng.standard_normal((model.dim, model.dim))
    c = model.cluster_of
    m = np.where(c[:, None] == c[None, :], g + g.conj().T, 0) * scale
    return FBO.from_matrix(model, 1, m, hermitian=True)


def test_block_eigen_examples():
    mu, U = kam.block_eigen([np.array([[2.0]]), np.array([[1.0, 1.0], [1.0, 1.0]])])
    assert_allclose(mu[0], [2.0])
    assert_allclose(mu[1], [0.0, 2.0], atol=1e-15)
    assert_allclose(U[1].conj().T @ U[1], np.eye(2), atol=1e-15)
    with pytest.raises(NonHermitian):
        kam.block_eigen([np.array([[0.0, 1.0], [0.0, 0.0]])])


def test_scalar_homological_example():
    model = build_synthetic(1, 0.0, 1, lambda k: 1, 0.0, seed=0)
    # Lambda = (0, 1); Z shifts cluster 1 by 2 so that mu_1 - mu_0 = 3
    Z = FBO.from_matrix(model, 1, np.diag([0.0, 2.0]).astype(complex), hermitian=True)
    R = FBO.zeros(model, 1, 1, hermitian=False)
    R = R.with_block((1,), 1, 0, np.array([[1.0]])).with_block((-1,), 0, 1, np.array([[1.0]]))
    sol = kam.homological_solve(R, Z, [1.3], 1e-3, 1.0, config())
    assert_allclose(sol.S.get_block((1,), 1, 0), [[-1j / 4.3]], rtol=1e-15)
    assert_allclose(sol.S.get_block((-1,), 0, 1), [[1j / 4.3]], rtol=1e-15)


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_homological_residual(seed):
    R = random_fbo(CIRCLE, 1, 2, np.random.default_rng(seed), 1.0, True).scale(1e-3)
    Z = block_diag_z(CIRCLE, seed + 10)
    cfg = config()
    sol = kam.homological_solve(R, Z, OMEGA1, cfg.gamma, 2.0, cfg)
    assert kam.homological_residual(sol, R, Z, OMEGA1, cfg.s) <= 1e-9
    assert sol.S.hermitian_defect() < 1e-14


def test_homological_excision_witness():
    model = build_synthetic(1, 0.0, 1, lambda k: 1, 0.0, seed=0)
    Z = FBO.zeros(model, 1, 0)
    R = FBO.zeros(model, 1, 1, hermitian=False)
    R = R.with_block((1,), 0, 1, np.array([[1.0]])).with_block((-1,), 1, 0, np.array([[1.0]]))
    # omega.l + mu_0 - mu_1 = 1 - 1 = 0
    with pytest.raises(ExcisionRequired) as exc:
        kam.homological_solve(R, Z, [1.0], 0.1, 1.0, config(gamma=0.1))
    assert exc.value.where[1:3] in ((0, 1), (1, 0))


def test_zero_remainder_returns_immediately():
    st = kam.initial_state(block_diag_z(CIRCLE, 3), FBO.zeros(CIRCLE, 1, 2), OMEGA1)
    r = kam.iterate(st, config())
    assert r.converged and r.state.nu == 0 and r.ratios == []


def test_block_diagonal_remainder_one_step():
    Z = block_diag_z(CIRCLE, 4)
    R = block_diag_z(CIRCLE, 5, scale=1e-3)
    r = kam.iterate(kam.initial_state(Z, R, OMEGA1), config())
    assert r.converged and r.state.nu == 1
    assert_allclose(r.state.Z.mean(), (Z + R).mean(), atol=1e-15)


def test_unperturbed_oracle():
    lap = FBO.laplacian(CIRCLE, 1, 1)
    E = kam.floquet_oracle(lap, OMEGA1, n_lattice=2)
    ref = np.sort((CIRCLE.Lambda_flat[None, :] + OMEGA1[0] * np.arange(-2, 3)[:, None]).ravel())
    assert_allclose(E, ref, atol=1e-13)
    mt = kam.match_quasienergies(CIRCLE.Lambda_flat, E, OMEGA1)
    assert mt["max_dist"] < 1e-13
    with pytest.raises(OracleCapExceeded):
        kam.floquet_oracle(lap, OMEGA1, n_lattice=2, cap=10)


def test_matching_flags_shifted_value():
    mt = kam.match_quasienergies([0.0, 0.3], [0.0, 1.0, 2.0], [1.0], l_range=1)
    assert_allclose(mt["dist"], [0.0, 0.3])
    # 0.3 lands on 0.0, which is closer to the lift of mu = 0
    assert mt["mutual"].tolist() == [True, False]
    mt = kam.match_quasienergies([0.0, 0.01], [0.0, 5.0], [10.0], l_range=0)
    assert not mt["all_mutual"]


def test_lipschitz_examples():
    same = [([1.0, 1.0], [np.array([0.5]), np.array([1.0, 2.0])]),
            ([1.2, 1.0], [np.array([0.5]), np.array([1.0, 2.0])])]
    assert kam.eigen_lipschitz_check(same, 0.0)["max"] == 0.0
    moved = [([1.0], [np.array([0.0]), np.array([1.0])]),
             ([1.5], [np.array([0.0]), np.array([1.1])])]
    r = kam.eigen_lipschitz_check(moved, 1.0, gate=0.25)
    assert_allclose(r["per_cluster"], [0.0, np.sqrt(2) * 0.2])
    assert not r["ok"]
    assert kam.eigen_lipschitz_check(moved[:1], 1.0)["warning"]


def test_small_instance_matches_oracle():
    cfg = parse_config("[model]\nk_max = 5\n[frequency]\nd = 1\nn_max = 3\nepsilon = 1e-3\n"
                       "[kam]\nn_psi = 6\n")
    model = build_model(cfg)
    W = build_perturbation(model, cfg)
    omega = np.array([np.sqrt(2) - 0.3])
    red = reduce_frequency(model, W, omega, cfg)
    assert red.result.converged
    assert all(b <= a for a, b in zip(red.result.ratios, red.result.ratios[1:]))
    M = FBO.laplacian(model, 1, W.n_max) + W.scale(cfg.frequency.epsilon)
    E = kam.floquet_oracle(M, omega, n_lattice=8)
    mt = kam.match_quasienergies(kam.flat_mu(red.result.state), E, omega)
    assert mt["max_dist"] <= 1e-7 and mt["all_mutual"]
