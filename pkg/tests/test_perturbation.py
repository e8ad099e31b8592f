import numpy as np
import pytest
from hypothesis import given, strategies as st
from numpy.testing import assert_allclose

from zollkam.norms import beta_decay
from zollkam.perturbation import PerturbationSpec, generate_perturbation
from zollkam.regularizer import estimate_order
from zollkam.spectral import build_circle, build_sphere

SPHERE = build_sphere(8)


def test_deterministic_per_seed():
    a = generate_perturbation(SPHERE, 2, 2, PerturbationSpec(seed=4))
    b = generate_perturbation(SPHERE, 2, 2, PerturbationSpec(seed=4))
    c = generate_perturbation(SPHERE, 2, 2, PerturbationSpec(seed=5))
    assert np.array_equal(a.coef, b.coef)
    assert not np.array_equal(a.coef, c.coef)


@given(st.integers(0, 1000), st.sampled_from([0.0, 0.25, 0.5]))
def test_hermitian_and_normalized(seed, delta):
    w = generate_perturbation(build_circle(6), 1, 2, PerturbationSpec(delta=delta, seed=seed))
    assert w.hermitian_defect() < 1e-14
    assert_allclose(beta_decay(w, -delta, 0.0), 1.0, rtol=1e-12)


def test_infinite_decay_gives_constant_block_diagonal():
    spec = PerturbationSpec(delta=0.0, sigma_l=np.inf, sigma_k=np.inf, seed=1)
    w = generate_perturbation(SPHERE, 2, 2, spec)
    assert w.is_phi_independent()
    c = SPHERE.cluster_of
    assert np.all(w.mean()[c[:, None] != c[None, :]] == 0)


def test_magnitude_scaling():
    a = generate_perturbation(SPHERE, 1, 1, PerturbationSpec(seed=2))
    b = generate_perturbation(SPHERE, 1, 1, PerturbationSpec(seed=2, magnitude=3.0))
    assert_allclose(b.coef, 3.0 * a.coef, rtol=1e-13)


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_fitted_order_near_delta(seed):
    w = generate_perturbation(SPHERE, 2, 2, PerturbationSpec(delta=0.5, seed=seed))
    assert 0.4 <= estimate_order(w) <= 0.6
