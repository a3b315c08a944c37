import numpy as np
import pytest

from aliashmm.decomp import (
    decompose, entry_mass, lifting, merge, projection, reconstruct, reconstruction_terms, relative_entry,
)
from aliashmm.errors import ValidationError
from aliashmm.hmm import stationary
from aliashmm.synth import random_aliased_model


def test_four_state_decomposition(model4):
    st = stationary(model4)
    d = decompose(model4.A, st.beta)
    assert np.allclose(d.A_merged, [[0.3, 0.25, 0.39266055], [0.6, 0.25, 0.10183486], [0.1, 0.5, 0.50550459]],
                       atol=1e-8)
    assert np.allclose(d.delta_out, [-0.8, 0.2, 0.6], atol=1e-15)
    assert np.allclose(d.delta_in, [-0.05091743, 0.24541284, -0.15738995], atol=1e-8)
    assert d.kappa == pytest.approx(-0.30550458715596324, abs=1e-14)
    assert np.allclose(d.alpha, [0.0, 1.0, 0.125, 0.5], atol=1e-15)


def test_projection_and_lifting_shapes():
    B, C = projection(4), lifting(4, 0.3)
    assert B.shape == (3, 4) and C.shape == (4, 3)
    assert np.allclose(B @ C, np.eye(3))


def test_merged_matrix_is_stochastic():
    rng = np.random.default_rng(0)
    for _ in range(50):
        h = random_aliased_model(5, rng)
        Am = merge(h.A, stationary(h).beta)
        assert np.allclose(Am.sum(axis=0), 1, atol=1e-14)
        assert np.all(Am >= 0)


def test_alpha_outside_support_is_zero():
    A = np.array([[0.5, 0.0, 0.2], [0.5, 0.3, 0.3], [0.0, 0.7, 0.5]])
    # column 0 never enters the aliased pair (rows 1, 2) except via 0.5 into row 1
    assert entry_mass(A)[0] == pytest.approx(0.5)
    A2 = np.array([[1.0, 0.4, 0.2], [0.0, 0.3, 0.3], [0.0, 0.3, 0.5]])
    assert relative_entry(A2)[0] == 0.0


def test_reconstruction_terms_sum():
    rng = np.random.default_rng(1)
    h = random_aliased_model(4, rng)
    d = decompose(h.A, 0.37)
    assert np.allclose(sum(reconstruction_terms(d)), h.A, atol=1e-14)


def test_reconstruct_holds_for_any_beta():
    rng = np.random.default_rng(2)
    h = random_aliased_model(6, rng, zero_frac=0.3)
    for beta in (0.0, 0.2, 0.5, 1.0):
        assert np.allclose(reconstruct(decompose(h.A, beta)), h.A, atol=1e-13)


def test_rejects_bad_inputs():
    with pytest.raises(ValidationError):
        decompose(np.eye(3), 1.5)
    with pytest.raises(ValidationError):
        decompose(np.ones((2, 3)), 0.5)


def test_equal_aliased_columns_give_zero_exit_difference():
    A = np.array([[0.2, 0.1, 0.1], [0.5, 0.4, 0.4], [0.3, 0.5, 0.5]])
    d = decompose(A, 0.4)
    assert np.allclose(d.delta_out, 0)
