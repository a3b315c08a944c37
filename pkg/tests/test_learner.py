import numpy as np
import pytest

from aliashmm.decomp import decompose
from aliashmm.errors import DegenerateMomentError, SequenceTooShortError, ValidationError
from aliashmm.hmm import simulate, stationary
from aliashmm.learner import (
    _objective, assemble, detect, estimate_gamma_beta, estimate_kappa, identify_component, learn,
    learn_from_moments, project_stochastic,
)
from aliashmm.moments import MomentSet, kernel, population_moments
from conftest import err_up_to_swap, golden_min


def _fake_moments(dM2, dM3=None, T=1000):
    m = dM2.shape[0]
    z2 = np.zeros((m, m))
    z3 = np.zeros((m, m, m))
    return MomentSet(np.zeros((3, m, m)), z3, np.zeros((3, m, m)), z3, dM2,
                     z2 if dM3 is None else dM3, z3, "empirical", T)


def test_detect_zero_matrix():
    det = detect(_fake_moments(np.zeros((3, 3))), T=500)
    assert not det.aliased and det.sigma_hat == 0.0
    assert np.linalg.norm(det.u_hat) == pytest.approx(1) and np.linalg.norm(det.v_hat) == pytest.approx(1)


def test_detect_threshold_rule():
    dM2 = np.zeros((3, 3))
    dM2[0, 1] = 0.3
    assert detect(_fake_moments(dM2), T=1000).aliased            # 2 * 1000^-1/3 = 0.2
    assert not detect(_fake_moments(dM2), T=100).aliased         # 0.43
    from aliashmm.learner import threshold

    dM2[0, 1] = threshold(1000, 3.0)
    det = detect(_fake_moments(dM2), T=1000, c_h=3.0)
    assert det.sigma_hat == det.threshold and det.aliased   # boundary is inclusive
    assert abs(np.linalg.norm(det.u_hat) - 1) < 1e-12


def test_identify_population(model4):
    ms = population_moments(model4)
    comp, scores, tied = identify_component(ms, kernel(model4.unique_emissions))
    assert comp == 2 and scores[2] < 1e-28 and not tied


def test_kappa_examples(model4):
    rng = np.random.default_rng(0)
    X = rng.normal(size=(3, 3))
    assert estimate_kappa(_fake_moments(X, 0.7 * X)) == pytest.approx(0.7, abs=1e-14)
    Y = rng.normal(size=(3, 3))
    Y -= np.sum(X * Y) / np.sum(X * X) * X
    assert estimate_kappa(_fake_moments(X, Y)) == pytest.approx(0.0, abs=1e-14)
    st = stationary(model4)
    kap = estimate_kappa(population_moments(model4))
    assert kap == pytest.approx(decompose(model4.A, st.beta).kappa, abs=1e-10)
    with pytest.raises(DegenerateMomentError):
        estimate_kappa(_fake_moments(np.zeros((3, 3))))


def test_kappa_is_least_squares_minimiser():
    rng = np.random.default_rng(1)
    for _ in range(10):
        X, Y = rng.normal(size=(2, 4, 4))
        Xl, Yl = X.astype(np.longdouble), Y.astype(np.longdouble)
        r = golden_min(lambda r: np.sum((Yl - np.longdouble(r) * Xl) ** 2), -10, 10)
        assert estimate_kappa(_fake_moments(X, Y)) == pytest.approx(r, abs=1e-8)


def _population_inputs(h):
    ms = population_moments(h)
    U, s, Vt = np.linalg.svd(ms.dM2)
    return ms, s[0], U[:, 0], Vt[0], estimate_kappa(ms)


def test_gamma_beta_population(model4):
    st = stationary(model4)
    d = decompose(model4.A, st.beta)
    ms, sig, u, v, kap = _population_inputs(model4)
    fit = estimate_gamma_beta(ms.M1, kap, sig, u, v)
    gam = np.linalg.norm(d.delta_out)
    assert fit.gamma == pytest.approx(gam, abs=1e-3)
    assert min(abs(fit.beta - st.beta), abs(fit.beta - (1 - st.beta))) < 1e-3
    assert fit.objective >= -1e-12
    assert 0 < fit.gamma <= 2 / sig


def test_objective_non_negative_at_truth(model4):
    st = stationary(model4)
    d = decompose(model4.A, st.beta)
    ms, sig, u, v, kap = _population_inputs(model4)
    gam = np.linalg.norm(d.delta_out)
    sign = np.sign(u @ d.delta_out)
    val = _objective(gam, st.beta, ms.M1, sign * u, sign * v, kap, sig)
    assert val >= -1e-12


def test_gamma_beta_sign_invariance(model4):
    ms, sig, u, v, kap = _population_inputs(model4)
    a = estimate_gamma_beta(ms.M1, kap, sig, u, v)
    b = estimate_gamma_beta(ms.M1, kap, sig, -u, -v)
    assert a.gamma == pytest.approx(b.gamma, abs=1e-12) and a.beta == pytest.approx(b.beta, abs=1e-12)


def test_gamma_beta_rejects_zero_sigma(model4):
    with pytest.raises(DegenerateMomentError):
        estimate_gamma_beta(np.eye(3), 0.0, 0.0, np.ones(3), np.ones(3))


def test_assemble_exact_components(model4):
    st = stationary(model4)
    d = decompose(model4.A, st.beta)
    gam = np.linalg.norm(d.delta_out)
    sig = gam * np.linalg.norm(d.delta_in)
    A_hat, mass = assemble(d.A_merged, gam, st.beta, d.kappa, sig, d.delta_out / gam,
                           d.delta_in / np.linalg.norm(d.delta_in))
    assert np.allclose(A_hat, model4.A, atol=1e-10) and mass == 0.0
    with pytest.raises(ValidationError):
        assemble(d.A_merged, 0.0, st.beta, d.kappa, sig, d.delta_out, d.delta_in)


def test_projection_clips_and_normalises():
    X = np.array([[0.5, 0.3], [0.5 + 1e-6, 0.7], [-1e-6, 0.0]])
    P, mass = project_stochastic(X)
    assert mass == pytest.approx(1e-6)
    assert np.all(P >= 0) and np.allclose(P.sum(axis=0), 1, atol=1e-15)
    assert P[2, 0] == 0.0


def test_learn_population_end_to_end(model4):
    ms = population_moments(model4)
    rep = learn_from_moments(ms, kernel(model4.unique_emissions), T=10 ** 6)
    assert rep.branch == "aliased" and rep.aliased_component == 2
    assert np.max(np.abs(rep.A_hat - model4.A)) < 1e-8
    assert rep.beta_hat == pytest.approx(stationary(model4).beta, abs=1e-8)


def test_learn_permutes_identified_component(model4):
    ms = population_moments(model4).permuted([2, 0, 1])
    k = kernel(model4.unique_emissions).permuted([2, 0, 1])
    rep = learn_from_moments(ms, k, T=10 ** 6)
    assert rep.aliased_component == 0
    assert rep.state_components == (1, 2, 0, 0)
    assert err_up_to_swap(rep.A_hat, model4.A) < 1e-8


def test_learn_non_aliased_branch(merged4):
    _, y = simulate(merged4, 100000, seed=3)
    rep = learn(y, merged4.emissions, stationary(merged4).pi_merged)
    assert rep.branch == "non-aliased"
    assert np.linalg.norm(rep.A_hat - merged4.A) < 0.05
    assert np.allclose(rep.A_hat.sum(axis=0), 1, atol=1e-12)


def test_learn_aliased_report_complete(model4):
    _, y = simulate(model4, 100000, seed=4)
    rep = learn(y, model4.unique_emissions, stationary(model4).pi_merged)
    d = rep.to_dict()
    assert rep.branch == "aliased"
    for key in ("kappa_hat", "gamma_hat", "beta_hat", "objective", "aliased_component"):
        assert d[key] is not None
    assert np.allclose(rep.A_hat.sum(axis=0), 1, atol=1e-12) and np.all(rep.A_hat >= 0)
    assert 0 < rep.gamma_hat <= 2 / rep.detection.sigma_hat
    assert 0 <= rep.beta_hat <= 1


def test_learn_estimates_weights_when_missing(model4):
    _, y = simulate(model4, 20000, seed=5)
    rep = learn(y, model4.unique_emissions)
    assert rep.A_hat.shape == (4, 4)


def test_learn_too_short(model4):
    with pytest.raises(SequenceTooShortError):
        learn([0.1, 0.2, 0.3], model4.unique_emissions, [0.3, 0.3, 0.4])


def test_learn_rejects_bad_branch(model4):
    with pytest.raises(ValidationError):
        learn_from_moments(population_moments(model4), kernel(model4.unique_emissions), T=10, branch="x")
