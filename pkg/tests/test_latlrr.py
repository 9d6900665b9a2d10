import numpy as np
import pytest
from hypothesis import example, given, settings, strategies as st

from lrdtm.latlrr import (LatLrrModel, SolverOptions, latlrr_fit, lrr_fit, principal_features,
                          salient_features)
from lrdtm.linalg import nuclear_norm


def constraint_residual(x, m):
    return np.linalg.norm(x - x @ m.z - m.l @ x - m.e) / max(np.linalg.norm(x), 1.0)


def rank2(rng, m=20, n=40):
    return rng.standard_normal((m, 2)) @ rng.standard_normal((2, n))


def test_zero_data():
    m = latlrr_fit(np.zeros((10, 20)), 1.0, 1.0)
    assert m.converged
    assert not m.z.any() and not m.l.any() and not m.e.any()
    assert m.residual == 0.0


def test_heavy_l1_penalty_removes_noise(rng):
    x = rank2(rng)
    m = latlrr_fit(x, 1.0, 1000.0)
    assert m.converged
    assert np.abs(m.e).sum() / np.abs(x).sum() <= 1e-3
    assert constraint_residual(x, m) <= 1e-6


def f1(pred, truth):
    tp = np.sum(pred & truth)
    if tp == 0:
        return 0.0
    prec, rec = tp / pred.sum(), tp / truth.sum()
    return 2 * prec * rec / (prec + rec)


def test_planted_spike_recovery():
    rng = np.random.default_rng(3)
    clean = rank2(rng)
    mask = rng.random(clean.shape) < 0.05
    magnitude = 5.0
    x = clean + mask * rng.choice([-1.0, 1.0], size=clean.shape) * magnitude
    scores = {}
    for lam2 in 10.0 ** np.arange(-3, 1):
        m = latlrr_fit(x, 1.0, lam2)
        scores[lam2] = f1(np.abs(m.e) > 0.25 * magnitude, mask)
    assert max(scores.values()) >= 0.8, scores


def test_lrr_self_representation(rng):
    x = rng.standard_normal((8, 6))
    r = lrr_fit(x, x, lam=1e3, opts=SolverOptions(tol=1e-10, max_iter=1000))
    assert r.converged
    assert nuclear_norm(r.z) <= x.shape[1] * (1 + 1e-8)
    assert np.linalg.norm(x - x @ r.z - r.e) / np.linalg.norm(x) <= 1e-6
    assert np.abs(r.e).sum() <= 1e-6 * np.abs(x).sum()


def test_lrr_zero():
    r = lrr_fit(np.zeros((5, 7)))
    assert not r.z.any() and not r.e.any()


def test_lrr_block_diagonal_dominance(rng):
    b1 = np.linalg.qr(rng.standard_normal((30, 2)))[0]
    b2 = np.linalg.qr(rng.standard_normal((30, 2)))[0]
    x = np.hstack([b1 @ rng.standard_normal((2, 15)), b2 @ rng.standard_normal((2, 15))])
    z = np.abs(lrr_fit(x, x, lam=1.0).z)
    within = np.r_[z[:15, :15].ravel(), z[15:, 15:].ravel()].mean()
    cross = np.r_[z[:15, 15:].ravel(), z[15:, :15].ravel()].mean()
    assert within >= 2 * cross


def test_lrr_dictionary_shape_check():
    with pytest.raises(ValueError):
        lrr_fit(np.ones((3, 4)), np.ones((2, 4)))


def _model(z, l):
    return LatLrrModel(z, l, np.zeros((l.shape[0], z.shape[0])), 1.0, 1.0)


def test_feature_maps(rng):
    x = rng.standard_normal((4, 6))
    assert np.array_equal(principal_features(_model(np.eye(6), np.eye(4)), x), x)
    assert not principal_features(_model(np.zeros((6, 6)), np.eye(4)), x).any()
    assert np.array_equal(salient_features(_model(np.eye(6), np.eye(4)), x), x)
    assert not salient_features(_model(np.eye(6), np.zeros((4, 4))), x).any()
    z, l = rng.standard_normal((6, 6)), rng.standard_normal((4, 4))
    m = _model(z, l)
    assert np.max(np.abs(principal_features(m, x) - np.einsum("ik,kj->ij", x, z))) <= 1e-12
    assert np.max(np.abs(salient_features(m, x) - np.einsum("ik,kj->ij", l, x))) <= 1e-12
    with pytest.raises(ValueError):
        principal_features(m, x.T)
    with pytest.raises(ValueError):
        salient_features(m, x.T)


@pytest.mark.parametrize("bad", [dict(tol=0), dict(max_iter=0), dict(rho=1.0), dict(mu0=1e11)])
def test_solver_options_validation(bad):
    with pytest.raises(ValueError):
        SolverOptions(**bad)


def test_rejects_bad_input():
    with pytest.raises(ValueError):
        latlrr_fit(np.ones((2, 2)), 0.0, 1.0)
    with pytest.raises(ValueError):
        latlrr_fit(np.array([[np.inf, 1.0]]))


def test_nonconverged_flag(rng):
    m = latlrr_fit(rng.standard_normal((6, 8)), 1.0, 0.1, SolverOptions(max_iter=3))
    assert not m.converged and m.iterations == 3 and m.residual > 1e-6


@settings(max_examples=15)
@given(st.integers(2, 12), st.integers(2, 15), st.sampled_from([0.1, 1.0, 10.0]),
       st.sampled_from([0.05, 0.5, 5.0]), st.integers(0, 2**32 - 1))
@example(2, 10, 1.0, 0.05, 188)
def test_properties(m, n, lam1, lam2, seed):
    x = np.random.default_rng(seed).standard_normal((m, n))
    model = latlrr_fit(x, lam1, lam2)
    assert model.converged
    assert constraint_residual(x, model) <= 1e-6
    # no worse than the trivial feasible point Z = 0, L = 0, E = X, up to the
    # slack an approximately feasible iterate can have; a slow mu schedule,
    # since fast growth can freeze the iterate slightly off the optimum
    tight = latlrr_fit(x, lam1, lam2, SolverOptions(tol=1e-10, max_iter=5000, rho=1.05))
    assert tight.objective() <= lam2 * np.abs(x).sum() * (1 + 1e-6)
    mus = [h.mu for h in model.history]
    assert all(b >= a for a, b in zip(mus, mus[1:])) and max(mus) <= SolverOptions().mu_max
    res = [h.constraint_residual for h in model.history]
    assert res[-1] == min(res[-5:])
    scaled = latlrr_fit(7.5 * x, lam1, lam2)
    assert scaled.converged and constraint_residual(7.5 * x, scaled) <= 1e-6


def test_mu_cap():
    x = np.random.default_rng(1).standard_normal((5, 5))
    m = latlrr_fit(x, 1.0, 0.1, SolverOptions(mu_max=0.05, max_iter=40))
    assert max(h.mu for h in m.history) == 0.05
