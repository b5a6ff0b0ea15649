import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from volterrom import gpr
from volterrom.gpr import GprError, GprModel, Hyperparameters, fit, matern52_kernel, predict, rbf_kernel


def test_kernels_at_zero_distance():
    x = np.array([0.3, -1.2])
    assert rbf_kernel(x, x, 2.5, 0.7) == pytest.approx(2.5, rel=1e-15)
    assert matern52_kernel(x, x, 2.5, 0.7) == pytest.approx(2.5, rel=1e-15)


def test_kernels_at_one_length_scale():
    x, x2 = np.array([0.0, 0.0]), np.array([0.6, 0.8])
    assert rbf_kernel(x, x2, 1.0, 1.0) == pytest.approx(math.exp(-0.5), rel=1e-14)
    assert rbf_kernel(x, x2, 1.0, 1.0) == pytest.approx(0.60653, abs=1e-5)
    s5 = math.sqrt(5)
    assert matern52_kernel(x, x2, 1.0, 1.0) == pytest.approx((1 + s5 + 5 / 3) * math.exp(-s5), rel=1e-14)
    assert matern52_kernel(x, x2, 1.0, 1.0) == pytest.approx(0.52399, abs=1e-5)


def test_kernels_decay_to_zero():
    x, far = np.zeros(2), np.array([1e3, 0.0])
    assert rbf_kernel(x, far, 1.0, 1.0) == 0.0
    assert matern52_kernel(x, far, 1.0, 1.0) < 1e-300


def test_matern_monotone():
    r = np.linspace(0, 20, 2001)[:, None]
    k = matern52_kernel(np.zeros((1, 1)), r, 1.3, 0.8)[0]
    assert np.all(np.diff(k) < 0)


@given(st.integers(0, 10_000), st.integers(1, 50), st.integers(1, 4))
def test_gram_matrices_positive_definite(seed, n, d):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(n, d))
    for k in (rbf_kernel(x, x, 1.0, 0.5), matern52_kernel(x, x, 1.0, 0.5),
              gpr.covariance(x, x, Hyperparameters())):
        np.testing.assert_allclose(k, k.T, rtol=0, atol=0)
        np.linalg.cholesky(k + 1e-8 * np.eye(n))


def central_difference(f, theta, h=1e-6):
    g = np.zeros_like(theta)
    for i in range(len(theta)):
        e = np.zeros_like(theta)
        e[i] = h
        g[i] = (f(theta + e) - f(theta - e)) / (2 * h)
    return g


@pytest.mark.parametrize("seed", range(5))
def test_lml_gradient_matches_finite_differences(seed):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(12, 2))
    y = rng.normal(size=(12, 3))
    theta = np.concatenate([rng.uniform(-1, 1, 4), rng.uniform(0.2, 1.5, 2)])
    _, g = gpr.log_marginal_likelihood(x, y, theta, 1e-2, gradient=True)
    fd = central_difference(lambda t: gpr.log_marginal_likelihood(x, y, t, 1e-2), theta)
    np.testing.assert_allclose(g, fd, rtol=1e-5, atol=1e-7)


def test_lml_matches_direct_formula():
    rng = np.random.default_rng(1)
    x = rng.normal(size=(7, 2))
    y = rng.normal(size=7)
    hp = Hyperparameters(1.5, 0.8, 0.7, 1.2, 0.3, 0.9)
    k = gpr.covariance(x, x, hp) + 1e-6 * np.eye(7)
    direct = (-0.5 * y @ np.linalg.solve(k, y) - 0.5 * np.linalg.slogdet(k)[1]
              - 3.5 * math.log(2 * math.pi))
    assert gpr.log_marginal_likelihood(x, y, hp.to_vector(), 1e-6) == pytest.approx(direct, rel=1e-12)


def test_hyperparameter_vector_round_trip():
    hp = Hyperparameters(1.5, 0.8, 0.7, 1.2, 0.3, 0.9)
    back = Hyperparameters.from_vector(hp.to_vector())
    np.testing.assert_allclose(back.to_vector(), hp.to_vector(), rtol=1e-15)
    assert len(Hyperparameters.bounds()) == 6


def test_fit_improves_on_generating_hyperparameters():
    rng = np.random.default_rng(4)
    x = rng.uniform(-2, 2, size=(30, 2))
    true = Hyperparameters(1.0, 0.7, 1.0, 0.7, 0.5, 0.5)
    k = gpr.covariance(x, x, true) + 1e-8 * np.eye(30)
    y = np.linalg.cholesky(k) @ rng.normal(size=(30, 4))
    model = fit(x, y, jitter=1e-8, seed=0)
    xs, ys = model._xs, (y - model.y_mean) / model.y_scale
    # the generating hyperparameters expressed in the model's standardized units
    at_truth = gpr.log_marginal_likelihood(xs, ys, model.hyperparameters.to_vector(), model.jitter)
    assert model.log_likelihood == pytest.approx(at_truth, rel=1e-10)
    scale = model.x_std.mean()
    rescaled = Hyperparameters(1.0 / model.y_scale ** 2, 0.7 / scale, 1.0 / model.y_scale ** 2,
                               0.7 / scale, 0.5, 0.5)
    ref = gpr.log_marginal_likelihood(xs, ys, rescaled.to_vector(), model.jitter)
    assert model.log_likelihood >= ref - 1e-6 * abs(ref)


def test_single_training_point_interpolates():
    model = fit([[0.5, 2.0]], [[3.0, -1.0]], optimize=False)
    mean, var = predict(model, [0.5, 2.0])
    np.testing.assert_allclose(mean, [3.0, -1.0], rtol=1e-12)
    assert np.all(var >= 0)


def test_duplicate_inputs_with_jitter():
    x = [[0.0], [0.0], [1.0], [2.0]]
    y = [1.0, 1.2, 0.0, 3.0]
    model = fit(x, y, jitter=1e-3, n_restarts=2)
    mean, _ = predict(model, [0.0])
    assert np.all(np.isfinite(mean))
    assert 0.5 < mean[0] < 1.7


def test_interpolates_training_targets():
    rng = np.random.default_rng(0)
    x = rng.uniform(size=(20, 2))
    y = np.column_stack([np.sin(3 * x[:, 0]) + x[:, 1], x[:, 0] * x[:, 1]])
    model = fit(x, y, Hyperparameters(1.0, 0.5, 1.0, 0.5), jitter=1e-12, optimize=False)
    mean, var = predict(model, x)
    np.testing.assert_allclose(mean, y, atol=1e-6)
    assert np.max(var) < 1e-6


def test_far_field_reverts_to_prior():
    rng = np.random.default_rng(2)
    x = rng.uniform(size=(15, 2))
    y = rng.normal(size=(15, 2)) + [5.0, -3.0]
    model = fit(x, y, n_restarts=2)
    mean, var = predict(model, [1e4, -1e4])
    np.testing.assert_allclose(mean, model.y_mean, rtol=1e-12)
    np.testing.assert_allclose(var, model.hyperparameters.prior_variance * model.y_scale ** 2,
                               rtol=1e-12)


@given(st.integers(0, 1000))
def test_posterior_variance_below_prior(seed):
    rng = np.random.default_rng(seed)
    x = rng.uniform(size=(10, 2))
    model = fit(x, rng.normal(size=10), Hyperparameters(*rng.uniform(0.3, 2.0, 4)), optimize=False)
    _, var = predict(model, rng.uniform(-1, 2, size=(25, 2)))
    prior = model.hyperparameters.prior_variance * model.y_scale ** 2
    assert np.all(var >= 0) and np.all(var <= prior * (1 + 1e-12))


def test_permutation_invariance():
    rng = np.random.default_rng(3)
    x = rng.uniform(size=(12, 2))
    y = rng.normal(size=(12, 3))
    hp = Hyperparameters(1.2, 0.6, 0.8, 0.9, 0.4, 0.7)
    perm = rng.permutation(12)
    q = rng.uniform(size=(5, 2))
    m1, v1 = predict(fit(x, y, hp, optimize=False), q)
    m2, v2 = predict(fit(x[perm], y[perm], hp, optimize=False), q)
    np.testing.assert_allclose(m1, m2, rtol=1e-10, atol=1e-12)
    np.testing.assert_allclose(v1, v2, rtol=1e-8, atol=1e-12)


def test_prediction_shapes():
    model = fit(np.arange(6.0).reshape(3, 2), np.ones((3, 4)) * [1, 2, 3, 4], optimize=False)
    m, v = predict(model, [0.0, 1.0])
    assert m.shape == v.shape == (4,)
    m, v = predict(model, np.zeros((7, 2)))
    assert m.shape == v.shape == (7, 4)


@pytest.mark.parametrize("shared", [True, False])
def test_json_round_trip(shared):
    rng = np.random.default_rng(5)
    x, y = rng.uniform(size=(10, 2)), rng.normal(size=(10, 3))
    model = fit(x, y, shared=shared, n_restarts=2)
    assert model.shared is shared
    if not shared:
        assert len(model.hyperparameters) == 3
    import json
    back = GprModel.from_dict(json.loads(json.dumps(model.to_dict())))
    q = rng.uniform(size=(4, 2))
    for a, b in zip(predict(model, q), predict(back, q)):
        np.testing.assert_array_equal(a, b)


def test_per_coefficient_fit_beats_shared_likelihood():
    rng = np.random.default_rng(6)
    x = rng.uniform(size=(20, 1))
    y = np.column_stack([np.sin(2 * x[:, 0]), np.sin(25 * x[:, 0])])
    shared = fit(x, y, n_restarts=3)
    separate = fit(x, y, shared=False, n_restarts=3)
    assert separate.log_likelihood >= shared.log_likelihood - 1e-6


def test_jitter_escalates(monkeypatch):
    real = gpr._cholesky
    seen = []

    def flaky(k, jitter):
        seen.append(jitter)
        if jitter < 1e-6:
            raise np.linalg.LinAlgError("not positive definite")
        return real(k, jitter)

    monkeypatch.setattr(gpr, "_cholesky", flaky)
    model = fit([[0.0], [1.0]], [0.0, 1.0], jitter=1e-8, optimize=False)
    assert model.jitter == pytest.approx(1e-6)
    np.testing.assert_allclose(sorted(set(seen)), [1e-8, 1e-7, 1e-6])


def test_jitter_gives_up_with_diagnostics(monkeypatch):
    def broken(k, jitter):
        raise np.linalg.LinAlgError("not positive definite")

    monkeypatch.setattr(gpr, "_cholesky", broken)
    with pytest.raises(GprError, match="jitter 0.0001"):
        fit([[0.0], [1.0]], [0.0, 1.0], jitter=1e-8)


def test_mismatched_lengths_rejected():
    with pytest.raises(ValueError):
        fit([[0.0], [1.0]], [0.0])
