import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from volterrom import _backend, fcnn
from volterrom.fcnn import (FcnnHyperparameters, FcnnModel, HyperparameterSpace, TrainingError,
                            bayesian_search, forward, predict, random_search, train)

SPACE = HyperparameterSpace()


def model_from(sizes, activation, params, d=None, q=None):
    d, q = sizes[0], sizes[-1]
    return FcnnModel(sizes, activation, params, np.zeros(d), np.ones(d), np.zeros(q), np.ones(q))


def hand_forward(params, sizes, x, activation):
    """Independent evaluation: explicit unpacking and loops over neurons."""
    off, layers = 0, []
    for nin, nout in zip(sizes[:-1], sizes[1:]):
        w = [[params[off + i * nout + j] for j in range(nout)] for i in range(nin)]
        off += nin * nout
        b = [params[off + j] for j in range(nout)]
        off += nout
        layers.append((w, b))
    slopes = params[off:]
    a = list(x)
    for l, (w, b) in enumerate(layers):
        z = [sum(a[i] * w[i][j] for i in range(len(a))) + b[j] for j in range(len(b))]
        if l == len(layers) - 1:
            a = z
        elif activation == "tanh":
            a = [math.tanh(v) for v in z]
        elif activation == "relu":
            a = [max(v, 0.0) for v in z]
        else:
            a = [v if v > 0 else slopes[l] * v for v in z]
    return a


def test_zero_network_outputs_zero():
    sizes = [3, 5, 5, 2]
    m = model_from(sizes, "tanh", np.zeros(_backend.param_count(sizes)))
    np.testing.assert_array_equal(forward(m, [1.0, -2.0, 3.0]), [0.0, 0.0])


def test_relu_affine_region():
    # one hidden layer of width 2 with identity weights, so the positive input passes through
    w1, b1 = np.eye(2).ravel(), np.zeros(2)
    w2, b2 = np.array([2.0, -1.0]), np.array([0.5])
    params = np.concatenate([w1, b1, w2, b2, [0.25]])
    m = model_from([2, 2, 1], "relu", params)
    x = np.array([0.3, 1.7])
    assert forward(m, x)[0] == pytest.approx(2 * 0.3 - 1.7 + 0.5, rel=1e-15)


@pytest.mark.parametrize("activation", ["tanh", "relu", "prelu"])
@given(seed=st.integers(0, 10_000))
def test_forward_matches_hand_evaluation(activation, seed):
    rng = np.random.default_rng(seed)
    sizes = [2, 4, 3, 2]
    params = rng.normal(size=_backend.param_count(sizes))
    params[-2:] = rng.uniform(0, 0.5, 2)
    m = model_from(sizes, activation, params)
    x = rng.normal(size=2)
    np.testing.assert_allclose(forward(m, x), hand_forward(params, sizes, x, activation),
                               rtol=1e-12, atol=1e-12)


@pytest.mark.parametrize("activation", ["tanh", "relu", "prelu"])
@pytest.mark.parametrize("kernels", [_backend.pure, _backend.compiled], ids=["python", "compiled"])
def test_backprop_matches_finite_differences(activation, kernels):
    if kernels is None:
        pytest.skip("compiled extension not built")
    rng = np.random.default_rng(7)
    sizes = [3, 5, 5, 2]
    params = rng.normal(scale=0.7, size=_backend.param_count(sizes))
    x, y = rng.normal(size=(6, 3)), rng.normal(size=(6, 2))
    code = fcnn.ACTIVATIONS[activation]
    _, g = kernels.mlp_loss_grad(params, sizes, x, y, code)
    h = 1e-6
    fd = np.empty_like(params)
    for i in range(len(params)):
        e = np.zeros_like(params)
        e[i] = h
        fd[i] = (kernels.mlp_loss_grad(params + e, sizes, x, y, code)[0]
                 - kernels.mlp_loss_grad(params - e, sizes, x, y, code)[0]) / (2 * h)
    np.testing.assert_allclose(g, fd, rtol=1e-5, atol=1e-9)


def test_predict_is_destandardized_forward():
    rng = np.random.default_rng(2)
    sizes = [2, 6, 3]
    m = FcnnModel(sizes, "tanh", rng.normal(size=_backend.param_count(sizes)),
                  np.array([1.0, -2.0]), np.array([0.5, 3.0]), np.array([0.1, 0.2, 0.3]),
                  np.array([2.0, 1.0, 4.0]))
    x = rng.normal(size=2)
    expected = forward(m, (x - m.x_mean) / m.x_std) * m.y_std + m.y_mean
    np.testing.assert_allclose(predict(m, x), expected, rtol=1e-15)


def test_zero_targets():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(20, 3))
    m = train(x[:15], np.zeros((15, 4)), x[15:], np.zeros((5, 4)), FcnnHyperparameters(),
              max_epochs=200)
    assert np.mean(predict(m, x) ** 2) < 1e-6


def _linear_data(seed=1):
    rng = np.random.default_rng(seed)
    a = rng.normal(size=(3, 2))
    x = rng.uniform(-1, 1, size=(60, 3))
    return x, x @ a


def test_linear_map_is_learned():
    x, y = _linear_data()
    hp = FcnnHyperparameters(9.6e-5, 1, 36, 1, "prelu")
    assert SPACE.contains(hp)
    m = train(x[:45], y[:45], x[45:], y[45:], hp, seed=1)
    assert m.test_mse < 1e-4
    assert np.mean((predict(m, x[45:]) - y[45:]) ** 2) < 1e-4


def test_smoothed_training_loss_decreases():
    x, y = _linear_data()
    m = train(x[:45], y[:45], x[45:], y[45:], FcnnHyperparameters(1.6e-5, 1, 36, 4, "tanh"),
              seed=0, max_epochs=400, patience=400)
    smooth = np.convolve(m.train_losses, np.ones(10) / 10, mode="valid")
    assert np.all(np.diff(smooth) <= 0)


def test_training_is_deterministic():
    x, y = _linear_data()
    hp = FcnnHyperparameters(5.1e-5, 2, 12, 3, "relu")
    a = train(x[:45], y[:45], x[45:], y[45:], hp, seed=4, max_epochs=50)
    b = train(x[:45], y[:45], x[45:], y[45:], hp, seed=4, max_epochs=50)
    np.testing.assert_array_equal(a.params, b.params)


def test_training_needs_two_rows():
    with pytest.raises(ValueError):
        train([[0.0]], [[1.0]], [], [], FcnnHyperparameters())


def test_nan_aborts_with_epoch(monkeypatch):
    real = _backend.mlp_train_epoch
    calls = []

    def poisoned(params, *args):
        calls.append(1)
        loss, step = real(params, *args)
        if len(calls) == 3:
            params[0] = np.nan
        return loss, step

    monkeypatch.setattr(fcnn._backend, "mlp_train_epoch", poisoned)
    x, y = _linear_data()
    with pytest.raises(TrainingError) as info:
        train(x[:45], y[:45], x[45:], y[45:], FcnnHyperparameters(), max_epochs=10)
    assert info.value.epoch == 3
    assert "epoch 3" in str(info.value)


def test_json_round_trip():
    x, y = _linear_data()
    m = train(x[:45], y[:45], x[45:], y[45:], FcnnHyperparameters(), max_epochs=20)
    back = FcnnModel.from_dict(json.loads(json.dumps(m.to_dict())))
    np.testing.assert_array_equal(predict(back, x), predict(m, x))
    assert back.sizes == m.sizes and back.activation == m.activation


def test_grid_values():
    assert SPACE.learning_rates[0] == 1e-6 and SPACE.learning_rates[-1] == pytest.approx(9.6e-5)
    assert len(SPACE.learning_rates) == 20
    assert SPACE.hidden_layers == tuple(range(1, 9))
    assert SPACE.neurons[0] == 4 and SPACE.neurons[-1] == 204 and len(SPACE.neurons) == 26
    assert SPACE.batch_sizes == tuple(range(1, 9))
    assert SPACE.size == 20 * 8 * 26 * 8 * 3
    assert not SPACE.contains(FcnnHyperparameters(neurons=5))


@given(st.lists(st.floats(0, 1, exclude_max=True), min_size=5, max_size=5))
def test_unit_points_map_onto_grid(u):
    idx = SPACE.from_unit(u)
    assert SPACE.index_of(SPACE.decode(idx)) == idx


def test_encoding_shape_and_range():
    enc = SPACE.encode(SPACE.all_indices()[::997])
    assert enc.shape[1] == 7
    assert enc.min() == 0.0 and enc.max() == 1.0


def bowl(target):
    """Deterministic objective with its minimum at the grid point ``target``."""
    t = SPACE.encode([target])[0]

    def objective(hp, seed):
        return 1e-3 + float(np.sum((SPACE.encode([SPACE.index_of(hp)])[0] - t) ** 2))
    return objective


def test_single_trial():
    calls = []
    res = bayesian_search(SPACE, lambda hp, s: calls.append(hp) or 1.0, trials=1, seed=3)
    assert len(calls) == 1 and res.best == calls[0] and res.best_score == 1.0


def test_search_is_deterministic_and_on_grid():
    obj = bowl((10, 3, 12, 4, 1))
    a = bayesian_search(SPACE, obj, trials=12, seed=5)
    b = bayesian_search(SPACE, obj, trials=12, seed=5)
    assert a.history() == b.history()
    assert all(SPACE.contains(t.hyperparameters) for t in a.trials)
    idx = [SPACE.index_of(t.hyperparameters) for t in a.trials]
    assert len(set(idx)) == len(idx)


def test_parallel_initial_design_matches_serial():
    obj = bowl((3, 5, 20, 2, 0))
    serial = bayesian_search(SPACE, obj, trials=8, seed=2, n_jobs=1)
    parallel = bayesian_search(SPACE, obj, trials=8, seed=2, n_jobs=4)
    assert serial.history() == parallel.history()


def test_bayesian_beats_random_in_aggregate():
    rng = np.random.default_rng(0)
    bo, rs = [], []
    for seed in range(10):
        target = tuple(int(rng.integers(n)) for n in SPACE.shape)
        obj = bowl(target)
        bo.append(bayesian_search(SPACE, obj, trials=30, seed=seed).best_score)
        rs.append(random_search(SPACE, obj, trials=30, seed=seed).best_score)
    assert sum(bo) <= sum(rs)


def test_failed_trials_score_infinity():
    def objective(hp, seed):
        if hp.activation == "relu":
            raise TrainingError(3)
        return float("nan") if hp.activation == "prelu" else 1.0

    res = bayesian_search(SPACE, objective, trials=10, seed=1)
    scores = {t.hyperparameters.activation: t.score for t in res.trials}
    assert scores.get("relu", math.inf) == math.inf
    assert scores.get("prelu", math.inf) == math.inf
    assert res.best_score in (1.0, math.inf)


def test_artifact_of_best_trial_is_kept():
    res = bayesian_search(SPACE, lambda hp, s: (hp.neurons, f"net-{hp.neurons}"), trials=6, seed=0)
    assert res.artifact == f"net-{res.best.neurons}"


def test_trial_seeds_are_distinct():
    assert len({fcnn.trial_seed(0, k) for k in range(100)}) == 100


def test_expected_improvement():
    ei = fcnn.expected_improvement(np.array([0.0, 1.0, 2.0]), np.array([1.0, 1.0, 1e-20]), 1.0, 0.0)
    assert ei[0] > ei[1] > 0 and ei[2] == pytest.approx(0.0, abs=1e-300)


def test_rejects_bad_hyperparameters():
    with pytest.raises(ValueError):
        FcnnHyperparameters(activation="sigmoid")
    with pytest.raises(ValueError):
        FcnnHyperparameters(batch_size=0)
    with pytest.raises(ValueError):
        bayesian_search(SPACE, lambda hp, s: 0.0, trials=0)
