"""Fully connected regressor for kernel coefficients and its hyperparameter search.

Networks are trained with Adam on the mean squared error of standardized
targets, with early stopping on a held-out subset. The numerical work happens
in :mod:`volterrom._backend` (compiled when available).
"""

from __future__ import annotations

import itertools
import logging
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.stats import norm, qmc

from . import _backend, gpr

log = logging.getLogger(__name__)

ACTIVATIONS = {"tanh": _backend.TANH, "relu": _backend.RELU, "prelu": _backend.PRELU}
PRELU_INIT = 0.25


class TrainingError(RuntimeError):
    def __init__(self, epoch: int, message: str = ""):
        super().__init__(message or f"non-finite loss at epoch {epoch}")
        self.epoch = epoch


@dataclass(frozen=True)
class FcnnHyperparameters:
    learning_rate: float = 5.1e-5
    hidden_layers: int = 2
    neurons: int = 36
    batch_size: int = 4
    activation: str = "tanh"

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.hidden_layers < 1 or self.neurons < 1 or self.batch_size < 1:
            raise ValueError("layers, neurons and batch size must be positive")
        if not self.learning_rate > 0:
            raise ValueError("learning rate must be positive")


def _lr_grid():
    return tuple(round(1e-6 + 5e-6 * k, 12) for k in range(20))


@dataclass(frozen=True)
class HyperparameterSpace:
    """Discrete search grid; every value is an exact grid member."""

    learning_rates: tuple = field(default_factory=_lr_grid)
    hidden_layers: tuple = tuple(range(1, 9))
    neurons: tuple = tuple(range(4, 205, 8))
    batch_sizes: tuple = tuple(range(1, 9))
    activations: tuple = ("tanh", "relu", "prelu")

    @property
    def axes(self):
        return (self.learning_rates, self.hidden_layers, self.neurons,
                self.batch_sizes, self.activations)

    @property
    def shape(self):
        return tuple(len(a) for a in self.axes)

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    def decode(self, index) -> FcnnHyperparameters:
        vals = [axis[int(i)] for axis, i in zip(self.axes, index)]
        return FcnnHyperparameters(*vals)

    def index_of(self, hp: FcnnHyperparameters) -> tuple:
        vals = (hp.learning_rate, hp.hidden_layers, hp.neurons, hp.batch_size, hp.activation)
        return tuple(axis.index(v) for axis, v in zip(self.axes, vals))

    def contains(self, hp: FcnnHyperparameters) -> bool:
        try:
            self.index_of(hp)
        except ValueError:
            return False
        return True

    def from_unit(self, u) -> tuple:
        """Map a point of the unit cube to a grid index."""
        return tuple(min(int(x * n), n - 1) for x, n in zip(u, self.shape))

    def encode(self, indices) -> np.ndarray:
        """Ordinal axes scaled to [0, 1]; activation one-hot."""
        idx = np.atleast_2d(np.asarray(indices))
        cols = [idx[:, k] / max(n - 1, 1) for k, n in enumerate(self.shape[:4])]
        onehot = np.eye(self.shape[4])[idx[:, 4]]
        return np.column_stack(cols + [onehot])

    def all_indices(self) -> np.ndarray:
        return np.array(list(itertools.product(*(range(n) for n in self.shape))))


@dataclass
class FcnnModel:
    """Trained network plus the standardization applied around it."""

    sizes: list
    activation: str
    params: np.ndarray
    x_mean: np.ndarray
    x_std: np.ndarray
    y_mean: np.ndarray
    y_std: np.ndarray
    test_mse: float = float("nan")
    epochs: int = 0
    # per-epoch mean training loss; not serialized
    train_losses: list = field(default_factory=list, repr=False)

    def __post_init__(self):
        self.sizes = [int(s) for s in self.sizes]
        if len(self.sizes) < 2:
            raise ValueError("need at least input and output layer sizes")
        self.params = np.ascontiguousarray(self.params, dtype=float)
        expected = _backend.param_count(self.sizes)
        if self.params.shape != (expected,):
            raise ValueError(f"expected {expected} parameters, got {self.params.shape}")

    @property
    def activation_code(self) -> int:
        return ACTIVATIONS[self.activation]

    def to_dict(self) -> dict:
        return {
            "kind": "fcnn",
            "sizes": self.sizes,
            "activation": self.activation,
            "params": self.params.tolist(),
            "x_mean": self.x_mean.tolist(),
            "x_std": self.x_std.tolist(),
            "y_mean": self.y_mean.tolist(),
            "y_std": self.y_std.tolist(),
            "test_mse": self.test_mse,
            "epochs": self.epochs,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FcnnModel":
        arr = {k: np.array(d[k], dtype=float) for k in ("params", "x_mean", "x_std", "y_mean", "y_std")}
        return cls(d["sizes"], d["activation"], arr["params"], arr["x_mean"], arr["x_std"],
                   arr["y_mean"], arr["y_std"], d.get("test_mse", float("nan")), d.get("epochs", 0))


def forward(model: FcnnModel, features) -> np.ndarray:
    """Raw network output for standardized features (vector or batch)."""
    x = np.asarray(features, dtype=float)
    out = _backend.mlp_forward(model.params, model.sizes, np.atleast_2d(x), model.activation_code)
    return out[0] if x.ndim == 1 else out


def predict(model: FcnnModel, query) -> np.ndarray:
    x = np.asarray(query, dtype=float)
    z = forward(model, (x - model.x_mean) / _safe(model.x_std))
    # constant training columns are reproduced exactly
    return z * model.y_std + model.y_mean


def _standardizer(a):
    """Column means and standard deviations; constant columns get std 0."""
    mean = a.mean(axis=0)
    std = a.std(axis=0)
    std[~(std > 1e-12 * np.maximum(1.0, np.abs(mean)))] = 0.0
    return mean, std


def _safe(std):
    return np.where(std > 0, std, 1.0)


def init_params(sizes, activation: str, rng: np.random.Generator) -> np.ndarray:
    parts = []
    for nin, nout in zip(sizes[:-1], sizes[1:]):
        bound = 1.0 / math.sqrt(nin)
        parts.append(rng.uniform(-bound, bound, nin * nout))
        parts.append(rng.uniform(-bound, bound, nout))
    parts.append(np.full(len(sizes) - 2, PRELU_INIT))
    return np.concatenate(parts)


def _mse(params, sizes, x, y, act):
    out = _backend.mlp_forward(params, sizes, x, act)
    return float(np.mean((out - y) ** 2))


def train(x_train, y_train, x_test, y_test, hyperparameters: FcnnHyperparameters,
          seed: int = 0, max_epochs: int = 5000, patience: int = 200) -> FcnnModel:
    """Train with Adam and early stopping on the test-subset MSE.

    Returns the parameters from the epoch with the lowest test MSE. Inputs
    and targets are standardized with training statistics. Raises
    :class:`TrainingError` on a non-finite loss.
    """
    x_train = np.atleast_2d(np.asarray(x_train, dtype=float))
    y_train = np.asarray(y_train, dtype=float).reshape(len(x_train), -1)
    if len(x_train) < 2:
        raise ValueError("need at least two training rows")
    x_test = np.asarray(x_test, dtype=float).reshape(-1, x_train.shape[1])
    y_test = np.asarray(y_test, dtype=float).reshape(-1, y_train.shape[1])
    if len(x_test) == 0:
        x_test, y_test = x_train, y_train

    hp = hyperparameters
    x_mean, x_std = _standardizer(x_train)
    y_mean, y_std = _standardizer(y_train)
    xs = np.ascontiguousarray((x_train - x_mean) / _safe(x_std))
    ys = np.ascontiguousarray((y_train - y_mean) / _safe(y_std))
    xt = np.ascontiguousarray((x_test - x_mean) / _safe(x_std))
    yt = np.ascontiguousarray((y_test - y_mean) / _safe(y_std))

    sizes = [x_train.shape[1]] + [hp.neurons] * hp.hidden_layers + [y_train.shape[1]]
    act = ACTIVATIONS[hp.activation]
    rng = np.random.default_rng(seed)
    params = init_params(sizes, hp.activation, rng)
    m = np.zeros_like(params)
    v = np.zeros_like(params)
    step = 0
    best = params.copy()
    best_mse = _mse(params, sizes, xt, yt, act)
    best_epoch = 0
    batch = min(hp.batch_size, len(xs))
    losses = []
    for epoch in range(1, max_epochs + 1):
        order = rng.permutation(len(xs))
        loss, step = _backend.mlp_train_epoch(params, m, v, step, sizes, xs, ys, order,
                                              batch, act, hp.learning_rate)
        if not math.isfinite(loss) or not np.all(np.isfinite(params)):
            raise TrainingError(epoch)
        losses.append(loss)
        mse = _mse(params, sizes, xt, yt, act)
        if not math.isfinite(mse):
            raise TrainingError(epoch, f"non-finite test loss at epoch {epoch}")
        if mse < best_mse:
            best_mse, best_epoch = mse, epoch
            best[:] = params
        elif epoch - best_epoch >= patience:
            break
    log.debug("trained %s: best test mse %.3g at epoch %d", hp, best_mse, best_epoch)
    return FcnnModel(sizes, hp.activation, best, x_mean, x_std, y_mean, y_std,
                     best_mse, best_epoch, losses)


@dataclass
class Trial:
    index: int
    hyperparameters: FcnnHyperparameters
    score: float
    seed: int


@dataclass
class SearchResult:
    best: FcnnHyperparameters
    best_score: float
    trials: list
    artifact: object = None

    def history(self) -> list:
        return [{"index": t.index, "seed": t.seed, "score": t.score,
                 **asdict(t.hyperparameters)} for t in self.trials]


def trial_seed(seed: int, index: int) -> int:
    return int(np.random.SeedSequence([seed, index]).generate_state(1)[0])


def _evaluate(objective, hp, seed):
    try:
        out = objective(hp, seed)
    except TrainingError as exc:
        log.info("trial %s failed: %s", hp, exc)
        return math.inf, None
    score, artifact = out if isinstance(out, tuple) else (out, None)
    score = float(score)
    if not math.isfinite(score):
        score = math.inf
    return score, artifact


def _record(result_state, index, hp, seed, score, artifact):
    trials, best = result_state
    trials.append(Trial(index, hp, score, seed))
    if best[0] is None or score < best[1]:
        best[:] = [hp, score, artifact]


def _run_batch(objective, proposals, seed, start, state, n_jobs):
    seeds = [trial_seed(seed, start + k) for k in range(len(proposals))]
    if n_jobs > 1 and len(proposals) > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            results = list(pool.map(lambda a: _evaluate(objective, *a), zip(proposals, seeds)))
    else:
        results = [_evaluate(objective, hp, s) for hp, s in zip(proposals, seeds)]
    for k, (hp, s, (score, art)) in enumerate(zip(proposals, seeds, results)):
        _record(state, start + k, hp, s, score, art)


def expected_improvement(mean, std, best, xi: float = 0.01):
    std = np.maximum(std, 1e-12)
    imp = best - mean - xi
    z = imp / std
    return imp * norm.cdf(z) + std * norm.pdf(z)


def bayesian_search(space: HyperparameterSpace, objective, trials: int, seed: int = 0,
                    n_initial: int | None = None, n_jobs: int = 1) -> SearchResult:
    """Minimize ``objective(hyperparameters, seed)`` over the grid.

    The objective returns a score or ``(score, artifact)``; the artifact of
    the best trial is kept. A scrambled Sobol design seeds the search, then a
    GP surrogate on the log score proposes the grid point of maximum expected
    improvement. Failed or non-finite trials score ``inf``. With ``n_jobs>1``
    the initial design is evaluated concurrently; seeds are derived per trial
    index so results do not depend on ``n_jobs``.
    """
    if trials < 1:
        raise ValueError("need at least one trial")
    n_init = min(trials, n_initial or max(5, trials // 5))
    state = ([], [None, math.inf, None])
    sobol = qmc.Sobol(d=5, scramble=True, seed=np.random.default_rng(seed))
    with warnings.catch_warnings():
        # balance warning for non power-of-two sizes
        warnings.simplefilter("ignore", UserWarning)
        u = sobol.random(n_init)
    init_idx = []
    for row in u:
        idx = space.from_unit(row)
        if idx in init_idx:
            rng = np.random.default_rng(trial_seed(seed, len(init_idx)))
            while idx in init_idx:
                idx = space.from_unit(rng.random(5))
        init_idx.append(idx)
    _run_batch(objective, [space.decode(i) for i in init_idx], seed, 0, state, n_jobs)

    grid = space.all_indices()
    grid_x = space.encode(grid)
    evaluated = [space.index_of(t.hyperparameters) for t in state[0]]
    for k in range(n_init, trials):
        scores = np.array([t.score for t in state[0]])
        finite = np.isfinite(scores)
        mask = np.ones(len(grid), dtype=bool)
        flat = np.ravel_multi_index(np.array(evaluated).T, space.shape)
        mask[flat] = False
        if finite.sum() >= 2:
            logs = np.log(np.maximum(np.where(finite, scores, 1.0), 1e-300))
            logs[~finite] = logs[finite].max() + 1.0
            model = gpr.fit(space.encode(np.array(evaluated)), logs, jitter=1e-6,
                            n_restarts=2, seed=trial_seed(seed, k))
            mean, var = gpr.predict(model, grid_x[mask])
            ei = expected_improvement(mean[:, 0], np.sqrt(var[:, 0]), logs.min())
            pick = np.flatnonzero(mask)[int(np.argmax(ei))]
        else:
            rng = np.random.default_rng(trial_seed(seed, k))
            pick = rng.choice(np.flatnonzero(mask))
        idx = tuple(int(i) for i in grid[pick])
        evaluated.append(idx)
        _run_batch(objective, [space.decode(idx)], seed, k, state, 1)
    trials_list, best = state
    return SearchResult(best[0], best[1], trials_list, best[2])


def random_search(space: HyperparameterSpace, objective, trials: int, seed: int = 0) -> SearchResult:
    """Baseline: uniformly random grid points, same trial seeding."""
    rng = np.random.default_rng(seed)
    state = ([], [None, math.inf, None])
    for k in range(trials):
        idx = tuple(int(rng.integers(n)) for n in space.shape)
        _run_batch(objective, [space.decode(idx)], seed, k, state, 1)
    return SearchResult(state[1][0], state[1][1], state[0], state[1][2])
