"""Gaussian process regression for kernel coefficients.

The covariance is a weighted sum of a squared-exponential (RBF) and a
Matérn 5/2 term. Features are standardized and targets centered, so the prior
mean is zero. By default all output columns share one set of hyperparameters
and one Cholesky factor; hyperparameters maximize the summed log marginal
likelihood with multi-start L-BFGS-B and analytic gradients.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy import linalg as sla
from scipy.optimize import minimize

log = logging.getLogger(__name__)

SQRT5 = math.sqrt(5.0)

# L-BFGS-B bounds in standardized units
VARIANCE_BOUNDS = (1e-4, 1e4)
LENGTH_BOUNDS = (1e-2, 1e2)
WEIGHT_BOUNDS = (0.0, 10.0)
MAX_JITTER = 1e-4


class GprError(RuntimeError):
    pass


def _sqdist(x1, x2):
    d = x1[:, None, :] - x2[None, :, :]
    return np.einsum("ijk,ijk->ij", d, d)


def _pairwise(x, x2):
    x = np.asarray(x, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    single = x.ndim == 1 and x2.ndim == 1
    return np.atleast_2d(x), np.atleast_2d(x2), single


def rbf_kernel(x, x2, sigma_f2: float, length_scale: float):
    """``sigma_f2 * exp(-|x - x2|^2 / (2 l^2))``.

    ``x`` and ``x2`` are single points (returns a float) or ``(n, d)`` and
    ``(k, d)`` arrays (returns an ``(n, k)`` matrix).
    """
    if not length_scale > 0:
        raise ValueError("length scale must be positive")
    a, b, single = _pairwise(x, x2)
    k = sigma_f2 * np.exp(-0.5 * _sqdist(a, b) / length_scale ** 2)
    return float(k[0, 0]) if single else k


def matern52_kernel(x, x2, sigma_f2: float, length_scale: float):
    """``sigma_f2 (1 + s + s^2/3) exp(-s)`` with ``s = sqrt(5) |x - x2| / l``."""
    if not length_scale > 0:
        raise ValueError("length scale must be positive")
    a, b, single = _pairwise(x, x2)
    s = SQRT5 * np.sqrt(np.maximum(_sqdist(a, b), 0.0)) / length_scale
    k = sigma_f2 * (1.0 + s + s * s / 3.0) * np.exp(-s)
    return float(k[0, 0]) if single else k


@dataclass
class Hyperparameters:
    rbf_variance: float = 1.0
    rbf_length: float = 1.0
    matern_variance: float = 1.0
    matern_length: float = 1.0
    rbf_weight: float = 0.5
    matern_weight: float = 0.5

    def to_vector(self) -> np.ndarray:
        return np.array([math.log(self.rbf_variance), math.log(self.rbf_length),
                         math.log(self.matern_variance), math.log(self.matern_length),
                         self.rbf_weight, self.matern_weight])

    @classmethod
    def from_vector(cls, v) -> "Hyperparameters":
        return cls(math.exp(v[0]), math.exp(v[1]), math.exp(v[2]), math.exp(v[3]),
                   float(v[4]), float(v[5]))

    @staticmethod
    def bounds():
        lv = tuple(math.log(b) for b in VARIANCE_BOUNDS)
        ll = tuple(math.log(b) for b in LENGTH_BOUNDS)
        return [lv, ll, lv, ll, WEIGHT_BOUNDS, WEIGHT_BOUNDS]

    @property
    def prior_variance(self) -> float:
        return self.rbf_weight * self.rbf_variance + self.matern_weight * self.matern_variance


def covariance(x1, x2, hp: Hyperparameters) -> np.ndarray:
    return (hp.rbf_weight * rbf_kernel(x1, x2, hp.rbf_variance, hp.rbf_length)
            + hp.matern_weight * matern52_kernel(x1, x2, hp.matern_variance, hp.matern_length))


def _covariance_and_grads(x, theta):
    """Gram matrix for log-parameter vector ``theta`` and its derivatives."""
    hp = Hyperparameters.from_vector(theta)
    r2 = _sqdist(x, x)
    e_rbf = np.exp(-0.5 * r2 / hp.rbf_length ** 2)
    k_rbf = hp.rbf_variance * e_rbf
    s = SQRT5 * np.sqrt(np.maximum(r2, 0.0)) / hp.matern_length
    es = np.exp(-s)
    k_mat = hp.matern_variance * (1.0 + s + s * s / 3.0) * es
    k = hp.rbf_weight * k_rbf + hp.matern_weight * k_mat
    grads = [
        hp.rbf_weight * k_rbf,
        hp.rbf_weight * k_rbf * r2 / hp.rbf_length ** 2,
        hp.matern_weight * k_mat,
        hp.matern_weight * hp.matern_variance * es * s * s * (1.0 + s) / 3.0,
        k_rbf,
        k_mat,
    ]
    return k, grads


def _cholesky(k, jitter):
    n = k.shape[0]
    return sla.cho_factor(k + jitter * np.eye(n), lower=True, check_finite=False)


def log_marginal_likelihood(x, y, theta, jitter: float, gradient: bool = False):
    """Summed log marginal likelihood over the columns of ``y``.

    ``x`` and ``y`` are already standardized / centered. Raises
    ``numpy.linalg.LinAlgError`` when the Gram matrix is not positive definite.
    """
    y = y.reshape(len(y), -1)
    n, q = y.shape
    k, grads = _covariance_and_grads(x, theta)
    c = _cholesky(k, jitter)
    alpha = sla.cho_solve(c, y, check_finite=False)
    logdet = 2.0 * np.sum(np.log(np.diag(c[0])))
    lml = -0.5 * np.sum(y * alpha) - 0.5 * q * logdet - 0.5 * n * q * math.log(2 * math.pi)
    if not gradient:
        return lml
    inner = alpha @ alpha.T - q * sla.cho_solve(c, np.eye(n), check_finite=False)
    g = np.array([0.5 * np.sum(inner * dk) for dk in grads])
    return lml, g


@dataclass
class GprModel:
    """Fitted GP: standardization constants, hyperparameters and training data.

    ``hyperparameters`` is a single :class:`Hyperparameters` when shared across
    outputs, or a list with one entry per output column.
    """

    x_train: np.ndarray
    y_train: np.ndarray
    hyperparameters: object
    jitter: float
    x_mean: np.ndarray
    x_std: np.ndarray
    y_mean: np.ndarray
    y_scale: float
    log_likelihood: float = float("nan")

    def __post_init__(self):
        self._factor()

    @property
    def shared(self) -> bool:
        return isinstance(self.hyperparameters, Hyperparameters)

    def _factor(self):
        xs = (self.x_train - self.x_mean) / self.x_std
        ys = (self.y_train - self.y_mean) / self.y_scale
        hps = [self.hyperparameters] if self.shared else self.hyperparameters
        self._xs = xs
        self._chol = []
        self._alpha = []
        for j, hp in enumerate(hps):
            k = covariance(xs, xs, hp)
            c = _cholesky(k, self.jitter)
            cols = ys if self.shared else ys[:, j:j + 1]
            self._chol.append(c)
            self._alpha.append(sla.cho_solve(c, cols, check_finite=False))

    def standardize(self, x):
        return (np.atleast_2d(np.asarray(x, dtype=float)) - self.x_mean) / self.x_std

    def to_dict(self) -> dict:
        hp = (asdict(self.hyperparameters) if self.shared
              else [asdict(h) for h in self.hyperparameters])
        return {
            "kind": "gpr",
            "hyperparameters": hp,
            "jitter": self.jitter,
            "x_mean": self.x_mean.tolist(),
            "x_std": self.x_std.tolist(),
            "y_mean": self.y_mean.tolist(),
            "y_scale": self.y_scale,
            "log_likelihood": self.log_likelihood,
            "x_train": self.x_train.tolist(),
            "y_train": self.y_train.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GprModel":
        hp = d["hyperparameters"]
        hp = Hyperparameters(**hp) if isinstance(hp, dict) else [Hyperparameters(**h) for h in hp]
        return cls(np.array(d["x_train"], float), np.array(d["y_train"], float), hp,
                   d["jitter"], np.array(d["x_mean"], float), np.array(d["x_std"], float),
                   np.array(d["y_mean"], float), float(d["y_scale"]),
                   d.get("log_likelihood", float("nan")))


def _neg_lml(theta, xs, ys, jitter):
    try:
        lml, g = log_marginal_likelihood(xs, ys, theta, jitter, gradient=True)
    except np.linalg.LinAlgError:
        return 1e25, np.zeros_like(theta)
    if not np.isfinite(lml):
        return 1e25, np.zeros_like(theta)
    return -lml, -g


def _optimize(xs, ys, initial: Hyperparameters, jitter, n_restarts, rng, maxiter):
    bounds = Hyperparameters.bounds()
    starts = [np.clip(initial.to_vector(), [b[0] for b in bounds], [b[1] for b in bounds])]
    for _ in range(n_restarts - 1):
        starts.append(np.array([
            rng.uniform(math.log(0.1), math.log(10.0)), rng.uniform(math.log(0.1), math.log(10.0)),
            rng.uniform(math.log(0.1), math.log(10.0)), rng.uniform(math.log(0.1), math.log(10.0)),
            rng.uniform(0.1, 1.0), rng.uniform(0.1, 1.0)]))
    best = None
    for theta0 in starts:
        res = minimize(_neg_lml, theta0, args=(xs, ys, jitter), jac=True,
                       method="L-BFGS-B", bounds=bounds, options={"maxiter": maxiter})
        if not res.success:
            log.debug("L-BFGS-B stopped early: %s", res.message)
        if best is None or res.fun < best.fun:
            best = res
    if best.fun >= 1e25:
        raise GprError("no start produced a positive definite Gram matrix")
    return Hyperparameters.from_vector(best.x), -float(best.fun)


def fit(inputs, targets, initial_hyperparameters: Hyperparameters | None = None,
        jitter: float = 1e-8, shared: bool = True, n_restarts: int = 5,
        seed: int = 0, optimize: bool = True, maxiter: int = 500) -> GprModel:
    """Fit a GP to ``inputs`` (n, d) and ``targets`` (n, q) or (n,).

    ``shared=False`` fits one set of hyperparameters per output column.
    ``optimize=False`` keeps ``initial_hyperparameters`` unchanged. If the
    Cholesky factorization fails, the jitter is raised tenfold up to 1e-4
    before giving up.
    """
    x = np.atleast_2d(np.asarray(inputs, dtype=float))
    if x.shape[0] == 1 and np.ndim(inputs) == 1:
        x = x.T
    y = np.asarray(targets, dtype=float)
    y = y.reshape(len(y), -1)
    if x.shape[0] != y.shape[0]:
        raise ValueError(f"{x.shape[0]} inputs but {y.shape[0]} targets")
    x_mean = x.mean(axis=0)
    x_std = x.std(axis=0)
    x_std[x_std == 0] = 1.0
    y_mean = y.mean(axis=0)
    y_scale = float(np.std(y - y_mean))
    if y_scale == 0 or not np.isfinite(y_scale):
        y_scale = 1.0
    xs = (x - x_mean) / x_std
    ys = (y - y_mean) / y_scale
    initial = initial_hyperparameters or Hyperparameters()
    rng = np.random.default_rng(seed)

    j = jitter
    while True:
        try:
            if not optimize:
                hp = initial if shared else [initial] * y.shape[1]
                lml = float("nan")
            elif shared:
                hp, lml = _optimize(xs, ys, initial, j, n_restarts, rng, maxiter)
            else:
                fits = [_optimize(xs, ys[:, c:c + 1], initial, j, n_restarts, rng, maxiter)
                        for c in range(y.shape[1])]
                hp = [f[0] for f in fits]
                lml = float(sum(f[1] for f in fits))
            return GprModel(x, y, hp, j, x_mean, x_std, y_mean, y_scale, lml)
        except (np.linalg.LinAlgError, GprError) as exc:
            if j >= MAX_JITTER * (1 - 1e-9):
                raise GprError(
                    f"Cholesky factorization failed with jitter {j:g} "
                    f"(n={x.shape[0]}, min pairwise distance "
                    f"{np.sqrt(np.min(_sqdist(xs, xs) + np.eye(len(xs)) * 1e300)):.3g}): {exc}"
                ) from exc
            j = min(max(j * 10.0, 1e-12), MAX_JITTER)
            log.info("raising GP jitter to %g", j)


def predict(model: GprModel, query):
    """Posterior mean and variance at ``query``.

    A single feature vector returns ``(q,)`` arrays; an ``(k, d)`` matrix
    returns ``(k, q)`` arrays. Variances are clamped at zero.
    """
    q = np.asarray(query, dtype=float)
    single = q.ndim == 1
    xq = model.standardize(q)
    hps = [model.hyperparameters] if model.shared else model.hyperparameters
    means, variances = [], []
    for hp, c, alpha in zip(hps, model._chol, model._alpha):
        ks = covariance(xq, model._xs, hp)
        means.append(ks @ alpha)
        v = sla.cho_solve(c, ks.T, check_finite=False)
        var = hp.prior_variance - np.einsum("ij,ji->i", ks, v)
        variances.append(np.maximum(var, 0.0)[:, None])
    mean = np.hstack(means) * model.y_scale + model.y_mean
    var = np.hstack(variances) * model.y_scale ** 2
    var = np.broadcast_to(var, mean.shape).copy()
    if single:
        return mean[0], var[0]
    return mean, var
