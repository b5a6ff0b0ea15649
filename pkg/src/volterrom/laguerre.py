"""Laguerre-function basis for kernel regularization.

Kernels are expanded as ``h = B @ theta`` where column ``r`` of ``B`` samples
the Laguerre function ``exp(-a t / 2) * L_r(a t)`` (``L_0 = 1``) on the kernel
memory grid. The expansion is used only to regularize the identification;
the interpolators always see the expanded kernel ``h``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .convmat import InputMatrix
from .linalg import DEFAULT_RANK_TOLERANCE, lstsq
from .signals import TimeGrid, TimeSignal

# fraction of the peak that the highest-order function must have decayed to at
# the end of the memory window when the time scale is chosen automatically
_DEFAULT_TAIL_FRACTION = 0.05


def laguerre_functions(x, order: int) -> np.ndarray:
    """Evaluate ``exp(-x/2) L_r(x)`` for ``r = 0 .. order-1``.

    Uses the three-term recurrence on the weighted functions directly, which
    avoids forming the (large) raw polynomial values.

    Returns
    -------
    ndarray of shape ``(len(x), order)``
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    out = np.empty((x.size, order))
    out[:, 0] = np.exp(-0.5 * x)
    if order > 1:
        out[:, 1] = (1.0 - x) * out[:, 0]
    for k in range(1, order - 1):
        out[:, k + 1] = ((2 * k + 1 - x) * out[:, k] - k * out[:, k - 1]) / (k + 1)
    return out


def default_time_scale(window: float, order: int,
                       tail_fraction: float = _DEFAULT_TAIL_FRACTION) -> float:
    """Time scale ``a`` at which the slowest (highest-order) function has
    decayed below ``tail_fraction`` of its peak magnitude by ``t = window``."""
    if window <= 0:
        raise ValueError("window must be positive")
    x = np.linspace(0.0, 8.0 * order + 80.0, 40001)
    phi = np.abs(laguerre_functions(x, order)[:, -1])
    # running max from the right: envelope of what is still to come after x
    tail_max = np.maximum.accumulate(phi[::-1])[::-1]
    idx = np.argmax(tail_max <= tail_fraction * phi.max())
    return float(x[idx] / window)


@dataclass(frozen=True, eq=False)
class LaguerreBasis:
    """Sampled Laguerre basis.

    Attributes
    ----------
    order : int
        Number of functions ``R``.
    time_scale : float
        Scaling ``a`` of reduced time.
    matrix_b : (m, R) ndarray
        ``matrix_b[j, r] = w_j * phi_r(tau_j)``; ``w_0 = endpoint_weight`` and
        ``w_j = 1`` otherwise.
    grid : TimeGrid
        Grid of the kernel memory (``n = m``).
    endpoint_weight : float
        Weight of the ``tau = 0`` row. The default of one half matches the
        discrete kernel of a continuous system sampled with a linearly
        interpolated input, whose first coefficient only sees half a sample
        interval.
    """

    order: int
    time_scale: float
    matrix_b: np.ndarray
    grid: TimeGrid
    endpoint_weight: float = 0.5

    @property
    def memory_depth(self) -> int:
        return self.matrix_b.shape[0]

    def normalized(self):
        """Columns scaled to unit Euclidean norm, and the scale factors."""
        norms = np.linalg.norm(self.matrix_b, axis=0)
        return self.matrix_b / norms, norms

    def expand(self, theta) -> np.ndarray:
        return self.matrix_b @ np.asarray(theta, dtype=float)


def build_basis(grid: TimeGrid, memory_depth: int, order: int,
                time_scale: float | None = None,
                endpoint_weight: float = 0.5) -> LaguerreBasis:
    """Sample ``order`` Laguerre functions on the first ``memory_depth`` points.

    ``time_scale=None`` selects :func:`default_time_scale` for a window of
    ``memory_depth * dt``.
    """
    m = int(memory_depth)
    if not 1 <= order <= m:
        raise ValueError(f"order must be in [1, memory_depth={m}], got {order}")
    if m > grid.n:
        raise ValueError(f"memory depth {m} exceeds grid length {grid.n}")
    if time_scale is None:
        time_scale = default_time_scale(m * grid.dt, order)
    if not time_scale > 0:
        raise ValueError(f"time_scale must be positive, got {time_scale}")
    kgrid = TimeGrid(grid.dt, m) if m >= 2 else grid
    tau = np.arange(m) * grid.dt
    b = laguerre_functions(time_scale * tau, order)
    b[0] *= endpoint_weight
    bn = b / np.linalg.norm(b, axis=0)
    s = np.linalg.svd(bn, compute_uv=False)
    if s[-1] <= 1e-8 * s[0]:
        raise ValueError(
            f"Laguerre basis is numerically rank deficient (R={order}, a={time_scale:.4g}, "
            f"m={m}); reduce the order or change the time scale")
    b.flags.writeable = False
    return LaguerreBasis(order, float(time_scale), b, kgrid, float(endpoint_weight))


def identify_kernel_in_basis(input_matrix: InputMatrix, basis: LaguerreBasis,
                             response, rank_tolerance: float = DEFAULT_RANK_TOLERANCE):
    """Solve ``(U B) theta = y`` in least squares and expand ``h = B theta``.

    Returns
    -------
    theta : (R,) ndarray
        Coefficients with respect to ``basis.matrix_b`` (un-normalized).
    kernel : (m,) ndarray
    """
    if basis.memory_depth != input_matrix.memory_depth:
        raise ValueError(f"basis memory depth {basis.memory_depth} does not match "
                         f"input matrix memory depth {input_matrix.memory_depth}")
    y = response.values if isinstance(response, TimeSignal) else np.asarray(response, float)
    if y.shape[0] != input_matrix.shape[0]:
        raise ValueError("response length does not match the input matrix")
    bn, norms = basis.normalized()
    theta_n = lstsq(input_matrix.data @ bn, y, rank_tolerance)
    return theta_n / norms, bn @ theta_n
