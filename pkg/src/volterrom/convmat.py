"""Lower-triangular Toeplitz input matrices for diagonal Volterra convolution.

With zero-based indexing the order-``p`` diagonal operator is

    y_i = sum_{j=0}^{min(i, m-1)} h_j * u_{i-j}**p

which is the product ``U_p @ h`` with ``U_p[i, j] = u[i-j]**p`` for ``i >= j``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import toeplitz

from .signals import TimeGrid, TimeSignal


@dataclass(frozen=True, eq=False)
class InputMatrix:
    """Dense ``n x m`` convolution matrix of a signal raised to ``order``."""

    data: np.ndarray
    order: int
    grid: TimeGrid
    source: str = ""

    @property
    def memory_depth(self) -> int:
        return self.data.shape[1]

    @property
    def shape(self):
        return self.data.shape


def build_input_matrix(signal: TimeSignal, memory_depth: int, power: int = 1,
                       source: str = "") -> InputMatrix:
    """Assemble ``U[i, j] = u(i - j)**power`` (zero above the diagonal).

    Parameters
    ----------
    signal : TimeSignal
        Input samples ``u_0 .. u_{n-1}``.
    memory_depth : int
        Number of kernel coefficients ``m``; must satisfy ``1 <= m <= n``.
    power : {1, 2, 3}
        Kernel order.
    """
    n = signal.grid.n
    m = int(memory_depth)
    if not 1 <= m <= n:
        raise ValueError(f"memory depth must be in [1, {n}], got {memory_depth}")
    if power not in (1, 2, 3):
        raise ValueError(f"power must be 1, 2 or 3, got {power}")
    u = signal.values ** power
    first_row = np.zeros(m)
    first_row[0] = u[0]
    data = toeplitz(u, first_row)
    data.flags.writeable = False
    return InputMatrix(data=data, order=power, grid=signal.grid, source=source)


def convolve(matrix: InputMatrix, kernel) -> TimeSignal:
    """Apply the convolution matrix to a kernel vector."""
    h = np.asarray(kernel, dtype=float)
    if h.ndim != 1 or h.shape[0] != matrix.memory_depth:
        raise ValueError(
            f"kernel length {h.shape} does not match memory depth {matrix.memory_depth}")
    return TimeSignal(matrix.grid, matrix.data @ h)


def stack_orders(signal: TimeSignal, memory_depth: int, orders=(1, 2, 3)) -> list[InputMatrix]:
    return [build_input_matrix(signal, memory_depth, p) for p in orders]
