"""Uniformly sampled reduced-time signals.

All signals live on a grid ``tau_i = i * dt`` starting at ``tau_0 = 0``. Input
signals are already at their post-step value at sample 0, so the first row of
every convolution matrix sees ``u(0)``.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from pathlib import Path

import numpy as np

# default noise level as a fraction of the steady-state magnitude
DEFAULT_NOISE_FRACTION = 0.005


@dataclass(frozen=True)
class TimeGrid:
    """Uniform reduced-time grid.

    Parameters
    ----------
    dt : float
        Reduced-time step, strictly positive.
    n : int
        Number of samples, at least 2.
    """

    dt: float
    n: int

    def __post_init__(self):
        if not (self.dt > 0 and np.isfinite(self.dt)):
            raise ValueError(f"dt must be positive and finite, got {self.dt}")
        if int(self.n) != self.n or self.n < 2:
            raise ValueError(f"n must be an integer >= 2, got {self.n}")
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "dt", float(self.dt))

    @property
    def tau(self) -> np.ndarray:
        return np.arange(self.n) * self.dt

    @property
    def duration(self) -> float:
        """Time of the last sample."""
        return (self.n - 1) * self.dt


class TimeSignal:
    """Scalar signal sampled on a :class:`TimeGrid`.

    The value array is copied and made read-only on construction.
    """

    __slots__ = ("grid", "values")

    def __init__(self, grid: TimeGrid, values):
        arr = np.array(values, dtype=float)
        if arr.ndim != 1 or arr.shape[0] != grid.n:
            raise ValueError(
                f"values must be a vector of length {grid.n}, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("signal values must be finite")
        arr.flags.writeable = False
        self.grid = grid
        self.values = arr

    @property
    def tau(self) -> np.ndarray:
        return self.grid.tau

    def __len__(self):
        return self.grid.n

    def __repr__(self):
        return f"TimeSignal(dt={self.grid.dt}, n={self.grid.n})"

    def __eq__(self, other):
        if not isinstance(other, TimeSignal):
            return NotImplemented
        return self.grid == other.grid and np.array_equal(self.values, other.values)

    def __add__(self, other):
        if isinstance(other, TimeSignal):
            if other.grid != self.grid:
                raise ValueError("cannot add signals on different grids")
            return TimeSignal(self.grid, self.values + other.values)
        return TimeSignal(self.grid, self.values + other)

    def __sub__(self, other):
        if isinstance(other, TimeSignal):
            if other.grid != self.grid:
                raise ValueError("cannot subtract signals on different grids")
            return TimeSignal(self.grid, self.values - other.values)
        return TimeSignal(self.grid, self.values - other)

    def __mul__(self, scale):
        return TimeSignal(self.grid, self.values * float(scale))

    __rmul__ = __mul__

    def steady_value(self, tail: int = 1) -> float:
        """Mean of the last ``tail`` samples."""
        return float(np.mean(self.values[-tail:]))


def make_step(grid: TimeGrid, magnitude: float) -> TimeSignal:
    return TimeSignal(grid, np.full(grid.n, float(magnitude)))


def make_smoothed_step(grid: TimeGrid, magnitude: float, tau_ref: float = 0.6) -> TimeSignal:
    """Exponentially smoothed step ``magnitude * (1 - exp(-tau / tau_ref))``."""
    if not tau_ref > 0:
        raise ValueError(f"tau_ref must be positive, got {tau_ref}")
    return TimeSignal(grid, magnitude * -np.expm1(-grid.tau / tau_ref))


def make_sinusoid(grid: TimeGrid, mean: float, amplitude: float,
                  reduced_frequency: float) -> TimeSignal:
    """``mean + amplitude * sin(k * tau)``, zero phase at ``tau = 0``."""
    if amplitude < 0:
        raise ValueError(f"amplitude must be non-negative, got {amplitude}")
    return TimeSignal(grid, mean + amplitude * np.sin(reduced_frequency * grid.tau))


def add_white_noise(signal: TimeSignal, sigma: float | None = None,
                    seed: int = 0) -> TimeSignal:
    """Add i.i.d. Gaussian noise of standard deviation ``sigma``.

    When ``sigma`` is None it defaults to 0.5% of the magnitude of the signal's
    final (steady-state) value.
    """
    if sigma is None:
        sigma = DEFAULT_NOISE_FRACTION * abs(signal.values[-1])
    if sigma < 0:
        raise ValueError(f"sigma must be non-negative, got {sigma}")
    if sigma == 0:
        return TimeSignal(signal.grid, signal.values)
    rng = np.random.default_rng(seed)
    return TimeSignal(signal.grid, signal.values + rng.normal(0.0, sigma, signal.grid.n))


# -- CSV ---------------------------------------------------------------------

def signal_to_csv(signal: TimeSignal) -> str:
    buf = io.StringIO()
    buf.write("tau,value\n")
    for t, v in zip(signal.tau.tolist(), signal.values.tolist()):
        buf.write(f"{t!r},{v!r}\n")
    return buf.getvalue()


def write_signal_csv(signal: TimeSignal, path) -> None:
    Path(path).write_text(signal_to_csv(signal), newline="\n")


def read_signal_csv(path, rtol: float = 1e-9) -> TimeSignal:
    """Read a two-column ``tau,value`` CSV (LF or CRLF line endings).

    The grid is inferred from the first two time stamps and the remaining ones
    are checked for uniformity.
    """
    text = Path(path).read_bytes().decode("utf-8")
    return parse_signal_csv(text, rtol=rtol, source=str(path))


def parse_signal_csv(text: str, rtol: float = 1e-9, source: str = "<string>") -> TimeSignal:
    rows = list(csv.reader(io.StringIO(text.replace("\r\n", "\n"))))
    rows = [r for r in rows if r]
    if not rows or [c.strip().lower() for c in rows[0]] != ["tau", "value"]:
        raise ValueError(f"{source}: expected header 'tau,value'")
    try:
        data = np.array([[float(a), float(b)] for a, b in rows[1:]])
    except ValueError as exc:
        raise ValueError(f"{source}: malformed row ({exc})") from None
    if data.shape[0] < 2:
        raise ValueError(f"{source}: need at least two samples")
    tau, values = data[:, 0], data[:, 1]
    dt = tau[1] - tau[0]
    grid = TimeGrid(dt, len(tau))
    if abs(tau[0]) > rtol * dt or not np.allclose(tau, grid.tau, rtol=0, atol=rtol * dt * len(tau)):
        raise ValueError(f"{source}: time stamps are not a uniform grid starting at 0")
    return TimeSignal(grid, values)
