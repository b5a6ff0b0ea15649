"""Synthetic three-lag aerodynamic plant used as data generator and oracle.

Each lag state obeys ``dx_i/dtau = -(2V/c) b_i x_i + alpha(tau)`` with the
pitch angle in radians. The lift is

    C_L = C_La(M) * (A1 b1 x1 + A2 b2 x2 + A3 b3 x3)                (linear)
    C_L = C_La(M) * (A1 b1 x1 + A2 b2 x2 + A3 b3 x3 - C_nl x2 x3)   (nonlinear)

with the Prandtl-Glauert slope ``C_La(M) = 2 pi / sqrt(1 - M^2)`` and ``A3``
a smooth function of Mach number and freestream incidence.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from . import _backend
from .signals import DEFAULT_NOISE_FRACTION, TimeSignal, add_white_noise


@dataclass(frozen=True)
class ParameterPoint:
    """Location in the (Mach, incidence) parameter space.

    ``steady_cl`` and ``steady_cm`` are optional steady-state features fed to
    the interpolators alongside ``mach`` and ``alpha0`` (degrees).
    """

    mach: float
    alpha0: float
    steady_cl: Optional[float] = None
    steady_cm: Optional[float] = None

    def __post_init__(self):
        if not 0.0 < self.mach < 1.0:
            raise ValueError(f"Mach number must lie in (0, 1), got {self.mach}")

    def features(self, use_cm: bool | None = None) -> np.ndarray:
        f = [self.mach, self.alpha0]
        if self.steady_cl is not None:
            f.append(self.steady_cl)
        if use_cm or (use_cm is None and self.steady_cm is not None):
            if self.steady_cm is None:
                raise ValueError("steady_cm requested but not available")
            f.append(self.steady_cm)
        return np.array(f, dtype=float)


@dataclass(frozen=True)
class PlantConfig:
    """Coefficients of the synthetic plant.

    ``noise_sigma=None`` adds white noise with a standard deviation of 0.5% of
    the magnitude of the noise-free response's final value; ``0`` disables
    noise. ``c_cubic`` adds ``C_La * c_cubic * x3**3`` to the nonlinear lift
    and is zero for the standard plant.
    """

    cl_alpha_base: float = 2.0 * math.pi
    a1: float = 0.670
    a2: float = 0.330
    b1: float = 0.30
    b2: float = 0.0455
    b3: float = 0.15
    c_nl: float = -0.35
    velocity_ratio: float = 1.0
    a3_range: tuple = (-0.15, 0.0)
    mach_range: tuple = (0.40, 0.85)
    alpha0_range: tuple = (-2.0, 8.0)
    noise_sigma: Optional[float] = None
    seed: int = 0
    c_cubic: float = 0.0

    def __post_init__(self):
        if min(self.b1, self.b2, self.b3) <= 0:
            raise ValueError("lag rates b1, b2, b3 must be positive")
        if self.velocity_ratio <= 0:
            raise ValueError("velocity_ratio must be positive")
        lo, hi = self.a3_range
        if lo > hi or hi > 0:
            raise ValueError(f"a3_range must satisfy min <= max <= 0, got {self.a3_range}")
        if self.noise_sigma is not None and self.noise_sigma < 0:
            raise ValueError("noise_sigma must be non-negative")

    @property
    def rates(self) -> np.ndarray:
        return self.velocity_ratio * np.array([self.b1, self.b2, self.b3])

    def noiseless(self) -> "PlantConfig":
        return replace(self, noise_sigma=0.0)

    def to_dict(self) -> dict:
        d = {k: getattr(self, k) for k in self.__dataclass_fields__}
        for k in ("a3_range", "mach_range", "alpha0_range"):
            d[k] = list(d[k])
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "PlantConfig":
        d = dict(d)
        for k in ("a3_range", "mach_range", "alpha0_range"):
            if k in d:
                d[k] = tuple(d[k])
        return cls(**d)


def lift_slope(config: PlantConfig, mach: float) -> float:
    """Compressible lift-curve slope per radian."""
    if not 0.0 <= mach < 1.0:
        raise ValueError(f"Prandtl-Glauert factor needs 0 <= M < 1, got {mach}")
    return config.cl_alpha_base / math.sqrt(1.0 - mach * mach)


def _smoothstep(t: float) -> float:
    t = min(max(t, 0.0), 1.0)
    return t * t * (3.0 - 2.0 * t)


def a3_coefficient(config: PlantConfig, point: ParameterPoint) -> float:
    """``A3`` interpolates from ``a3_range[1]`` at the low-Mach, low-incidence
    corner to ``a3_range[0]`` at the opposite corner through a product of
    cubic smoothsteps."""
    m0, m1 = config.mach_range
    a0, a1 = config.alpha0_range
    s = _smoothstep((point.mach - m0) / (m1 - m0)) * _smoothstep((point.alpha0 - a0) / (a1 - a0))
    lo, hi = config.a3_range
    return hi + (lo - hi) * s


def steady_lift(config: PlantConfig, point: ParameterPoint) -> float:
    """Linear steady lift at the freestream incidence."""
    a3 = a3_coefficient(config, point)
    return (lift_slope(config, point.mach) * math.radians(point.alpha0)
            * (config.a1 + config.a2 + a3) / config.velocity_ratio)


def with_steady_features(config: PlantConfig, point: ParameterPoint) -> ParameterPoint:
    return replace(point, steady_cl=steady_lift(config, point))


# Largest internal RK4 step in reduced time; keeps the global integration
# error of a unit-amplitude response near 1e-9.
MAX_STEP = 0.1


def default_substeps(dt: float) -> int:
    return max(1, math.ceil(dt / MAX_STEP - 1e-9))


def lag_states(config: PlantConfig, input: TimeSignal, substeps: int | None = None) -> np.ndarray:
    """Lag states at every sample for an input in degrees, shape ``(n, 3)``.

    Each sample interval is split into ``substeps`` RK4 steps (default: enough
    to keep the step at or below ``MAX_STEP``).
    """
    u = np.radians(input.values)
    if substeps is None:
        substeps = default_substeps(input.grid.dt)
    return _backend.lag_states_rk4(u, input.grid.dt, config.rates, substeps)


def _lift(config, point, x, nonlinear):
    cla = lift_slope(config, point.mach)
    a3 = a3_coefficient(config, point)
    y = cla * (config.a1 * config.b1 * x[:, 0] + config.a2 * config.b2 * x[:, 1]
               + a3 * config.b3 * x[:, 2])
    if nonlinear:
        y = y - cla * config.c_nl * x[:, 1] * x[:, 2]
        if config.c_cubic:
            y = y + cla * config.c_cubic * x[:, 2] ** 3
    return y


def simulate(config: PlantConfig, point: ParameterPoint, input: TimeSignal,
             nonlinear: bool = False, seed: int | None = None,
             substeps: int | None = None) -> TimeSignal:
    """Integrate the plant for ``input`` (degrees) and return the lift.

    The response starts from rest, so it is the perturbation about the
    steady lift at ``point``. Noise is drawn with ``seed`` (default
    ``config.seed``).
    """
    y = _lift(config, point, lag_states(config, input, substeps), nonlinear)
    clean = TimeSignal(input.grid, y)
    sigma = config.noise_sigma
    if sigma is None:
        sigma = DEFAULT_NOISE_FRACTION * abs(y[-1])
    return add_white_noise(clean, sigma, config.seed if seed is None else seed)


def exact_response_oracle(config: PlantConfig, point: ParameterPoint, input: TimeSignal,
                          nonlinear: bool = False) -> TimeSignal:
    """Noise-free reference response integrated with half the step size."""
    return simulate(config.noiseless(), point, input, nonlinear,
                    substeps=2 * default_substeps(input.grid.dt))
