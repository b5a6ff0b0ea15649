"""Two-step identification of diagonal Volterra kernels.

The linear kernel comes from a small-amplitude response. Second (and third)
order diagonal kernels are then fitted to whatever the linear kernel leaves
unexplained in larger-amplitude responses of the same shape.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .convmat import build_input_matrix
from .laguerre import LaguerreBasis
from .linalg import DEFAULT_RANK_TOLERANCE, pseudo_inverse_apply, svd
from .signals import TimeSignal


class IdentificationError(RuntimeError):
    pass


@dataclass(eq=False)
class KernelSet:
    """Identified diagonal kernels.

    ``h1`` maps degrees to output units; ``h2`` and ``h3`` act on the squared
    and cubed input. ``steady_offset`` is the pre-step output that was removed
    before identification and is not part of the kernels.
    """

    h1: np.ndarray
    h2: Optional[np.ndarray] = None
    h3: Optional[np.ndarray] = None
    dt: float = 1.0
    amplitudes: list = field(default_factory=list)
    steady_offset: float = 0.0

    def __post_init__(self):
        self.h1 = _as_kernel(self.h1, "h1")
        m = self.h1.shape[0]
        if self.h2 is not None:
            self.h2 = _as_kernel(self.h2, "h2", m)
        if self.h3 is not None:
            if self.h2 is None:
                raise ValueError("h3 requires h2")
            self.h3 = _as_kernel(self.h3, "h3", m)
        amps = [float(a) for a in self.amplitudes]
        if any(a <= 0 for a in amps) or any(b <= a for a, b in zip(amps, amps[1:])):
            raise ValueError(f"amplitudes must be positive and strictly increasing: {amps}")
        self.amplitudes = amps

    @property
    def memory_depth(self) -> int:
        return self.h1.shape[0]

    @property
    def order(self) -> int:
        return 1 + (self.h2 is not None) + (self.h3 is not None)

    def to_dict(self) -> dict:
        def vec(v):
            return None if v is None else [float(x) for x in v]
        return {
            "memory_depth": self.memory_depth,
            "dt": float(self.dt),
            "amplitudes": list(self.amplitudes),
            "h1": vec(self.h1),
            "h2": vec(self.h2),
            "h3": vec(self.h3),
            "steady_offset": float(self.steady_offset),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d: dict) -> "KernelSet":
        ks = cls(h1=d["h1"], h2=d.get("h2"), h3=d.get("h3"), dt=d["dt"],
                 amplitudes=d.get("amplitudes", []),
                 steady_offset=d.get("steady_offset", 0.0))
        if ks.memory_depth != d["memory_depth"]:
            raise ValueError("memory_depth does not match kernel length")
        return ks

    @classmethod
    def from_json(cls, text: str) -> "KernelSet":
        return cls.from_dict(json.loads(text))


def _as_kernel(v, name, m=None):
    arr = np.array(v, dtype=float)
    if arr.ndim != 1 or (m is not None and arr.shape[0] != m):
        raise ValueError(f"{name} must be a vector of length {m}, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} has non-finite entries")
    return arr


@dataclass(eq=False)
class ResponsePair:
    """An input signal and the measured output on the same grid."""

    input: TimeSignal
    output: TimeSignal
    parameter_point: object = None

    def __post_init__(self):
        if self.input.grid != self.output.grid:
            raise ValueError("input and output must share the same grid")

    @property
    def amplitude(self) -> float:
        return float(np.max(np.abs(self.input.values)))


def remove_steady_offset(output: TimeSignal, offset: float) -> TimeSignal:
    """Subtract the pre-step steady output so the response starts near zero."""
    return output - float(offset)


def _resolve_depth(pair, memory_depth, basis):
    n = pair.input.grid.n
    m = n if memory_depth is None else int(memory_depth)
    if basis is not None and basis.memory_depth != m:
        if memory_depth is None:
            m = basis.memory_depth
        else:
            raise ValueError(f"basis memory depth {basis.memory_depth} != {m}")
    if not 1 <= m <= n:
        raise ValueError(f"memory depth must be in [1, {n}], got {m}")
    return m


def _solve(matrix, rhs, basis, what, rank_tolerance):
    f = svd(matrix if basis is None else matrix @ basis.normalized()[0], rank_tolerance)
    if f.rank == 0:
        raise IdentificationError(f"{what}: input matrix has rank zero (all-zero input?)")
    x = pseudo_inverse_apply(f, rhs)
    if basis is not None:
        x = basis.normalized()[0] @ x
    return x


def identify_linear(pair_a: ResponsePair, memory_depth: int | None = None,
                    basis: LaguerreBasis | None = None,
                    rank_tolerance: float = DEFAULT_RANK_TOLERANCE) -> np.ndarray:
    """Linear kernel ``h1 = U_A^+ y_A``, optionally within a Laguerre subspace."""
    m = _resolve_depth(pair_a, memory_depth, basis)
    ua = build_input_matrix(pair_a.input, m, 1).data
    return _solve(ua, pair_a.output.values, basis, "linear kernel", rank_tolerance)


def linear_residual(h1, pair: ResponsePair) -> np.ndarray:
    """Part of ``pair.output`` not explained by the linear kernel."""
    u = build_input_matrix(pair.input, len(h1), 1).data
    return pair.output.values - u @ h1


def identify_second_order(h1, pair_b: ResponsePair, memory_depth: int | None = None,
                          basis: LaguerreBasis | None = None,
                          rank_tolerance: float = DEFAULT_RANK_TOLERANCE) -> np.ndarray:
    """``h2 = U_B2^+ (y_B - U_B h1)``."""
    h1 = np.asarray(h1, dtype=float)
    m = len(h1) if memory_depth is None else int(memory_depth)
    if len(h1) != m:
        raise ValueError(f"h1 has length {len(h1)}, expected {m}")
    if basis is not None and basis.memory_depth != m:
        raise ValueError(f"basis memory depth {basis.memory_depth} != {m}")
    ub2 = build_input_matrix(pair_b.input, m, 2).data
    return _solve(ub2, linear_residual(h1, pair_b), basis, "second-order kernel",
                  rank_tolerance)


def _check_distinct(pair_b, pair_c):
    ub, uc = pair_b.input.values, pair_c.input.values
    denom = ub @ ub
    if denom == 0:
        return
    c = (ub @ uc) / denom
    if np.allclose(uc, c * ub, rtol=0, atol=1e-12 * np.abs(uc).max()) and np.isclose(abs(c), 1.0):
        raise IdentificationError(
            "second- and third-order blocks are collinear: responses B and C use "
            "inputs of identical shape and magnitude")


def identify_second_and_third(h1, pair_b: ResponsePair, pair_c: ResponsePair,
                              memory_depth: int | None = None,
                              basis: LaguerreBasis | None = None,
                              rank_tolerance: float = DEFAULT_RANK_TOLERANCE):
    """Joint least-squares solve for ``h2`` and ``h3``.

    Solves ``[[U_B2, U_B3], [U_C2, U_C3]] [h2; h3] = [r_B; r_C]`` where
    ``r_X = y_X - U_X h1``.
    """
    h1 = np.asarray(h1, dtype=float)
    m = len(h1) if memory_depth is None else int(memory_depth)
    if len(h1) != m:
        raise ValueError(f"h1 has length {len(h1)}, expected {m}")
    if pair_b.input.grid.n != pair_c.input.grid.n:
        raise ValueError("responses B and C must have the same length")
    _check_distinct(pair_b, pair_c)
    a = np.block([
        [build_input_matrix(pair_b.input, m, 2).data, build_input_matrix(pair_b.input, m, 3).data],
        [build_input_matrix(pair_c.input, m, 2).data, build_input_matrix(pair_c.input, m, 3).data],
    ])
    rhs = np.concatenate([linear_residual(h1, pair_b), linear_residual(h1, pair_c)])
    if basis is not None:
        if basis.memory_depth != m:
            raise ValueError(f"basis memory depth {basis.memory_depth} != {m}")
        bn = basis.normalized()[0]
        r = bn.shape[1]
        block = np.zeros((2 * m, 2 * r))
        block[:m, :r] = bn
        block[m:, r:] = bn
        f = svd(a @ block, rank_tolerance)
    else:
        f = svd(a, rank_tolerance)
    if f.rank == 0:
        raise IdentificationError("joint second/third-order matrix has rank zero")
    x = pseudo_inverse_apply(f, rhs)
    if basis is not None:
        x = block @ x
    return x[:m], x[m:]


def identify_multistep(h1, pair_b: ResponsePair, pair_c: ResponsePair,
                       memory_depth: int | None = None,
                       basis: LaguerreBasis | None = None,
                       rank_tolerance: float = DEFAULT_RANK_TOLERANCE):
    """Sequential baseline: ``h2`` from B alone, then ``h3`` from C's residual."""
    h2 = identify_second_order(h1, pair_b, memory_depth, basis, rank_tolerance)
    m = len(h2)
    uc2 = build_input_matrix(pair_c.input, m, 2).data
    uc3 = build_input_matrix(pair_c.input, m, 3).data
    rhs = linear_residual(h1, pair_c) - uc2 @ h2
    h3 = _solve(uc3, rhs, basis, "third-order kernel", rank_tolerance)
    return h2, h3


def reconstruct(kernels: KernelSet, input: TimeSignal) -> TimeSignal:
    """Diagonal Volterra response ``U h1 + U2 h2 + U3 h3`` (present terms only)."""
    m = kernels.memory_depth
    if input.grid.n < m:
        raise ValueError(f"input has {input.grid.n} samples, kernels need at least {m}")
    y = build_input_matrix(input, m, 1).data @ kernels.h1
    if kernels.h2 is not None:
        y = y + build_input_matrix(input, m, 2).data @ kernels.h2
    if kernels.h3 is not None:
        y = y + build_input_matrix(input, m, 3).data @ kernels.h3
    return TimeSignal(input.grid, y)
