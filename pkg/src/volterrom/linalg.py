"""SVD factorization and minimum-norm least-squares solves."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DEFAULT_RANK_TOLERANCE = 1e-10


class SvdError(RuntimeError):
    """Raised when the SVD iteration fails or the input is not finite."""


@dataclass(frozen=True, eq=False)
class SvdFactors:
    """Thin SVD ``A = U diag(s) V^T``.

    Attributes
    ----------
    u_basis : (n, r) ndarray
    singular_values : (r,) ndarray, non-increasing
    v_basis : (m, r) ndarray
    rank_tolerance : float
        Singular values below ``rank_tolerance * s_max`` are treated as zero.
    """

    u_basis: np.ndarray
    singular_values: np.ndarray
    v_basis: np.ndarray
    rank_tolerance: float = DEFAULT_RANK_TOLERANCE

    @property
    def shape(self):
        return self.u_basis.shape[0], self.v_basis.shape[0]

    @property
    def rank(self) -> int:
        s = self.singular_values
        if s.size == 0 or s[0] == 0:
            return 0
        return int(np.count_nonzero(s > self.rank_tolerance * s[0]))

    def reconstruct(self) -> np.ndarray:
        return (self.u_basis * self.singular_values) @ self.v_basis.T


def svd(matrix, rank_tolerance: float = DEFAULT_RANK_TOLERANCE) -> SvdFactors:
    a = np.asarray(matrix, dtype=float)
    if a.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise SvdError("matrix contains non-finite entries")
    try:
        u, s, vt = np.linalg.svd(a, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise SvdError(f"SVD did not converge for a {a.shape[0]}x{a.shape[1]} "
                       f"matrix (max |a| = {np.abs(a).max():.3e})") from exc
    return SvdFactors(u, s, vt.T, rank_tolerance)


def pseudo_inverse_apply(factors: SvdFactors, rhs) -> np.ndarray:
    """Minimum-norm least-squares solution ``x = A^+ rhs``.

    ``rhs`` may be a vector of length n or an (n, k) matrix. An all-zero
    matrix yields a zero solution.
    """
    b = np.asarray(rhs, dtype=float)
    n, m = factors.shape
    if b.shape[0] != n:
        raise ValueError(f"rhs has {b.shape[0]} rows, matrix has {n}")
    s = factors.singular_values
    r = factors.rank
    if r == 0:
        return np.zeros((m,) + b.shape[1:])
    coeff = factors.u_basis[:, :r].T @ b
    if b.ndim == 1:
        coeff = coeff / s[:r]
    else:
        coeff = coeff / s[:r, None]
    return factors.v_basis[:, :r] @ coeff


def lstsq(matrix, rhs, rank_tolerance: float = DEFAULT_RANK_TOLERANCE) -> np.ndarray:
    """Shorthand for ``pseudo_inverse_apply(svd(matrix), rhs)``."""
    return pseudo_inverse_apply(svd(matrix, rank_tolerance), rhs)
