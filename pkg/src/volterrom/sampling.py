"""Latin hypercube sampling of the (Mach, incidence) box and subset splits."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .synthaero import ParameterPoint

ROLES = ("train", "test", "validation")


@dataclass(frozen=True)
class ParameterBox:
    mach_range: tuple = (0.40, 0.85)
    alpha0_range: tuple = (-2.0, 8.0)

    def __post_init__(self):
        for name, (lo, hi) in (("mach", self.mach_range), ("alpha0", self.alpha0_range)):
            if not lo < hi:
                raise ValueError(f"{name} range must satisfy min < max, got {(lo, hi)}")

    @property
    def bounds(self) -> np.ndarray:
        return np.array([self.mach_range, self.alpha0_range], dtype=float)

    def contains(self, point: ParameterPoint) -> bool:
        return (self.mach_range[0] <= point.mach <= self.mach_range[1]
                and self.alpha0_range[0] <= point.alpha0 <= self.alpha0_range[1])


def lhs_unit(n: int, dims: int, rng: np.random.Generator) -> np.ndarray:
    """Plain Latin hypercube on the unit cube: one sample per bin per axis,
    uniform within the bin, bins paired by independent random permutations."""
    if n < 1:
        raise ValueError(f"need at least one sample, got {n}")
    u = np.empty((n, dims))
    for d in range(dims):
        u[:, d] = (rng.permutation(n) + rng.random(n)) / n
    return u


def lhs(box: ParameterBox, n: int, seed: int = 0) -> list[ParameterPoint]:
    rng = np.random.default_rng(seed)
    lo, hi = box.bounds[:, 0], box.bounds[:, 1]
    pts = lo + lhs_unit(n, 2, rng) * (hi - lo)
    return [ParameterPoint(float(m), float(a)) for m, a in pts]


def split_counts(n: int, fractions) -> tuple[int, int, int]:
    """Subset sizes for ``fractions``; rounding remainders go to training."""
    f = np.asarray(fractions, dtype=float)
    if f.shape != (3,):
        raise ValueError("fractions must be (train, test, validation)")
    if np.any(f < 0):
        raise ValueError(f"fractions must be non-negative, got {tuple(f)}")
    if abs(f.sum() - 1.0) > 1e-9:
        raise ValueError(f"fractions must sum to 1, got {f.sum()}")
    n_test = int(np.floor(f[1] * n + 1e-9))
    n_val = int(np.floor(f[2] * n + 1e-9))
    return n - n_test - n_val, n_test, n_val


@dataclass
class SamplePlan:
    points: list
    roles: list
    seed: int = 0

    def __post_init__(self):
        if len(self.points) != len(self.roles):
            raise ValueError("points and roles must have the same length")
        bad = set(self.roles) - set(ROLES)
        if bad:
            raise ValueError(f"unknown roles {sorted(bad)}")

    def indices(self, role: str) -> list[int]:
        return [i for i, r in enumerate(self.roles) if r == role]

    def subset(self, role: str) -> list[ParameterPoint]:
        return [self.points[i] for i in self.indices(role)]

    def counts(self) -> tuple[int, int, int]:
        return tuple(self.roles.count(r) for r in ROLES)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["index", "mach", "alpha0", "role"])
        for i, (p, r) in enumerate(zip(self.points, self.roles)):
            w.writerow([i, repr(p.mach), repr(p.alpha0), r])
        return buf.getvalue()

    def write_csv(self, path) -> None:
        Path(path).write_text(self.to_csv(), newline="\n")

    @classmethod
    def read_csv(cls, path, seed: int = 0) -> "SamplePlan":
        text = Path(path).read_text().replace("\r\n", "\n")
        rows = list(csv.DictReader(io.StringIO(text)))
        rows.sort(key=lambda r: int(r["index"]))
        pts = [ParameterPoint(float(r["mach"]), float(r["alpha0"])) for r in rows]
        return cls(pts, [r["role"] for r in rows], seed)


def split(points, fractions=(45 / 70, 15 / 70, 10 / 70), seed: int = 0) -> SamplePlan:
    """Seeded random partition into train/test/validation subsets."""
    points = list(points)
    n_train, n_test, n_val = split_counts(len(points), fractions)
    perm = np.random.default_rng(seed).permutation(len(points))
    roles = [""] * len(points)
    for k, i in enumerate(perm):
        roles[i] = "train" if k < n_train else "test" if k < n_train + n_test else "validation"
    return SamplePlan(points, roles, seed)
