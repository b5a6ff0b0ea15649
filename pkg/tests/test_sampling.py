import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from volterrom.sampling import ParameterBox, SamplePlan, lhs, lhs_unit, split, split_counts

BOX = ParameterBox((0.40, 0.85), (-2.0, 8.0))


def bins(values, lo, hi, n):
    return np.floor((np.asarray(values) - lo) / (hi - lo) * n).astype(int)


@pytest.mark.parametrize("n", [1, 4, 70])
def test_one_sample_per_bin(n):
    pts = lhs(BOX, n, seed=3)
    m = bins([p.mach for p in pts], 0.40, 0.85, n)
    a = bins([p.alpha0 for p in pts], -2.0, 8.0, n)
    assert sorted(m) == list(range(n)) and sorted(a) == list(range(n))
    assert all(BOX.contains(p) for p in pts)


@given(st.integers(1, 200), st.integers(1, 5), st.integers(0, 2**32 - 1))
def test_unit_lhs_stratified(n, dims, seed):
    u = lhs_unit(n, dims, np.random.default_rng(seed))
    for d in range(dims):
        assert sorted(np.floor(u[:, d] * n).astype(int)) == list(range(n))


def test_lhs_deterministic():
    assert lhs(BOX, 20, 5) == lhs(BOX, 20, 5)
    assert lhs(BOX, 20, 5) != lhs(BOX, 20, 6)


def test_lhs_rejects_zero():
    with pytest.raises(ValueError):
        lhs(BOX, 0)


def test_box_validation():
    with pytest.raises(ValueError):
        ParameterBox((0.8, 0.4), (0.0, 1.0))


@pytest.mark.parametrize("fractions,expected", [
    ((45 / 70, 15 / 70, 10 / 70), (45, 15, 10)),
    ((0.6, 0.2, 0.2), (42, 14, 14)),
    ((1.0, 0.0, 0.0), (70, 0, 0)),
])
def test_split_counts(fractions, expected):
    assert split_counts(70, fractions) == expected
    plan = split(lhs(BOX, 70, 0), fractions, seed=1)
    assert plan.counts() == expected


@pytest.mark.parametrize("fractions", [(0.5, 0.6, -0.1), (0.5, 0.2, 0.2), (1.0, 0.0)])
def test_split_rejects_bad_fractions(fractions):
    with pytest.raises(ValueError):
        split_counts(10, fractions)


@given(st.integers(1, 150), st.integers(0, 1000))
def test_split_is_partition(n, seed):
    pts = lhs(BOX, n, seed)
    plan = split(pts, seed=seed)
    idx = plan.indices("train") + plan.indices("test") + plan.indices("validation")
    assert sorted(idx) == list(range(n))
    assert split(pts, seed=seed).roles == plan.roles


def test_plan_csv_round_trip(tmp_path):
    plan = split(lhs(BOX, 12, 2), seed=4)
    path = tmp_path / "samples.csv"
    plan.write_csv(path)
    assert path.read_text().splitlines()[0] == "index,mach,alpha0,role"
    back = SamplePlan.read_csv(path)
    assert back.points == plan.points and back.roles == plan.roles


def test_plan_rejects_unknown_role():
    with pytest.raises(ValueError):
        SamplePlan(lhs(BOX, 1, 0), ["holdout"])
