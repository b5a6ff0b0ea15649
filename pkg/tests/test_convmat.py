import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from volterrom.convmat import build_input_matrix, convolve, stack_orders
from volterrom.signals import TimeGrid, TimeSignal, make_step


def brute_force(u, h, p):
    """Nested-sum diagonal convolution, y_i = sum_j h_j u_{i-j}^p."""
    n, m = len(u), len(h)
    y = [0.0] * n
    for i in range(n):
        for j in range(min(i, m - 1) + 1):
            y[i] += h[j] * u[i - j] ** p
    return np.array(y)


def sig(values):
    return TimeSignal(TimeGrid(1.0, len(values)), values)


def test_step_matrix_first_order():
    a = 1.7
    u = build_input_matrix(make_step(TimeGrid(1.0, 3), a), 3, 1)
    np.testing.assert_allclose(u.data, a * np.tril(np.ones((3, 3))), rtol=0, atol=0)


def test_step_matrix_second_order():
    a = 2.0
    u = build_input_matrix(make_step(TimeGrid(1.0, 3), a), 3, 2)
    np.testing.assert_array_equal(u.data, a ** 2 * np.tril(np.ones((3, 3))))


def test_small_explicit_matrix():
    u = build_input_matrix(sig([1.0, 2.0, 3.0]), 2, 1)
    np.testing.assert_array_equal(u.data, [[1, 0], [2, 1], [3, 2]])
    assert u.shape == (3, 2) and u.memory_depth == 2 and u.order == 1


def test_rejects_depth_beyond_length_and_bad_power():
    with pytest.raises(ValueError):
        build_input_matrix(sig([1.0, 2.0]), 3)
    with pytest.raises(ValueError):
        build_input_matrix(sig([1.0, 2.0]), 2, power=4)
    with pytest.raises(ValueError):
        build_input_matrix(sig([1.0, 2.0]), 0)


def test_convolve_picks_first_column():
    u = build_input_matrix(make_step(TimeGrid(1.0, 3), 2.0), 3)
    np.testing.assert_array_equal(convolve(u, [1.0, 0.0, 0.0]).values, [2, 2, 2])
    np.testing.assert_array_equal(convolve(u, np.zeros(3)).values, 0)


def test_convolve_dimension_mismatch():
    u = build_input_matrix(sig([1.0, 2.0, 3.0]), 2)
    with pytest.raises(ValueError):
        convolve(u, [1.0, 2.0, 3.0])


def test_matches_brute_force_m8():
    rng = np.random.default_rng(0)
    u, h = rng.normal(size=30), rng.normal(size=8)
    np.testing.assert_allclose(convolve(build_input_matrix(sig(u), 8), h).values,
                               brute_force(u, h, 1), rtol=1e-12, atol=1e-12)


def test_rows_have_at_most_i_plus_one_entries():
    u = build_input_matrix(sig(np.arange(1.0, 7.0)), 4)
    for i in range(4):
        assert np.count_nonzero(u.data[i]) == i + 1


@given(hnp.arrays(float, st.integers(4, 40), elements=st.floats(-3, 3)),
       st.integers(1, 4), st.sampled_from([2, 3]))
def test_power_commutes_with_assembly(u, m, p):
    m = min(m, len(u))
    np.testing.assert_allclose(build_input_matrix(sig(u), m, p).data,
                               build_input_matrix(sig(u), m, 1).data ** p, rtol=1e-14, atol=0)


@given(hnp.arrays(float, 20, elements=st.floats(-2, 2)),
       hnp.arrays(float, 6, elements=st.floats(-2, 2)),
       hnp.arrays(float, 6, elements=st.floats(-2, 2)),
       st.floats(-3, 3), st.floats(-3, 3))
def test_convolve_is_linear_in_kernel(u, h1, h2, a, b):
    mat = build_input_matrix(sig(u), 6)
    lhs = convolve(mat, a * h1 + b * h2).values
    rhs = a * convolve(mat, h1).values + b * convolve(mat, h2).values
    np.testing.assert_allclose(lhs, rhs, rtol=1e-12, atol=1e-12)


@given(st.integers(0, 10_000))
def test_matrix_matches_nested_sums_up_to_256(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 257))
    m = int(rng.integers(1, n + 1))
    u, h = rng.normal(size=n), rng.normal(size=m)
    ref = brute_force(u, h, 1)
    got = convolve(build_input_matrix(sig(u), m), h).values
    assert np.linalg.norm(got - ref) <= 1e-12 * max(np.linalg.norm(ref), 1.0)


def test_stack_orders():
    mats = stack_orders(sig([1.0, -2.0, 3.0]), 2)
    assert [m.order for m in mats] == [1, 2, 3]
    np.testing.assert_array_equal(mats[2].data, [[1, 0], [-8, 1], [27, -8]])
