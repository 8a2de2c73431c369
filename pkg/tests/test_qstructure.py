import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qtrack.errors import DimensionError, StructureViolation
from qtrack.qstructure import (
    H_to_weights,
    Layout,
    build_pattern,
    count_weights_full,
    count_weights_naive,
    count_weights_pattern,
    count_weights_sparse,
    full_pattern,
    phi,
    structural_residual,
    weights_to_H,
)


def diag_q(n, q):
    return np.diag([1.0] * (n - q) + [0.0] * q)


def test_published_counts():
    assert count_weights_naive(2, 1, 10) == 325
    assert count_weights_naive(6, 1, 10) == 2701
    assert count_weights_full(2, 1, 10) == 247
    assert count_weights_full(6, 1, 10) == 2011
    assert count_weights_full(1, 1, 1) == 8
    assert count_weights_sparse(2, 1, 10, 1) == 84
    assert count_weights_sparse(6, 1, 10, 5) == 146
    assert count_weights_sparse(2, 1, 10, 2) == 6


def test_sparse_count_domain():
    with pytest.raises(ValueError):
        count_weights_sparse(2, 1, 10, 3)


def test_sparse_count_is_integral_on_grid():
    # every term carries an even factor, so the rational check never fires
    for n in range(1, 8):
        for m in range(1, 4):
            for N in range(1, 13):
                for q in range(n + 1):
                    assert isinstance(count_weights_sparse(n, m, N, q), int)


def test_system_patterns(sys1, sys2):
    assert len(sys1.pattern) == 84 and sys1.pattern.q == 1
    assert len(sys2.pattern) == 146 and sys2.pattern.q == 5


def test_zero_q_pattern_keeps_only_x_u_blocks():
    pat = build_pattern(2, 1, 10, np.zeros((2, 2)))
    assert len(pat) == 6
    assert max(pat.cols) < 3


@pytest.mark.parametrize("n", [1, 2, 3, 4])
@pytest.mark.parametrize("m", [1, 2])
@pytest.mark.parametrize("N", [1, 2, 3, 6])
def test_pattern_size(n, m, N):
    for q in range(n + 1):
        L = len(build_pattern(n, m, N, diag_q(n, q)))
        assert L == count_weights_pattern(n, m, N, q)
        if q == 0:
            assert L == count_weights_full(n, m, N)
        if n - q == m:
            assert L == count_weights_sparse(n, m, N, q)


def test_q0_small_case_excludes_structural_zeros():
    lay = Layout(1, 1, 2)
    pat = build_pattern(1, 1, 2, [[1.0]])
    mask = pat.mask()
    assert not mask[lay.u, lay.r(0)].any()
    assert not mask[lay.r(0), lay.r(1)].any() and not mask[lay.r(0), lay.r(2)].any()
    assert not mask[lay.r(1), lay.r(2)].any()
    assert mask[lay.r(2), lay.r(2)].all()


def test_entry_order_is_row_major_upper_triangle(sys1):
    pairs = sys1.pattern.free_entries
    assert pairs == sorted(pairs)
    assert all(i <= j for i, j in pairs)
    assert sys1.pattern.entry_names()[0] == "H[0,0]"


def test_phi_examples():
    pat = full_pattern(3)
    assert not np.any(phi(np.zeros(3), pat))
    f = phi(np.array([2.0, 3.0, 5.0]), pat)
    assert f[0] == 2.0  # 0.5 * 2^2
    assert f[1] == 6.0  # 2 * 3


def test_phi_dimension_check(sys1):
    with pytest.raises(DimensionError):
        phi(np.zeros(7), sys1.pattern)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_quadratic_form_identity(seed):
    rng = np.random.default_rng(seed)
    n, m, N = rng.integers(1, 4), rng.integers(1, 3), rng.integers(1, 5)
    Q = diag_q(n, rng.integers(0, n + 1))
    pat = build_pattern(n, m, N, Q)
    w = rng.normal(size=len(pat))
    z = rng.normal(size=pat.dim)
    H = weights_to_H(w, pat)
    lhs, rhs = w @ phi(z, pat), 0.5 * z @ H @ z
    assert abs(lhs - rhs) <= 1e-12 * max(1.0, abs(rhs), np.abs(w).sum() * np.abs(z).max() ** 2)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_weight_round_trip(seed):
    rng = np.random.default_rng(seed)
    pat = build_pattern(2, 1, 4, np.diag([1.0, 0.0]))
    w = rng.normal(size=len(pat))
    H = weights_to_H(w, pat)
    np.testing.assert_array_equal(H, H.T)
    np.testing.assert_array_equal(H_to_weights(H, pat), w)
    assert structural_residual(H, pat) == 0


def test_zero_weights_give_zero_H(sys1):
    assert not np.any(weights_to_H(np.zeros(84), sys1.pattern))


def test_oracle_round_trip(sys1):
    H = weights_to_H(sys1.w_star, sys1.pattern)
    assert np.abs(H - sys1.H).max() <= 1e-12 * np.abs(sys1.H).max()


def test_structure_violation(sys1):
    H = sys1.H.copy()
    lay = Layout(2, 1, 10)
    H[lay.u, lay.r(0)] = H[lay.r(0), lay.u] = 1e-3 * np.abs(H).max()
    with pytest.raises(StructureViolation):
        H_to_weights(H, sys1.pattern)


def test_weights_length_check(sys1):
    with pytest.raises(DimensionError):
        weights_to_H(np.zeros(83), sys1.pattern)


def test_layout_blocks():
    lay = Layout(2, 1, 10)
    assert lay.dim == 25
    assert lay.block_of(0) == ("x", 0, 0)
    assert lay.block_of(2) == ("u", 0, 0)
    assert lay.block_of(3) == ("r", 0, 0)
    assert lay.block_of(24) == ("r", 10, 1)
    z = lay.augment([1, 2], [3], np.arange(22).reshape(11, 2))
    assert z[lay.r(1)].tolist() == [2, 3]
