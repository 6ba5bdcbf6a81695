import numpy as np
import pytest

from crossover_dropout import matrix_kernels as mk
from crossover_dropout import sequences as sq
from crossover_dropout.errors import BudgetExceededError, ValidationError


def test_enumerate_small():
    assert sq.enumerate_sequences(2, 2) == [(1, 1), (1, 2), (2, 1), (2, 2)]


def test_enumerate_counts():
    assert len(sq.enumerate_sequences(4, 4)) == 256
    assert len(sq.enumerate_sequences(2, 6)) == 64


def test_enumerate_lexicographic_and_array_agree():
    seqs = sq.enumerate_sequences(3, 3)
    assert seqs == sorted(seqs)
    arr = sq.enumeration_array(3, 3)
    assert [tuple(int(v) + 1 for v in row) for row in arr] == seqs


def test_enumerate_budget_guard():
    with pytest.raises(BudgetExceededError, match="block"):
        sq.enumerate_sequences(10, 8, budget=10**6)


def test_incidence_example():
    T = sq.incidence((1, 2), 2)
    F = sq.carryover_incidence((1, 2), 2)
    np.testing.assert_array_equal(T, [[1, 0], [0, 1]])
    np.testing.assert_array_equal(F, [[0, 0], [1, 0]])


def test_incidence_row_sums_and_shift():
    rng = np.random.default_rng(0)
    for _ in range(100):
        t = int(rng.integers(2, 7))
        p = int(rng.integers(2, 8))
        s = tuple(rng.integers(1, t + 1, size=p).tolist())
        T = sq.incidence(s, t)
        F = sq.carryover_incidence(s, t)
        np.testing.assert_array_equal(T.sum(axis=1), np.ones(p))
        np.testing.assert_array_equal(F.sum(axis=1), np.concatenate([[0], np.ones(p - 1)]))
        np.testing.assert_array_equal(F[1:], T[:-1])
        # centered incidences have zero row sums
        np.testing.assert_allclose((T @ mk.centering(t)).sum(axis=1), 0.0, atol=1e-12)


def test_prefix_stats_hand_counts():
    f, xi, rho, f_last = sq.prefix_stats((1, 2, 2, 2, 1, 1), 6, 2)
    assert f == (3, 3) and xi == 18 and rho == 3 and f_last == 3


def test_prefix_stats_distinct():
    f, xi, rho, f_last = sq.prefix_stats((1, 2, 3, 4), 4, 4)
    assert f == (1, 1, 1, 1) and xi == 4 and rho == 0 and f_last == 1


def test_prefix_stats_cauchy_schwarz_bound():
    # xi >= k^2/t with equality iff counts are equal: brute force over all
    # three-treatment four-period sequences
    for s in sq.enumerate_sequences(3, 4):
        for k in range(1, 5):
            f, xi, _, _ = sq.prefix_stats(s, k, 3)
            assert xi >= k * k / 3 - 1e-12
            if xi == pytest.approx(k * k / 3):
                assert len(set(f)) == 1


def test_prefix_stats_range_check():
    with pytest.raises(ValidationError):
        sq.prefix_stats((1, 2), 3, 2)


def test_apply_permutation():
    assert sq.apply_permutation((1, 2, 2), (2, 1)) == (2, 1, 1)
    with pytest.raises(ValidationError):
        sq.apply_permutation((1, 2), (1, 1))


def test_block_sizes():
    assert sq.symmetric_block((1, 2, 3, 4), 4).size == 24
    assert sq.symmetric_block((1, 1, 1), 3).size == 3
    assert sq.symmetric_block((1, 2, 2, 2, 1, 1), 2).size == 2


def test_block_size_divides_factorial():
    import math

    rng = np.random.default_rng(4)
    for _ in range(100):
        t = int(rng.integers(2, 6))
        p = int(rng.integers(2, 7))
        s = tuple(rng.integers(1, t + 1, size=p).tolist())
        block = sq.symmetric_block(s, t)
        assert math.factorial(t) % block.size == 0
        assert block.representative == min(block.members())
        assert len(block.members()) == block.size


def test_orbits_partition_enumeration():
    t, p = 3, 3
    blocks = sq.group_into_blocks(sq.enumerate_sequences(t, p), t)
    assert sum(b.size for b in blocks) == t**p
    members = [s for b in blocks for s in b.members()]
    assert sorted(members) == sq.enumerate_sequences(t, p)


def test_canonical_form_examples():
    assert sq.canonical_form((2, 1, 1), 2) == (1, 2, 2)
    assert sq.canonical_form((3, 3, 1), 3) == (1, 1, 2)


def test_parse_and_format():
    assert sq.parse_sequence("122211", 2) == (1, 2, 2, 2, 1, 1)
    assert sq.format_sequence((1, 2, 2, 2, 1, 1), 2) == "122211"
    assert sq.parse_sequence("10,2,3", 10) == (10, 2, 3)
    assert sq.format_sequence((10, 2, 3), 10) == "10,2,3"
    with pytest.raises(ValidationError):
        sq.parse_sequence("125", 4)
    with pytest.raises(ValidationError):
        sq.parse_sequence("", 4)
