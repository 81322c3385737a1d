import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import brute_assignment
from trackcl.assignment import assignment_cost, hungarian

INF = math.inf


def test_forced_diagonal():
    pairs = hungarian([[0, INF], [INF, 0]])
    assert pairs == [(0, 0), (1, 1)]
    assert assignment_cost([[0, INF], [INF, 0]], pairs) == 0


def test_two_by_two():
    c = [[1, 2], [2, 1]]
    assert hungarian(c) == [(0, 0), (1, 1)]
    assert assignment_cost(c, hungarian(c)) == 2


def test_empty_and_all_infeasible():
    assert hungarian(np.zeros((0, 3))) == []
    assert hungarian(np.full((2, 2), INF)) == []


def test_rectangular():
    c = np.array([[5.0, 1.0, 9.0]])
    assert hungarian(c) == [(0, 1)]
    assert hungarian(c.T) == [(1, 0)]


def test_infeasible_rows_left_unassigned():
    c = np.array([[1.0, INF], [INF, INF], [INF, 3.0]])
    assert hungarian(c) == [(0, 0), (2, 1)]


def test_prefers_more_pairs_over_lower_cost():
    # a single cheap pair (0,0) would block row 1; two pairs cost more but are preferred
    c = np.array([[0.0, 10.0], [1.0, INF]])
    assert hungarian(c) == [(0, 1), (1, 0)]


@pytest.mark.parametrize("seed", range(20))
def test_six_by_six_against_all_720_permutations(seed):
    c = np.random.default_rng(seed).uniform(0, 1, (6, 6))
    count, best = brute_assignment(c)
    pairs = hungarian(c)
    assert len(pairs) == count == 6
    assert assignment_cost(c, pairs) == best


@settings(max_examples=150, deadline=None)
@given(st.integers(1, 7), st.integers(1, 7), st.integers(0, 2**32 - 1), st.sampled_from([0.0, 0.3]), st.booleans())
def test_matches_brute_force(n, m, seed, p_inf, integer):
    rng = np.random.default_rng(seed)
    c = rng.integers(0, 5, (n, m)).astype(float) if integer else rng.uniform(-1, 1, (n, m))
    c[rng.random((n, m)) < p_inf] = INF
    count, best = brute_assignment(c)
    pairs = hungarian(c)
    assert len({r for r, _ in pairs}) == len(pairs) == len({cc for _, cc in pairs})
    assert len(pairs) == count
    assert assignment_cost(c, pairs) == best


def test_deterministic():
    c = np.ones((4, 4))
    assert hungarian(c) == hungarian(c.copy())
