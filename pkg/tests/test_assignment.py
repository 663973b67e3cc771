import itertools

import numpy as np
import pytest

from src.assignment import FORBIDDEN, filter_matches, solve_assignment, total_affinity
from src.core_model import InvalidInputError


def brute_force_best(m):
    """Máxima similitud total sobre todas las funciones inyectivas filas -> columnas"""
    rows, cols = m.shape
    best = 0.0
    if rows <= cols:
        for perm in itertools.permutations(range(cols), rows):
            best = max(best, sum(m[r, c] for r, c in enumerate(perm)))
    else:
        for perm in itertools.permutations(range(rows), cols):
            best = max(best, sum(m[r, c] for c, r in enumerate(perm)))
    return best


class TestSolveAssignment:
    def test_single_cell(self):
        assert solve_assignment(np.array([[0.9]])) == [(0, 0)]

    def test_square_example(self):
        m = np.array([[0.9, 0.2], [0.3, 0.8]])
        matches = solve_assignment(m)
        assert sorted(matches) == [(0, 0), (1, 1)]
        assert total_affinity(matches, m) == pytest.approx(1.7)

    def test_rectangular_example(self):
        m = np.array([[0.1, 0.9, 0.5], [0.8, 0.7, 0.2]])
        matches = solve_assignment(m)
        assert sorted(matches) == [(0, 1), (1, 0)]
        assert total_affinity(matches, m) == pytest.approx(1.7)

    @pytest.mark.parametrize("shape", [(0, 0), (0, 3), (4, 0)])
    def test_empty(self, shape):
        assert solve_assignment(np.zeros(shape)) == []

    def test_matches_brute_force(self):
        rng = np.random.default_rng(7)
        for _ in range(1000):
            rows, cols = rng.integers(1, 8, size=2)
            m = rng.uniform(size=(rows, cols))
            matches = solve_assignment(m)
            assert len(matches) == min(rows, cols)
            assert len({r for r, _ in matches}) == len(matches)
            assert len({c for _, c in matches}) == len(matches)
            assert total_affinity(matches, m) == pytest.approx(brute_force_best(m), abs=1e-12)

    def test_row_permutation(self, rng):
        m = rng.uniform(size=(5, 6))
        perm = rng.permutation(5)
        base = total_affinity(solve_assignment(m), m)
        permuted = m[perm]
        assert total_affinity(solve_assignment(permuted), permuted) == pytest.approx(base, abs=1e-12)

    def test_forbidden_row_left_unmatched(self):
        m = np.array([[FORBIDDEN, FORBIDDEN], [0.5, 0.4]])
        assert solve_assignment(m) == [(1, 0)]

    def test_forbidden_never_trades_a_legal_pair(self):
        # Con -1 literal {A-y, B-x} (total 0) empataría con {A-x} (1 - 1 = 0)
        m = np.array([[1.0, 0.0], [0.0, FORBIDDEN]])
        matches = solve_assignment(m)
        assert (0, 0) in matches
        assert (1, 1) not in matches

    def test_forbidden_matches_legal_brute_force(self):
        rng = np.random.default_rng(11)
        for _ in range(500):
            rows, cols = rng.integers(1, 7, size=2)
            m = rng.uniform(size=(rows, cols))
            m[rng.uniform(size=(rows, cols)) < 0.4] = FORBIDDEN
            matches = solve_assignment(m)
            assert all(m[r, c] != FORBIDDEN for r, c in matches)
            legal_only = np.where(m == FORBIDDEN, 0.0, m)
            assert total_affinity(matches, m) == pytest.approx(brute_force_best(legal_only), abs=1e-12)

    def test_forbidden_near_tie_is_exact(self):
        # {A-y} vale 0.5 + 2e-9 y {A-x, B-y} vale 0.5 + 1.5e-9
        m = np.array([[0.5, 0.5 + 2e-9], [FORBIDDEN, 1.5e-9]])
        matches = solve_assignment(m)
        assert matches == [(0, 1)]
        assert total_affinity(matches, m) == pytest.approx(0.5 + 2e-9, abs=1e-13)

    def test_zero_legal_pair_kept_over_forbidden(self):
        m = np.array([[0.0, FORBIDDEN], [FORBIDDEN, FORBIDDEN]])
        assert solve_assignment(m) == [(0, 0)]

    def test_invalid_values_rejected(self):
        with pytest.raises(InvalidInputError):
            solve_assignment(np.array([[1.5]]))
        with pytest.raises(InvalidInputError):
            solve_assignment(np.array([[np.nan]]))
        with pytest.raises(InvalidInputError):
            solve_assignment(np.array([0.5, 0.2]))


class TestFilterMatches:
    def test_kept_above_threshold(self):
        kept, rows, cols = filter_matches([(0, 0)], np.array([[0.9]]), 0.85)
        assert kept == [(0, 0)] and rows == [] and cols == []

    def test_demoted_below_threshold(self):
        kept, rows, cols = filter_matches([(0, 0)], np.array([[0.84]]), 0.85)
        assert kept == [] and rows == [0] and cols == [0]

    def test_threshold_zero_keeps_all(self):
        m = np.array([[0.0, 0.3], [0.1, 0.0]])
        kept, _, _ = filter_matches([(0, 1), (1, 0)], m, 0.0)
        assert kept == [(0, 1), (1, 0)]

    def test_equal_to_threshold_is_kept(self):
        kept, _, _ = filter_matches([(0, 0)], np.array([[0.85]]), 0.85)
        assert kept == [(0, 0)]
