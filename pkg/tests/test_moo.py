import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mmfsga.moo import (
    Fitness,
    RankedIndividual,
    crowding_distance,
    dominates,
    environmental_selection,
    fast_nondominated_sort,
    rank_and_crowding,
    rank_population,
    select_survivors,
    tournament_index,
    tournament_select,
)

objective = st.tuples(st.integers(0, 6).map(lambda v: v / 6), st.integers(1, 8))
populations = st.lists(objective, min_size=1, max_size=12)


def brute_force_fronts(points):
    """Peel off non-dominated sets by direct pairwise checks."""
    remaining = list(range(len(points)))
    fronts = []
    while remaining:
        front = [
            i for i in remaining
            if not any(dominates(points[j], points[i]) for j in remaining if j != i)
        ]
        fronts.append(sorted(front))
        remaining = [i for i in remaining if i not in front]
    return fronts


class TestDominates:
    def test_strictly_better(self):
        assert dominates((0.1, 3), (0.2, 5))

    def test_incomparable(self):
        assert not dominates((0.1, 5), (0.2, 3))
        assert not dominates((0.2, 3), (0.1, 5))

    def test_equal_is_not_dominance(self):
        assert not dominates((0.1, 3), (0.1, 3))

    def test_accepts_fitness_records(self):
        assert dominates(Fitness(0.1, 2), Fitness(0.1, 3))

    @given(objective)
    def test_irreflexive(self, a):
        assert not dominates(a, a)

    @given(objective, objective)
    def test_antisymmetric(self, a, b):
        assert not (dominates(a, b) and dominates(b, a))

    @given(objective, objective, objective)
    def test_transitive(self, a, b, c):
        if dominates(a, b) and dominates(b, c):
            assert dominates(a, c)


class TestNondominatedSort:
    def test_worked_example(self):
        fronts = fast_nondominated_sort([(1, 1), (2, 2), (1, 3), (3, 1)])
        assert fronts == [[0], [1, 2, 3]]

    def test_single(self):
        assert fast_nondominated_sort([(0.3, 4)]) == [[0]]

    def test_incomparable_points_share_a_front(self):
        pts = [(i, 10 - i) for i in range(6)]
        assert fast_nondominated_sort(pts) == [list(range(6))]

    def test_empty_raises(self):
        with pytest.raises(ValueError):
            fast_nondominated_sort([])

    @given(populations)
    def test_matches_brute_force(self, pts):
        assert fast_nondominated_sort(pts) == brute_force_fronts(pts)

    @given(populations)
    def test_partition(self, pts):
        flat = sorted(i for f in fast_nondominated_sort(pts) for i in f)
        assert flat == list(range(len(pts)))


class TestCrowding:
    def test_three_point_front(self):
        d = crowding_distance([(1, 3), (2, 2), (3, 1)])
        assert math.isinf(d[0]) and math.isinf(d[2])
        assert d[1] == pytest.approx(2.0)

    @pytest.mark.parametrize("n", [1, 2])
    def test_small_fronts_are_infinite(self, n):
        assert np.all(np.isinf(crowding_distance([(0.1 * i, i) for i in range(n)])))

    def test_identical_front_is_infinite(self):
        assert np.all(np.isinf(crowding_distance([(0.2, 4)] * 5)))

    def test_zero_range_objective_contributes_nothing(self):
        d = crowding_distance([(0.1, 3), (0.2, 3), (0.4, 3), (0.8, 3)])
        # objective 1 spans 0.7; objective 2 is flat
        assert d[1] == pytest.approx((0.4 - 0.1) / 0.7)
        assert d[2] == pytest.approx((0.8 - 0.2) / 0.7)

    def test_non_negative(self):
        rng = np.random.default_rng(0)
        pts = rng.random((20, 2))
        assert np.all(crowding_distance(pts) >= 0)

    @given(
        st.lists(
            st.tuples(st.integers(0, 20).map(lambda v: v / 20), st.integers(0, 50).map(float)),
            min_size=3,
            max_size=12,
        ),
        st.floats(0.1, 10), st.floats(-5, 5), st.floats(0.1, 10), st.floats(-5, 5),
    )
    def test_affine_invariance(self, pts, a1, b1, a2, b2):
        pts = np.array(pts)
        scaled = pts * [a1, a2] + [b1, b2]
        d0, d1 = crowding_distance(pts), crowding_distance(scaled)
        finite = np.isfinite(d0)
        assert np.array_equal(finite, np.isfinite(d1))
        np.testing.assert_allclose(d0[finite], d1[finite], rtol=1e-6, atol=1e-9)


class _Draws:
    """Stub generator returning a fixed contestant pair."""

    def __init__(self, t, u, coin=0.0):
        self.pair, self.coin = np.array([t, u]), coin

    def integers(self, n, size=None):
        return self.pair

    def random(self):
        return self.coin


class TestTournament:
    def test_lower_rank_wins(self):
        assert tournament_index([1, 2], [0.5, 9.0], _Draws(0, 1)) == 0
        assert tournament_index([1, 2], [0.5, 9.0], _Draws(1, 0)) == 0

    def test_larger_crowding_wins_within_rank(self):
        assert tournament_index([1, 1], [2.0, 0.5], _Draws(1, 0)) == 0

    def test_full_tie_uses_coin(self):
        assert tournament_index([1, 1], [1.0, 1.0], _Draws(0, 1, coin=0.2)) == 0
        assert tournament_index([1, 1], [1.0, 1.0], _Draws(0, 1, coin=0.7)) == 1

    def test_select_over_records(self):
        pop = [
            RankedIndividual(Fitness(0.1, 2), 1, 0.5),
            RankedIndividual(Fitness(0.3, 4), 2, 9.0),
        ]
        assert tournament_select(pop, _Draws(1, 0)).front_rank == 1

    def test_rank_one_share(self):
        rng = np.random.default_rng(0)
        wins = [tournament_index([1, 2], [0.5, 9.0], rng) for _ in range(2000)]
        # index 1 wins only when drawn twice (probability 1/4)
        assert 0.70 < np.mean(np.array(wins) == 0) < 0.80

    def test_crowding_breaks_rank_ties(self):
        rng = np.random.default_rng(2)
        wins = [tournament_index([1, 1], [2.0, 0.5], rng) for _ in range(2000)]
        assert 0.70 < np.mean(np.array(wins) == 0) < 0.80

    def test_full_tie_is_a_fair_coin(self):
        wins = []
        for seed in range(2000):
            rng = np.random.default_rng(seed)
            wins.append(tournament_index([1, 1], [1.0, 1.0], rng))
        share = np.mean(wins)
        # binomial sd at n=2000 is about 0.011
        assert abs(share - 0.5) < 0.04

    def test_empty(self):
        with pytest.raises(ValueError):
            tournament_index([], [], np.random.default_rng(0))


class TestEnvironmentalSelection:
    def test_exact_first_front(self):
        pts = [(i / 10, 10 - i) for i in range(10)] + [(0.9, 10)] * 4
        keep = environmental_selection(pts, 10)
        assert sorted(keep.tolist()) == list(range(10))

    def test_overflowing_front_cut_by_crowding(self):
        f1 = [(i / 10, 6 - i) for i in range(6)]
        f2 = [(0.05 + i / 10, 8 - i) for i in range(8)]
        pts = f1 + f2
        keep = environmental_selection(pts, 10)
        fronts = fast_nondominated_sort(pts)
        assert sorted(fronts[0]) == list(range(6))
        second = fronts[1]
        crowd = crowding_distance(np.array(pts)[second])
        order = np.argsort(-crowd, kind="stable")
        expected = set(range(6)) | {second[i] for i in order[:4]}
        assert set(keep.tolist()) == expected

    def test_identity_when_target_equals_size(self):
        rng = np.random.default_rng(3)
        pts = rng.random((15, 2))
        assert sorted(environmental_selection(pts, 15).tolist()) == list(range(15))

    def test_target_too_large(self):
        with pytest.raises(ValueError):
            environmental_selection([(0.1, 1)], 2)

    @given(populations, st.data())
    def test_front_preservation(self, pts, data):
        target = data.draw(st.integers(1, len(pts)))
        keep = set(environmental_selection(pts, target).tolist())
        assert len(keep) == target
        ranks, _ = rank_and_crowding(pts)
        kept_worst = max(ranks[list(keep)])
        dropped = [i for i in range(len(pts)) if i not in keep]
        assert all(ranks[i] >= kept_worst for i in dropped)


def test_rank_population_and_survivors():
    pop = rank_population([(0.1, 3), (0.2, 2), (0.3, 5), (0.05, 9)])
    assert [p.front_rank for p in pop] == [1, 1, 2, 1]
    kept = select_survivors(pop, 3)
    assert len(kept) == 3
    assert all(k.front_rank == 1 for k in kept)


def test_deterministic_given_seed():
    ranks, crowd = [1, 2, 1, 3], [1.0, 2.0, 1.0, 0.0]
    a = [tournament_index(ranks, crowd, np.random.default_rng(7)) for _ in range(5)]
    b = [tournament_index(ranks, crowd, np.random.default_rng(7)) for _ in range(5)]
    assert a == b
