"""Pareto primitives for two-objective minimisation.

Everything here works on plain objective arrays of shape ``(n, n_obj)`` so the
same code ranks binary feature masks and integer view-combination chromosomes.
The :class:`Fitness` and :class:`RankedIndividual` records are thin wrappers for
callers that prefer named fields.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np


class Fitness(NamedTuple):
    """Objective pair: cross-validated error and number of selected features."""

    f1: float
    f2: int


@dataclass(frozen=True)
class RankedIndividual:
    fitness: Fitness
    front_rank: int
    crowding: float
    payload: object = None


def _as_objectives(population) -> np.ndarray:
    objs = np.asarray(population, dtype=float)
    if objs.ndim == 1:
        objs = objs.reshape(1, -1)
    return objs


def dominates(a, b) -> bool:
    """Return True when ``a`` Pareto-dominates ``b`` (minimisation).

    ``a`` dominates ``b`` if it is no worse in every objective and strictly
    better in at least one.

    Examples:
        >>> dominates((0.1, 3), (0.2, 5))
        True
        >>> dominates((0.1, 3), (0.1, 3))
        False
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return bool(np.all(a <= b) and np.any(a < b))


def dominance_matrix(objectives) -> np.ndarray:
    """Boolean ``(n, n)`` matrix with ``out[i, j]`` True iff i dominates j."""
    objs = _as_objectives(objectives)
    a = objs[:, None, :]
    b = objs[None, :, :]
    return np.all(a <= b, axis=2) & np.any(a < b, axis=2)


def fast_nondominated_sort(population) -> list[list[int]]:
    """Split a population into Pareto fronts.

    Uses the domination-count / dominated-set bookkeeping of NSGA-II.

    Args:
        population: Sequence of objective vectors (or :class:`Fitness`).

    Returns:
        List of fronts; each front is a sorted list of population indices.
        The first front is the non-dominated set.

    Raises:
        ValueError: If the population is empty.
    """
    objs = _as_objectives(population) if len(population) else np.empty((0, 2))
    n = objs.shape[0]
    if n == 0:
        raise ValueError("cannot sort an empty population")

    dom = dominance_matrix(objs)
    counts = dom.sum(axis=0)
    fronts: list[list[int]] = []
    current = np.flatnonzero(counts == 0)
    while current.size:
        fronts.append(current.tolist())
        counts = counts - dom[current].sum(axis=0)
        counts[current] = -1
        current = np.flatnonzero(counts == 0)
    return fronts


def crowding_distance(front) -> np.ndarray:
    """Crowding distance of every member of one front.

    Per objective, the members with the smallest and largest value get
    ``inf``; interior members accumulate the range-normalised gap between
    their two neighbours. An objective with zero range contributes nothing to
    interior members. A front that collapses to a single point in objective
    space is all ``inf``.

    Ties in the per-objective ordering are broken by index (stable sort).
    """
    objs = _as_objectives(front)
    n, m = objs.shape
    if n == 0:
        raise ValueError("cannot compute crowding of an empty front")
    if n <= 2:
        return np.full(n, np.inf)
    if np.all(objs == objs[0]):
        return np.full(n, np.inf)

    dist = np.zeros(n)
    for k in range(m):
        order = np.argsort(objs[:, k], kind="stable")
        vals = objs[order, k]
        dist[order[0]] = np.inf
        dist[order[-1]] = np.inf
        span = vals[-1] - vals[0]
        if span == 0 or not math.isfinite(span):
            continue
        gaps = np.abs(vals[2:] - vals[:-2]) / span
        dist[order[1:-1]] += gaps
    return dist


def rank_and_crowding(objectives) -> tuple[np.ndarray, np.ndarray]:
    """Front rank (1-based) and within-front crowding for every individual."""
    objs = _as_objectives(objectives)
    ranks = np.empty(objs.shape[0], dtype=int)
    crowd = np.empty(objs.shape[0])
    for r, front in enumerate(fast_nondominated_sort(objs), start=1):
        ranks[front] = r
        crowd[front] = crowding_distance(objs[front])
    return ranks, crowd


def rank_population(population: Sequence) -> list[RankedIndividual]:
    """Wrap a list of fitness pairs as ranked individuals."""
    ranks, crowd = rank_and_crowding(population)
    return [
        RankedIndividual(Fitness(float(f[0]), int(f[1])), int(r), float(c))
        for f, r, c in zip(population, ranks, crowd)
    ]


def crowded_better(rank_a, crowd_a, rank_b, crowd_b) -> int:
    """Crowded comparison: 1 if a wins, -1 if b wins, 0 on a full tie."""
    if rank_a != rank_b:
        return 1 if rank_a < rank_b else -1
    if crowd_a != crowd_b:
        return 1 if crowd_a > crowd_b else -1
    return 0


def tournament_index(ranks, crowding, rng: np.random.Generator) -> int:
    """Binary tournament on index arrays; returns the winner's index.

    Lower rank wins, then larger crowding; a complete tie is settled by a
    fair coin.
    """
    n = len(ranks)
    if n == 0:
        raise ValueError("tournament over an empty population")
    t, u = rng.integers(n, size=2)
    cmp = crowded_better(ranks[t], crowding[t], ranks[u], crowding[u])
    if cmp > 0:
        return int(t)
    if cmp < 0:
        return int(u)
    return int(t if rng.random() < 0.5 else u)


def tournament_select(population: Sequence[RankedIndividual], rng: np.random.Generator) -> RankedIndividual:
    """Binary crowded tournament over ranked individuals."""
    ranks = [ind.front_rank for ind in population]
    crowd = [ind.crowding for ind in population]
    return population[tournament_index(ranks, crowd, rng)]


def environmental_selection(objectives, target_size: int) -> np.ndarray:
    """Elitist NSGA-II truncation.

    Whole fronts are admitted in rank order; the front that would overflow is
    cut by descending crowding distance (computed within that front).

    Args:
        objectives: ``(n, n_obj)`` objective array of the combined population.
        target_size: Number of survivors.

    Returns:
        Indices of the survivors, best fronts first.
    """
    objs = _as_objectives(objectives)
    n = objs.shape[0]
    if target_size > n:
        raise ValueError(f"target_size {target_size} exceeds population size {n}")
    if target_size < 0:
        raise ValueError("target_size must be non-negative")

    chosen: list[int] = []
    for front in fast_nondominated_sort(objs):
        room = target_size - len(chosen)
        if room <= 0:
            break
        if len(front) <= room:
            chosen.extend(front)
        else:
            crowd = crowding_distance(objs[front])
            order = np.argsort(-crowd, kind="stable")
            chosen.extend(front[i] for i in order[:room])
            break
    return np.asarray(chosen, dtype=int)


def select_survivors(population: Sequence[RankedIndividual], target_size: int) -> list[RankedIndividual]:
    """:func:`environmental_selection` over ranked individuals, re-ranked."""
    objs = [(ind.fitness.f1, ind.fitness.f2) for ind in population]
    keep = environmental_selection(objs, target_size)
    kept = [population[i] for i in keep]
    ranks, crowd = rank_and_crowding([objs[i] for i in keep]) if len(keep) else ([], [])
    return [
        RankedIndividual(ind.fitness, int(r), float(c), ind.payload)
        for ind, r, c in zip(kept, ranks, crowd)
    ]
