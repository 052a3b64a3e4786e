"""Genetic operators for the two chromosome encodings.

Binary chromosomes are boolean numpy vectors (one gene per feature of a view).
Integer chromosomes hold one gene per view, each in ``0..5``, indexing that
view's candidate masks. Every operator returns a new array and leaves its
inputs untouched.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

N_CANDIDATES = 6


@dataclass(frozen=True)
class VariationConfig:
    """Probabilities driving :func:`crossover_or_mutation`.

    ``per_gene_flip_prob=None`` means ``1 / chromosome_length``.
    """

    crossover_prob: float = 0.2
    mutation_prob: float = 0.1
    per_gene_flip_prob: Optional[float] = None
    per_gene_shuffle_prob: float = 0.1
    binomial_mix_prob: float = 0.5

    def __post_init__(self):
        for name in ("crossover_prob", "mutation_prob"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {value}")
        if self.crossover_prob + self.mutation_prob > 1.0 + 1e-12:
            raise ValueError("crossover_prob + mutation_prob must not exceed 1")
        if self.per_gene_flip_prob is not None and not 0.0 <= self.per_gene_flip_prob <= 1.0:
            raise ValueError("per_gene_flip_prob must lie in [0, 1]")
        if not 0.0 <= self.per_gene_shuffle_prob <= 1.0:
            raise ValueError("per_gene_shuffle_prob must lie in [0, 1]")
        if not 0.0 < self.binomial_mix_prob < 1.0:
            raise ValueError("binomial_mix_prob must lie in (0, 1)")


def _check_pair(p1: np.ndarray, p2: np.ndarray) -> None:
    if p1.shape != p2.shape:
        raise ValueError(f"parent lengths differ: {p1.shape} vs {p2.shape}")


def binomial_crossover(p1, p2, rng: np.random.Generator, mix_prob: float = 0.5) -> np.ndarray:
    """Gene-wise mix: each gene comes from ``p2`` with probability ``mix_prob``."""
    p1 = np.asarray(p1)
    p2 = np.asarray(p2)
    _check_pair(p1, p2)
    take = rng.random(p1.shape[0]) < mix_prob
    return np.where(take, p2, p1)


def bitflip_mutation(p, rng: np.random.Generator, flip_prob: Optional[float] = None) -> np.ndarray:
    """Flip each gene independently with ``flip_prob`` (default ``1/len``)."""
    p = np.asarray(p, dtype=bool)
    if flip_prob is None:
        flip_prob = 1.0 / max(p.shape[0], 1)
    flips = rng.random(p.shape[0]) < flip_prob
    return p ^ flips


def two_point_child(p1: np.ndarray, p2: np.ndarray, a: int, b: int) -> np.ndarray:
    """Child of ``p1`` with the slice ``[a, b)`` taken from ``p2``."""
    child = np.array(p1, copy=True)
    child[a:b] = p2[a:b]
    return child


def two_point_crossover(p1, p2, rng: np.random.Generator) -> np.ndarray:
    """Two distinct cut points drawn uniformly from ``1..n``; the segment
    between them is copied from ``p2``."""
    p1 = np.asarray(p1)
    p2 = np.asarray(p2)
    _check_pair(p1, p2)
    n = p1.shape[0]
    if n < 2:
        raise ValueError("two-point crossover needs chromosomes of length >= 2")
    a, b = np.sort(rng.choice(np.arange(1, n + 1), size=2, replace=False))
    return two_point_child(p1, p2, int(a), int(b))


def shuffle_mutation(p, rng: np.random.Generator, indpb: float = 0.1) -> np.ndarray:
    """Walk the genes; with probability ``indpb`` swap gene i with another
    uniformly chosen position. Preserves the gene multiset."""
    child = np.array(p, copy=True)
    n = child.shape[0]
    if n < 2:
        return child
    for i in range(n):
        if rng.random() < indpb:
            j = int(rng.integers(n - 1))
            if j >= i:
                j += 1
            child[i], child[j] = child[j], child[i]
    return child


def random_index(n: int) -> Callable[[np.random.Generator], int]:
    """Uniform parent picker over ``n`` individuals."""

    def pick(rng: np.random.Generator) -> int:
        return int(rng.integers(n))

    return pick


def crossover_or_mutation(
    parents: np.ndarray,
    cfg: VariationConfig,
    rng: np.random.Generator,
    crossover: Optional[Callable[[np.ndarray, np.ndarray, np.random.Generator], np.ndarray]] = None,
    mutation: Optional[Callable[[np.ndarray, np.random.Generator], np.ndarray]] = None,
    select: Optional[Callable[[np.random.Generator], int]] = None,
    repair: Optional[Callable[[np.ndarray, np.random.Generator], np.ndarray]] = None,
) -> np.ndarray:
    """Grow an offspring set the size of ``parents`` and return both stacked.

    For every offspring a single uniform draw ``r`` picks exactly one branch:
    crossover when ``r < crossover_prob`` (only the first child is kept),
    mutation when ``r < crossover_prob + mutation_prob``, else a plain copy of
    a parent.

    Args:
        parents: ``(pop, length)`` array, one chromosome per row.
        cfg: Branch probabilities and operator rates.
        rng: Random generator.
        crossover: ``(p1, p2, rng) -> child``. Defaults to binomial crossover
            for boolean populations and two-point crossover otherwise.
        mutation: ``(p, rng) -> child``. Defaults to bit-flip for boolean
            populations and shuffle mutation otherwise.
        select: ``rng -> row index`` used to pick parents; uniform when None.
        repair: Optional ``(child, rng) -> child`` applied to every offspring.

    Returns:
        ``(2 * pop, length)`` array: the parents (unchanged) followed by the
        offspring.
    """
    parents = np.asarray(parents)
    if parents.ndim != 2 or parents.shape[0] == 0:
        raise ValueError("parent population must be a non-empty 2-D array")
    ops = binary_operators(cfg) if parents.dtype == bool else integer_operators(cfg)
    crossover = crossover or ops[0]
    mutation = mutation or ops[1]
    pick = select if select is not None else random_index(parents.shape[0])
    p_cx = cfg.crossover_prob
    p_cx_mut = cfg.crossover_prob + cfg.mutation_prob

    offspring = np.empty_like(parents)
    for i in range(parents.shape[0]):
        r = rng.random()
        if r < p_cx:
            child = crossover(parents[pick(rng)], parents[pick(rng)], rng)
        elif r < p_cx_mut:
            child = mutation(parents[pick(rng)], rng)
        else:
            child = parents[pick(rng)].copy()
        if repair is not None:
            child = repair(child, rng)
        offspring[i] = child
    return np.vstack([parents, offspring])


def binary_operators(cfg: VariationConfig):
    """(crossover, mutation) closures for binary chromosomes under ``cfg``."""

    def cx(p1, p2, rng):
        return binomial_crossover(p1, p2, rng, cfg.binomial_mix_prob)

    def mut(p, rng):
        return bitflip_mutation(p, rng, cfg.per_gene_flip_prob)

    return cx, mut


def integer_operators(cfg: VariationConfig):
    """(crossover, mutation) closures for integer chromosomes under ``cfg``."""

    def mut(p, rng):
        return shuffle_mutation(p, rng, cfg.per_gene_shuffle_prob)

    return two_point_crossover, mut
