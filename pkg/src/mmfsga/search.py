"""Two-stage multiniche genetic search over multi-view feature masks.

Stage one (IV-FS) evolves binary feature masks separately for every view and
condenses each niche's run into six candidate masks per view. Stage two
(BV-FS) evolves integer chromosomes that pick one candidate per view (or drop
the view) and scores the decoded global mask. Both stages rank with NSGA-II on
(cross-validated error, feature count).

Niches exchange their best binary individuals along a ring every few
generations during stage one. All randomness comes from per-niche streams
derived from the master seed, so results do not depend on thread scheduling.
"""

from __future__ import annotations

import logging
import math
import os
import queue
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np

from .evaluation import CVFitness, FoldPlan, make_fold_plan
from .moo import environmental_selection, rank_and_crowding, tournament_index
from .variation import (
    N_CANDIDATES,
    VariationConfig,
    binary_operators,
    crossover_or_mutation,
    integer_operators,
    shuffle_mutation,
)

logger = logging.getLogger(__name__)

STAGE_IVFS = 1
STAGE_BVFS = 2
STAGE_INIT = 0


class NicheError(RuntimeError):
    """A niche worker failed; carries the niche id and the phase."""

    def __init__(self, niche_id: int, phase: str, cause: BaseException):
        super().__init__(f"niche {niche_id} failed during {phase}: {cause!r}")
        self.niche_id = niche_id
        self.phase = phase
        self.cause = cause


# --------------------------------------------------------------------------
# Configuration


@dataclass(frozen=True)
class NicheConfig:
    """Hyperparameters of the two-stage search.

    Population sizes and generation counts left as ``None`` follow the
    size-dependent schedules of :meth:`ivfs_schedule` and
    :meth:`bvfs_schedule`.

    Attributes:
        n_niches: Number of independently evolving niches.
        ivfs_pop: Binary population size (None: 100 below 100 features, else 200).
        ivfs_gen: Binary generations (None: 500 below 100 features, else 1000).
        bvfs_pop: Integer population size (None: 100 above five views, else 50).
        bvfs_gen: Integer generations (None: 600 above five views, else 300).
        migration_interval: Generations between migrations (None: 5% of
            ``ivfs_gen``, at least 1).
        migration_fraction: Share of each population sent along the ring.
        ivfs_variation: Operator probabilities for binary chromosomes.
        bvfs_variation: Operator probabilities for integer chromosomes.
        similarity_threshold: Mean Jaccard similarity that triggers
            duplicate replacement.
        repair_prob: Crossover and mutation probability used for replacement.
        init_density: Per-gene selection probability of the initial binary
            population. None draws one density per individual, log-uniformly
            between ``1/k_v`` and 0.5.
        n_folds: Cross-validation folds of the fitness.
        seed: Master seed.
        threads: Cap on concurrent niche workers (None: ``MMFS_THREADS`` or
            the CPU count).
    """

    n_niches: int = 6
    ivfs_pop: Optional[int] = None
    ivfs_gen: Optional[int] = None
    bvfs_pop: Optional[int] = None
    bvfs_gen: Optional[int] = None
    migration_interval: Optional[int] = None
    migration_fraction: float = 0.25
    ivfs_variation: VariationConfig = field(default_factory=lambda: VariationConfig(0.2, 0.1))
    bvfs_variation: VariationConfig = field(default_factory=lambda: VariationConfig(0.5, 0.1))
    similarity_threshold: float = 0.8
    repair_prob: float = 0.9
    init_density: Optional[float] = None
    n_folds: int = 10
    seed: int = 0
    threads: Optional[int] = None

    def __post_init__(self):
        if self.n_niches < 1:
            raise ValueError("n_niches must be at least 1")
        if not 0.0 < self.migration_fraction < 1.0:
            raise ValueError("migration_fraction must lie in (0, 1)")
        if not 0.0 < self.similarity_threshold < 1.0:
            raise ValueError("similarity_threshold must lie in (0, 1)")
        if not 0.0 < self.repair_prob < 1.0:
            raise ValueError("repair_prob must lie in (0, 1)")
        if self.init_density is not None and not 0.0 < self.init_density <= 1.0:
            raise ValueError("init_density must lie in (0, 1]")
        for name in ("ivfs_pop", "ivfs_gen", "bvfs_pop", "bvfs_gen", "migration_interval", "threads"):
            value = getattr(self, name)
            if value is not None and value < 1:
                raise ValueError(f"{name} must be a positive integer")
        for name in ("ivfs_pop", "bvfs_pop"):
            value = getattr(self, name)
            if value is not None and value < 2:
                raise ValueError(f"{name} must be at least 2")
        if self.n_folds < 2:
            raise ValueError("n_folds must be at least 2")

    @classmethod
    def paper(cls, seed: int = 0, **overrides) -> "NicheConfig":
        """Full budget: six niches and the size-dependent schedules."""
        return cls(seed=seed, **overrides)

    @classmethod
    def desk(cls, seed: int = 0, **overrides) -> "NicheConfig":
        """Reduced budget for laptops and CI: 2 niches, pop 50, 100 generations."""
        base = dict(n_niches=2, ivfs_pop=50, ivfs_gen=100, bvfs_pop=50, bvfs_gen=100)
        base.update(overrides)
        return cls(seed=seed, **base)

    @classmethod
    def preset(cls, name: str, seed: int = 0, **overrides) -> "NicheConfig":
        if name == "paper":
            return cls.paper(seed, **overrides)
        if name == "desk":
            return cls.desk(seed, **overrides)
        raise ValueError(f"unknown preset {name!r}; use 'paper' or 'desk'")

    def ivfs_schedule(self, n_features: int) -> tuple[int, int]:
        """(population, generations) for a view with ``n_features`` columns."""
        small = n_features < 100
        pop = self.ivfs_pop or (100 if small else 200)
        gen = self.ivfs_gen or (500 if small else 1000)
        return pop, gen

    def bvfs_schedule(self, n_views: int) -> tuple[int, int]:
        """(population, generations) for ``n_views`` views."""
        many = n_views > 5
        pop = self.bvfs_pop or (100 if many else 50)
        gen = self.bvfs_gen or (600 if many else 300)
        return pop, gen

    def migration_every(self, generations: int) -> int:
        if self.migration_interval is not None:
            return self.migration_interval
        return max(1, int(math.floor(0.05 * generations + 0.5)))

    def resolved_threads(self) -> int:
        if self.threads is not None:
            return self.threads
        env = os.environ.get("MMFS_THREADS")
        if env:
            try:
                value = int(env)
            except ValueError:
                raise ValueError(f"MMFS_THREADS must be a positive integer, got {env!r}") from None
            if value < 1:
                raise ValueError(f"MMFS_THREADS must be a positive integer, got {env!r}")
            return value
        return os.cpu_count() or 1

    def with_seed(self, seed: int) -> "NicheConfig":
        return replace(self, seed=seed)


def niche_rng(seed: int, niche_id: int, stage: int, view: int = 0) -> np.random.Generator:
    """Independent generator for one (niche, stage, view) triple."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), niche_id, stage, view]))


def snapshot_generations(generations: int) -> tuple[int, int, int]:
    """Generations at which 30%, 60% and 90% of the run have elapsed."""
    return tuple(-(-s * generations // 10) for s in (3, 6, 9))


# --------------------------------------------------------------------------
# Population helpers


def repair(chromosome, rng: np.random.Generator) -> np.ndarray:
    """Switch on one uniformly chosen gene of an all-zero mask."""
    chromosome = np.asarray(chromosome, dtype=bool)
    if chromosome.any():
        return chromosome
    out = chromosome.copy()
    out[rng.integers(out.shape[0])] = True
    return out


def repair_integer(chromosome, rng: np.random.Generator) -> np.ndarray:
    """Give an all-zero view chromosome one nonzero gene."""
    chromosome = np.asarray(chromosome)
    if np.any(chromosome != 0):
        return chromosome
    out = chromosome.copy()
    out[rng.integers(out.shape[0])] = rng.integers(1, N_CANDIDATES)
    return out


def jaccard_similarity(population) -> float:
    """Mean pairwise Jaccard similarity of a binary population.

    Pairs of two empty masks count as identical.
    """
    P = np.asarray(population, dtype=bool)
    if P.ndim != 2 or P.shape[0] < 2:
        raise ValueError("Jaccard similarity needs at least two individuals")
    M = P.astype(np.float64)
    inter = M @ M.T
    sizes = M.sum(axis=1)
    union = sizes[:, None] + sizes[None, :] - inter
    with np.errstate(invalid="ignore", divide="ignore"):
        J = np.where(union > 0, inter / np.where(union > 0, union, 1.0), 1.0)
    iu = np.triu_indices(P.shape[0], k=1)
    return float(J[iu].mean())


def duplicate_rows(population) -> np.ndarray:
    """Indices of rows equal to an earlier row."""
    P = np.asarray(population)
    _, first = np.unique(P, axis=0, return_index=True)
    dup = np.ones(P.shape[0], dtype=bool)
    dup[first] = False
    return np.flatnonzero(dup)


def diversify(population, cfg: NicheConfig, rng: np.random.Generator, similarity: Optional[float] = None) -> np.ndarray:
    """Replace duplicate individuals of an over-similar binary population.

    When the mean Jaccard similarity exceeds ``cfg.similarity_threshold``,
    every repeated chromosome is replaced by a child bred from two random
    members: crossover with probability ``repair_prob``, then mutation with
    probability ``repair_prob``.
    """
    P = np.asarray(population, dtype=bool)
    if similarity is None:
        similarity = jaccard_similarity(P)
    if similarity <= cfg.similarity_threshold:
        return P
    cx, mut = binary_operators(cfg.ivfs_variation)
    out = P.copy()
    n = P.shape[0]
    for i in duplicate_rows(P):
        child = P[rng.integers(n)].copy()
        if rng.random() < cfg.repair_prob:
            child = cx(child, P[rng.integers(n)], rng)
        if rng.random() < cfg.repair_prob:
            child = mut(child, rng)
        out[i] = repair(child, rng)
    return out


def best_index(objectives) -> int:
    """Lowest error, then fewest features, then lowest index."""
    objs = np.asarray(objectives, dtype=float)
    return int(np.lexsort((np.arange(objs.shape[0]), objs[:, 1], objs[:, 0]))[0])


def elite_order(objectives) -> np.ndarray:
    """Indices sorted by front rank, then descending crowding (stable)."""
    ranks, crowd = rank_and_crowding(objectives)
    return np.lexsort((np.arange(ranks.size), -crowd, ranks))


def migration_count(pop_size: int, fraction: float) -> int:
    return int(math.floor(fraction * pop_size + 0.5))


def migrate(populations: Sequence, fraction: float, rng=None, objectives: Optional[Sequence] = None):
    """Ring migration: niche ``n`` sends its elite to niche ``n + 1``.

    The elite of every niche (best front rank, then largest crowding) leaves
    and the elite of the previous niche takes the vacated slots, so the
    union of all populations is conserved.

    Args:
        populations: One ``(pop, length)`` array per niche, equal sizes.
        fraction: Share of each population that migrates.
        rng: Unused; accepted for interface symmetry.
        objectives: Per-niche ``(pop, 2)`` objective arrays. Required to rank
            individuals and migrated alongside them.

    Returns:
        ``(populations, objectives)`` as new lists.
    """
    pops = [np.asarray(p) for p in populations]
    if objectives is None:
        raise ValueError("migration needs the objectives of every population")
    objs = [np.asarray(o, dtype=float) for o in objectives]
    n = len(pops)
    if n < 2:
        return [p.copy() for p in pops], [o.copy() for o in objs]
    sizes = {p.shape[0] for p in pops}
    if len(sizes) != 1:
        raise ValueError("migration needs populations of equal size")
    m = migration_count(sizes.pop(), fraction)
    new_pops = [p.copy() for p in pops]
    new_objs = [o.copy() for o in objs]
    if m == 0:
        return new_pops, new_objs
    slots = [elite_order(o)[:m] for o in objs]
    for dst in range(n):
        src = (dst - 1) % n
        new_pops[dst][slots[dst]] = pops[src][slots[src]]
        new_objs[dst][slots[dst]] = objs[src][slots[src]]
    return new_pops, new_objs


class MigrationAborted(RuntimeError):
    """Raised in a niche waiting for migrants when another niche failed."""


class RingChannel:
    """Blocking ring of queues for niches running in their own threads.

    :meth:`exchange` posts a niche's emigrants to its successor and waits for
    the predecessor's. :meth:`abort` wakes every waiter with an error so one
    failing niche cannot hang the others.
    """

    def __init__(self, n_niches: int, poll: float = 0.05):
        self.n_niches = n_niches
        self._queues = [queue.Queue() for _ in range(n_niches)]
        self._aborted = threading.Event()
        self._poll = poll

    def abort(self) -> None:
        self._aborted.set()

    def exchange(self, niche_id: int, tag, payload):
        self._queues[(niche_id + 1) % self.n_niches].put((tag, payload))
        while True:
            if self._aborted.is_set():
                raise MigrationAborted("migration aborted because another niche failed")
            try:
                got_tag, got = self._queues[niche_id].get(timeout=self._poll)
            except queue.Empty:
                continue
            if got_tag != tag:
                raise RuntimeError(f"niche {niche_id} expected migrants {tag}, got {got_tag}")
            return got


# --------------------------------------------------------------------------
# IV-FS


@dataclass
class ViewSolutionSet:
    """Six candidate masks for one view: empty, final best, frequent, and
    the best at 30%, 60% and 90% of the run."""

    masks: np.ndarray  # (6, k_v) bool
    view_index: int = 0
    niche_id: int = 0
    errors: Optional[np.ndarray] = None
    trajectory: list = field(default_factory=list)

    def __post_init__(self):
        self.masks = np.asarray(self.masks, dtype=bool)
        if self.masks.ndim != 2 or self.masks.shape[0] != N_CANDIDATES:
            raise ValueError(f"a view solution set holds exactly {N_CANDIDATES} masks")
        if self.masks[0].any():
            raise ValueError("the first candidate must be the empty mask")
        if not self.masks[1:].any(axis=1).all():
            raise ValueError("candidates 1..5 must select at least one feature")

    @property
    def n_features(self) -> int:
        return self.masks.shape[1]


def initial_binary_population(k: int, pop: int, rng: np.random.Generator, density: Optional[float] = None) -> np.ndarray:
    """Bernoulli masks; with ``density=None`` each individual draws its own
    rate log-uniformly from ``[1/k, 0.5]``."""
    if density is None:
        lo, hi = math.log(1.0 / k), math.log(0.5)
        rates = np.exp(rng.uniform(min(lo, hi), hi, size=pop))
    else:
        rates = np.full(pop, density)
    P = rng.random((pop, k)) < rates[:, None]
    for i in range(pop):
        P[i] = repair(P[i], rng)
    return P


class IVFSNiche:
    """State of one niche evolving binary masks for one view."""

    def __init__(self, fitness: CVFitness, cfg: NicheConfig, niche_id: int, view_index: int):
        self.fitness = fitness
        self.cfg = cfg
        self.niche_id = niche_id
        self.view_index = view_index
        self.k = fitness.X.shape[1]
        self.pop_size, self.generations = cfg.ivfs_schedule(self.k)
        self.rng = niche_rng(cfg.seed, niche_id, STAGE_IVFS, view_index)
        self.P = initial_binary_population(self.k, self.pop_size, self.rng, cfg.init_density)
        self.objs = fitness.objectives(self.P)
        self.snap_at = snapshot_generations(self.generations)
        self.snapshots: dict[int, tuple[np.ndarray, float]] = {}
        self.trajectory: list[dict] = []
        self.generation = 0
        self.cx, self.mut = binary_operators(cfg.ivfs_variation)

    def _repair(self, child, rng):
        return repair(child, rng)

    def step(self) -> None:
        """Variation, elitist selection and duplicate control for one generation."""
        self.generation += 1
        ranks, crowd = rank_and_crowding(self.objs)
        pick = lambda rng: tournament_index(ranks, crowd, rng)  # noqa: E731
        R = crossover_or_mutation(
            self.P, self.cfg.ivfs_variation, self.rng, self.cx, self.mut, select=pick, repair=self._repair
        )
        R_objs = np.vstack([self.objs, self.fitness.objectives(R[self.pop_size:])])
        keep = environmental_selection(R_objs, self.pop_size)
        self.P, self.objs = R[keep], R_objs[keep]
        sim = jaccard_similarity(self.P)
        if sim > self.cfg.similarity_threshold:
            P_new = diversify(self.P, self.cfg, self.rng, similarity=sim)
            changed = np.flatnonzero(np.any(P_new != self.P, axis=1))
            if changed.size:
                self.objs = self.objs.copy()
                self.objs[changed] = self.fitness.objectives(P_new[changed])
            self.P = P_new
        self._similarity = sim

    def record(self) -> None:
        """Snapshots and trajectory; call after any migration of this generation."""
        g = self.generation
        if g in self.snap_at:
            i = best_index(self.objs)
            self.snapshots[self.snap_at.index(g)] = (self.P[i].copy(), float(self.objs[i, 0]))
        i = best_index(self.objs)
        self.trajectory.append(
            {
                "generation": g,
                "best_f1": float(self.objs[i, 0]),
                "best_f2": int(self.objs[i, 1]),
                "mean_f1": float(self.objs[:, 0].mean()),
                "similarity": float(self._similarity),
            }
        )

    def solution_set(self) -> ViewSolutionSet:
        masks = np.zeros((N_CANDIDATES, self.k), dtype=bool)
        errors = np.full(N_CANDIDATES, np.nan)
        i = best_index(self.objs)
        masks[1], errors[1] = self.P[i], self.objs[i, 0]
        freq = self.P.mean(axis=0)
        frequent = freq > 0.5
        if not frequent.any():
            frequent[int(np.argmax(freq))] = True
        masks[2] = frequent
        errors[2] = self.fitness.error(frequent)
        for s in range(3):
            if s in self.snapshots:
                masks[3 + s], errors[3 + s] = self.snapshots[s]
            else:
                masks[3 + s], errors[3 + s] = masks[1], errors[1]
        return ViewSolutionSet(masks, self.view_index, self.niche_id, errors, self.trajectory)


def _emigrant_payload(niche: IVFSNiche, m: int):
    slots = elite_order(niche.objs)[:m]
    return slots, (niche.P[slots].copy(), niche.objs[slots].copy())


def run_ivfs(
    view,
    labels,
    cfg: NicheConfig,
    niche_id: int = 0,
    migration_channel: Optional[RingChannel] = None,
    plan: Optional[FoldPlan] = None,
    fitness: Optional[CVFitness] = None,
    view_index: int = 0,
    n_classes: Optional[int] = None,
) -> ViewSolutionSet:
    """Evolve one niche's binary masks over one view.

    Args:
        view: ``(n, k_v)`` data matrix of the view.
        labels: Class labels.
        cfg: Search configuration.
        niche_id: Niche number; selects the random stream and ring position.
        migration_channel: Ring shared with the other niches, or None for an
            isolated niche.
        plan: Fold plan; derived from ``cfg.seed`` when omitted.
        fitness: Precomputed fitness object (overrides ``view``/``plan``).
        view_index: Index of the view, used for the random stream.
        n_classes: Number of classes (inferred from labels when omitted).

    Returns:
        The view's six candidate masks, with the per-generation trajectory.
    """
    if fitness is None:
        labels = np.asarray(labels, dtype=int)
        plan = plan or make_fold_plan(labels, cfg.n_folds, cfg.seed)
        fitness = CVFitness(view, labels, plan, n_classes)
    if fitness.X.shape[1] < 1:
        raise ValueError("a view needs at least one feature")
    niche = IVFSNiche(fitness, cfg, niche_id, view_index)
    every = cfg.migration_every(niche.generations)
    m = migration_count(niche.pop_size, cfg.migration_fraction)
    for g in range(1, niche.generations + 1):
        niche.step()
        if migration_channel is not None and migration_channel.n_niches > 1 and m and g % every == 0:
            slots, payload = _emigrant_payload(niche, m)
            P_in, objs_in = migration_channel.exchange(niche_id, (view_index, g), payload)
            niche.P[slots] = P_in
            niche.objs[slots] = objs_in
        niche.record()
    return niche.solution_set()


# --------------------------------------------------------------------------
# BV-FS


def decode(chromosome, solution_sets: Sequence[ViewSolutionSet], rng: Optional[np.random.Generator] = None) -> np.ndarray:
    """Global mask selected by an integer chromosome.

    Gene ``v`` picks candidate ``chromosome[v]`` of view ``v``; 0 drops the
    view. An all-zero chromosome is first repaired (randomly with ``rng``,
    otherwise by setting the first gene to 1).
    """
    genes = np.asarray(chromosome)
    if genes.ndim != 1 or genes.shape[0] != len(solution_sets):
        raise ValueError(f"chromosome has {genes.shape} genes for {len(solution_sets)} views")
    if not np.issubdtype(genes.dtype, np.integer):
        raise ValueError("chromosome genes must be integers")
    if np.any(genes < 0) or np.any(genes >= N_CANDIDATES):
        raise ValueError(f"genes must lie in 0..{N_CANDIDATES - 1}, got {genes.tolist()}")
    if not np.any(genes):
        if rng is not None:
            genes = repair_integer(genes, rng)
        else:
            genes = genes.copy()
            genes[0] = 1
    return np.concatenate([s.masks[g] for s, g in zip(solution_sets, genes)])


@dataclass
class BVFSResult:
    mask: np.ndarray
    genes: np.ndarray
    f1: float
    f2: int
    trajectory: list = field(default_factory=list)


def run_bvfs(
    dataset,
    solution_sets: Sequence[ViewSolutionSet],
    cfg: NicheConfig,
    niche_id: int = 0,
    fitness: Optional[CVFitness] = None,
    plan: Optional[FoldPlan] = None,
) -> BVFSResult:
    """Evolve view-combination chromosomes for one niche.

    Returns the decoded mask of the final individual with the lowest error,
    ties going to fewer features.
    """
    V = len(solution_sets)
    if V != dataset.n_views:
        raise ValueError(f"got solution sets for {V} views, dataset has {dataset.n_views}")
    if fitness is None:
        plan = plan or make_fold_plan(dataset.labels, cfg.n_folds, cfg.seed)
        fitness = CVFitness(dataset.X, dataset.labels, plan, dataset.n_classes)
    pop, generations = cfg.bvfs_schedule(V)
    rng = niche_rng(cfg.seed, niche_id, STAGE_BVFS)

    decoded: dict[bytes, np.ndarray] = {}

    def objectives(G: np.ndarray) -> np.ndarray:
        out = np.empty((G.shape[0], 2))
        for i, genes in enumerate(G):
            mask = decode(genes, solution_sets)
            out[i] = fitness.error(mask), np.count_nonzero(mask)
            decoded.setdefault(genes.tobytes(), mask)
        return out

    P = rng.integers(0, N_CANDIDATES, size=(pop, V))
    for i in range(pop):
        P[i] = repair_integer(P[i], rng)
    objs = objectives(P)
    cx, mut = integer_operators(cfg.bvfs_variation)
    if V < 2:
        cx = lambda p1, p2, rng: np.array(p1, copy=True)  # noqa: E731
        mut = lambda p, rng: shuffle_mutation(p, rng, cfg.bvfs_variation.per_gene_shuffle_prob)  # noqa: E731

    trajectory = []
    for g in range(1, generations + 1):
        ranks, crowd = rank_and_crowding(objs)
        pick = lambda r: tournament_index(ranks, crowd, r)  # noqa: E731
        R = crossover_or_mutation(P, cfg.bvfs_variation, rng, cx, mut, select=pick, repair=repair_integer)
        R_objs = np.vstack([objs, objectives(R[pop:])])
        keep = environmental_selection(R_objs, pop)
        P, objs = R[keep], R_objs[keep]
        i = best_index(objs)
        trajectory.append(
            {
                "generation": g,
                "best_f1": float(objs[i, 0]),
                "best_f2": int(objs[i, 1]),
                "mean_f1": float(objs[:, 0].mean()),
            }
        )
    i = best_index(objs)
    mask = decode(P[i], solution_sets)
    return BVFSResult(mask, P[i].copy(), float(objs[i, 0]), int(objs[i, 1]), trajectory)


# --------------------------------------------------------------------------
# Full run


@dataclass
class NicheResult:
    niche_id: int
    solution_sets: list
    bvfs: BVFSResult
    timings: dict = field(default_factory=dict)

    @property
    def mask(self) -> np.ndarray:
        return self.bvfs.mask

    @property
    def fitness(self) -> tuple[float, int]:
        return self.bvfs.f1, self.bvfs.f2


@dataclass
class RunResult:
    """Outcome of :func:`run_mmfs_ga`."""

    best_mask: np.ndarray
    best_niche: int
    best_f1: float
    best_f2: int
    niches: list
    view_slices: list
    view_names: list
    timings: dict = field(default_factory=dict)
    n_evaluations: int = 0
    config: Optional[NicheConfig] = None

    def selected_per_view(self, mask: Optional[np.ndarray] = None) -> dict[str, int]:
        mask = self.best_mask if mask is None else mask
        return {name: int(np.count_nonzero(mask[s])) for name, s in zip(self.view_names, self.view_slices)}

    def to_dict(self) -> dict:
        """JSON-ready summary: winner, every niche's result and trajectories."""
        niches = []
        for nr in self.niches:
            niches.append(
                {
                    "niche": nr.niche_id,
                    "genes": nr.bvfs.genes.tolist(),
                    "f1": nr.bvfs.f1,
                    "f2": nr.bvfs.f2,
                    "selected_per_view": self.selected_per_view(nr.mask),
                    "selected": {
                        name: np.flatnonzero(nr.mask[s]).tolist()
                        for name, s in zip(self.view_names, self.view_slices)
                    },
                    "candidate_sizes": {
                        self.view_names[ss.view_index]: ss.masks.sum(axis=1).tolist() for ss in nr.solution_sets
                    },
                    "candidate_errors": {
                        self.view_names[ss.view_index]: [None if np.isnan(e) else float(e) for e in ss.errors]
                        for ss in nr.solution_sets
                    },
                    "ivfs_trajectories": {
                        self.view_names[ss.view_index]: ss.trajectory for ss in nr.solution_sets
                    },
                    "bvfs_trajectory": nr.bvfs.trajectory,
                    "timings": nr.timings,
                }
            )
        return {
            "best_niche": self.best_niche,
            "best_f1": self.best_f1,
            "best_f2": self.best_f2,
            "selected_per_view": self.selected_per_view(),
            "n_evaluations": self.n_evaluations,
            "timings": self.timings,
            "niches": niches,
        }


def select_best(results: Sequence[BVFSResult]) -> int:
    """Position of the best niche result: lowest error, fewer features, lowest id."""
    objs = np.array([[r.f1, r.f2] for r in results], dtype=float)
    return best_index(objs)


def _run_lockstep_ivfs(fits: list, cfg: NicheConfig, pool: Optional[ThreadPoolExecutor]) -> list[list]:
    """All niches advance generation by generation; migration is done in the
    driver. Returns solution sets indexed ``[niche][view]``."""
    N = cfg.n_niches
    out: list[list] = [[] for _ in range(N)]
    mapper = pool.map if pool is not None else map
    for v, fit in enumerate(fits):
        phase = f"IV-FS view {v}"
        niches = []
        for n in range(N):
            try:
                niches.append(IVFSNiche(fit, cfg, n, v))
            except Exception as exc:
                raise NicheError(n, phase, exc) from exc
        every = cfg.migration_every(niches[0].generations)
        m = migration_count(niches[0].pop_size, cfg.migration_fraction)

        def advance(niche):
            try:
                niche.step()
            except Exception as exc:
                raise NicheError(niche.niche_id, phase, exc) from exc

        for g in range(1, niches[0].generations + 1):
            list(mapper(advance, niches))
            if N > 1 and m and g % every == 0:
                pops, objs = migrate([x.P for x in niches], cfg.migration_fraction, objectives=[x.objs for x in niches])
                for x, P, o in zip(niches, pops, objs):
                    x.P, x.objs = P, o
            for x in niches:
                x.record()
        for n, x in enumerate(niches):
            out[n].append(x.solution_set())
    return out


def run_mmfs_ga(
    dataset,
    cfg: NicheConfig,
    plan: Optional[FoldPlan] = None,
    progress: Optional[Callable[[str], None]] = None,
) -> RunResult:
    """Run both stages in every niche and pick the overall best mask.

    With at least as many threads as niches, each niche runs in its own
    thread and migrates through a :class:`RingChannel`; otherwise niches are
    advanced in lock-step by a bounded pool. Both schedules give identical
    results for a given seed.

    Args:
        dataset: :class:`~mmfsga.data.MultiViewDataset` (training data).
        cfg: Search configuration.
        plan: Fold plan; derived from ``cfg.seed`` when omitted.
        progress: Optional callback receiving short status messages.

    Returns:
        :class:`RunResult` with the winning mask and per-niche reports.
    """
    say = progress or (lambda msg: logger.info(msg))
    t0 = time.perf_counter()
    plan = plan or make_fold_plan(dataset.labels, cfg.n_folds, cfg.seed)
    fits = [CVFitness(X_v, dataset.labels, plan, dataset.n_classes) for X_v in dataset.views]
    full_fit = CVFitness(dataset.X, dataset.labels, plan, dataset.n_classes)
    N = cfg.n_niches
    threads = max(1, min(cfg.resolved_threads(), N))
    timings = {"setup": time.perf_counter() - t0}

    niche_timings = [dict() for _ in range(N)]

    def bvfs(n: int, sets: list) -> BVFSResult:
        t = time.perf_counter()
        try:
            res = run_bvfs(dataset, sets, cfg, n, fitness=full_fit)
        except Exception as exc:
            raise NicheError(n, "BV-FS", exc) from exc
        niche_timings[n]["bvfs"] = time.perf_counter() - t
        return res

    if N > 1 and threads >= N:
        channel = RingChannel(N)

        def worker(n: int):
            sets = []
            t = time.perf_counter()
            for v, fit in enumerate(fits):
                try:
                    sets.append(run_ivfs(None, None, cfg, n, channel, fitness=fit, view_index=v))
                except Exception as exc:
                    channel.abort()
                    raise NicheError(n, f"IV-FS view {v}", exc) from exc
            niche_timings[n]["ivfs"] = time.perf_counter() - t
            return sets, bvfs(n, sets)

        with ThreadPoolExecutor(max_workers=N) as pool:
            futures = [pool.submit(worker, n) for n in range(N)]
            outcomes, errors = [], []
            for f in futures:
                try:
                    outcomes.append(f.result())
                except NicheError as exc:
                    channel.abort()
                    errors.append(exc)
            if errors:
                primary = [e for e in errors if not isinstance(e.cause, MigrationAborted)]
                raise (primary or errors)[0]
        all_sets = [o[0] for o in outcomes]
        results = [o[1] for o in outcomes]
        timings["ivfs"] = max(t.get("ivfs", 0.0) for t in niche_timings)
    else:
        t = time.perf_counter()
        pool = ThreadPoolExecutor(max_workers=threads) if threads > 1 else None
        try:
            all_sets = _run_lockstep_ivfs(fits, cfg, pool)
            timings["ivfs"] = time.perf_counter() - t
            say(f"IV-FS done in {timings['ivfs']:.1f}s")
            mapper = pool.map if pool is not None else map
            results = list(mapper(bvfs, range(N), all_sets))
        finally:
            if pool is not None:
                pool.shutdown()
    timings["total"] = time.perf_counter() - t0
    best = select_best(results)
    niches = [NicheResult(n, all_sets[n], results[n], niche_timings[n]) for n in range(N)]
    evaluations = sum(f.n_evaluations for f in fits) + full_fit.n_evaluations
    say(f"best niche {best}: f1={results[best].f1:.4f}, f2={results[best].f2}")
    return RunResult(
        best_mask=results[best].mask.copy(),
        best_niche=best,
        best_f1=results[best].f1,
        best_f2=results[best].f2,
        niches=niches,
        view_slices=dataset.view_slices,
        view_names=list(dataset.view_names),
        timings=timings,
        n_evaluations=evaluations,
        config=cfg,
    )
