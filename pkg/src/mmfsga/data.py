"""Multi-view datasets, synthetic Gaussian benchmarks and Monte Carlo oracles.

The synthetic problems have two informative views (a six-feature view with a
correlated nested block and a seven-feature view of decreasing
discriminability) padded with N(0, 1) noise, plus three pure-noise views. All
classes share one covariance per view and differ in their means; column order
inside every view is shuffled and the shuffle is recorded so ground truth is
always recoverable.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Iterable, Optional, Sequence

import numpy as np

NESTED_COV = np.array(
    [
        [1.05, 0.48, 0.95],
        [0.48, 1.00, 0.20],
        [0.95, 0.20, 1.05],
    ]
)
VIEW_A_MEAN = np.array([0.635, 0.635, 0.635, 0.5, 0.4, 0.0])
VIEW_B_MEAN = np.array([0.636, 0.546, 0.455, 0.364, 0.273, 0.182, 0.091])
FOUR_CLASS_SCALES = np.array([1.0, -1.0, 3.0, 5.0])
NOISE_KINDS = ("normal", "uniform", "chi2")


def draw_noise(kind: str, shape, rng: np.random.Generator) -> np.ndarray:
    """I.i.d. noise: ``normal`` N(0,1), ``uniform`` U(0,1) or ``chi2`` chi^2(1)."""
    if kind == "normal":
        return rng.standard_normal(shape)
    if kind == "uniform":
        return rng.random(shape)
    if kind == "chi2":
        return rng.chisquare(1.0, shape)
    raise ValueError(f"unknown noise distribution {kind!r}; expected one of {NOISE_KINDS}")


@dataclass
class MultiViewDataset:
    """Samples observed through several views.

    Attributes:
        views: One ``(n_samples, k_v)`` matrix per view.
        labels: Integer labels ``0..n_classes-1``.
        n_classes: Number of classes.
        view_names: Name of every view.
        feature_names: Column names per view.
        informative_masks: Ground-truth informative columns per view, when
            known.
        layout: Generating process of synthetic data (enables fresh draws).
        sample_ids: Row identifiers.
        class_names: Original label values, indexed by class.
    """

    views: list[np.ndarray]
    labels: np.ndarray
    n_classes: int
    view_names: list[str] = field(default_factory=list)
    feature_names: list[list[str]] = field(default_factory=list)
    informative_masks: Optional[list[np.ndarray]] = None
    layout: Optional["SyntheticLayout"] = None
    sample_ids: Optional[list[str]] = None
    class_names: Optional[list[str]] = None

    def __post_init__(self):
        self.views = [np.asarray(v, dtype=float) for v in self.views]
        self.labels = np.asarray(self.labels, dtype=int)
        if not self.views:
            raise ValueError("a dataset needs at least one view")
        n = self.labels.shape[0]
        for i, v in enumerate(self.views):
            if v.ndim != 2 or v.shape[0] != n:
                raise ValueError(f"view {i} has shape {v.shape}; expected ({n}, k)")
        if n and (self.labels.min() < 0 or self.labels.max() >= self.n_classes):
            raise ValueError(f"labels must lie in 0..{self.n_classes - 1}")
        if not self.view_names:
            self.view_names = [f"view{i + 1}" for i in range(len(self.views))]
        if not self.feature_names:
            self.feature_names = [
                [f"{name}_f{j}" for j in range(v.shape[1])] for name, v in zip(self.view_names, self.views)
            ]
        if self.sample_ids is None:
            self.sample_ids = [f"s{i}" for i in range(n)]

    @property
    def n_samples(self) -> int:
        return self.labels.shape[0]

    @property
    def n_views(self) -> int:
        return len(self.views)

    @property
    def view_dims(self) -> list[int]:
        return [v.shape[1] for v in self.views]

    @property
    def n_features(self) -> int:
        return sum(self.view_dims)

    @cached_property
    def X(self) -> np.ndarray:
        return np.hstack(self.views)

    @property
    def view_slices(self) -> list[slice]:
        edges = np.cumsum([0] + self.view_dims)
        return [slice(int(a), int(b)) for a, b in zip(edges[:-1], edges[1:])]

    def split_mask(self, mask) -> list[np.ndarray]:
        """Global mask -> one boolean mask per view."""
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != (self.n_features,):
            raise ValueError(f"mask has length {mask.shape}, dataset has {self.n_features} features")
        return [mask[s] for s in self.view_slices]

    def join_masks(self, masks: Sequence) -> np.ndarray:
        """Per-view masks -> one global mask."""
        if len(masks) != self.n_views:
            raise ValueError("need one mask per view")
        return np.concatenate([np.asarray(m, dtype=bool) for m in masks])

    @property
    def informative_mask(self) -> Optional[np.ndarray]:
        if self.informative_masks is None:
            return None
        return self.join_masks(self.informative_masks)


# --------------------------------------------------------------------------
# Synthetic benchmark


@dataclass(frozen=True)
class ViewBlock:
    """Class-conditional Gaussian block of informative features."""

    means: np.ndarray  # (C, l)
    covs: np.ndarray  # (C, l, l)

    @property
    def n_informative(self) -> int:
        return self.means.shape[1]


@dataclass(frozen=True)
class SyntheticSpec:
    """Parameters of a generable multi-view benchmark."""

    task: str
    n_classes: int
    blocks: tuple  # ViewBlock or None per view
    view_dims: tuple
    noise: tuple  # noise distribution per view
    n_per_class: int = 100
    view_names: tuple = ("view1", "view2", "view3", "view4", "view5")

    def __post_init__(self):
        if not (len(self.blocks) == len(self.view_dims) == len(self.noise) == len(self.view_names)):
            raise ValueError("blocks, view_dims, noise and view_names must have one entry per view")
        for v, block in enumerate(self.blocks):
            if block is None:
                continue
            C, l = block.means.shape
            if C != self.n_classes:
                raise ValueError(f"view {v}: means given for {C} classes, expected {self.n_classes}")
            if block.covs.shape != (C, l, l):
                raise ValueError(f"view {v}: covariance shape {block.covs.shape} does not match means")
            for c in range(C):
                cov = block.covs[c]
                if not np.allclose(cov, cov.T):
                    raise ValueError(f"view {v}, class {c}: covariance is not symmetric")
                try:
                    np.linalg.cholesky(cov)
                except np.linalg.LinAlgError:
                    raise ValueError(f"view {v}, class {c}: covariance is not positive definite") from None
            if self.view_dims[v] < l:
                raise ValueError(f"view {v}: dimension {self.view_dims[v]} below {l} informative features")
        for kind in self.noise:
            if kind not in NOISE_KINDS:
                raise ValueError(f"unknown noise distribution {kind!r}")

    @property
    def n_informative(self) -> list[int]:
        return [0 if b is None else b.n_informative for b in self.blocks]

    @classmethod
    def binary(cls, view_dim: int = 500, n_per_class: int = 100) -> "SyntheticSpec":
        cov_a = np.eye(6)
        cov_a[3:, 3:] = NESTED_COV
        a = ViewBlock(np.stack([VIEW_A_MEAN, -VIEW_A_MEAN]), np.stack([cov_a, cov_a]))
        b = ViewBlock(np.stack([VIEW_B_MEAN, -VIEW_B_MEAN]), np.stack([np.eye(7)] * 2))
        return cls(
            task="binary",
            n_classes=2,
            blocks=(a, b, None, None, None),
            view_dims=(view_dim,) * 5,
            noise=("normal", "normal", "uniform", "chi2", "normal"),
            n_per_class=n_per_class,
        )

    @classmethod
    def four_class(cls, view_dim: int = 500, n_per_class: int = 100) -> "SyntheticSpec":
        cov_a = np.eye(6)
        cov_a[3:, 3:] = NESTED_COV
        cov_b = np.eye(7)
        cov_b[4:, 4:] = NESTED_COV
        scales = FOUR_CLASS_SCALES[:, None]
        a = ViewBlock(scales * VIEW_A_MEAN, np.stack([cov_a] * 4))
        b = ViewBlock(scales * VIEW_B_MEAN, np.stack([cov_b] * 4))
        return cls(
            task="four_class",
            n_classes=4,
            blocks=(a, b, None, None, None),
            view_dims=(view_dim,) * 5,
            noise=("normal", "normal", "uniform", "chi2", "normal"),
            n_per_class=n_per_class,
        )

    @classmethod
    def for_task(cls, task: str, **kwargs) -> "SyntheticSpec":
        if task == "binary":
            return cls.binary(**kwargs)
        if task in ("four_class", "4-class", "multiclass"):
            return cls.four_class(**kwargs)
        raise ValueError(f"unknown synthetic task {task!r}; use 'binary' or 'four_class'")

    def with_dims(self, view_dims: Sequence[int]) -> "SyntheticSpec":
        return replace(self, view_dims=tuple(int(d) for d in view_dims))


@dataclass(frozen=True)
class SyntheticLayout:
    """A spec together with the column shuffle of each view.

    Column ``j`` of view ``v`` holds source feature ``permutations[v][j]``;
    source features ``0..l_v-1`` are the informative ones.
    """

    spec: SyntheticSpec
    permutations: tuple

    @property
    def informative_masks(self) -> list[np.ndarray]:
        return [p < l for p, l in zip(self.permutations, self.spec.n_informative)]

    def sample(self, columns, n: int, rng: np.random.Generator, labels=None):
        """Fresh labelled draws restricted to some global columns.

        Args:
            columns: Global column indices (over all views, concatenated).
            n: Number of samples (ignored when ``labels`` is given).
            rng: Random generator.
            labels: Optional fixed labels; otherwise drawn with equal priors.

        Returns:
            ``(X, y)`` with ``X`` of shape ``(n, len(columns))``.
        """
        spec = self.spec
        columns = np.asarray(columns, dtype=int)
        y = rng.integers(spec.n_classes, size=n) if labels is None else np.asarray(labels, dtype=int)
        n = y.shape[0]
        X = np.empty((n, columns.size))
        edges = np.cumsum([0] + list(spec.view_dims))
        for v in range(len(spec.view_dims)):
            in_view = (columns >= edges[v]) & (columns < edges[v + 1])
            if not in_view.any():
                continue
            source = self.permutations[v][columns[in_view] - edges[v]]
            n_inf = spec.n_informative[v]
            block_vals = np.empty((n, source.size))
            inf = source < n_inf
            if inf.any():
                full = _draw_block(spec.blocks[v], y, rng)
                block_vals[:, inf] = full[:, source[inf]]
            if (~inf).any():
                block_vals[:, ~inf] = draw_noise(spec.noise[v], (n, int((~inf).sum())), rng)
            X[:, in_view] = block_vals
        return X, y


def _draw_block(block: ViewBlock, y: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    out = np.empty((y.shape[0], block.n_informative))
    z = rng.standard_normal(out.shape)
    for c in range(block.means.shape[0]):
        rows = y == c
        L = np.linalg.cholesky(block.covs[c])
        out[rows] = block.means[c] + z[rows] @ L.T
    return out


def _streams(seed, n: int):
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(n)]


def make_layout(spec: SyntheticSpec, seed) -> SyntheticLayout:
    """Column shuffles for every view, drawn from ``seed``."""
    perm_rng = _streams(seed, 1)[0]
    return SyntheticLayout(spec, tuple(perm_rng.permutation(d) for d in spec.view_dims))


def generate_synthetic(
    spec: SyntheticSpec,
    seed,
    split: int = 0,
    n_per_class: Optional[int] = None,
    layout: Optional[SyntheticLayout] = None,
) -> MultiViewDataset:
    """Draw one multi-view dataset.

    The column shuffle depends on ``seed`` only, so ``split=0`` (training)
    and ``split=1`` (test) draws of the same seed share their column layout.

    Args:
        spec: Benchmark definition.
        seed: Replicate seed.
        split: Independent sample stream within the replicate.
        n_per_class: Overrides ``spec.n_per_class``.
        layout: Reuse an existing column layout instead of deriving one.
    """
    layout = layout or make_layout(spec, seed)
    n_per = n_per_class or spec.n_per_class
    rng = np.random.default_rng(np.random.SeedSequence(seed).spawn(split + 2)[split + 1])
    labels = np.repeat(np.arange(spec.n_classes), n_per)
    views = []
    for v, dim in enumerate(spec.view_dims):
        block = spec.blocks[v]
        n_inf = 0 if block is None else block.n_informative
        source = np.empty((labels.size, dim))
        if n_inf:
            source[:, :n_inf] = _draw_block(block, labels, rng)
        source[:, n_inf:] = draw_noise(spec.noise[v], (labels.size, dim - n_inf), rng)
        views.append(source[:, layout.permutations[v]])
    names = list(spec.view_names)
    return MultiViewDataset(
        views=views,
        labels=labels,
        n_classes=spec.n_classes,
        view_names=names,
        informative_masks=layout.informative_masks,
        layout=layout,
        sample_ids=[f"s{split}_{i}" for i in range(labels.size)],
        class_names=[str(c) for c in range(spec.n_classes)],
    )


def generate_train_test(spec: SyntheticSpec, seed) -> tuple[MultiViewDataset, MultiViewDataset]:
    """Training set and an independent, equally sized test set."""
    layout = make_layout(spec, seed)
    return (
        generate_synthetic(spec, seed, split=0, layout=layout),
        generate_synthetic(spec, seed, split=1, layout=layout),
    )


# --------------------------------------------------------------------------
# Monte Carlo oracles


def _view_index(view, spec: SyntheticSpec) -> int:
    aliases = {"A": 0, "B": 1}
    if isinstance(view, str):
        if view.upper() in aliases:
            return aliases[view.upper()]
        if view in spec.view_names:
            return spec.view_names.index(view)
        raise ValueError(f"unknown view {view!r}")
    return int(view)


def _log_density(block: ViewBlock, X: np.ndarray) -> np.ndarray:
    """``(n, C)`` Gaussian log-densities up to a shared constant."""
    out = np.empty((X.shape[0], block.means.shape[0]))
    for c in range(block.means.shape[0]):
        L = np.linalg.cholesky(block.covs[c])
        z = np.linalg.solve(L, (X - block.means[c]).T)
        out[:, c] = -0.5 * np.sum(z * z, axis=0) - np.sum(np.log(np.diag(L)))
    return out


def bayes_error_mc(
    spec: SyntheticSpec,
    which_views: Iterable = ("A", "B"),
    n_samples: int = 1_000_000,
    seed=0,
    chunk: int = 200_000,
) -> float:
    """Monte Carlo estimate of the Bayes error using some informative views.

    Samples are drawn from the true class-conditional Gaussians with equal
    priors and assigned to the class of highest posterior; the returned value
    is the fraction misassigned. Its standard error is
    ``sqrt(p * (1 - p) / n_samples)``.
    """
    views = sorted({_view_index(v, spec) for v in which_views})
    if not views:
        raise ValueError("need at least one view for the Bayes error")
    blocks = [spec.blocks[v] for v in views]
    if any(b is None for b in blocks):
        raise ValueError("Bayes error is only defined over informative views")
    rng = np.random.default_rng(seed)
    wrong = 0
    done = 0
    while done < n_samples:
        n = min(chunk, n_samples - done)
        y = rng.integers(spec.n_classes, size=n)
        score = np.zeros((n, spec.n_classes))
        for block in blocks:
            score += _log_density(block, _draw_block(block, y, rng))
        wrong += int(np.sum(np.argmax(score, axis=1) != y))
        done += n
    return wrong / n_samples


def conditional_pmc(model, mask, layout: SyntheticLayout, n_samples: int = 1_000_000, seed=0, chunk: int = 200_000) -> float:
    """Misclassification probability of a fixed trained classifier.

    Fresh samples are drawn from the true generating process (equal priors)
    for the columns selected by ``mask`` and classified by ``model``.
    """
    if hasattr(layout, "layout") and layout.layout is not None:
        layout = layout.layout
    mask = np.asarray(mask, dtype=bool)
    cols = np.flatnonzero(mask)
    if mask.size != sum(layout.spec.view_dims):
        raise ValueError(f"mask length {mask.size} does not match layout with {sum(layout.spec.view_dims)} columns")
    if cols.size != model.n_features:
        raise ValueError(f"mask selects {cols.size} features but the model expects {model.n_features}")
    rng = np.random.default_rng(seed)
    wrong = 0
    done = 0
    while done < n_samples:
        n = min(chunk, n_samples - done)
        X, y = layout.sample(cols, n, rng)
        wrong += int(np.sum(model.predict(X) != y))
        done += n
    return wrong / n_samples


# --------------------------------------------------------------------------
# Noise augmentation


def add_noise_features(
    dataset: MultiViewDataset,
    target_dims: Sequence[int],
    distributions: Sequence[str],
    seed=0,
) -> tuple[MultiViewDataset, list[np.ndarray]]:
    """Pad every view with i.i.d. noise columns and shuffle its columns.

    Returns:
        The augmented dataset and, per view, the permutation used: column
        ``j`` of the new view is column ``perm[j]`` of the padded matrix
        ``[original | noise]``. ``np.argsort(perm)[:k_v]`` recovers the
        original columns in order.
    """
    if len(target_dims) != dataset.n_views or len(distributions) != dataset.n_views:
        raise ValueError("need one target dimension and one distribution per view")
    rng = np.random.default_rng(seed)
    views, names, perms, inf_masks = [], [], [], []
    for v, (X, target, kind) in enumerate(zip(dataset.views, target_dims, distributions)):
        k = X.shape[1]
        if target < k:
            raise ValueError(f"view {dataset.view_names[v]!r}: target {target} below current {k} features")
        noise = draw_noise(kind, (X.shape[0], target - k), rng)
        padded = np.hstack([X, noise])
        perm = rng.permutation(target)
        views.append(padded[:, perm])
        perms.append(perm)
        feat = list(dataset.feature_names[v]) + [f"{dataset.view_names[v]}_noise{j}" for j in range(target - k)]
        names.append([feat[p] for p in perm])
        base = (
            np.ones(k, dtype=bool)
            if dataset.informative_masks is None
            else np.asarray(dataset.informative_masks[v], dtype=bool)
        )
        inf_masks.append(np.r_[base, np.zeros(target - k, dtype=bool)][perm])
    out = MultiViewDataset(
        views=views,
        labels=dataset.labels.copy(),
        n_classes=dataset.n_classes,
        view_names=list(dataset.view_names),
        feature_names=names,
        informative_masks=inf_masks,
        sample_ids=list(dataset.sample_ids),
        class_names=dataset.class_names,
    )
    return out, perms
