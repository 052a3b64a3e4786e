"""Replicate-level experiment helpers shared by the CLI, demos and tests."""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .data import MultiViewDataset, SyntheticSpec, conditional_pmc, generate_train_test
from .evaluation import ConstraintError, fit_classifier
from .metrics import EvaluationReport, evaluation_report
from .search import NicheConfig, RunResult, run_mmfs_ga


def evaluate_mask(train: MultiViewDataset, test: MultiViewDataset, mask) -> tuple[EvaluationReport, object]:
    """Fit the task's classifier on ``train[:, mask]`` and score ``test``.

    Returns:
        The test-set report and the fitted model.
    """
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != (train.n_features,) or test.n_features != train.n_features:
        raise ValueError(
            f"mask covers {mask.size} features; train has {train.n_features}, test has {test.n_features}"
        )
    if not mask.any():
        raise ConstraintError("the mask selects no feature; at least one feature must be selected")
    model = fit_classifier(train.X[:, mask], train.labels, train.n_classes)
    Xt = test.X[:, mask]
    selected = dict(zip(train.view_names, train.split_mask(mask)))
    informative = None
    if train.informative_masks is not None:
        informative = dict(zip(train.view_names, train.informative_masks))
    report = evaluation_report(
        test.labels, model.predict(Xt), model.scores(Xt), train.n_classes, selected, informative
    )
    return report, model


@dataclass
class ReplicateOutcome:
    """Test metrics of one synthetic replicate."""

    task: str
    seed: int
    report: EvaluationReport
    run: RunResult
    pmc: Optional[float] = None
    seconds: float = 0.0
    extra: dict = field(default_factory=dict)

    @property
    def balanced_accuracy(self) -> float:
        return self.report.balanced_accuracy

    def noise_views_rejected(self, noise_views=(2, 3, 4)) -> bool:
        counts = list(self.run.selected_per_view().values())
        return all(counts[v] == 0 for v in noise_views)

    def view_f1(self, view: int) -> float:
        return self.report.feature_f1[self.run.view_names[view]]


def run_replicate(
    task: str,
    seed: int,
    cfg: NicheConfig,
    pmc_samples: int = 0,
    view_dim: int = 500,
) -> ReplicateOutcome:
    """Generate replicate ``seed``, search with ``cfg`` and test the winner.

    The search seed is ``cfg.seed``; the data seed is ``seed``.
    """
    t0 = time.perf_counter()
    spec = SyntheticSpec.for_task(task, view_dim=view_dim)
    train, test = generate_train_test(spec, seed)
    run = run_mmfs_ga(train, cfg)
    report, model = evaluate_mask(train, test, run.best_mask)
    pmc = None
    if pmc_samples:
        pmc = conditional_pmc(model, run.best_mask, train.layout, pmc_samples, seed=seed + 10_000)
    return ReplicateOutcome(task, seed, report, run, pmc, time.perf_counter() - t0)
