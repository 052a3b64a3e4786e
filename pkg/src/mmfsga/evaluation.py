"""Classifier-in-the-loop fitness.

Binary problems are scored with linear discriminant analysis, multiclass
problems with L2-penalised multinomial logistic regression. A candidate
feature mask is scored by stratified k-fold cross-validation; the error
objective is one minus the fold-averaged balanced accuracy.

:class:`CVFitness` is the hot path used by the search. It precomputes fold
statistics once per data matrix, evaluates all folds of a mask in a handful of
batched numpy calls, and caches results by mask. :func:`cv_error` is the plain
fold-by-fold route, kept for clarity and as a cross-check.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np
from scipy.optimize import minimize
from scipy.special import softmax

from .moo import Fitness

LDA_RIDGE = 1e-6
MLR_L2 = 1e-4
MLR_MAX_ITER = 200
MLR_TOL = 1e-6
GRAM_MAX_FEATURES = 1000


class ConstraintError(ValueError):
    """Raised for a feature mask that selects nothing."""


@dataclass(frozen=True)
class FoldPlan:
    """Stratified assignment of every sample to one of ``n_folds`` folds."""

    assignments: np.ndarray
    n_folds: int

    def test_index(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.assignments == fold)

    def train_index(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.assignments != fold)


def make_fold_plan(labels, n_folds: int = 10, seed=0) -> FoldPlan:
    """Stratified fold assignment, deterministic under ``seed``.

    Members of each class are shuffled and dealt round-robin starting at a
    random fold, so per-fold class counts differ by at most one.
    """
    labels = np.asarray(labels)
    rng = np.random.default_rng(seed)
    assignments = np.empty(labels.shape[0], dtype=int)
    for cls in np.unique(labels):
        members = np.flatnonzero(labels == cls)
        if members.size < n_folds:
            raise ValueError(
                f"class {cls.item()!r} has {members.size} samples, fewer than n_folds={n_folds}"
            )
        members = rng.permutation(members)
        start = int(rng.integers(n_folds))
        assignments[members] = (start + np.arange(members.size)) % n_folds
    return FoldPlan(assignments, n_folds)


# --------------------------------------------------------------------------
# Linear discriminant analysis


@dataclass
class LDAModel:
    """Two-class linear discriminant; ``score > 0`` predicts class 1."""

    coef: np.ndarray
    intercept: float
    kind: str = "LDA"

    @property
    def n_features(self) -> int:
        return self.coef.shape[0]

    def decision_function(self, X) -> np.ndarray:
        return np.asarray(X, dtype=float) @ self.coef + self.intercept

    def predict(self, X) -> np.ndarray:
        return (self.decision_function(X) > 0).astype(int)

    def scores(self, X) -> np.ndarray:
        return self.decision_function(X)


def _ridge_solve(S: np.ndarray, rhs: np.ndarray, ridge: float) -> np.ndarray:
    """Solve ``(S + ridge * mean(diag S) * I) w = rhs`` for a stack of systems."""
    d = S.shape[-1]
    scale = np.trace(S, axis1=-2, axis2=-1) / d
    scale = np.where(scale > 0, scale, 1.0)
    A = S + (ridge * scale)[..., None, None] * np.eye(d)
    try:
        return np.linalg.solve(A, rhs[..., None])[..., 0]
    except np.linalg.LinAlgError:
        return (np.linalg.pinv(A) @ rhs[..., None])[..., 0]


def fit_lda(X, y, ridge: float = LDA_RIDGE) -> LDAModel:
    """Fit binary LDA with a pooled, trace-scaled ridge covariance.

    Args:
        X: ``(n, d)`` training matrix.
        y: Labels in ``{0, 1}``.
        ridge: Ridge multiplier applied to the mean diagonal of the pooled
            within-class covariance.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=int)
    if X.ndim != 2 or X.shape[1] == 0:
        raise ConstraintError("LDA needs at least one feature")
    present = np.unique(y)
    if present.size != 2 or not np.array_equal(present, [0, 1]):
        raise ValueError(f"LDA needs both classes 0 and 1, got {present.tolist()}")
    n0, n1 = np.sum(y == 0), np.sum(y == 1)
    mu0 = X[y == 0].mean(axis=0)
    mu1 = X[y == 1].mean(axis=0)
    Z = X - np.where((y == 1)[:, None], mu1, mu0)
    S = Z.T @ Z / max(X.shape[0] - 2, 1)
    w = _ridge_solve(S, mu1 - mu0, ridge)
    intercept = -w @ (mu0 + mu1) / 2 + np.log(n1 / n0)
    return LDAModel(w, float(intercept))


# --------------------------------------------------------------------------
# Multinomial logistic regression


def mlr_loss_grad(theta: np.ndarray, XT: np.ndarray, YT: np.ndarray, weights: np.ndarray, l2: float):
    """Penalised multinomial negative log-likelihood and its gradient.

    Works on a stack of ``F`` independent problems that share sample columns
    (one per cross-validation fold). The last row of every design matrix is
    the constant 1 carrying the intercept, which is not penalised.

    Args:
        theta: ``(F, C, D)`` coefficients, intercept in the last column.
        XT: ``(F, D, n)`` transposed design matrices.
        YT: ``(C, n)`` one-hot targets.
        weights: ``(F, n)`` row weights (``1/n_train`` on training rows, zero
            elsewhere).
        l2: Penalty ``l2/2 * ||W||^2`` per problem.

    Returns:
        ``(loss, grad, prob)``: per-problem losses ``(F,)``, the gradient
        ``(F, C, D)`` and class probabilities ``(F, C, n)``.
    """
    logits = theta @ XT
    logits -= logits.max(axis=1, keepdims=True)
    expo = np.exp(logits)
    total = expo.sum(axis=1)
    prob = expo / total[:, None, :]
    nll = np.log(total) - np.sum(logits * YT, axis=1)
    W = theta[:, :, :-1]
    loss = np.sum(weights * nll, axis=1) + 0.5 * l2 * np.sum(W * W, axis=(1, 2))
    resid = weights[:, None, :] * (prob - YT)
    grad = resid @ XT.transpose(0, 2, 1)
    grad[:, :, :-1] += l2 * W
    return loss, grad, prob


def mlr_hessian(prob: np.ndarray, XT: np.ndarray, weights: np.ndarray, l2: float, affine=None) -> np.ndarray:
    """Exact Hessian ``(F, C*D, C*D)`` of :func:`mlr_loss_grad`.

    Coefficients are ordered ``c * D + j``. When every design matrix is an
    affine image ``XT[f] = T[f] @ raw`` of one shared raw matrix, passing
    ``affine=(raw, T)`` computes all blocks with a single large product.
    """
    F, C, n = prob.shape
    D = XT.shape[1]
    cc, kk = np.triu_indices(C)
    a = weights[:, None, :] * prob[:, cc] * ((cc == kk)[None, :, None] - prob[:, kk])
    if affine is None:
        scaled = (a[:, :, None, :] * XT[:, None, :, :]).reshape(F, cc.size * D, n)
        blocks = (scaled @ XT.transpose(0, 2, 1)).reshape(F, cc.size, D, D)
    else:
        raw, T = affine
        outer = (raw.T[:, :, None] * raw.T[:, None, :]).reshape(n, D * D)
        blocks = (a.reshape(F * cc.size, n) @ outer).reshape(F, cc.size, D, D)
        blocks = T[:, None] @ blocks @ T[:, None].transpose(0, 1, 3, 2)
    H = np.empty((F, C, D, C, D))
    H[:, cc, :, kk, :] = blocks.transpose(1, 0, 2, 3)
    H[:, kk, :, cc, :] = blocks.transpose(1, 0, 2, 3)
    H = H.reshape(F, C * D, C * D)
    pen = np.tile(np.r_[np.full(D - 1, l2), 0.0], C)
    H += np.eye(C * D) * pen
    return H


NEWTON_MAX_PARAMS = 240


def _newton_mlr(XT, YT, weights, l2, max_iter, tol, history=None, affine=None):
    """Damped Newton with per-problem Armijo backtracking."""
    F, D, _ = XT.shape
    C = YT.shape[0]
    theta = np.zeros((F, C, D))
    loss, grad, prob = mlr_loss_grad(theta, XT, YT, weights, l2)
    if history is not None:
        history.append(float(loss.sum()))
    n_iter = 0
    for n_iter in range(1, max_iter + 1):
        if np.max(np.abs(grad)) < tol:
            n_iter -= 1
            break
        H = mlr_hessian(prob, XT, weights, l2, affine)
        # intercepts are shift-invariant across classes; tiny damping fixes the null direction
        damp = 1e-10 * (1.0 + np.trace(H, axis1=1, axis2=2) / (C * D))
        H += damp[:, None, None] * np.eye(C * D)
        step = -np.linalg.solve(H, grad.reshape(F, C * D, 1)).reshape(F, C, D)
        slope = np.sum(step * grad, axis=(1, 2))
        t = np.ones(F)
        active = np.ones(F, dtype=bool)
        for _ in range(30):
            trial = theta + t[:, None, None] * step
            new_loss, new_grad, new_prob = mlr_loss_grad(trial, XT, YT, weights, l2)
            ok = new_loss <= loss + 1e-4 * t * slope
            accept = active & ok
            theta[accept] = trial[accept]
            loss[accept] = new_loss[accept]
            grad[accept] = new_grad[accept]
            prob[accept] = new_prob[accept]
            active &= ~ok
            if not active.any():
                break
            t[active] *= 0.5
        if history is not None:
            history.append(float(loss.sum()))
        if active.all():
            break
    return theta, n_iter


def _lbfgs_mlr(XT, YT, weights, l2, max_iter, tol, history=None):
    F, D, _ = XT.shape
    C = YT.shape[0]

    def fun(x):
        loss, grad, _ = mlr_loss_grad(x.reshape(F, C, D), XT, YT, weights, l2)
        return loss.sum(), grad.ravel()

    def callback(intermediate_result):
        history.append(float(intermediate_result.fun))

    if history is not None:
        history.append(float(fun(np.zeros(F * C * D))[0]))
    res = minimize(
        fun,
        np.zeros(F * C * D),
        jac=True,
        method="L-BFGS-B",
        callback=callback if history is not None else None,
        options={"maxiter": max_iter, "gtol": tol, "ftol": 1e-12},
    )
    return res.x.reshape(F, C, D), int(res.nit)


def solve_mlr(
    XT, YT, weights, l2=MLR_L2, max_iter=MLR_MAX_ITER, tol=MLR_TOL, history=None, method="auto", affine=None
):
    """Fit a stack of multinomial models; returns ``(theta, n_iter)``.

    ``method="auto"`` uses Newton steps for small models and L-BFGS for large
    ones.
    """
    C, D = YT.shape[0], XT.shape[1]
    if method == "auto":
        method = "newton" if C * D <= NEWTON_MAX_PARAMS else "lbfgs"
    if method == "newton":
        return _newton_mlr(XT, YT, weights, l2, max_iter, tol, history, affine)
    return _lbfgs_mlr(XT, YT, weights, l2, max_iter, tol, history)


def _augment(Xs: np.ndarray) -> np.ndarray:
    """``(F, n, d)`` standardised data -> ``(F, d + 1, n)`` with a ones row."""
    F, n, _ = Xs.shape
    return np.concatenate([Xs.transpose(0, 2, 1), np.ones((F, 1, n))], axis=1)


def _standardizing_affine(mean: np.ndarray, scale: np.ndarray) -> np.ndarray:
    """``(F, D, D)`` maps taking ``[x; 1]`` to ``[(x - mean) / scale; 1]``."""
    F, d = mean.shape
    T = np.zeros((F, d + 1, d + 1))
    idx = np.arange(d)
    T[:, idx, idx] = 1.0 / scale
    T[:, :d, d] = -mean / scale
    T[:, d, d] = 1.0
    return T


@dataclass
class MLRModel:
    """Softmax-linear classifier over internally standardised features."""

    coef: np.ndarray
    intercept: np.ndarray
    mean: np.ndarray
    scale: np.ndarray
    loss_history: list = field(default_factory=list)
    n_iter: int = 0
    kind: str = "MLR"

    @property
    def n_features(self) -> int:
        return self.coef.shape[0]

    def decision_function(self, X) -> np.ndarray:
        Xs = (np.asarray(X, dtype=float) - self.mean) / self.scale
        return Xs @ self.coef + self.intercept

    def predict_proba(self, X) -> np.ndarray:
        return softmax(self.decision_function(X), axis=1)

    def predict(self, X) -> np.ndarray:
        return np.argmax(self.decision_function(X), axis=1)

    def scores(self, X) -> np.ndarray:
        return self.predict_proba(X)


def _standardizer(X: np.ndarray, rows: Optional[np.ndarray] = None):
    ref = X if rows is None else X[rows]
    mean = ref.mean(axis=0)
    scale = ref.std(axis=0)
    scale = np.where(scale > 0, scale, 1.0)
    return mean, scale


def fit_mlr(
    X,
    y,
    l2: float = MLR_L2,
    max_iter: int = MLR_MAX_ITER,
    tol: float = MLR_TOL,
    n_classes: Optional[int] = None,
) -> MLRModel:
    """Fit multinomial logistic regression.

    Features are standardised with the training statistics. The penalised
    log-loss is minimised by damped Newton steps (small models) or L-BFGS
    (large ones); both stop once the largest gradient component falls below
    ``tol`` or after ``max_iter`` iterations, and never increase the loss.

    Args:
        X: ``(n, d)`` training matrix.
        y: Labels ``0..C-1``.
        l2: Weight penalty on the mean log-loss.
        max_iter: Iteration cap.
        tol: Gradient tolerance.
        n_classes: Number of classes (defaults to ``max(y) + 1``).
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=int)
    if X.ndim != 2 or X.shape[1] == 0:
        raise ConstraintError("MLR needs at least one feature")
    if not np.all(np.isfinite(X)):
        raise ValueError("feature matrix contains non-finite values")
    if np.unique(y).size < 2:
        raise ValueError("MLR needs at least two classes")
    C = n_classes or int(y.max()) + 1
    mean, scale = _standardizer(X)
    XT = _augment(((X - mean) / scale)[None])
    YT = np.eye(C)[y].T
    weights = np.full((1, X.shape[0]), 1.0 / X.shape[0])
    history: list = []
    theta, n_iter = solve_mlr(XT, YT, weights, l2, max_iter, tol, history)
    coef = theta[0, :, :-1].T.copy()
    return MLRModel(coef, theta[0, :, -1].copy(), mean, scale, history, n_iter)


def fit_classifier(X, y, n_classes: int) -> Union[LDAModel, MLRModel]:
    """LDA for two classes, MLR otherwise."""
    if n_classes == 2:
        return fit_lda(X, y)
    return fit_mlr(X, y, n_classes=n_classes)


# --------------------------------------------------------------------------
# Cross-validated error


def _fold_balanced_accuracy(y, pred, folds, n_folds, n_classes) -> np.ndarray:
    counts = np.bincount(
        (folds * n_classes + y) * n_classes + pred,
        minlength=n_folds * n_classes * n_classes,
    ).reshape(n_folds, n_classes, n_classes)
    support = counts.sum(axis=2)
    hits = np.einsum("fcc->fc", counts)
    with np.errstate(invalid="ignore", divide="ignore"):
        recall = hits / support
    return np.nanmean(recall, axis=1)


def cv_error(X, y, mask, plan: FoldPlan, n_classes: Optional[int] = None) -> float:
    """Cross-validated ``1 - balanced accuracy`` of the masked features.

    ``X`` may also be a dataset object exposing ``X``, ``labels`` and
    ``n_classes``; then ``y`` is ignored.
    """
    if hasattr(X, "labels"):
        dataset = X
        X, y, n_classes = dataset.X, dataset.labels, dataset.n_classes
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=int)
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        raise ConstraintError("feature mask selects nothing; at least one feature is required")
    n_classes = n_classes or int(y.max()) + 1
    Xm = X[:, mask]
    scores = []
    for f in range(plan.n_folds):
        tr, te = plan.train_index(f), plan.test_index(f)
        if n_classes == 2:
            model = fit_lda(Xm[tr], y[tr])
        else:
            model = fit_mlr(Xm[tr], y[tr], n_classes=n_classes)
        pred = model.predict(Xm[te])
        recall = [np.mean(pred[y[te] == c] == c) for c in np.unique(y[te])]
        scores.append(np.mean(recall))
    return float(1.0 - np.mean(scores))


class CVFitness:
    """Cached, fold-batched fitness for feature masks over one data matrix.

    Args:
        X: ``(n, k)`` data matrix (one view, or a column subset of several).
        y: Labels ``0..C-1``.
        plan: Fold plan, fixed for the whole run.
        n_classes: Number of classes; LDA is used when it equals two.
        classifier: ``"auto"``, ``"lda"`` or ``"mlr"``.
    """

    def __init__(
        self,
        X,
        y,
        plan: FoldPlan,
        n_classes: Optional[int] = None,
        classifier: str = "auto",
        ridge: float = LDA_RIDGE,
        l2: float = MLR_L2,
        max_iter: int = MLR_MAX_ITER,
        tol: float = MLR_TOL,
    ):
        self.X = np.ascontiguousarray(X, dtype=float)
        self.y = np.asarray(y, dtype=int)
        if not np.all(np.isfinite(self.X)):
            raise ValueError("feature matrix contains non-finite values")
        self.plan = plan
        self.n_classes = n_classes or int(self.y.max()) + 1
        if classifier == "auto":
            classifier = "lda" if self.n_classes == 2 else "mlr"
        if classifier == "lda" and self.n_classes != 2:
            raise ValueError("LDA fitness is only defined for two classes")
        self.classifier = classifier
        self.ridge, self.l2, self.max_iter, self.tol = ridge, l2, max_iter, tol
        self.n_evaluations = 0
        self._cache: dict[bytes, float] = {}
        self._lock = threading.Lock()

        F, (n, k) = plan.n_folds, self.X.shape
        folds = plan.assignments
        self._train = (folds[None, :] != np.arange(F)[:, None])
        n_train = self._train.sum(axis=1)
        if classifier == "lda":
            means = np.empty((F, 2, k))
            self._log_prior = np.empty(F)
            Z = np.empty((F, n, k))
            for f in range(F):
                tr = self._train[f]
                for c in (0, 1):
                    means[f, c] = self.X[tr & (self.y == c)].mean(axis=0)
                n1 = np.sum(tr & (self.y == 1))
                self._log_prior[f] = np.log(n1 / (n_train[f] - n1))
                Z[f] = (self.X - means[f, self.y]) * tr[:, None]
            self._means = means
            self._dof = np.maximum(n_train - 2, 1).astype(float)
            if k <= GRAM_MAX_FEATURES:
                self._gram = np.matmul(Z.transpose(0, 2, 1), Z)
                self._Z = None
            else:
                self._gram = None
                self._Z = Z
        else:
            self._mean = np.empty((F, k))
            self._scale = np.empty((F, k))
            for f in range(F):
                self._mean[f], self._scale[f] = _standardizer(self.X, self._train[f])
            self._weights = self._train / n_train[:, None]
            self._YT = np.eye(self.n_classes)[self.y].T.copy()

    def __len__(self) -> int:
        return len(self._cache)

    @staticmethod
    def key(mask: np.ndarray) -> bytes:
        return np.packbits(mask).tobytes()

    def error(self, mask) -> float:
        """Cross-validated error of ``mask``; cached."""
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != (self.X.shape[1],):
            raise ValueError(f"mask length {mask.shape} does not match {self.X.shape[1]} features")
        key = self.key(mask)
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        if not mask.any():
            raise ConstraintError("feature mask selects nothing; at least one feature is required")
        value = self._compute(np.flatnonzero(mask))
        with self._lock:
            self._cache[key] = value
            self.n_evaluations += 1
        return value

    def evaluate(self, mask) -> Fitness:
        return Fitness(self.error(mask), int(np.count_nonzero(mask)))

    def objectives(self, masks) -> np.ndarray:
        """``(n, 2)`` array of (error, feature count) for a stack of masks."""
        masks = np.asarray(masks, dtype=bool)
        out = np.empty((masks.shape[0], 2))
        for i, m in enumerate(masks):
            out[i, 0] = self.error(m)
            out[i, 1] = np.count_nonzero(m)
        return out

    def _compute(self, cols: np.ndarray) -> float:
        folds = self.plan.assignments
        rows = np.arange(self.X.shape[0])
        if self.classifier == "lda":
            if self._gram is not None:
                S = self._gram[:, cols[:, None], cols[None, :]]
            else:
                Z = self._Z[:, :, cols]
                S = np.matmul(Z.transpose(0, 2, 1), Z)
            S = S / self._dof[:, None, None]
            mu = self._means[:, :, cols]
            w = _ridge_solve(S, mu[:, 1] - mu[:, 0], self.ridge)
            intercept = -np.einsum("fd,fd->f", w, mu[:, 0] + mu[:, 1]) / 2 + self._log_prior
            scores = self.X[:, cols] @ w.T + intercept
            pred = (scores[rows, folds] > 0).astype(int)
        else:
            Xm = self.X[:, cols]
            mean, scale = self._mean[:, cols], self._scale[:, cols]
            XT = _augment((Xm[None] - mean[:, None]) / scale[:, None])
            raw = np.vstack([Xm.T, np.ones((1, Xm.shape[0]))])
            affine = (raw, _standardizing_affine(mean, scale))
            theta, _ = solve_mlr(
                XT, self._YT, self._weights, self.l2, self.max_iter, self.tol, affine=affine
            )
            logits = theta @ XT
            pred = np.argmax(logits[folds, :, rows], axis=1)
        bal = _fold_balanced_accuracy(self.y, pred, folds, self.plan.n_folds, self.n_classes)
        return float(1.0 - bal.mean())
