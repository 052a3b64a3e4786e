import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mmfsga.evaluation import (
    ConstraintError,
    CVFitness,
    cv_error,
    fit_lda,
    fit_mlr,
    make_fold_plan,
    mlr_loss_grad,
    solve_mlr,
)
from mmfsga.metrics import balanced_accuracy


def _blobs(centers, n, rng, sd=0.5):
    X = np.vstack([rng.normal(c, sd, size=(n, len(c))) for c in centers])
    y = np.repeat(np.arange(len(centers)), n)
    return X, y


class TestFoldPlan:
    def test_binary_exact_divisibility(self):
        y = np.repeat([0, 1], 100)
        plan = make_fold_plan(y, 10, seed=3)
        for f in range(10):
            te = plan.test_index(f)
            assert np.bincount(y[te], minlength=2).tolist() == [10, 10]

    def test_four_class(self):
        y = np.repeat(np.arange(4), 100)
        plan = make_fold_plan(y, 10, seed=0)
        for f in range(10):
            assert np.bincount(y[plan.test_index(f)], minlength=4).tolist() == [10] * 4

    def test_same_seed_same_plan(self):
        y = np.repeat([0, 1], 50)
        assert np.array_equal(make_fold_plan(y, 10, 7).assignments, make_fold_plan(y, 10, 7).assignments)

    @given(st.lists(st.integers(10, 40), min_size=2, max_size=4), st.integers(0, 1000))
    @settings(max_examples=50)
    def test_stratified_partition(self, sizes, seed):
        y = np.repeat(np.arange(len(sizes)), sizes)
        plan = make_fold_plan(y, 10, seed)
        idx = np.concatenate([plan.test_index(f) for f in range(10)])
        assert sorted(idx.tolist()) == list(range(y.size))
        for c, n in enumerate(sizes):
            per_fold = [np.sum(y[plan.test_index(f)] == c) for f in range(10)]
            assert max(per_fold) - min(per_fold) <= 1
            assert all(abs(p - n / 10) <= 1 for p in per_fold)

    def test_small_class_named(self):
        y = np.array([0] * 20 + [1] * 5)
        with pytest.raises(ValueError, match="class 1"):
            make_fold_plan(y, 10)


class TestLDA:
    def test_separated_classes(self):
        rng = np.random.default_rng(0)
        X = np.concatenate([rng.normal(-3, 1, 200), rng.normal(3, 1, 200)])[:, None]
        y = np.repeat([0, 1], 200)
        model = fit_lda(X, y)
        assert balanced_accuracy(y, model.predict(X)) >= 0.95

    def test_no_signal_is_chance(self):
        rng = np.random.default_rng(1)
        X, Xt = rng.normal(size=(200, 5)), rng.normal(size=(2000, 5))
        y, yt = np.repeat([0, 1], 100), np.repeat([0, 1], 1000)
        model = fit_lda(X, y)
        assert abs(balanced_accuracy(yt, model.predict(Xt)) - 0.5) <= 0.1

    def test_duplicated_column(self):
        rng = np.random.default_rng(2)
        x = np.concatenate([rng.normal(-1, 1, 50), rng.normal(1, 1, 50)])
        X = np.column_stack([x, x, x])
        y = np.repeat([0, 1], 50)
        model = fit_lda(X, y)
        assert np.all(np.isfinite(model.coef))
        assert balanced_accuracy(y, model.predict(X)) > 0.75

    def test_more_features_than_samples(self):
        rng = np.random.default_rng(3)
        X = rng.normal(size=(20, 60))
        y = np.repeat([0, 1], 10)
        assert np.all(np.isfinite(fit_lda(X, y).coef))

    def test_single_class(self):
        with pytest.raises(ValueError):
            fit_lda(np.ones((5, 2)), np.zeros(5, int))

    def test_no_features(self):
        with pytest.raises(ConstraintError):
            fit_lda(np.ones((4, 0)), np.array([0, 0, 1, 1]))

    def test_scores_and_dimension(self):
        rng = np.random.default_rng(4)
        X, y = _blobs([[0, 0], [2, 2]], 30, rng)
        model = fit_lda(X, y)
        assert model.n_features == 2
        assert np.array_equal(model.predict(X), (model.scores(X) > 0).astype(int))


class TestMLR:
    @given(st.integers(0, 10_000), st.integers(2, 4), st.integers(1, 4))
    @settings(max_examples=40)
    def test_gradient_matches_finite_differences(self, seed, C, d):
        rng = np.random.default_rng(seed)
        n = 15
        XT = np.vstack([rng.normal(size=(d, n)), np.ones((1, n))])[None]
        YT = np.eye(C)[rng.integers(0, C, n)].T
        w = np.full((1, n), 1 / n)
        theta = rng.normal(scale=0.5, size=(1, C, d + 1))
        _, grad, _ = mlr_loss_grad(theta, XT, YT, w, 1e-2)
        num = np.empty_like(theta)
        h = 1e-6
        for idx in np.ndindex(theta.shape):
            tp, tm = theta.copy(), theta.copy()
            tp[idx] += h
            tm[idx] -= h
            num[idx] = (mlr_loss_grad(tp, XT, YT, w, 1e-2)[0][0] - mlr_loss_grad(tm, XT, YT, w, 1e-2)[0][0]) / (2 * h)
        scale = max(np.abs(grad).max(), 1e-3)
        assert np.abs(grad - num).max() / scale <= 1e-5

    def test_separable_three_class(self):
        rng = np.random.default_rng(0)
        X, y = _blobs([[0, 0], [5, 0], [0, 5]], 50, rng)
        model = fit_mlr(X, y)
        assert balanced_accuracy(y, model.predict(X)) >= 0.95

    def test_probabilities_sum_to_one(self):
        rng = np.random.default_rng(1)
        X, y = _blobs([[0, 0], [2, 0], [0, 2], [2, 2]], 25, rng, sd=1.0)
        P = fit_mlr(X, y).predict_proba(rng.normal(size=(100, 2)) * 10)
        assert np.abs(P.sum(axis=1) - 1).max() <= 1e-9

    @pytest.mark.parametrize("method", ["newton", "lbfgs"])
    @pytest.mark.parametrize("seed", range(5))
    def test_loss_non_increasing(self, method, seed):
        rng = np.random.default_rng(seed)
        X, y = _blobs([[0, 0, 0], [1, 0, 1], [0, 1, 1]], 30, rng, sd=1.0)
        Xs = (X - X.mean(0)) / X.std(0)
        XT = np.vstack([Xs.T, np.ones((1, X.shape[0]))])[None]
        YT = np.eye(3)[y].T
        w = np.full((1, X.shape[0]), 1 / X.shape[0])
        history = []
        solve_mlr(XT, YT, w, history=history, method=method)
        losses = np.array([np.ravel(h)[0] for h in history])
        assert losses.size >= 2
        assert np.all(np.diff(losses) <= 1e-12)

    def test_non_finite(self):
        X = np.array([[0.0], [np.nan], [1.0], [2.0]])
        with pytest.raises(ValueError):
            fit_mlr(X, np.array([0, 0, 1, 1]))

    def test_one_class(self):
        with pytest.raises(ValueError):
            fit_mlr(np.ones((4, 1)), np.zeros(4, int))


class TestCVError:
    def test_label_feature_is_perfect(self):
        rng = np.random.default_rng(0)
        y = np.repeat([0, 1], 100)
        X = np.column_stack([y + 0.01 * rng.normal(size=200), rng.normal(size=200)])
        plan = make_fold_plan(y, 10, 0)
        assert cv_error(X, y, [True, False], plan) <= 0.01

    @pytest.mark.parametrize("C,chance", [(2, 0.5), (4, 0.75)])
    def test_noise_is_chance(self, C, chance):
        rng = np.random.default_rng(C)
        y = np.repeat(np.arange(C), 100)
        X = rng.normal(size=(y.size, 5))
        plan = make_fold_plan(y, 10, 1)
        assert abs(cv_error(X, y, np.ones(5, bool), plan, C) - chance) <= 0.1

    def test_empty_mask(self):
        y = np.repeat([0, 1], 20)
        with pytest.raises(ConstraintError):
            cv_error(np.ones((40, 3)), y, np.zeros(3, bool), make_fold_plan(y, 10))

    @pytest.mark.parametrize("C", [2, 3])
    def test_fitness_matches_reference(self, C):
        rng = np.random.default_rng(10 + C)
        centers = rng.normal(scale=1.0, size=(C, 8))
        X, y = _blobs(centers, 30, rng, sd=1.0)
        plan = make_fold_plan(y, 10, 5)
        fit = CVFitness(X, y, plan, C)
        for _ in range(6):
            mask = rng.random(8) < 0.5
            mask[rng.integers(8)] = True
            assert fit.error(mask) == pytest.approx(cv_error(X, y, mask, plan, C), abs=1e-9)

    def test_fitness_is_cached_and_deterministic(self):
        rng = np.random.default_rng(0)
        X, y = _blobs([[0] * 4, [1] * 4], 20, rng)
        fit = CVFitness(X, y, make_fold_plan(y, 10, 0))
        mask = np.array([1, 0, 1, 0], bool)
        a = fit.error(mask)
        assert fit.error(mask.copy()) == a
        assert fit.n_evaluations == 1
        obj = fit.objectives([mask, mask])
        assert obj[:, 1].tolist() == [2, 2] and np.all((obj[:, 0] >= 0) & (obj[:, 0] <= 1))

    def test_fitness_rejects_empty_and_wrong_length(self):
        y = np.repeat([0, 1], 20)
        fit = CVFitness(np.random.default_rng(0).normal(size=(40, 3)), y, make_fold_plan(y, 10))
        with pytest.raises(ConstraintError):
            fit.error(np.zeros(3, bool))
        with pytest.raises(ValueError):
            fit.error(np.ones(4, bool))

    def test_wide_view_path(self):
        # more than the Gram threshold exercises the streaming branch
        rng = np.random.default_rng(8)
        y = np.repeat([0, 1], 20)
        X = rng.normal(size=(40, 1100))
        X[:, 0] += 3 * y
        plan = make_fold_plan(y, 10, 0)
        fit = CVFitness(X, y, plan)
        mask = np.zeros(1100, bool)
        mask[[0, 5, 900]] = True
        assert fit.error(mask) == pytest.approx(cv_error(X, y, mask, plan), abs=1e-9)
