"""scikit-learn style wrappers: fit a posterior by parallel chains, predict with its samples."""
from __future__ import annotations

import numpy as np
from scipy.special import expit
from sklearn.base import BaseEstimator, ClassifierMixin, RegressorMixin
from sklearn.utils.multiclass import check_classification_targets
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from latticewalk.core import ChainConfig, StepSchedule
from latticewalk.models import LinearGaussianModel, LogisticModel, map_estimate
from latticewalk.samplers import SAMPLER_KINDS, run_parallel_chains


class _ChainPosterior(BaseEstimator):
    def __init__(self, sampler="sglrw", step_size=1e-3, schedule="decaying", decay_exponent=0.55, batch_size=32,
                 n_chains=100, n_iters=2000, burn_in=1000, thin=1, prior_precision=1.0, fit_intercept=True,
                 random_state=0, n_workers=1):
        self.sampler = sampler
        self.step_size = step_size
        self.schedule = schedule
        self.decay_exponent = decay_exponent
        self.batch_size = batch_size
        self.n_chains = n_chains
        self.n_iters = n_iters
        self.burn_in = burn_in
        self.thin = thin
        self.prior_precision = prior_precision
        self.fit_intercept = fit_intercept
        self.random_state = random_state
        self.n_workers = n_workers

    def _design(self, X):
        return np.column_stack([X, np.ones(len(X))]) if self.fit_intercept else X

    def _sample(self, model):
        if self.sampler not in SAMPLER_KINDS:
            raise ValueError(f"sampler must be one of {SAMPLER_KINDS}, got {self.sampler!r}")
        seed = 0 if self.random_state is None else int(self.random_state)
        run = run_parallel_chains(
            self.sampler,
            model,
            StepSchedule(self.step_size, self.decay_exponent, self.schedule),
            ChainConfig(self.n_chains, self.n_iters, self.burn_in, seed, thin=self.thin),
            min(self.batch_size, model.n_data),
            init=map_estimate(model),
            n_workers=self.n_workers,
        )
        self.diverged_count_ = int(run.diverged.sum())
        samples = run.flat_samples()
        if samples.shape[0] == 0:
            raise RuntimeError("every chain diverged; lower step_size or raise batch_size")
        self.samples_ = samples
        mean = samples.mean(axis=0)
        if self.fit_intercept:
            self.coef_, self.intercept_ = mean[:-1], float(mean[-1])
        else:
            self.coef_, self.intercept_ = mean, 0.0
        self.n_features_in_ = model.dim - int(self.fit_intercept)

    def _linear_predictor(self, X):
        check_is_fitted(self, "samples_")
        X = check_array(X)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} features, expected {self.n_features_in_}")
        return self._design(X) @ self.samples_.T


class BayesianLinearRegressor(RegressorMixin, _ChainPosterior):
    """Gaussian-likelihood linear regression sampled with SGLD, SGLRW or Clipped-SGLD.

    ``predict`` returns the posterior-mean prediction; ``samples_`` holds the
    pooled post-burn-in draws (last column is the intercept when fitted).
    """

    def __init__(self, sampler="sglrw", step_size=1e-3, schedule="decaying", decay_exponent=0.55, batch_size=32,
                 n_chains=100, n_iters=2000, burn_in=1000, thin=1, noise_variance=1.0, prior_precision=1.0,
                 fit_intercept=True, random_state=0, n_workers=1):
        super().__init__(sampler, step_size, schedule, decay_exponent, batch_size, n_chains, n_iters, burn_in, thin,
                         prior_precision, fit_intercept, random_state, n_workers)
        self.noise_variance = noise_variance

    def fit(self, X, y):
        X, y = check_X_y(X, y, y_numeric=True)
        self._sample(LinearGaussianModel(self._design(X), y, self.noise_variance, self.prior_precision))
        return self

    def predict(self, X):
        return self._linear_predictor(X).mean(axis=1)


class BayesianLogisticClassifier(ClassifierMixin, _ChainPosterior):
    """Binary logistic regression; probabilities average the sigmoid over posterior draws."""

    def fit(self, X, y):
        X, y = check_X_y(X, y)
        check_classification_targets(y)
        self.classes_, encoded = np.unique(y, return_inverse=True)
        if self.classes_.size != 2:
            raise ValueError(f"need exactly two classes, got {self.classes_.size}")
        self._sample(LogisticModel(self._design(X), encoded, self.prior_precision))
        return self

    def predict_proba(self, X):
        logits = self._linear_predictor(X)
        p1 = expit(logits).mean(axis=1)
        return np.column_stack([1.0 - p1, p1])

    def predict(self, X):
        return self.classes_[(self.predict_proba(X)[:, 1] > 0.5).astype(int)]
