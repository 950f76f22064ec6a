"""Target posteriors.

Every target exposes the same small surface used by the samplers:

* ``dim`` -- parameter dimension,
* ``full_gradient(theta)`` -- exact gradient of the negative log-posterior ``U``,
* ``draw_batch(stream, batch_size, n_steps)`` -- the per-step randomness behind
  the stochastic gradient (minibatch indices for data models, noise values for
  synthetic targets),
* ``minibatch_gradient(theta, batch)`` -- the stochastic gradient for a batch.

``draw_batch`` is split into ``draw_batch_keys`` (raw per-chain uniforms) and
``batch_from_keys`` so drivers can transform many chains' keys in one call.

``theta`` may carry leading chain axes: ``(d,)`` or ``(n_chains, d)``.
"""
from __future__ import annotations

import re
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import expit, logsumexp
from scipy.optimize import minimize
from scipy.stats import norm

from latticewalk.noise import (
    NoiseSpec,
    SyntheticNoiseModel,
    minibatch_from_keys,
    minibatch_keys,
    sample_noise,
    sample_synthetic_noise,
)


@dataclass(frozen=True)
class GaussianSummary:
    mean: np.ndarray
    covariance: np.ndarray

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        cov = np.atleast_2d(np.asarray(self.covariance, dtype=float))
        if cov.shape != (mean.size, mean.size):
            raise ValueError(f"covariance shape {cov.shape} does not match mean of length {mean.size}")
        scale = max(np.abs(cov).max(), np.finfo(float).tiny)
        if np.abs(cov - cov.T).max() > 1e-10 * scale:
            raise ValueError("covariance is not symmetric")
        trace = np.trace(cov)
        if np.linalg.eigvalsh(cov).min() < -1e-10 * max(trace, 0.0):
            raise ValueError("covariance is not positive semi-definite")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "covariance", cov)

    @property
    def dim(self) -> int:
        return self.mean.size


def _check_theta(theta, dim):
    theta = np.asarray(theta, dtype=float)
    if theta.shape[-1:] != (dim,):
        raise ValueError(f"parameter dimension {theta.shape[-1:]} does not match model dimension {dim}")
    return theta


class TargetModel(ABC):
    """Posterior ``p(theta | D)`` built from a prior and ``N`` per-datum likelihoods."""

    dim: int
    n_data: int

    @abstractmethod
    def prior_log_grad(self, theta): ...

    @abstractmethod
    def loglik_grad_sum(self, theta, idx):
        """Sum of per-datum log-likelihood gradients over ``idx`` (shape ``(..., B)``)."""

    @abstractmethod
    def neg_log_posterior(self, theta): ...

    def per_datum_gradient(self, theta, index: int):
        if not 0 <= index < self.n_data:
            raise IndexError(f"datum index {index} out of range for N={self.n_data}")
        theta = _check_theta(theta, self.dim)
        idx = np.full(theta.shape[:-1] + (1,), index)
        return self.loglik_grad_sum(theta, idx)

    def full_gradient(self, theta):
        theta = _check_theta(theta, self.dim)
        idx = np.broadcast_to(np.arange(self.n_data), theta.shape[:-1] + (self.n_data,))
        return -self.prior_log_grad(theta) - self.loglik_grad_sum(theta, idx)

    def minibatch_gradient(self, theta, batch):
        batch = np.asarray(batch)
        if batch.shape[-1] == 0:
            raise ValueError("empty minibatch")
        theta = _check_theta(theta, self.dim)
        scale = self.n_data / batch.shape[-1]
        return -self.prior_log_grad(theta) - scale * self.loglik_grad_sum(theta, batch)

    def draw_batch_keys(self, stream, batch_size, n_steps):
        return minibatch_keys(stream, self.n_data, batch_size, size=n_steps)

    def batch_from_keys(self, keys, batch_size):
        return minibatch_from_keys(keys, self.n_data, batch_size)

    def draw_batch(self, stream, batch_size, n_steps):
        return self.batch_from_keys(self.draw_batch_keys(stream, batch_size, n_steps), batch_size)


class LinearGaussianModel(TargetModel):
    """``y = X theta + eps``, ``eps ~ N(0, noise_variance I)``, prior ``N(0, I / prior_precision)``."""

    def __init__(self, design_matrix, targets, noise_variance=1.0, prior_precision=1.0):
        X = np.atleast_2d(np.asarray(design_matrix, dtype=float))
        y = np.asarray(targets, dtype=float).ravel()
        if X.shape[0] != y.size:
            raise ValueError(f"design matrix has {X.shape[0]} rows but {y.size} targets")
        if not noise_variance > 0 or not prior_precision > 0:
            raise ValueError("noise_variance and prior_precision must be positive")
        self.X, self.y = X, y
        self.noise_variance = float(noise_variance)
        self.prior_precision = float(prior_precision)
        self.n_data, self.dim = X.shape

    def prior_log_grad(self, theta):
        return -self.prior_precision * np.asarray(theta, dtype=float)

    def loglik_grad_sum(self, theta, idx):
        Xb = self.X[idx]
        resid = self.y[idx] - np.einsum("...bd,...d->...b", Xb, theta)
        return np.einsum("...bd,...b->...d", Xb, resid) / self.noise_variance

    def neg_log_posterior(self, theta):
        theta = _check_theta(theta, self.dim)
        resid = self.y - theta @ self.X.T
        return 0.5 * (resid**2).sum(-1) / self.noise_variance + 0.5 * self.prior_precision * (theta**2).sum(-1)


class LogisticModel(TargetModel):
    """Bernoulli likelihood with logit ``x . theta`` and prior ``N(0, I / prior_precision)``."""

    def __init__(self, features, labels, prior_precision=1.0):
        X = np.atleast_2d(np.asarray(features, dtype=float))
        y = np.asarray(labels, dtype=float).ravel()
        if X.shape[0] != y.size:
            raise ValueError(f"{X.shape[0]} feature rows but {y.size} labels")
        if not np.isin(y, (0.0, 1.0)).all():
            raise ValueError("labels must be 0 or 1")
        if not np.isfinite(X).all():
            raise ValueError("features must be finite")
        if not prior_precision > 0:
            raise ValueError("prior_precision must be positive")
        self.X, self.y = X, y
        self.prior_precision = float(prior_precision)
        self.n_data, self.dim = X.shape

    def prior_log_grad(self, theta):
        return -self.prior_precision * np.asarray(theta, dtype=float)

    def loglik_grad_sum(self, theta, idx):
        Xb = self.X[idx]
        logits = np.einsum("...bd,...d->...b", Xb, theta)
        return np.einsum("...bd,...b->...d", Xb, self.y[idx] - expit(logits))

    def neg_log_posterior(self, theta):
        theta = _check_theta(theta, self.dim)
        logits = theta @ self.X.T
        # -log p(y|z) = softplus(z) - y z, evaluated without overflow
        nll = (np.logaddexp(0.0, logits) - self.y * logits).sum(-1)
        return nll + 0.5 * self.prior_precision * (theta**2).sum(-1)

    def predict_proba(self, theta, features):
        return expit(np.asarray(features, dtype=float) @ np.asarray(theta).T)


class SyntheticNoiseTarget(ABC):
    """Target whose stochastic gradient is the exact gradient plus injected noise.

    The per-step "batch" is the noise vector itself, so samplers driven by the
    same stream see the same noise sequence.
    """

    dim: int

    @abstractmethod
    def full_gradient(self, theta): ...

    @abstractmethod
    def sample_gradient_noise(self, stream, n_steps): ...

    def draw_batch_keys(self, stream, batch_size, n_steps):
        return self.sample_gradient_noise(stream, n_steps)

    def batch_from_keys(self, keys, batch_size):
        return keys

    def draw_batch(self, stream, batch_size, n_steps):
        return self.sample_gradient_noise(stream, n_steps)

    def minibatch_gradient(self, theta, batch):
        return self.full_gradient(theta) + batch


@dataclass(frozen=True)
class Mixture1DModel(SyntheticNoiseTarget):
    """Univariate Gaussian mixture; ``U`` is its negative log-density."""

    weights: tuple = (0.3, 0.4, 0.3)
    means: tuple = (-4.0, 0.0, 4.0)
    stds: tuple = (0.8, 0.8, 0.8)
    noise_spec: NoiseSpec | None = field(default_factory=lambda: NoiseSpec("alpha_stable", 1.5, 1.0))

    dim = 1

    def __post_init__(self):
        w, m, s = (np.asarray(v, dtype=float) for v in (self.weights, self.means, self.stds))
        if not (w.shape == m.shape == s.shape) or w.ndim != 1:
            raise ValueError("weights, means and stds must be equal-length sequences")
        if (w <= 0).any() or (s <= 0).any():
            raise ValueError("weights and stds must be positive")
        if abs(w.sum() - 1.0) > 1e-12:
            raise ValueError(f"weights must sum to 1, got {w.sum()!r}")
        object.__setattr__(self, "weights", tuple(w))
        object.__setattr__(self, "means", tuple(m))
        object.__setattr__(self, "stds", tuple(s))

    def _component_logpdf(self, x):
        x = np.asarray(x, dtype=float)[..., None]
        m, s = np.asarray(self.means), np.asarray(self.stds)
        return np.log(self.weights) - 0.5 * ((x - m) / s) ** 2 - np.log(s) - 0.5 * np.log(2 * np.pi)

    def log_density(self, x):
        return logsumexp(self._component_logpdf(x), axis=-1)

    def density(self, x):
        return np.exp(self.log_density(x))

    def cdf(self, x):
        x = np.asarray(x, dtype=float)[..., None]
        return (np.asarray(self.weights) * norm.cdf(x, self.means, self.stds)).sum(-1)

    def gradient(self, x):
        """d/dx of ``-log p(x)`` (responsibility-weighted Gaussian scores)."""
        comp = self._component_logpdf(x)
        resp = np.exp(comp - logsumexp(comp, axis=-1, keepdims=True))
        x = np.asarray(x, dtype=float)[..., None]
        return (resp * (x - np.asarray(self.means)) / np.asarray(self.stds) ** 2).sum(-1)

    def full_gradient(self, theta):
        theta = _check_theta(theta, 1)
        return self.gradient(theta[..., 0])[..., None]

    def neg_log_posterior(self, theta):
        return -self.log_density(_check_theta(theta, 1)[..., 0])

    def sample(self, stream, n):
        comp = stream.choice(len(self.weights), size=n, p=self.weights)
        return stream.normal(np.asarray(self.means)[comp], np.asarray(self.stds)[comp])

    def sample_gradient_noise(self, stream, n_steps):
        if self.noise_spec is None:
            return np.zeros((n_steps, 1))
        return sample_noise(stream, self.noise_spec, 1, size=n_steps)


class QuadraticTarget(SyntheticNoiseTarget):
    """``U(theta) = 0.5 (theta - mean)^T precision (theta - mean)`` with synthetic gradient noise."""

    def __init__(self, precision, mean=None, noise_model: SyntheticNoiseModel | None = None):
        self.precision = np.atleast_2d(np.asarray(precision, dtype=float))
        self.dim = self.precision.shape[0]
        self.mean = np.zeros(self.dim) if mean is None else np.asarray(mean, dtype=float)
        self.noise_model = noise_model

    def full_gradient(self, theta):
        theta = _check_theta(theta, self.dim)
        return (theta - self.mean) @ self.precision.T

    def neg_log_posterior(self, theta):
        diff = _check_theta(theta, self.dim) - self.mean
        return 0.5 * ((diff @ self.precision.T) * diff).sum(-1)

    def sample_gradient_noise(self, stream, n_steps):
        if self.noise_model is None:
            return np.zeros((n_steps, self.dim))
        return sample_synthetic_noise(stream, self.noise_model, size=n_steps)


def full_gradient(model, params):
    return model.full_gradient(params)


def per_datum_gradient(model: TargetModel, params, index: int):
    return model.per_datum_gradient(params, index)


def mixture1d_gradient(model: Mixture1DModel, x):
    return model.gradient(x)


def linreg_analytic_posterior(model: LinearGaussianModel) -> GaussianSummary:
    """Exact Gaussian posterior of the linear-Gaussian model."""
    X, s2 = model.X, model.noise_variance
    precision = X.T @ X / s2 + model.prior_precision * np.eye(model.dim)
    rhs = X.T @ model.y / s2
    chol = np.linalg.cholesky(precision)
    eye = np.eye(model.dim)
    inv_chol = np.linalg.solve(chol, eye)
    cov = inv_chol.T @ inv_chol
    cov = 0.5 * (cov + cov.T)
    mean = cov @ rhs
    resid = np.linalg.norm(precision @ mean - rhs)
    if resid > 1e-8 * max(1.0, np.linalg.norm(rhs)):
        raise np.linalg.LinAlgError(f"posterior solve residual {resid:.3e} exceeds tolerance")
    return GaussianSummary(mean, cov)


def map_estimate(model, x0=None):
    """Mode of the posterior by L-BFGS on ``U``; used to warm-start chains."""
    x0 = np.zeros(model.dim) if x0 is None else np.asarray(x0, dtype=float)
    res = minimize(
        lambda th: float(model.neg_log_posterior(th)),
        x0,
        jac=lambda th: model.full_gradient(th),
        method="L-BFGS-B",
        options={"maxiter": 10_000, "gtol": 1e-10},
    )
    return res.x


def make_linear_regression(n_data, dim, noise_variance=1.0, prior_precision=1.0, seed=0):
    """Synthetic data: ``theta* ~ N(0, I)``, rows of ``X ~ N(0, I)``, ``y = X theta* + eps``."""
    rng = np.random.default_rng(seed)
    theta_star = rng.standard_normal(dim)
    X = rng.standard_normal((n_data, dim))
    y = X @ theta_star + np.sqrt(noise_variance) * rng.standard_normal(n_data)
    return LinearGaussianModel(X, y, noise_variance, prior_precision), theta_star


def make_logistic_blobs(n_data, dim, separation=1.0, prior_precision=1.0, seed=0):
    """Two overlapping Gaussian blobs at ``+/- separation / 2`` along a random direction.

    The last feature is a constant 1 (intercept column).
    """
    rng = np.random.default_rng(seed)
    labels = rng.integers(0, 2, n_data).astype(float)
    direction = rng.standard_normal(dim - 1)
    direction /= np.linalg.norm(direction)
    feats = rng.standard_normal((n_data, dim - 1)) + np.outer(labels - 0.5, separation * direction)
    X = np.hstack([feats, np.ones((n_data, 1))])
    return LogisticModel(X, labels, prior_precision)


def load_numeric_matrix(path):
    """Read a numeric table (whitespace or comma separated, ``#`` comments).

    Returns ``(features, target)`` where ``target`` is the last column.
    """
    rows = []
    width = None
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        try:
            row = [float(tok) for tok in re.split(r"[,\s]+", line) if tok]
        except ValueError as exc:
            raise ValueError(f"{path}:{lineno}: {exc}") from None
        if width is None:
            width = len(row)
        elif len(row) != width:
            raise ValueError(f"{path}:{lineno}: expected {width} columns, got {len(row)}")
        rows.append(row)
    if not rows or width < 2:
        raise ValueError(f"{path}: need at least one row with two or more columns")
    data = np.asarray(rows)
    return data[:, :-1], data[:, -1]
