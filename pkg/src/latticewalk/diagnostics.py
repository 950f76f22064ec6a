"""Posterior summaries, Gaussian KL, covariance errors and moment oracles.

The Monte-Carlo estimators return a :class:`MonteCarloEstimate` carrying the
empirical standard error next to the value; tests compare against analytic
values in units of that standard error.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import permutations

import numpy as np
from scipy import integrate

from latticewalk.models import GaussianSummary
from latticewalk.noise import SyntheticNoiseModel, sample_gaussian_vector, sample_synthetic_noise
from latticewalk.samplers import sglrw_increment

_CHUNK = 1_000_000


@dataclass(frozen=True)
class MonteCarloEstimate:
    value: float
    stderr: float

    def z_score(self, reference) -> float:
        diff = self.value - reference
        if self.stderr == 0:
            return 0.0 if diff == 0 else math.copysign(math.inf, diff)
        return diff / self.stderr


@dataclass(frozen=True)
class MomentErrorTensor:
    """Second-order minibatch error matrix; ``stderr`` is set for Monte-Carlo estimates."""

    matrix: np.ndarray
    stderr: np.ndarray | None = None

    def z_scores(self, reference) -> np.ndarray:
        diff = self.matrix - np.asarray(reference)
        se = np.zeros_like(diff) if self.stderr is None else self.stderr
        with np.errstate(divide="ignore", invalid="ignore"):
            z = np.where(se > 0, diff / np.where(se > 0, se, 1.0), np.where(diff == 0, 0.0, np.inf))
        return z

    @property
    def frobenius(self) -> float:
        return float(np.linalg.norm(self.matrix))


@dataclass(frozen=True)
class HistogramSummary:
    bin_edges: np.ndarray
    counts: np.ndarray

    def __post_init__(self):
        edges = np.asarray(self.bin_edges, dtype=float)
        counts = np.asarray(self.counts)
        if edges.ndim != 1 or np.any(np.diff(edges) <= 0):
            raise ValueError("bin edges must be strictly increasing")
        if counts.shape != (edges.size - 1,) or (counts < 0).any():
            raise ValueError("counts must be non-negative with one entry per bin")
        object.__setattr__(self, "bin_edges", edges)
        object.__setattr__(self, "counts", counts)


def histogram(samples, edges) -> HistogramSummary:
    counts, edges = np.histogram(np.asarray(samples, dtype=float).ravel(), bins=np.asarray(edges, dtype=float))
    return HistogramSummary(edges, counts)


# -- Gaussian summaries ------------------------------------------------------


def empirical_gaussian_fit(samples) -> GaussianSummary:
    """Sample mean and unbiased covariance of ``samples`` (shape ``(n, d)``).

    A diagonal jitter of ``1e-10 * trace / d`` is added when the covariance is
    numerically singular (``1e-10`` when the trace itself is zero).
    """
    x = np.asarray(samples, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if x.shape[0] < 2:
        raise ValueError("need at least two samples for a covariance estimate")
    mean = x.mean(axis=0)
    cov = np.atleast_2d(np.cov(x, rowvar=False, ddof=1))
    cov = 0.5 * (cov + cov.T)
    if not np.all(np.isfinite(cov)):
        raise FloatingPointError("sample covariance overflowed")
    d = cov.shape[0]
    trace = np.trace(cov)
    eig = np.linalg.eigvalsh(cov)
    if eig.min() <= 1e-12 * max(trace, 0.0):
        jitter = 1e-10 * trace / d if trace > 0 else 1e-10
        cov = cov + jitter * np.eye(d)
    return GaussianSummary(mean, cov)


def gaussian_kl(p: GaussianSummary, q: GaussianSummary) -> float:
    """``KL(p || q)`` between two Gaussians."""
    if p.dim != q.dim:
        raise ValueError("dimension mismatch")
    try:
        chol_q = np.linalg.cholesky(q.covariance)
    except np.linalg.LinAlgError:
        raise np.linalg.LinAlgError("q covariance is not invertible") from None
    sign_p, logdet_p = np.linalg.slogdet(p.covariance)
    if sign_p <= 0:
        raise np.linalg.LinAlgError("p covariance is singular")
    logdet_q = 2.0 * np.log(np.diag(chol_q)).sum()
    a = np.linalg.solve(chol_q, p.covariance)
    trace_term = np.trace(np.linalg.solve(chol_q.T, a))
    diff = np.linalg.solve(chol_q, q.mean - p.mean)
    kl = 0.5 * (trace_term - p.dim + diff @ diff + logdet_q - logdet_p)
    return max(float(kl), 0.0)


def covariance_frobenius_error(est, truth) -> float:
    est, truth = np.atleast_2d(est), np.atleast_2d(truth)
    if est.shape != truth.shape:
        raise ValueError(f"shape mismatch {est.shape} vs {truth.shape}")
    return float(np.linalg.norm(est - truth))


def covariance_mse(sample_runs, truth) -> float:
    """Mean over runs of the squared Frobenius error of each covariance estimate."""
    runs = list(sample_runs)
    if not runs:
        raise ValueError("need at least one covariance estimate")
    return float(np.mean([covariance_frobenius_error(c, truth) ** 2 for c in runs]))


def compare_to_reference(samples, truth: GaussianSummary, diverged_count=0, n_chains=None, max_diverged_fraction=0.5):
    """Fit a Gaussian to ``samples`` and score it against ``truth``.

    Returns ``kl_fit_true`` (KL(fit || truth)), ``kl_true_fit``, ``frob_error``
    (covariance) and ``diverged_count``. When more than ``max_diverged_fraction``
    of the chains diverged, or too few finite samples remain, the metrics are inf.
    """
    x = np.asarray(samples, dtype=float).reshape(-1, truth.dim)
    x = x[np.isfinite(x).all(axis=1)]
    too_many = n_chains is not None and diverged_count > max_diverged_fraction * n_chains
    if too_many or x.shape[0] < 2:
        return {"kl_fit_true": math.inf, "kl_true_fit": math.inf, "frob_error": math.inf, "diverged_count": diverged_count}
    try:
        fit = empirical_gaussian_fit(x)
    except FloatingPointError:
        return {"kl_fit_true": math.inf, "kl_true_fit": math.inf, "frob_error": math.inf, "diverged_count": diverged_count}
    out = {}
    for key, args in (("kl_fit_true", (fit, truth)), ("kl_true_fit", (truth, fit))):
        try:
            out[key] = gaussian_kl(*args)
        except np.linalg.LinAlgError:
            out[key] = math.inf
    out["frob_error"] = covariance_frobenius_error(fit.covariance, truth.covariance)
    out["diverged_count"] = diverged_count
    return out


# -- second-order minibatch error --------------------------------------------


def _vectors(grad, zeta):
    g = np.atleast_1d(np.asarray(grad, dtype=float))
    z = np.atleast_1d(np.asarray(zeta, dtype=float))
    if g.shape != z.shape or g.ndim != 1:
        raise ValueError(f"gradient {g.shape} and noise {z.shape} must be vectors of equal length")
    return g, z


def mn_sgld_analytic(grad, zeta) -> MomentErrorTensor:
    """``zeta zeta^T + grad zeta^T + zeta grad^T``."""
    g, z = _vectors(grad, zeta)
    cross = np.outer(g, z)
    return MomentErrorTensor(np.outer(z, z) + (cross + cross.T))  # grouped so the result is exactly symmetric


def mn_sglrw_analytic(grad, zeta) -> MomentErrorTensor:
    """Off-diagonal part of :func:`mn_sgld_analytic`."""
    m = mn_sgld_analytic(grad, zeta).matrix.copy()
    np.fill_diagonal(m, 0.0)
    return MomentErrorTensor(m)


def _check_unclipped(step, *grads):
    bound = max(np.abs(g).max() for g in grads) * math.sqrt(step / 2.0)
    if bound > 1.0:
        raise ValueError(f"lattice probabilities are clipped (sqrt(step/2)|grad| = {bound:.3g} > 1)")


def mn_monte_carlo(kind, theta, grad, zeta, step, n_samples, stream, chunk=_CHUNK) -> MomentErrorTensor:
    """Monte-Carlo estimate of ``step**-2 E[dmb dmb^T - dfb dfb^T]`` at a fixed ``(theta, zeta)``.

    ``dfb`` uses drift ``grad`` and ``dmb`` uses ``grad + zeta``. Both increments
    share their internal randomness: the same Gaussian for SGLD and the same
    uniforms for the lattice sign draws (a valid coupling since only the
    expectation of the difference is needed).
    """
    if kind not in ("sgld", "sglrw"):
        raise ValueError(f"kind must be 'sgld' or 'sglrw', got {kind!r}")
    g, z = _vectors(grad, zeta)
    if theta is not None and np.shape(theta) != g.shape:
        raise ValueError("theta and grad dimensions differ")
    d = g.size
    if kind == "sglrw":
        _check_unclipped(step, g, g + z)
    total = np.zeros((d, d))
    total_sq = np.zeros((d, d))
    done = 0
    while done < n_samples:
        m = min(chunk, n_samples - done)
        if kind == "sgld":
            xi = sample_gaussian_vector(stream, d, m)
            fb = -step * g + math.sqrt(2.0 * step) * xi
            mb = fb - step * z
        else:
            u = stream.random((m, d))
            fb = sglrw_increment(g, step, u)
            mb = sglrw_increment(g + z, step, u)
        diff = (mb[:, :, None] * mb[:, None, :] - fb[:, :, None] * fb[:, None, :]) / step**2
        total += diff.sum(axis=0)
        total_sq += (diff**2).sum(axis=0)
        done += m
    mean = total / n_samples
    var = np.maximum(total_sq / n_samples - mean**2, 0.0) * n_samples / max(n_samples - 1, 1)
    return MomentErrorTensor(mean, np.sqrt(var / n_samples))


# -- third moments -------------------------------------------------------------


def _index_case(indices):
    i, j, k = indices
    if i == j == k:
        return "iii", (i,)
    if len({i, j, k}) == 3:
        return "ijk", (i, j, k)
    # two equal: return (repeated, odd)
    repeated = i if i in (j, k) else j
    odd = ({i, j, k} - {repeated}).pop()
    return "iik", (repeated, odd)


def third_moment_analytic(kind, grad, zeta_moments, noise_cov, step, indices) -> float:
    """``E[d_i d_j d_k | theta]`` for one SGLD or SGLRW step.

    ``zeta_moments`` is the third-moment tensor ``E[zeta_i zeta_j zeta_k]``
    (``None`` for symmetric noise) and ``noise_cov`` is ``G``.
    """
    if kind not in ("sgld", "sglrw"):
        raise ValueError(f"kind must be 'sgld' or 'sglrw', got {kind!r}")
    g = np.atleast_1d(np.asarray(grad, dtype=float))
    d = g.size
    if len(indices) != 3 or any(not 0 <= int(a) < d for a in indices):
        raise ValueError(f"indices must be three integers in [0, {d})")
    G = np.zeros((d, d)) if noise_cov is None else np.atleast_2d(np.asarray(noise_cov, dtype=float))
    T = np.zeros((d, d, d)) if zeta_moments is None else np.asarray(zeta_moments, dtype=float)
    case, idx = _index_case(tuple(int(a) for a in indices))
    s = step
    if case == "iii":
        (i,) = idx
        if kind == "sglrw":
            return -2 * s**2 * g[i]
        return -6 * s**2 * g[i] - s**3 * (g[i] ** 3 + 3 * g[i] * G[i, i] + T[i, i, i])
    if case == "iik":
        i, k = idx
        if kind == "sglrw":
            return -2 * s**2 * g[k]
        return -2 * s**2 * g[k] - s**3 * (g[i] ** 2 * g[k] + g[k] * G[i, i] + 2 * g[i] * G[i, k] + T[i, i, k])
    i, j, k = idx
    cyc = g[i] * G[j, k] + g[j] * G[k, i] + g[k] * G[i, j]
    return -(s**3) * (g[i] * g[j] * g[k] + cyc + T[i, j, k])


def third_moment_monte_carlo(kind, theta, grad, noise_model: SyntheticNoiseModel, step, indices, n_samples, stream, chunk=_CHUNK) -> MonteCarloEstimate:
    """Empirical ``E[d_i d_j d_k]`` over one-step increments with ``zeta`` from ``noise_model``."""
    if kind not in ("sgld", "sglrw"):
        raise ValueError(f"kind must be 'sgld' or 'sglrw', got {kind!r}")
    g = np.atleast_1d(np.asarray(grad, dtype=float))
    i, j, k = (int(a) for a in indices)
    total = total_sq = 0.0
    done = 0
    while done < n_samples:
        m = min(chunk, n_samples - done)
        zeta = sample_synthetic_noise(stream, noise_model, size=m)
        drift = g + zeta
        if kind == "sgld":
            inc = -step * drift + math.sqrt(2.0 * step) * sample_gaussian_vector(stream, g.size, m)
        else:
            _check_unclipped(step, drift)
            inc = sglrw_increment(drift, step, stream.random((m, g.size)))
        prod = inc[:, i] * inc[:, j] * inc[:, k]
        total += prod.sum()
        total_sq += (prod**2).sum()
        done += m
    mean = total / n_samples
    var = max(total_sq / n_samples - mean**2, 0.0) * n_samples / max(n_samples - 1, 1)
    return MonteCarloEstimate(mean, math.sqrt(var / n_samples))


def third_moment_tensor_analytic(kind, grad, zeta_moments, noise_cov, step) -> np.ndarray:
    """Full ``d x d x d`` tensor assembled from :func:`third_moment_analytic`."""
    d = np.atleast_1d(grad).size
    out = np.empty((d, d, d))
    for idx in np.ndindex(d, d, d):
        if idx == tuple(sorted(idx)):
            val = third_moment_analytic(kind, grad, zeta_moments, noise_cov, step, idx)
            for p in set(permutations(idx)):
                out[p] = val
    return out


# -- full-increment clipping ------------------------------------------------


def clipped_increment_covariance_exact() -> float:
    """``E[min(xi^2, 1)]`` for standard normal ``xi``: ``1 - sqrt(2/pi) exp(-1/2)``."""
    return 1.0 - math.sqrt(2.0 / math.pi) * math.exp(-0.5)


def clipped_increment_covariance_constant(n_samples, stream, chunk=_CHUNK) -> MonteCarloEstimate:
    """Monte-Carlo ``E[min(xi^2, 1)]``: the per-coordinate variance kept by clipping the full increment."""
    if n_samples < 10_000:
        raise ValueError("n_samples must be at least 1e4")
    total = total_sq = 0.0
    done = 0
    while done < n_samples:
        m = min(chunk, n_samples - done)
        v = np.minimum(stream.standard_normal(m) ** 2, 1.0)
        total += v.sum()
        total_sq += (v**2).sum()
        done += m
    mean = total / n_samples
    var = max(total_sq / n_samples - mean**2, 0.0) * n_samples / (n_samples - 1)
    return MonteCarloEstimate(mean, math.sqrt(var / n_samples))


# -- 1-D histogram comparison ----------------------------------------------------


def histogram_tv_distance(samples, target_density, edges, target_cdf=None) -> float:
    """Total-variation distance between binned samples and a 1-D target.

    Target bin masses come from ``target_cdf`` when given, else from adaptive
    quadrature of ``target_density``. Sample mass and target mass outside
    ``edges`` both count as discrepancy.
    """
    x = np.asarray(samples, dtype=float).ravel()
    if x.size == 0:
        raise ValueError("no samples")
    edges = np.asarray(edges, dtype=float)
    hist = histogram(x[np.isfinite(x)], edges)
    emp = hist.counts / x.size
    if target_cdf is not None:
        target = np.diff(np.asarray(target_cdf(edges), dtype=float))
    else:
        target = np.array([integrate.quad(target_density, a, b, limit=200)[0] for a, b in zip(edges[:-1], edges[1:])])
    emp_out = max(1.0 - emp.sum(), 0.0)
    target_out = max(1.0 - target.sum(), 0.0)
    tv = 0.5 * (np.abs(emp - target).sum() + emp_out + target_out)
    return float(min(max(tv, 0.0), 1.0))
