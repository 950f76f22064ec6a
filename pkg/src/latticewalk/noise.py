"""Random variates: Gaussian vectors, symmetric alpha-stable noise, minibatches."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

NOISE_FAMILIES = ("gaussian", "alpha_stable")


@dataclass(frozen=True)
class NoiseSpec:
    """Noise family with stability index ``alpha`` (alpha-stable only) and ``scale``.

    The alpha-stable family uses the symmetric Chambers-Mallows-Stuck
    parameterisation: at ``alpha == 2`` a draw is ``N(0, 2 * scale**2)``, not
    ``N(0, scale**2)``.
    """

    family: str = "gaussian"
    alpha: float = 2.0
    scale: float = 1.0

    def __post_init__(self):
        if self.family not in NOISE_FAMILIES:
            raise ValueError(f"family must be one of {NOISE_FAMILIES}, got {self.family!r}")
        if not 0.0 < self.alpha <= 2.0:
            raise ValueError(f"alpha must lie in (0, 2], got {self.alpha!r}")
        if not self.scale > 0:
            raise ValueError(f"scale must be positive, got {self.scale!r}")


@dataclass(frozen=True)
class SyntheticNoiseModel:
    """Zero-mean gradient noise ``covariance_factor @ z``.

    With a Gaussian ``distribution`` of unit scale the noise covariance is
    ``covariance_factor @ covariance_factor.T``.
    """

    covariance_factor: np.ndarray
    distribution: NoiseSpec = NoiseSpec()

    def __post_init__(self):
        factor = np.atleast_2d(np.asarray(self.covariance_factor, dtype=float))
        if factor.shape[0] != factor.shape[1]:
            raise ValueError("covariance_factor must be square")
        object.__setattr__(self, "covariance_factor", factor)

    @property
    def dim(self) -> int:
        return self.covariance_factor.shape[0]

    @property
    def covariance(self) -> np.ndarray:
        if self.distribution.family != "gaussian":
            raise ValueError("alpha-stable noise has no finite covariance")
        return self.distribution.scale**2 * self.covariance_factor @ self.covariance_factor.T


def sample_gaussian_vector(stream: np.random.Generator, d: int, size=None) -> np.ndarray:
    """``d`` independent standard normals (leading ``size`` axes optional)."""
    if d < 1:
        raise ValueError("d must be >= 1")
    return stream.standard_normal(_shape(size, d))


def sample_alpha_stable(stream: np.random.Generator, spec: NoiseSpec, d: int, size=None) -> np.ndarray:
    """Symmetric stable draws S(alpha, 0, scale, 0) via Chambers-Mallows-Stuck."""
    if spec.family != "alpha_stable":
        raise ValueError("spec.family must be 'alpha_stable'")
    alpha = spec.alpha
    if not 0.0 < alpha <= 2.0:
        raise ValueError(f"alpha must lie in (0, 2], got {alpha!r}")
    shape = _shape(size, d)
    v = stream.uniform(-np.pi / 2, np.pi / 2, shape)
    w = stream.standard_exponential(shape)
    if abs(alpha - 1.0) < 1e-9:
        x = np.tan(v)
    else:
        x = (
            np.sin(alpha * v)
            / np.cos(v) ** (1.0 / alpha)
            * (np.cos((1.0 - alpha) * v) / w) ** ((1.0 - alpha) / alpha)
        )
    return spec.scale * x


def sample_noise(stream: np.random.Generator, spec: NoiseSpec, d: int, size=None) -> np.ndarray:
    """Draw from ``spec``; Gaussian draws are ``N(0, scale**2)`` per coordinate."""
    if spec.family == "gaussian":
        return spec.scale * sample_gaussian_vector(stream, d, size)
    return sample_alpha_stable(stream, spec, d, size)


def minibatch_keys(stream: np.random.Generator, N: int, B: int, size=None) -> np.ndarray:
    """Uniform keys from which :func:`minibatch_from_keys` builds a size-``B`` subset.

    Each subset takes ``min(B, N - B)`` keys: a partial Fisher-Yates shuffle picks
    either the batch itself or its complement. ``B == N`` takes none.
    """
    if N < 1 or B < 1:
        raise ValueError("N and B must be positive")
    if B > N:
        raise ValueError(f"batch size {B} exceeds dataset size {N}")
    lead = () if size is None else tuple(np.atleast_1d(size))
    return stream.random(lead + (min(B, N - B),))


def minibatch_from_keys(keys: np.ndarray, N: int, B: int) -> np.ndarray:
    """Index subsets from keys drawn by :func:`minibatch_keys`; rows are independent."""
    keys = np.asarray(keys)
    m = min(B, N - B)
    if keys.shape[-1] != m:
        raise ValueError(f"expected {m} keys per subset, got {keys.shape[-1]}")
    lead = keys.shape[:-1]
    dtype = np.int32 if N < 2**31 else np.intp
    if m == 0:
        return np.broadcast_to(np.arange(N, dtype=dtype), lead + (N,)).copy()
    rows = keys.reshape(-1, m)
    perm = np.broadcast_to(np.arange(N, dtype=dtype), (rows.shape[0], N)).copy()
    ar = np.arange(rows.shape[0])
    for j in range(m):
        # u < 1 can still round up to N - j in floating point
        pick = np.minimum(j + (rows[:, j] * (N - j)).astype(np.intp), N - 1)
        chosen = perm[ar, pick]
        perm[ar, pick] = perm[:, j]
        perm[:, j] = chosen
    out = perm[:, :B] if B <= N - B else perm[:, m:]
    return out.reshape(lead + (B,))


def draw_minibatch(stream: np.random.Generator, N: int, B: int, size=None) -> np.ndarray:
    """Uniform size-``B`` subset of ``range(N)`` without replacement.

    With ``size`` given, returns ``size`` independent subsets stacked along the
    leading axes. ``B == N`` returns the full index set and consumes no
    randomness.
    """
    return minibatch_from_keys(minibatch_keys(stream, N, B, size), N, B)


def sample_synthetic_noise(stream: np.random.Generator, model: SyntheticNoiseModel, size=None) -> np.ndarray:
    z = sample_noise(stream, model.distribution, model.dim, size)
    return z @ model.covariance_factor.T


def _shape(size, d):
    if size is None:
        return (d,)
    return tuple(np.atleast_1d(size)) + (d,)
