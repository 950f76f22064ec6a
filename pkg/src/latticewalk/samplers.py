"""SGLD, SGLRW and Clipped-SGLD updates plus chain drivers.

The drivers advance many chains at once with numpy, but every chain draws its
randomness from its own streams (see :func:`latticewalk.core.derive_chain_stream`):

* branch 0 -- minibatch indices (or synthetic gradient noise); shared by every
  sampler kind so that, for a given seed, all samplers see the same batches;
* branch 1 -- the sampler's own injected noise (normals for SGLD variants,
  uniforms for the lattice sign draws).

Draws are taken in blocks of :data:`BLOCK_SIZE` iterations per chain, which is
part of the reproducibility contract: a chain's output depends only on
``(master_seed, chain_index)`` and never on how chains are grouped.
"""
from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from latticewalk.core import ChainConfig, StepSchedule, derive_chain_stream, schedule_step_size
from latticewalk.noise import sample_gaussian_vector

logger = logging.getLogger(__name__)

SAMPLER_KINDS = ("sgld", "sglrw", "clipped_sgld")
BLOCK_SIZE = 256
BATCH_BRANCH, INJECTION_BRANCH = 0, 1
_INDEX_BUDGET = 2_000_000


class DivergenceError(RuntimeError):
    pass


@dataclass(frozen=True)
class SamplerState:
    params: np.ndarray
    iteration: int = 0
    diverged_at: int | None = None

    @property
    def diverged(self) -> bool:
        return self.diverged_at is not None


def _check_kind(kind):
    if kind not in SAMPLER_KINDS:
        raise ValueError(f"unknown sampler kind {kind!r}; expected one of {SAMPLER_KINDS}")


def minibatch_grad_estimate(model, params, batch):
    """``-grad log prior - (N/B) sum_{i in batch} grad log p(y_i | x_i, theta)``."""
    return model.minibatch_gradient(params, batch)


def lrw_transition_prob(grad_component, step):
    """Probabilities of the ``+sqrt(2 step)`` and ``-sqrt(2 step)`` lattice moves.

    The tilt ``sqrt(step / 2) * grad`` is clamped to ``[-1, 1]`` so the pair is a
    valid distribution for any gradient.
    """
    if np.any(np.asarray(step) <= 0):
        raise ValueError("step must be positive")
    tilt = np.clip(np.sqrt(step / 2.0) * np.asarray(grad_component, dtype=float), -1.0, 1.0)
    return 0.5 - 0.5 * tilt, 0.5 + 0.5 * tilt


def sglrw_increment(grad, step, uniforms):
    """Lattice move: each coordinate is ``+h`` when ``u < p_plus`` else ``-h``, ``h = sqrt(2 step)``."""
    p_plus, _ = lrw_transition_prob(grad, step)
    h = np.sqrt(2.0 * step)
    return np.where(uniforms < p_plus, h, -h)


def sgld_increment(grad, step, xi):
    return -step * grad + np.sqrt(2.0 * step) * xi


def clipped_sgld_increment(grad, step, xi):
    radius = np.sqrt(2.0 * step)
    drift = np.clip(step * grad, -radius, radius)
    return -drift + radius * xi


def _draw_injection(kind, stream, size, d):
    if kind == "sglrw":
        return stream.random((d,) if size is None else tuple(np.atleast_1d(size)) + (d,))
    return sample_gaussian_vector(stream, d, size)


_INCREMENTS = {"sgld": sgld_increment, "sglrw": sglrw_increment, "clipped_sgld": clipped_sgld_increment}


def _step(kind, state, model, batch, step, stream):
    if step <= 0:
        raise ValueError("step must be positive")
    noise = _draw_injection(kind, stream, None, state.params.shape[-1])
    with np.errstate(over="ignore", invalid="ignore"):
        grad = minibatch_grad_estimate(model, state.params, batch)
        new = state.params + _INCREMENTS[kind](grad, step, noise)
    diverged_at = state.diverged_at
    if diverged_at is None and not np.isfinite(new).all():
        diverged_at = state.iteration
    return SamplerState(new, state.iteration + 1, diverged_at)


def sgld_step(state, model, batch, step, stream):
    """``theta - step * grad_hat + sqrt(2 step) xi``; non-finite results mark the state diverged."""
    return _step("sgld", state, model, batch, step, stream)


def sglrw_step(state, model, batch, step, stream):
    return _step("sglrw", state, model, batch, step, stream)


def clipped_sgld_step(state, model, batch, step, stream):
    return _step("clipped_sgld", state, model, batch, step, stream)


STEP_FUNCTIONS = {"sgld": sgld_step, "sglrw": sglrw_step, "clipped_sgld": clipped_sgld_step}


@dataclass
class ChainRun:
    """Output of one chain: ``samples`` has shape ``(n_retained, d)``."""

    samples: np.ndarray
    diverged_at: int | None


@dataclass
class ParallelRun:
    """Output of many chains.

    ``samples`` has shape ``(n_chains, n_retained, d)``; ``diverged_at[c]`` is the
    iteration at which chain ``c`` first became non-finite, or -1.
    """

    samples: np.ndarray
    diverged_at: np.ndarray

    @property
    def diverged(self) -> np.ndarray:
        return self.diverged_at >= 0

    @property
    def diverged_chains(self) -> list[int]:
        return np.flatnonzero(self.diverged).tolist()

    def flat_samples(self, drop_diverged=True) -> np.ndarray:
        keep = ~self.diverged if drop_diverged else slice(None)
        s = self.samples[keep]
        return s.reshape(-1, s.shape[-1])


def _simulate(kind, model, schedule, config, batch_size, chain_indices, init):
    chain_indices = list(chain_indices)
    n, d = len(chain_indices), model.dim
    theta = np.zeros((n, d)) if init is None else np.array(np.broadcast_to(init, (n, d)), dtype=float)
    batch_streams = [derive_chain_stream(config.master_seed, c, BATCH_BRANCH) for c in chain_indices]
    noise_streams = [derive_chain_stream(config.master_seed, c, INJECTION_BRANCH) for c in chain_indices]
    increment = _INCREMENTS[kind]
    samples = np.full((n, config.n_retained, d), np.nan)
    diverged_at = np.full(n, -1)
    steps = schedule_step_size(schedule, np.arange(config.n_iters))
    keep_all = config.retain == "all_post_burnin"
    # steps whose minibatches are materialised together; bounds memory at ~2M indices
    sub = max(1, _INDEX_BUDGET // (n * getattr(model, "n_data", 1)))

    with np.errstate(over="ignore", invalid="ignore"):
        for start in range(0, config.n_iters, BLOCK_SIZE):
            k = min(BLOCK_SIZE, config.n_iters - start)
            keys = np.stack([model.draw_batch_keys(s, batch_size, k) for s in batch_streams], axis=1)
            noise = np.stack([_draw_injection(kind, s, k, d) for s in noise_streams], axis=1)
            for j in range(k):
                if j % sub == 0:
                    batches = model.batch_from_keys(keys[j : j + sub], batch_size)
                t = start + j
                grad = model.minibatch_gradient(theta, batches[j % sub])
                theta = theta + increment(grad, steps[t], noise[j])
                bad = (diverged_at < 0) & ~np.isfinite(theta).all(-1)
                if bad.any():
                    diverged_at[bad] = t
                if keep_all and config.retains(t):
                    samples[:, (t - config.burn_in) // config.thin] = theta
            if (diverged_at >= 0).all():
                break
    if config.retain == "final_only":
        samples[:, 0] = theta
    samples[diverged_at >= 0] = np.nan
    return samples, diverged_at


def run_parallel_chains(kind, model, schedule: StepSchedule, config: ChainConfig, batch_size, init=None, n_workers=1):
    """Run ``config.n_chains`` independent chains of the chosen sampler.

    ``init`` is a starting point broadcast to every chain (zeros by default).
    Output is identical for any ``n_workers``.
    """
    _check_kind(kind)
    n_data = getattr(model, "n_data", None)
    if n_data is not None and not 1 <= batch_size <= n_data:
        raise ValueError(f"batch_size must lie in [1, {n_data}], got {batch_size}")
    chunks = [c for c in np.array_split(np.arange(config.n_chains), max(1, n_workers)) if c.size]
    if len(chunks) == 1:
        parts = [_simulate(kind, model, schedule, config, batch_size, chunks[0], init)]
    else:
        with ThreadPoolExecutor(len(chunks)) as pool:
            parts = list(pool.map(lambda c: _simulate(kind, model, schedule, config, batch_size, c, init), chunks))
    samples = np.concatenate([p[0] for p in parts])
    diverged_at = np.concatenate([p[1] for p in parts])
    n_div = int((diverged_at >= 0).sum())
    if n_div:
        logger.warning("%s: %d of %d chains diverged", kind, n_div, config.n_chains)
    return ParallelRun(samples, diverged_at)


def run_chain(kind, model, schedule, config, batch_size, chain_index=0, init=None) -> ChainRun:
    """Run the single chain ``chain_index``; identical to that chain inside :func:`run_parallel_chains`."""
    _check_kind(kind)
    n_data = getattr(model, "n_data", None)
    if n_data is not None and not 1 <= batch_size <= n_data:
        raise ValueError(f"batch_size must lie in [1, {n_data}], got {batch_size}")
    samples, diverged_at = _simulate(kind, model, schedule, config, batch_size, [chain_index], init)
    return ChainRun(samples[0], None if diverged_at[0] < 0 else int(diverged_at[0]))


def reference_chain(model, fine_step, long_length, stream, thin=1, burn_in=0, init=None):
    """Full-batch SGLD at a small fixed step; returns the thinned post-burn-in samples.

    Raises :class:`DivergenceError` if the chain leaves the finite reals.
    """
    if fine_step <= 0 or long_length < 1 or thin < 1 or not 0 <= burn_in < long_length:
        raise ValueError("invalid reference chain settings")
    theta = np.zeros(model.dim) if init is None else np.asarray(init, dtype=float).copy()
    out = []
    scale = np.sqrt(2.0 * fine_step)
    for start in range(0, long_length, BLOCK_SIZE):
        k = min(BLOCK_SIZE, long_length - start)
        xi = sample_gaussian_vector(stream, model.dim, k)
        for j in range(k):
            theta = theta - fine_step * model.full_gradient(theta) + scale * xi[j]
            t = start + j
            if t >= burn_in and (t - burn_in) % thin == 0:
                out.append(theta)
        if not np.isfinite(theta).all():
            raise DivergenceError(f"reference chain diverged before iteration {start + k} at step {fine_step}")
    return np.asarray(out)

