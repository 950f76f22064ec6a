"""Step-size schedules, chain bookkeeping and per-chain random streams."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_SEED_MASK = (1 << 64) - 1

SCHEDULE_MODES = ("decaying", "fixed")
RETAIN_MODES = ("all_post_burnin", "final_only")


@dataclass(frozen=True)
class StepSchedule:
    """Polynomially decaying (or constant) step size ``base_step * (1 + t) ** -decay_exponent``."""

    base_step: float
    decay_exponent: float = 0.55
    mode: str = "decaying"

    def __post_init__(self):
        if not np.isfinite(self.base_step) or self.base_step <= 0:
            raise ValueError(f"base_step must be positive, got {self.base_step!r}")
        if self.mode not in SCHEDULE_MODES:
            raise ValueError(f"mode must be one of {SCHEDULE_MODES}, got {self.mode!r}")
        if self.mode == "decaying" and self.decay_exponent <= 0:
            raise ValueError("decaying schedules need a positive decay_exponent")

    def __call__(self, t):
        return schedule_step_size(self, t)


def schedule_step_size(schedule: StepSchedule, t):
    """Step size at iteration ``t`` (scalar or integer array, ``t >= 0``)."""
    t_arr = np.asarray(t)
    if np.any(t_arr < 0):
        raise ValueError("iteration index must be non-negative")
    if schedule.mode == "fixed":
        out = np.full(t_arr.shape, float(schedule.base_step))
    else:
        out = schedule.base_step * np.power(1.0 + t_arr, -schedule.decay_exponent)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class ChainConfig:
    n_chains: int
    n_iters: int
    burn_in: int = 0
    master_seed: int = 0
    retain: str = "all_post_burnin"
    thin: int = 1

    def __post_init__(self):
        if self.n_chains < 1:
            raise ValueError("n_chains must be >= 1")
        if self.n_iters < 1:
            raise ValueError("n_iters must be >= 1")
        if not 0 <= self.burn_in < self.n_iters:
            raise ValueError(f"burn_in must lie in [0, n_iters), got {self.burn_in}")
        if self.retain not in RETAIN_MODES:
            raise ValueError(f"retain must be one of {RETAIN_MODES}, got {self.retain!r}")
        if self.thin < 1:
            raise ValueError("thin must be >= 1")

    @property
    def n_retained(self) -> int:
        if self.retain == "final_only":
            return 1
        return -(-(self.n_iters - self.burn_in) // self.thin)

    def retains(self, t: int) -> bool:
        """Whether the state after iteration ``t`` is kept under ``all_post_burnin``."""
        return t >= self.burn_in and (t - self.burn_in) % self.thin == 0


def derive_chain_stream(master_seed: int, chain_index: int, *branch: int) -> np.random.Generator:
    """Independent generator for one chain.

    The stream is keyed on ``(master_seed, chain_index, *branch)`` through
    :class:`numpy.random.SeedSequence` spawn keys, so it does not depend on how
    many chains exist or on which worker runs them. ``branch`` separates
    sub-streams of a chain (e.g. minibatch indices vs injected noise).
    """
    if chain_index < 0 or any(b < 0 for b in branch):
        raise ValueError("chain_index and branch keys must be non-negative")
    seq = np.random.SeedSequence(int(master_seed) & _SEED_MASK, spawn_key=(int(chain_index), *map(int, branch)))
    return np.random.Generator(np.random.PCG64(seq))
