"""Experiment configuration files.

Format: one ``key = value`` per line, lists as comma-separated values, ``#``
starts a comment. Unknown or repeated keys are errors. Defaults depend on the
experiment (see :data:`EXPERIMENT_DEFAULTS`); anything not set falls back to
the global defaults of :class:`ExperimentConfig`.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from importlib import resources
from itertools import product
from pathlib import Path

from latticewalk.core import RETAIN_MODES, SCHEDULE_MODES
from latticewalk.noise import NOISE_FAMILIES
from latticewalk.samplers import SAMPLER_KINDS

EXPERIMENTS = ("linreg", "logreg", "heavy1d", "mse_sweep", "moment_check", "clip_constant")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    samplers: tuple = SAMPLER_KINDS
    batch_sizes: tuple = (8, 16, 32, 64, 128, 256, 512)
    base_steps: tuple = (1e-3, 1e-4)
    schedule: str = "decaying"
    decay_exponent: float = 0.55
    seeds: tuple = (0,)
    # model / data
    dim: int = 10
    n_data: int = 500
    noise_variance: float = 0.4
    prior_precision: float = 1e-2
    data_seed: int = 0
    data_file: str = ""
    separation: float = 2.0
    # chains
    n_chains: int = 500
    n_iters: int = 5000
    burn_in: int = 2500
    thin: int = 5
    retain: str = "all_post_burnin"
    init: str = "map"
    n_workers: int = 1
    # reference chain (logreg)
    reference_step: float = 1e-4
    reference_iters: int = 50_000
    reference_chains: int = 4
    reference_thin: int = 10
    # heavy-tailed 1-D target
    noise_family: str = "alpha_stable"
    noise_alpha: float = 1.5
    noise_scales: tuple = (1.0, 5.0, 20.0)
    hist_range: tuple = (-10.0, 10.0)
    hist_bins: int = 80
    # moment checks
    n_samples: int = 10_000_000
    n_pairs: int = 20
    moment_step: float = 1e-2
    noise_cov_scale: float = 0.25
    # output
    out: str = ""
    record_runtime: bool = False

    def __post_init__(self):
        _validate(self)

    def grid(self):
        """``(base_step, batch_size, seed, sampler)`` points in output order."""
        return list(product(self.base_steps, self.batch_sizes, self.seeds, self.samplers))

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)


EXPERIMENT_DEFAULTS = {
    "linreg": {},
    "logreg": dict(
        dim=6, n_data=300, prior_precision=1.0, batch_sizes=(1, 4, 16, 64), base_steps=(1e-1, 1e-2),
        n_chains=500, n_iters=1000, burn_in=0, thin=1, retain="final_only", init="zeros",
    ),
    "heavy1d": dict(
        schedule="fixed", base_steps=(1e-2,), batch_sizes=(1,), n_chains=10, n_iters=12_000, burn_in=2000,
        thin=1, init="zeros", noise_scales=(1.0, 5.0, 20.0),
    ),
    "mse_sweep": dict(
        schedule="fixed", samplers=("sgld", "sglrw", "clipped_sgld"), batch_sizes=(8, 32, 128),
        base_steps=(1e-5, 3e-5, 1e-4, 3e-4, 1e-3), seeds=(0, 1, 2), n_chains=200, n_iters=1000, burn_in=0,
        thin=1, retain="final_only",
    ),
    "moment_check": dict(dim=3),
    "clip_constant": dict(n_samples=1_000_000),
}

_CHOICES = {
    "experiment": EXPERIMENTS,
    "schedule": SCHEDULE_MODES,
    "retain": RETAIN_MODES,
    "init": ("map", "zeros"),
    "noise_family": NOISE_FAMILIES,
}


def _field_types():
    defaults = {f.name: f.default for f in dataclasses.fields(ExperimentConfig)}
    types = {}
    for name, default in defaults.items():
        if name == "experiment":
            types[name] = str
        elif isinstance(default, tuple):
            types[name] = (tuple, type(default[0]))
        else:
            types[name] = type(default)
    return types


_TYPES = _field_types()


def _parse_scalar(kind, text):
    if kind is bool:
        low = text.lower()
        if low in ("true", "yes", "1", "on"):
            return True
        if low in ("false", "no", "0", "off"):
            return False
        raise ValueError(f"expected a boolean, got {text!r}")
    if kind is int:
        value = float(text)
        if not value.is_integer():
            raise ValueError(f"expected an integer, got {text!r}")
        return int(value)
    if kind is float:
        return float(text)
    return text


def parse_value(key, text):
    kind = _TYPES[key]
    if isinstance(kind, tuple):
        items = [t.strip() for t in text.split(",") if t.strip()]
        if not items:
            raise ValueError("list must not be empty")
        value = tuple(_parse_scalar(kind[1], t) for t in items)
        choices = SAMPLER_KINDS if key == "samplers" else None
        if choices and any(v not in choices for v in value):
            raise ValueError(f"entries must be among {choices}")
        return value
    value = _parse_scalar(kind, text)
    if key in _CHOICES and value not in _CHOICES[key]:
        raise ValueError(f"expected one of {_CHOICES[key]}, got {value!r}")
    return value


def parse_config_text(text, source="<config>") -> ExperimentConfig:
    values, lines = {}, {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in _TYPES:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"{source}:{lineno}: key {key!r} already set on line {lines[key]}")
        try:
            values[key] = parse_value(key, value)
        except ValueError as exc:
            raise ConfigError(f"{source}:{lineno}: bad value for {key!r}: {exc}") from None
        lines[key] = lineno
    if "experiment" not in values:
        raise ConfigError(f"{source}: missing required key 'experiment'")
    merged = {**EXPERIMENT_DEFAULTS[values["experiment"]], **values}
    try:
        return ExperimentConfig(**merged)
    except ValueError as exc:
        raise ConfigError(f"{source}: {exc}") from None


def parse_config(path) -> ExperimentConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    return parse_config_text(path.read_text(), str(path))


def preset_names():
    return sorted(p.name[:-4] for p in resources.files("latticewalk.presets").iterdir() if p.name.endswith(".cfg"))


def load_preset(name) -> ExperimentConfig:
    if name not in preset_names():
        raise ConfigError(f"unknown preset {name!r}; available: {', '.join(preset_names())}")
    text = resources.files("latticewalk.presets").joinpath(f"{name}.cfg").read_text()
    return parse_config_text(text, f"preset:{name}")


def _validate(cfg):
    if cfg.experiment not in EXPERIMENTS:
        raise ValueError(f"unknown experiment {cfg.experiment!r}")
    for name in ("samplers", "batch_sizes", "base_steps", "seeds", "noise_scales"):
        if not getattr(cfg, name):
            raise ValueError(f"{name} must not be empty")
    if any(k not in SAMPLER_KINDS for k in cfg.samplers):
        raise ValueError(f"samplers must be among {SAMPLER_KINDS}")
    if any(b < 1 for b in cfg.batch_sizes):
        raise ValueError("batch sizes must be positive")
    positive = ("base_steps", "noise_scales")
    for name in positive:
        if any(not v > 0 for v in getattr(cfg, name)):
            raise ValueError(f"{name} must be positive")
    for name in ("dim", "n_data", "n_chains", "n_iters", "thin", "n_workers", "reference_iters",
                 "reference_chains", "reference_thin", "hist_bins", "n_samples", "n_pairs"):
        if getattr(cfg, name) < 1:
            raise ValueError(f"{name} must be >= 1")
    for name in ("noise_variance", "prior_precision", "reference_step", "moment_step", "noise_cov_scale"):
        if not getattr(cfg, name) > 0:
            raise ValueError(f"{name} must be positive")
    if not 0 <= cfg.burn_in < cfg.n_iters:
        raise ValueError("burn_in must lie in [0, n_iters)")
    if not 0 < cfg.noise_alpha <= 2:
        raise ValueError("noise_alpha must lie in (0, 2]")
    if len(cfg.hist_range) != 2 or cfg.hist_range[0] >= cfg.hist_range[1]:
        raise ValueError("hist_range must be 'lo, hi' with lo < hi")
    for name, choices in _CHOICES.items():
        if getattr(cfg, name) not in choices:
            raise ValueError(f"{name} must be one of {choices}")
