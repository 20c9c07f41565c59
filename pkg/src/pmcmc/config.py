"""Experiment configuration: JSON files describing a model and sampler arms.

Layout::

    {
      "name": "...",
      "seed": 123,
      "model": {"type": "sv" | "spline" | "binreg", "config": {...}, "data": "optional.csv"},
      "init": "truth" | {"mu": 0.0, "beta": [0, 0], ...},
      "groups": ["beta"],
      "arms": [
        {"name": "...", "scheme": "general", "N": 100, "trajectory": "backward",
         "iterations": 20000, "warmup": 5000, "bandwidth": 500,
         "blocks": [{"params": ["mu", "phi", "tau"], "kind": "pmmh"},
                    {"params": ["beta"], "kind": "gibbs"}]}
      ]
    }

Unknown keys anywhere are errors. Scalars in ``init`` are broadcast to the
parameter size.
"""
from __future__ import annotations

import dataclasses
import json
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .model import Observations
from .models import (BinregConfig, SplineConfig, SVConfig, build_binreg, build_spline, build_sv,
                     simulate_binreg, simulate_spline, simulate_sv)
from .probability import rng_stream
from .samplers import Block, SamplerConfig

__all__ = ["ConfigFileError", "ArmConfig", "ExperimentConfig", "load_config", "MODELS", "ARM_STREAM_BASE"]

MODELS = {
    "sv": (SVConfig, simulate_sv, build_sv),
    "spline": (SplineConfig, simulate_spline, build_spline),
    "binreg": (BinregConfig, simulate_binreg, build_binreg),
}

#: RNG stream of arm k is ARM_STREAM_BASE + k; stream 0 simulates the data
ARM_STREAM_BASE = 1000

_TOP_KEYS = {"name", "seed", "model", "init", "groups", "arms", "scalars"}
_MODEL_KEYS = {"type", "config", "data"}
_ARM_KEYS = {"name", "scheme", "blocks", "N", "trajectory", "iterations", "warmup", "bandwidth",
             "refresh_prob", "resampler", "store_paths", "adapt", "p1"}
_BLOCK_KEYS = {"params", "kind", "regime", "init_cov"}


class ConfigFileError(ValueError):
    """Malformed experiment configuration (message carries the line number)."""


@dataclass
class ArmConfig:
    name: str
    sampler: SamplerConfig
    bandwidth: int = 500
    p1: int | None = None


@dataclass
class ExperimentConfig:
    name: str
    seed: int
    model_type: str
    model_config: object
    arms: list
    init: object = "truth"
    data_path: str | None = None
    groups: list | None = None
    scalars: list | None = None
    source: str | None = None
    raw: dict = field(default_factory=dict)

    def with_seed(self, seed: int) -> "ExperimentConfig":
        arms = [dataclasses.replace(a, sampler=dataclasses.replace(a.sampler, seed=seed)) for a in self.arms]
        return dataclasses.replace(self, seed=seed, arms=arms, raw={**self.raw, "seed": seed})

    # -- data and model ------------------------------------------------------------
    def simulate(self):
        """Simulate the dataset from the true-value block on stream 0."""
        _, simulate, _ = MODELS[self.model_type]
        return simulate(self.model_config, rng_stream(self.seed, 0))

    def load_data(self):
        """Returns ``(Observations, truth or None)``."""
        if self.data_path is not None:
            return Observations.from_csv(self.data_path), None
        data, _, truth = self.simulate()
        return data, truth

    def build_model(self, data):
        return MODELS[self.model_type][2](self.model_config, data)

    def initial_theta(self, model) -> dict:
        if self.init == "truth":
            return self.model_config.true_theta()
        theta = {}
        for name, par in model.parameters.items():
            if name not in self.init:
                raise ConfigFileError(f"{self.source}: init is missing parameter {name!r}")
            v = np.asarray(self.init[name], dtype=float)
            theta[name] = np.full(par.size, float(v)) if v.ndim == 0 else v.reshape(par.size)
        extra = set(self.init) - set(model.parameters)
        if extra:
            raise ConfigFileError(f"{self.source}: init has unknown parameters {sorted(extra)}")
        return theta

    def to_dict(self) -> dict:
        return self.raw


def _line_of(text: str, key: str, start: int = 0) -> int:
    m = re.compile(r'"%s"\s*:' % re.escape(key)).search(text, start)
    pos = m.start() if m else start
    return text.count("\n", 0, pos) + 1


def _check_keys(obj, allowed, where, text, source):
    if not isinstance(obj, dict):
        raise ConfigFileError(f"{source}: {where} must be a JSON object")
    for k in obj:
        if k not in allowed:
            raise ConfigFileError(f"{source}:{_line_of(text, k)}: unknown key {k!r} in {where}"
                                  f" (allowed: {', '.join(sorted(allowed))})")


def _require(obj, key, where, text, source):
    if key not in obj:
        raise ConfigFileError(f"{source}: {where} is missing required key {key!r}")
    return obj[key]


def parse_config(text: str, source: str = "<config>", base_dir: Path | None = None) -> ExperimentConfig:
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigFileError(f"{source}:{exc.lineno}: invalid JSON: {exc.msg}") from None
    _check_keys(raw, _TOP_KEYS, "top level", text, source)
    seed = int(_require(raw, "seed", "top level", text, source))
    if not 0 <= seed < 2**64:
        raise ConfigFileError(f"{source}:{_line_of(text, 'seed')}: seed must be an unsigned 64-bit integer")
    mod = _require(raw, "model", "top level", text, source)
    _check_keys(mod, _MODEL_KEYS, "model", text, source)
    mtype = _require(mod, "type", "model", text, source)
    if mtype not in MODELS:
        raise ConfigFileError(f"{source}:{_line_of(text, 'type')}: unknown model type {mtype!r}"
                              f" (choose from {', '.join(MODELS)})")
    cfg_cls = MODELS[mtype][0]
    mcfg = mod.get("config", {})
    fields = {f.name for f in dataclasses.fields(cfg_cls)}
    _check_keys(mcfg, fields, f"model.config ({mtype})", text, source)
    try:
        model_config = cfg_cls(**{k: tuple(v) if isinstance(v, list) and k.endswith(("_prior", "trials", "true_x1"))
                                  else v for k, v in mcfg.items()})
    except (TypeError, ValueError) as exc:
        raise ConfigFileError(f"{source}:{_line_of(text, 'config')}: model.config: {exc}") from None
    data_path = mod.get("data")
    if data_path is not None and base_dir is not None and not Path(data_path).is_absolute():
        data_path = str(Path(base_dir) / data_path)

    arms_raw = _require(raw, "arms", "top level", text, source)
    if not isinstance(arms_raw, list) or not arms_raw:
        raise ConfigFileError(f"{source}:{_line_of(text, 'arms')}: 'arms' must be a non-empty list")
    arms, names, cursor = [], set(), max(text.find('"arms"'), 0)
    for k, a in enumerate(arms_raw):
        _check_keys(a, _ARM_KEYS, f"arms[{k}]", text, source)
        name = str(_require(a, "name", f"arms[{k}]", text, source))
        line = _line_of(text, "name", cursor)
        cursor = text.find('"name"', cursor) + 1
        if name in names:
            raise ConfigFileError(f"{source}:{line}: duplicate arm name {name!r}")
        names.add(name)
        blocks = []
        for j, b in enumerate(_require(a, "blocks", f"arms[{k}]", text, source)):
            _check_keys(b, _BLOCK_KEYS, f"arms[{k}].blocks[{j}]", text, source)
            try:
                blocks.append(Block(**b))
            except (TypeError, ValueError) as exc:
                raise ConfigFileError(f"{source}:{line}: arms[{k}].blocks[{j}]: {exc}") from None
        kw = {key: a[key] for key in ("scheme", "N", "trajectory", "iterations", "warmup",
                                      "refresh_prob", "resampler", "store_paths", "adapt") if key in a}
        try:
            sampler = SamplerConfig(blocks=blocks, seed=seed, stream=ARM_STREAM_BASE + k, **kw)
        except (TypeError, ValueError) as exc:
            raise ConfigFileError(f"{source}:{line}: arms[{k}]: {exc}") from None
        arms.append(ArmConfig(name, sampler, int(a.get("bandwidth", 500)), a.get("p1")))
    init = raw.get("init", "truth")
    if not (init == "truth" or isinstance(init, dict)):
        raise ConfigFileError(f"{source}:{_line_of(text, 'init')}: init must be \"truth\" or an object")
    return ExperimentConfig(
        name=str(raw.get("name", Path(source).stem)), seed=seed, model_type=mtype,
        model_config=model_config, arms=arms, init=init, data_path=data_path,
        groups=raw.get("groups"), scalars=raw.get("scalars"), source=source, raw=raw,
    )


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigFileError(f"{path}: cannot read config: {exc.strerror}") from None
    return parse_config(text, str(path), path.parent)


def validate_experiment(cfg: ExperimentConfig) -> list[str]:
    """Static checks of every arm against the (built) model."""
    out = []
    try:
        data, _ = cfg.load_data()
        model = cfg.build_model(data)
    except (OSError, ValueError) as exc:
        return [f"model: {exc}"]
    for arm in cfg.arms:
        s = arm.sampler
        for v in s.violations(model):
            out.append(f"arm {arm.name!r}: {v}")
        if arm.p1 is not None:
            if not 0 <= arm.p1 <= s.p:
                out.append(f"arm {arm.name!r}: p1={arm.p1} outside [0, p={s.p}]")
            elif arm.p1 != s.p1:
                out.append(f"arm {arm.name!r}: p1={arm.p1} but the first {s.p1} blocks are PMMH")
        if s.iterations - s.warmup < 2 * arm.bandwidth:
            out.append(f"arm {arm.name!r}: bandwidth {arm.bandwidth} needs at least "
                       f"{2 * arm.bandwidth} post-warmup iterations")
    try:
        cfg.initial_theta(model)
    except (ConfigFileError, ValueError) as exc:
        out.append(str(exc))
    return out
