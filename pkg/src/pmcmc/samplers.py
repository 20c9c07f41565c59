"""Particle MCMC sampling schemes.

Three schemes share one set of block moves:

``general``
    Blocks ``1..p1`` are PMMH moves (fresh SMC run at the proposed value,
    states integrated out), the remaining blocks are PG moves conditional on
    the selected path (exact full conditionals or Metropolis-within-Gibbs).
    Every iteration ends with a conditional SMC sweep and a new path.
``mixture``
    Each iteration either refreshes the particles (probability ``p*``) or
    runs a PMMH move for every block.
``ideal``
    The non-particle counterpart for models with exact inference: the
    PMMH ratio uses the exact likelihood and PG blocks condition on an
    exactly simulated path.

Parameters are updated on an unconstrained scale given by each
parameter's transform; the log Jacobian is added to the log prior.
"""
from __future__ import annotations

import csv
import json
import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import __version__
from .model import TRANSFORMS, StateSpaceModel
from .proposals import AdaptiveRW
from .resampling import RESAMPLERS
from .smc import ParticleSystem, run_csmc, run_smc
from .trajectory import Trajectory, sample_ancestral, sample_backward

__all__ = [
    "Block",
    "SamplerConfig",
    "ChainState",
    "ChainRecord",
    "ChainError",
    "ConfigError",
    "Sampler",
    "run_chain",
    "acceptance_probability",
]

BLOCK_KINDS = ("pmmh", "gibbs", "mwg")
SCHEMES = ("general", "mixture", "ideal")
TRAJECTORY_MODES = ("ancestral", "backward")


class ConfigError(ValueError):
    """Invalid sampler configuration for the given model."""


class ChainError(RuntimeError):
    """A sampler failure, annotated with the iteration where it happened."""

    def __init__(self, message, iteration=None, record=None):
        super().__init__(message)
        self.iteration = iteration
        self.record = record


@dataclass
class Block:
    """One parameter block.

    ``kind`` is ``"pmmh"`` (states integrated out), ``"gibbs"`` (exact full
    conditional given the path) or ``"mwg"`` (random-walk Metropolis on the
    conditional given the path). ``regime`` overrides the random-walk scale
    regime, which otherwise is ``"particle"`` for PMMH blocks and
    ``"ideal"`` for the rest.
    """

    params: tuple
    kind: str = "pmmh"
    regime: str | None = None
    init_cov: list | None = None

    def __post_init__(self):
        self.params = tuple(self.params)
        if self.kind not in BLOCK_KINDS:
            raise ConfigError(f"unknown block kind {self.kind!r}")

    @property
    def label(self) -> str:
        return f"{self.kind}({','.join(self.params)})"


@dataclass
class SamplerConfig:
    blocks: list
    N: int = 100
    scheme: str = "general"
    trajectory: str = "backward"
    refresh_prob: float | None = None
    iterations: int = 1000
    warmup: int = 0
    seed: int = 0
    stream: int = 0
    resampler: str = "multinomial"
    store_paths: bool = False
    adapt: dict = field(default_factory=dict)

    def __post_init__(self):
        self.blocks = [b if isinstance(b, Block) else Block(**b) for b in self.blocks]

    @property
    def p(self) -> int:
        return len(self.blocks)

    @property
    def p1(self) -> int:
        k = 0
        while k < len(self.blocks) and self.blocks[k].kind == "pmmh":
            k += 1
        return k

    def violations(self, model: StateSpaceModel | None = None) -> list[str]:
        """Static checks; an empty list means the configuration is usable."""
        out = []
        if self.scheme not in SCHEMES:
            out.append(f"unknown scheme {self.scheme!r}")
        if self.trajectory not in TRAJECTORY_MODES:
            out.append(f"unknown trajectory mode {self.trajectory!r}")
        if self.resampler not in RESAMPLERS:
            out.append(f"unknown resampler {self.resampler!r}")
        if self.N < 1:
            out.append("N must be >= 1")
        if not self.blocks:
            out.append("at least one parameter block is required")
        if self.warmup < 0 or self.iterations <= self.warmup:
            out.append("iterations must exceed warmup (and warmup must be >= 0)")
        kinds = [b.kind for b in self.blocks]
        if any(k == "pmmh" for k in kinds[self.p1:]):
            out.append("PMMH blocks must precede PG blocks (blocks 1..p1 are PMMH)")
        if self.scheme == "mixture":
            if self.refresh_prob is None or not 0.0 < self.refresh_prob < 1.0:
                out.append("mixture scheme needs 0 < refresh_prob < 1")
            if self.p1 != self.p:
                out.append("mixture scheme moves every block by PMMH; all blocks must be 'pmmh'")
        unknown = set(self.adapt) - {"mix", "fixed_sd", "threshold"}
        if unknown:
            out.append(f"unsupported adapt settings {sorted(unknown)}")
        if model is None:
            return out
        names = [p for b in self.blocks for p in b.params]
        for p in sorted(set(names) - set(model.parameters)):
            out.append(f"block parameter {p!r} is not a model parameter")
        for p in sorted(set(model.parameters) - set(names)):
            out.append(f"parameter {p!r} is not assigned to any block")
        for p in sorted({p for p in names if names.count(p) > 1}):
            out.append(f"parameter {p!r} appears in more than one block")
        for b in self.blocks:
            if b.kind == "gibbs" and _gibbs_plan(model, b.params) is None:
                out.append(f"no exact conditional sampler for block {b.label}")
        uses_path = self.scheme != "ideal"
        if uses_path and self.trajectory == "backward" and not model.transition_evaluable:
            out.append(f"backward simulation needs an evaluable transition density; {model.name} "
                       "only supports ancestral tracing")
        if self.scheme == "ideal" and not model.has_exact_inference:
            out.append(f"ideal scheme needs exact likelihood and state simulation; {model.name} has neither")
        return out

    def to_dict(self) -> dict:
        d = asdict(self)
        d["blocks"] = [asdict(b) | {"params": list(b.params)} for b in self.blocks]
        return d


def _gibbs_plan(model, params):
    """Sequence of exact-conditional keys covering ``params``, or None."""
    params = tuple(params)
    if params in model.exact_conditionals:
        return [params]
    if all((p,) in model.exact_conditionals for p in params):
        return [(p,) for p in params]
    return None


@dataclass
class ChainState:
    theta: dict
    ps: ParticleSystem | None
    traj: Trajectory | None
    log_z: float


def acceptance_probability(log_ratio: float) -> float:
    """``min(1, exp(log_ratio))`` with NaN and ``-inf`` mapped to 0."""
    if not log_ratio == log_ratio or log_ratio == -math.inf:
        return 0.0
    return 1.0 if log_ratio >= 0 else math.exp(log_ratio)


class _BlockCodec:
    """Packs a block of named parameters into one unconstrained vector."""

    def __init__(self, model, block):
        self.names = block.params
        self.sizes = [model.parameters[p].size for p in self.names]
        self.tr = [TRANSFORMS[model.parameters[p].transform] for p in self.names]
        self.d = int(sum(self.sizes))
        priors = [model.parameters[p].prior for p in self.names]
        self.grid = None
        if len(self.names) == 1 and self.sizes[0] == 1 and hasattr(priors[0], "values"):
            self.grid = np.asarray(priors[0].values, dtype=float)

    def pack(self, theta):
        return np.concatenate([t.forward(theta[p]) for p, t in zip(self.names, self.tr)])

    def unpack(self, u, theta):
        out = dict(theta)
        k = 0
        for p, s, t in zip(self.names, self.sizes, self.tr):
            out[p] = np.asarray(t.inverse(u[k:k + s]), dtype=float)
            k += s
        return out

    def log_jacobian(self, u):
        total, k = 0.0, 0
        for s, t in zip(self.sizes, self.tr):
            total += t.log_jacobian(u[k:k + s])
            k += s
        return total


def _grid_propose(values, current, rng):
    """Uniform over the grid values other than ``current`` (symmetric)."""
    others = values[values != current[0]]
    if others.size == 0:
        return current.copy()
    return np.array([others[int(rng.integers(others.size))]])


class Sampler:
    """Carries the adaptive proposals and counters of one chain."""

    def __init__(self, model: StateSpaceModel, cfg: SamplerConfig, rng):
        bad = cfg.violations(model)
        if bad:
            raise ConfigError("; ".join(bad))
        self.model, self.cfg, self.rng = model, cfg, rng
        self.codecs = [_BlockCodec(model, b) for b in cfg.blocks]
        self.plans = [_gibbs_plan(model, b.params) if b.kind == "gibbs" else None for b in cfg.blocks]
        self.arw = []
        for b, c in zip(cfg.blocks, self.codecs):
            regime = b.regime or ("particle" if b.kind == "pmmh" and cfg.scheme != "ideal" else "ideal")
            self.arw.append(AdaptiveRW(c.d, regime, init_cov=b.init_cov, **cfg.adapt))
        self.counters = {"pmmh_proposals": 0, "pmmh_accepts": 0, "pmmh_j_draws": 0,
                         "pmmh_j_draws_on_reject": 0, "smc_runs": 0, "csmc_runs": 0,
                         "collapses": 0}
        self._last_accept = np.full(cfg.p, -1, dtype=np.int8)
        self._last_refresh = False

    # -- pieces ---------------------------------------------------------------
    def select_path(self, ps: ParticleSystem, theta) -> Trajectory:
        if self.cfg.trajectory == "backward":
            return sample_backward(ps, self.model, theta, self.rng)
        return sample_ancestral(ps, self.rng)

    def _log_prior(self, theta, codec, u):
        lp = self.model.log_prior(theta)
        if lp == -math.inf:
            return lp
        return lp + codec.log_jacobian(u)

    def _propose(self, i, u):
        codec = self.codecs[i]
        if codec.grid is not None:
            return _grid_propose(codec.grid, u, self.rng)
        return self.arw[i].propose(u, self.rng)

    def initial_state(self, theta0) -> ChainState:
        theta = self.model.check_theta(theta0)
        if self.model.log_prior(theta) == -math.inf:
            raise ConfigError("initial parameter values lie outside the prior support")
        if self.cfg.scheme == "ideal":
            return ChainState(theta, None, None, self.model.exact_loglik(theta))
        ps = run_smc(self.model, theta, self.cfg.N, self.rng, self.cfg.resampler)
        self.counters["smc_runs"] += 1
        if ps.collapsed:
            raise ChainError(f"initial particle filter collapsed at step {ps.collapse_step}")
        return ChainState(theta, ps, self.select_path(ps, theta), ps.log_likelihood())

    # -- Part 1 ---------------------------------------------------------------
    def pmmh_block_step(self, state: ChainState, i: int) -> ChainState:
        """Move block ``i`` with the states integrated out.

        The path index is redrawn only when the proposal is accepted.
        """
        codec = self.codecs[i]
        u = codec.pack(state.theta)
        u_new = self._propose(i, u)
        theta_new = codec.unpack(u_new, state.theta)
        lp_new = self._log_prior(theta_new, codec, u_new)
        self.counters["pmmh_proposals"] += 1
        accept_u = self.rng.random()
        if lp_new == -math.inf:
            self._last_accept[i] = 0
            return state
        lp_old = self._log_prior(state.theta, codec, u)
        ideal = self.cfg.scheme == "ideal"
        if ideal:
            ps_new, log_z_new = None, self.model.exact_loglik(theta_new)
        else:
            ps_new = run_smc(self.model, theta_new, self.cfg.N, self.rng, self.cfg.resampler)
            self.counters["smc_runs"] += 1
            self.counters["collapses"] += int(ps_new.collapsed)
            log_z_new = ps_new.log_likelihood()
        alpha = acceptance_probability(log_z_new + lp_new - state.log_z - lp_old)
        if not accept_u < alpha:
            self._last_accept[i] = 0
            return state
        self._last_accept[i] = 1
        self.counters["pmmh_accepts"] += 1
        if ideal:
            return ChainState(theta_new, None, None, log_z_new)
        traj = self.select_path(ps_new, theta_new)
        self.counters["pmmh_j_draws"] += 1
        return ChainState(theta_new, ps_new, traj, log_z_new)

    # -- Part 2 ---------------------------------------------------------------
    def pg_block_step(self, state: ChainState, i: int) -> ChainState:
        """Move block ``i`` conditional on the current path."""
        block = self.cfg.blocks[i]
        path = state.traj.states
        theta = state.theta
        if block.kind == "gibbs":
            for key in self.plans[i]:
                theta = dict(theta)
                theta.update(self.model.exact_conditionals[key](theta, path, self.rng))
            self._last_accept[i] = 1
            return ChainState(theta, state.ps, state.traj, state.log_z)
        codec = self.codecs[i]
        u = codec.pack(theta)
        u_new = self._propose(i, u)
        theta_new = codec.unpack(u_new, theta)
        accept_u = self.rng.random()
        lp_new = self._log_prior(theta_new, codec, u_new)
        if lp_new == -math.inf:
            self._last_accept[i] = 0
            return state
        log_ratio = (self.model.path_logpdf(theta_new, path) + lp_new
                     - self.model.path_logpdf(theta, path) - self._log_prior(theta, codec, u))
        if accept_u < acceptance_probability(log_ratio):
            self._last_accept[i] = 1
            return ChainState(theta_new, state.ps, state.traj, state.log_z)
        self._last_accept[i] = 0
        return state

    # -- Parts 3 and 4 -----------------------------------------------------------
    def refresh_particles(self, state: ChainState) -> ChainState:
        """Conditional SMC around the current path, then a new path."""
        ps = run_csmc(self.model, state.theta, self.cfg.N, state.traj, self.rng)
        self.counters["csmc_runs"] += 1
        return ChainState(state.theta, ps, self.select_path(ps, state.theta), ps.log_likelihood())

    # -- iterations ---------------------------------------------------------------
    def general_sampler_iterate(self, state: ChainState) -> ChainState:
        self._last_accept[:] = -1
        p1 = self.cfg.p1
        for i in range(p1):
            state = self.pmmh_block_step(state, i)
        for i in range(p1, self.cfg.p):
            state = self.pg_block_step(state, i)
        return self.refresh_particles(state)

    def mixture_iterate(self, state: ChainState) -> ChainState:
        self._last_accept[:] = -1
        self._last_refresh = bool(self.rng.random() < self.cfg.refresh_prob)
        if self._last_refresh:
            return self.refresh_particles(state)
        for i in range(self.cfg.p):
            state = self.pmmh_block_step(state, i)
        return state

    def ideal_sampler_iterate(self, state: ChainState) -> ChainState:
        self._last_accept[:] = -1
        p1 = self.cfg.p1
        for i in range(p1):
            state = self.pmmh_block_step(state, i)
        if p1 < self.cfg.p or self.cfg.store_paths:
            path = np.asarray(self.model.exact_path(state.theta, self.rng), dtype=float)
            state = ChainState(state.theta, None, Trajectory(path, None, "exact"), state.log_z)
        if p1 < self.cfg.p:
            for i in range(p1, self.cfg.p):
                state = self.pg_block_step(state, i)
            state.log_z = self.model.exact_loglik(state.theta)
        return state

    def iterate(self, state: ChainState) -> ChainState:
        if self.cfg.scheme == "general":
            return self.general_sampler_iterate(state)
        if self.cfg.scheme == "mixture":
            return self.mixture_iterate(state)
        return self.ideal_sampler_iterate(state)

    def adapt(self, state: ChainState) -> None:
        for codec, arw in zip(self.codecs, self.arw):
            if codec.grid is None:
                arw.update(codec.pack(state.theta))

    def freeze(self) -> None:
        for arw in self.arw:
            arw.freeze()


# -- chain record ------------------------------------------------------------------


def _column_names(model, names):
    cols = []
    for p in names:
        size = model.parameters[p].size
        cols += [p] if size == 1 else [f"{p}[{k + 1}]" for k in range(size)]
    return cols


@dataclass
class ChainRecord:
    """Per-iteration output of one chain.

    ``draws`` has one column per scalar parameter element (vector
    parameters are split as ``beta[1]``, ``beta[2]``, ...). ``accept`` holds
    one column per block with 1 (accepted), 0 (rejected) or -1 (not
    attempted in that iteration).
    """

    columns: list
    draws: np.ndarray
    block_labels: list
    accept: np.ndarray
    log_z: np.ndarray
    refresh: np.ndarray
    warmup: int
    seconds: float = 0.0
    checkpoints: list = field(default_factory=list)
    paths: np.ndarray | None = None
    counters: dict = field(default_factory=dict)
    derived: dict = field(default_factory=dict)
    manifest: dict = field(default_factory=dict)
    complete: bool = True

    def __len__(self):
        return self.draws.shape[0]

    @property
    def time_per_1000(self) -> float:
        return 1000.0 * self.seconds / max(len(self), 1)

    def column(self, name) -> np.ndarray:
        if name in self.columns:
            return self.draws[:, self.columns.index(name)]
        if name in self.derived:
            return self.derived[name]
        raise KeyError(name)

    def group(self, name) -> list[str]:
        """Columns belonging to parameter ``name`` (``beta`` -> ``beta[1..m]``)."""
        if name in self.columns or name in self.derived:
            return [name]
        return [c for c in self.columns if c.startswith(name + "[")]

    def acceptance_rates(self, post_warmup=True) -> dict:
        acc = self.accept[self.warmup:] if post_warmup else self.accept
        out = {}
        for k, label in enumerate(self.block_labels):
            a = acc[:, k]
            tried = a >= 0
            out[label] = float(a[tried].mean()) if tried.any() else None
        return out

    def to_csv(self, path) -> None:
        """RFC-4180 CSV: iteration, parameter columns, accept flags, logZ, refresh."""
        dnames = sorted(self.derived)
        header = (["iteration"] + self.columns + dnames
                  + [f"accept:{b}" for b in self.block_labels] + ["log_z", "refresh"])
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\r\n")
            w.writerow(header)
            for k in range(len(self)):
                row = [k] + [repr(float(v)) for v in self.draws[k]]
                row += [repr(float(self.derived[d][k])) for d in dnames]
                row += [int(v) for v in self.accept[k]]
                row += [repr(float(self.log_z[k])), int(self.refresh[k])]
                w.writerow(row)

    @classmethod
    def from_csv(cls, path, warmup=0) -> "ChainRecord":
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        header, body = rows[0], [r for r in rows[1:] if r]
        data = np.array([[float(v) for v in r] for r in body]).reshape(len(body), len(header))
        acc_idx = [k for k, h in enumerate(header) if h.startswith("accept:")]
        val_idx = [k for k, h in enumerate(header)
                   if k not in acc_idx and h not in ("iteration", "log_z", "refresh")]
        return cls(
            columns=[header[k] for k in val_idx],
            draws=data[:, val_idx],
            block_labels=[header[k][len("accept:"):] for k in acc_idx],
            accept=data[:, acc_idx].astype(np.int8),
            log_z=data[:, header.index("log_z")],
            refresh=data[:, header.index("refresh")].astype(bool),
            warmup=warmup,
        )


def run_chain(model: StateSpaceModel, cfg: SamplerConfig, init: dict, rng=None,
              progress=None) -> ChainRecord:
    """Run ``cfg.iterations`` iterations (warmup included) from ``init``.

    Adaptation of the random-walk proposals runs during warmup and is frozen
    afterwards. ``progress``, if given, is called as ``progress(k, record_so_far)``
    every 1000 iterations.
    """
    from .probability import rng_stream

    rng = rng_stream(cfg.seed, cfg.stream) if rng is None else rng
    sampler = Sampler(model, cfg, rng)
    names = [p for b in cfg.blocks for p in b.params]
    names = [p for p in model.parameters if p in names]
    cols = _column_names(model, names)
    n = cfg.iterations
    draws = np.empty((n, len(cols)))
    accept = np.full((n, cfg.p), -1, dtype=np.int8)
    log_z = np.empty(n)
    refresh = np.zeros(n, dtype=bool)
    paths = np.empty((n, model.T, model.state_dim)) if cfg.store_paths else None
    record = ChainRecord(cols, draws, [b.label for b in cfg.blocks], accept, log_z, refresh,
                         cfg.warmup, paths=paths, counters=sampler.counters)
    record.manifest = {
        "version": __version__, "seed": cfg.seed, "stream": cfg.stream, "sampler": cfg.to_dict(), "p1": cfg.p1,
        "adaptive_rw": [a.settings() for a in sampler.arw], "model": model.manifest(),
    }
    t0 = time.perf_counter()
    try:
        state = sampler.initial_state(init)
    except Exception as exc:
        record.complete = False
        raise ChainError(f"initialisation failed: {exc}", 0, record) from exc
    k = 0
    try:
        for k in range(n):
            if k == cfg.warmup:
                sampler.freeze()
            state = sampler.iterate(state)
            if k < cfg.warmup:
                sampler.adapt(state)
            draws[k] = np.concatenate([state.theta[p] for p in names])
            accept[k] = sampler._last_accept
            log_z[k] = state.log_z
            refresh[k] = sampler._last_refresh
            if paths is not None:
                paths[k] = state.traj.states
            if (k + 1) % 1000 == 0:
                record.checkpoints.append(time.perf_counter() - t0)
                if progress is not None:
                    progress(k + 1, record)
    except Exception as exc:
        record.complete = False
        _truncate(record, k)
        record.seconds = time.perf_counter() - t0
        raise ChainError(f"iteration {k}: {type(exc).__name__}: {exc}", k, record) from exc
    record.seconds = time.perf_counter() - t0
    record.counters["pmmh_j_draws_on_reject"] = record.counters["pmmh_j_draws"] - record.counters["pmmh_accepts"]
    record.derived = {key: np.asarray(v, float) for key, v in _derived(model, record).items()}
    record.manifest["final_covariances"] = [a.cov.tolist() for a in sampler.arw]
    return record


def _derived(model, record):
    draws = {}
    for p in model.parameters:
        cols = record.group(p)
        if cols:
            draws[p] = record.draws[:, [record.columns.index(c) for c in cols]].squeeze(-1) \
                if len(cols) == 1 else record.draws[:, [record.columns.index(c) for c in cols]]
    return model.derived(draws)


def _truncate(record, k):
    record.draws = record.draws[:k]
    record.accept = record.accept[:k]
    record.log_z = record.log_z[:k]
    record.refresh = record.refresh[:k]
    if record.paths is not None:
        record.paths = record.paths[:k]


def write_manifest(record: ChainRecord, path, extra=None) -> None:
    out = dict(record.manifest)
    out.update(seconds=record.seconds, time_per_1000=record.time_per_1000,
               iterations=len(record), warmup=record.warmup, complete=record.complete,
               counters=record.counters)
    if extra:
        out.update(extra)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(out, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, tuple):
        return list(obj)
    raise TypeError(f"not JSON serialisable: {type(obj).__name__}")
