"""Reproducible Monte-Carlo tail probabilities.

Trials for a given ``(epsilon, n)`` cell are cut into fixed-size chunks.
Chunk ``c`` of cell ``(i, j)`` draws from a Philox stream seeded by
``SeedSequence(seed, spawn_key=(i, j, c))``, so results depend only on the
seed and the grid, never on how chunks are scheduled. Chunk results are
merged in chunk order, which keeps floating-point sums bitwise stable too.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np

from ..errors import ConfigurationError
from ..stats import normal_interval, wilson_interval
from .strategies import in_tail

__all__ = ["SimulationConfig", "TailEstimate", "simulate_tail", "sample_estimates", "stream", "CHUNK"]

log = logging.getLogger(__name__)

CHUNK = 1024


@dataclass(frozen=True)
class SimulationConfig:
    n_grid: tuple
    trials: int
    seed: int = 0
    eps_list: tuple = (0.5,)
    workers: int | None = None
    sampling: str = "auto"     # auto | plain | importance

    def __post_init__(self):
        ng = tuple(int(n) for n in self.n_grid)
        if not ng or any(n <= 0 for n in ng) or any(b <= a for a, b in zip(ng, ng[1:])):
            raise ConfigurationError("n_grid must be a non-empty increasing sequence of positive integers")
        if int(self.trials) <= 0:
            raise ConfigurationError("trials must be positive")
        eps = tuple(float(e) for e in self.eps_list)
        if not eps or any(not (e > 0 and math.isfinite(e)) for e in eps):
            raise ConfigurationError("epsilon values must be positive")
        if not 0 <= int(self.seed) < 2**64:
            raise ConfigurationError("seed must fit in 64 bits")
        if self.sampling not in ("auto", "plain", "importance"):
            raise ConfigurationError(f"unknown sampling mode {self.sampling!r}")
        object.__setattr__(self, "n_grid", ng)
        object.__setattr__(self, "eps_list", eps)
        object.__setattr__(self, "trials", int(self.trials))
        object.__setattr__(self, "seed", int(self.seed))


@dataclass(frozen=True)
class TailEstimate:
    """``P{|T_n - theta| >= eps}``. ``method`` is ``plain``, ``importance`` or ``exact``.

    For importance rows ``hits`` counts proposal draws in the tail and the
    interval is a normal interval from the weighted standard error; for
    exact rows ``trials = hits = 0``.
    """

    n: int
    eps: float
    hits: int
    trials: int
    p_hat: float
    wilson_lo: float
    wilson_hi: float
    stderr: float = 0.0
    method: str = "plain"

    def as_dict(self):
        return asdict(self)


def stream(seed: int, *key: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=tuple(key))))


def _chunks(trials: int):
    full, rest = divmod(trials, CHUNK)
    return [CHUNK] * full + ([rest] if rest else [])


def _run_chunks(tasks, workers):
    if workers is None or workers <= 1:
        return [t() for t in tasks]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(t) for t in tasks]
        return [f.result() for f in futures]


def _method_for(strategy, family, theta, cfg):
    if getattr(strategy, "tail_exact", None) is not None:
        probe = strategy.tail_exact(family, theta, cfg.n_grid[0], cfg.eps_list[0])
        if probe is not None:
            return "exact"
    if cfg.sampling == "plain":
        return "plain"
    has_is = hasattr(strategy, "tail_importance") and getattr(strategy, "importance", True)
    if cfg.sampling == "importance" and not has_is:
        raise ConfigurationError(f"strategy {strategy.name} has no importance sampler")
    return "importance" if has_is else "plain"


def simulate_tail(strategy, family, theta_true: float, cfg: SimulationConfig) -> list[TailEstimate]:
    """Tail estimates for every ``(eps, n)`` of the configuration, ordered by eps then n."""
    for n in cfg.n_grid:
        strategy.check(family, n)
    method = _method_for(strategy, family, theta_true, cfg)
    tasks, cells = [], []
    for i, eps in enumerate(cfg.eps_list):
        for j, n in enumerate(cfg.n_grid):
            if method == "exact":
                cells.append((eps, n, None))
                continue
            sizes = _chunks(cfg.trials)
            first = len(tasks)
            for c, size in enumerate(sizes):
                tasks.append(_make_task(strategy, family, theta_true, n, eps, size, cfg.seed, (i, j, c), method))
            cells.append((eps, n, slice(first, len(tasks))))
    results = _run_chunks(tasks, cfg.workers)
    out = []
    for eps, n, sl in cells:
        if sl is None:
            p = float(strategy.tail_exact(family, theta_true, n, eps))
            out.append(TailEstimate(n, eps, 0, 0, p, p, p, 0.0, "exact"))
            continue
        hits, s1, s2 = 0, 0.0, 0.0
        for h, a, b in results[sl]:
            hits += h
            s1 += a
            s2 += b
        t = cfg.trials
        if method == "plain":
            lo, hi = wilson_interval(hits, t)
            p = hits / t
            out.append(TailEstimate(n, eps, hits, t, p, lo, hi, math.sqrt(p * (1 - p) / t), "plain"))
        else:
            p = s1 / t
            var = max(s2 / t - p * p, 0.0)
            se = math.sqrt(var / t)
            lo, hi = normal_interval(p, se)
            out.append(TailEstimate(n, eps, hits, t, p, lo, hi, se, "importance"))
    return out


def _make_task(strategy, family, theta, n, eps, size, seed, key, method):
    def task():
        rng = stream(seed, *key)
        if method == "importance":
            hits, w = strategy.tail_importance(family, theta, n, eps, size, rng)
            return int(hits), float(np.sum(w)), float(np.sum(w * w))
        est = strategy.sample(family, theta, n, size, rng)
        h = int(np.sum(in_tail(est, theta, eps)))
        return h, float(h), float(h)

    return task


def sample_estimates(strategy, family, theta_true: float, n: int, trials: int, seed: int = 0,
                     workers: int | None = None) -> np.ndarray:
    """Plain draws of the estimate (stream key ``(0, n, chunk)``), e.g. for MSE calibration."""
    strategy.check(family, n)
    tasks = []
    for c, size in enumerate(_chunks(trials)):
        def task(c=c, size=size):
            return strategy.sample(family, theta_true, n, size, stream(seed, 0, n, c))
        tasks.append(task)
    return np.concatenate(_run_chunks(tasks, workers))
