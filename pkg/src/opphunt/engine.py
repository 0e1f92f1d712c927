"""Seeded sampling of plays and realized payoffs.

Every play is a pure function of its 64-bit seed. Draw order per step is
fixed: player-1 delay, player-2 delay, tie coin (only on an exact tie),
prize check. The prize check after a gap of length ``d`` since the previous
index succeeds with probability ``1 - exp(-lam * d)``.

Replication ``i`` of a batch uses ``derive_seed(master_seed, i)``, so batch
statistics do not depend on how replications are split across workers.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Dict, Optional, Tuple

import numpy as np

from . import _kernels
from ._kernels import SplitMix64, derive_seed, derive_seeds
from .history import (FORMULAS, Cascade, Discovered, Explicit, History, Play, Undiscovered,
                      append_cascade, close_limit)
from .strategy import DelayDistribution, MarkovStrategy, Strategy, ZenoSchedule, sample_delay


class EngineError(ValueError):
    pass


@dataclass(frozen=True)
class GameParams:
    """Discount rate ``r``, prize rate ``lam``, inspection cost, prize values.

    ``v_finder`` goes to whoever finds the prize, ``v_other`` to the other
    player. ``cost1``/``cost2`` override ``cost`` per player.
    """

    r: float = 0.1
    lam: float = 1.0
    cost: float = 0.1
    v_finder: float = 1.0
    v_other: float = 0.0
    cost1: Optional[float] = None
    cost2: Optional[float] = None

    def __post_init__(self):
        if not self.lam > 0:
            raise EngineError(f"lam must be > 0, got {self.lam}")
        if not self.r >= 0:
            raise EngineError(f"r must be >= 0, got {self.r}")
        for name in ("cost", "cost1", "cost2"):
            v = getattr(self, name)
            if v is not None and not v >= 0:
                raise EngineError(f"{name} must be >= 0, got {v}")

    def cost_of(self, player: int) -> float:
        override = self.cost1 if player == 1 else self.cost2
        return self.cost if override is None else override

    def swapped(self) -> "GameParams":
        """Same game seen from player 2's seat."""
        return GameParams(self.r, self.lam, self.cost, self.v_finder, self.v_other,
                          self.cost2, self.cost1)

    def scaled(self, k: float) -> "GameParams":
        sc = lambda v: None if v is None else v * k
        return GameParams(self.r, self.lam, self.cost * k, self.v_finder * k, self.v_other * k,
                          sc(self.cost1), sc(self.cost2))


@dataclass(frozen=True)
class SimConfig:
    """Truncation and replication settings.

    ``budget`` caps inspection events per play. ``cascade_steps``, when set,
    lets the engine jump over the rest of a schedule-form cascade after that
    many explicit steps (only against an opponent who never inspects).
    """

    horizon: float = math.inf
    budget: int = 100_000
    replications: int = 10_000
    master_seed: int = 0
    cascade_steps: Optional[int] = None
    workers: int = 1

    def __post_init__(self):
        if not self.horizon > 0:
            raise EngineError(f"horizon must be > 0, got {self.horizon}")
        if self.budget < 1:
            raise EngineError(f"budget must be >= 1, got {self.budget}")
        if self.replications < 1:
            raise EngineError(f"replications must be >= 1, got {self.replications}")
        if self.cascade_steps is not None and self.cascade_steps < 1:
            raise EngineError("cascade_steps must be >= 1")


@dataclass(frozen=True)
class PlayResult:
    play: Play
    payoff: Tuple[float, float]
    rng_trace_len: int


# --------------------------------------------------------------------------
# payoffs


def _cascade_cost_sum(seg: Cascade, r: float) -> float:
    """sum over the run of exp(-r * u_n)."""
    if seg.count is None:
        return math.inf
    if r == 0:
        return float(seg.count)
    total = 0.0
    chunk = 1 << 20
    p = seg.param_dict
    for lo in range(1, seg.count + 1, chunk):
        n = np.arange(lo, min(lo + chunk, seg.count + 1), dtype=np.float64)
        if seg.formula == "harmonic":
            k = n + p["shift"]
            u = p["base"] + p["span"] * (k / (k + 1))
        else:
            u = np.array([seg.time(int(i)) for i in n])
        total += math.fsum(np.exp(-r * u))
    return total


def realized_payoff(p: Play, params: GameParams, player: int) -> float:
    """Discounted payoff of ``player``: -c at each own actual inspection, plus
    the finder or non-finder value at discovery. Attempts that lose a tie cost
    nothing.
    """
    c = params.cost_of(player)
    total = 0.0
    for seg in p.history.segments:
        if isinstance(seg, Explicit):
            for rec in seg.records:
                if rec.actual == {player}:
                    total -= c * math.exp(-params.r * rec.time)
        elif seg.actual == {player} and c > 0:
            total -= c * _cascade_cost_sum(seg, params.r)
    if isinstance(p.outcome, Discovered):
        v = params.v_finder if p.outcome.by == player else params.v_other
        total += v * math.exp(-params.r * p.outcome.at)
    return total


# --------------------------------------------------------------------------
# single plays


def _compressible(s: Strategy, other: Strategy, h: History, run: int, cfg: SimConfig) -> bool:
    if cfg.cascade_steps is None or run < cfg.cascade_steps:
        return False
    if not isinstance(s, ZenoSchedule) or not isinstance(other, MarkovStrategy):
        return False
    return other.dist.is_never and s.cascade_form(h) is not None


def _jump_cascade(s: ZenoSchedule, h: History, lam: float, rng: SplitMix64):
    """Resolve the rest of ``s``'s current cascade with one uniform draw.

    The prize is found inside the cascade with probability
    1 - exp(-lam * (limit - t)); it is then claimed at the first cascade time
    after its arrival. Otherwise the limit is closed and play continues.
    """
    tail = s.cascade_form(h)
    t = h.final_time
    limit = tail.supremum()
    u = rng.uniform()
    if u < -math.expm1(-lam * (limit - t)):
        arrival = t - math.log1p(-u) / lam
        params = tail.param_dict
        n = FORMULAS[tail.formula].first_after(params, arrival) if arrival >= tail.time(1) else 1
        run = Cascade(tail.formula, tail.params, tail.start_index, tail.attempted, tail.actual, None, n)
        h = append_cascade(h, run)
        return h, Discovered(s.player, run.time(n))
    h = close_limit(append_cascade(h, tail), limit)
    return h, None


def sample_play(s1: Strategy, s2: Strategy, params: GameParams, cfg: SimConfig, seed: int) -> PlayResult:
    s1, s2 = s1.for_player(1), s2.for_player(2)
    rng = SplitMix64(seed)
    h = History.empty()
    outcome = Undiscovered()
    truncated = True
    end_time = 0.0
    events = 0
    run = {1: 0, 2: 0}
    while events < cfg.budget:
        t = h.final_time
        d1 = s1.next_distribution(h)
        d2 = s2.next_distribution(h)
        if not isinstance(d1, DelayDistribution) or not isinstance(d2, DelayDistribution):
            raise EngineError("strategies must return DelayDistribution objects")
        a1 = t + sample_delay(d1, rng.uniform())
        a2 = t + sample_delay(d2, rng.uniform())
        m = min(a1, a2)
        if m == math.inf:
            truncated, end_time = False, math.inf
            break
        if m > cfg.horizon:
            end_time = cfg.horizon
            break
        tie = a1 == a2
        if tie:
            actual = 1 if rng.uniform() < 0.5 else 2
            attempted = (1, 2)
        else:
            actual = 1 if a1 < a2 else 2
            attempted = (actual,)
        found = rng.uniform() < -math.expm1(-params.lam * (m - t))
        h = h.append_inspection(m, attempted, (actual,))
        events += 1
        end_time = m
        if found:
            outcome, truncated = Discovered(actual, m), False
            break
        run[actual] += 1
        run[3 - actual] = 0
        for me, s, other in ((1, s1, s2), (2, s2, s1)):
            if _compressible(s, other, h, run[me], cfg):
                h, found_in_tail = _jump_cascade(s, h, params.lam, rng)
                run[me] = 0
                if found_in_tail is not None:
                    outcome, truncated, end_time = found_in_tail, False, found_in_tail.at
                    break
                end_time = h.final_time
        if not truncated:
            break
    play = Play(h, outcome, truncated, end_time)
    payoff = (realized_payoff(play, params, 1), realized_payoff(play, params, 2))
    return PlayResult(play, payoff, rng.draws)


# --------------------------------------------------------------------------
# batches


@dataclass(frozen=True)
class BatchStats:
    replications: int
    mean1: float
    se1: float
    mean2: float
    se2: float
    discovery_rate: float
    truncation_rate: float

    CSV_HEADER = "replications,mean1,se1,mean2,se2,discovery_rate,truncation_rate"

    def csv_row(self) -> str:
        vals = [self.replications, self.mean1, self.se1, self.mean2, self.se2,
                self.discovery_rate, self.truncation_rate]
        return ",".join(str(v) if isinstance(v, int) else repr(float(v)) for v in vals)

    def as_dict(self) -> Dict[str, float]:
        d = asdict(self)
        return d


def mean_se(x: np.ndarray) -> Tuple[float, float]:
    """Mean and standard error with exactly rounded sums (order-independent)."""
    n = x.shape[0]
    mean = math.fsum(x.tolist()) / n
    if n < 2 or not math.isfinite(mean):
        return mean, (0.0 if n < 2 else math.nan)
    var = math.fsum(((x - mean) ** 2).tolist()) / (n - 1)
    return mean, math.sqrt(var / n)


def kernel_form(s: Strategy, player: int):
    tab = s.for_player(player).table()
    if tab is None:
        return None
    return _kernels.PackedStrategy(*tab)


def simulate_raw(s1: Strategy, s2: Strategy, params: GameParams, cfg: SimConfig,
                 use_numba: Optional[bool] = None, start: int = 0) -> Dict[str, np.ndarray]:
    """Per-replication arrays for replications ``start .. start + N - 1``."""
    p1, p2 = kernel_form(s1, 1), kernel_form(s2, 2)
    n = cfg.replications
    if p1 is not None and p2 is not None:
        seeds = derive_seeds(cfg.master_seed, n, start)
        chunks = _split(n, cfg.workers)

        def work(bounds):
            lo, hi = bounds
            return _kernels.run_batch(seeds[lo:hi], p1, p2, params.lam, params.r,
                                      params.cost_of(1), params.cost_of(2), params.v_finder,
                                      params.v_other, cfg.horizon, cfg.budget, use_numba)

        parts = _fan_out(work, chunks, cfg.workers)
        return {k: np.concatenate([p[k] for p in parts]) for k in parts[0]}

    def work_py(bounds):
        lo, hi = bounds
        rows = []
        for i in range(lo, hi):
            res = sample_play(s1, s2, params, cfg, derive_seed(cfg.master_seed, start + i))
            pl = res.play
            first = next(iter(pl.history.records()), None)
            rows.append((res.payoff[0], res.payoff[1],
                         pl.outcome.by if isinstance(pl.outcome, Discovered) else 0,
                         pl.truncated, pl.history.num_records() or -1, pl.end_time,
                         first.time if first else math.inf, bool(first and first.is_tie),
                         first.inspector if first else 0, res.rng_trace_len))
        return rows

    rows = [r for part in _fan_out(work_py, _split(n, cfg.workers), cfg.workers) for r in part]
    cols = list(zip(*rows))
    dtypes = [float, float, np.int8, np.bool_, np.int64, float, float, np.bool_, np.int8, np.int64]
    names = ["pay1", "pay2", "outcome", "truncated", "n_events", "end_time", "first_time",
             "first_tie", "first_actual", "draws"]
    return {k: np.asarray(c, dtype=dt) for k, c, dt in zip(names, cols, dtypes)}


def _split(n: int, workers: int):
    workers = max(1, min(workers, n))
    edges = np.linspace(0, n, workers + 1).astype(int)
    return [(int(a), int(b)) for a, b in zip(edges[:-1], edges[1:])]


def _fan_out(fn, chunks, workers):
    if workers <= 1 or len(chunks) == 1:
        return [fn(c) for c in chunks]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, chunks))


def summarize(raw: Dict[str, np.ndarray]) -> BatchStats:
    n = raw["pay1"].shape[0]
    m1, se1 = mean_se(raw["pay1"])
    m2, se2 = mean_se(raw["pay2"])
    return BatchStats(n, m1, se1, m2, se2,
                      float(np.count_nonzero(raw["outcome"])) / n,
                      float(np.count_nonzero(raw["truncated"])) / n)


def simulate_batch(s1: Strategy, s2: Strategy, params: GameParams, cfg: SimConfig,
                   use_numba: Optional[bool] = None) -> BatchStats:
    return summarize(simulate_raw(s1, s2, params, cfg, use_numba))


def first_inspection_cdf(d1: DelayDistribution, d2: DelayDistribution, t: float) -> float:
    """P(min(s1, s2) <= t) for independent delays drawn from an empty history."""
    return 1.0 - d1.survival(t) * d2.survival(t)
