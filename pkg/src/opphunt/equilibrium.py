"""Markov best responses, MPE checks and deviation probes.

Deviations are scored by the stationary value ``U~ / (1 - Q)`` of the
deviating player's Markov law against the opponent's fixed law. Non-Markov
deviations are scored by Monte Carlo (and, for finite-state rules, also by
the exact joint-state solver).
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from typing import Any, Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import minimize_scalar

from ._kernels import derive_seed
from .engine import GameParams, SimConfig, sample_play, simulate_batch
from .history import Discovered, History, append_cascade, close_limit
from .payoff import (SCHEMA_VERSION, DivergentError, PayoffError, _jsonable, finite_state_value,
                     lambda_ratio, markov_value_for)
from .strategy import (DelayDistribution, Deterministic, ExponentialDelay, MarkovStrategy, Mixture,
                       Never, Strategy, ZenoSchedule, markov_from_history, never, stationary)


class EquilibriumError(ValueError):
    pass


@dataclass(frozen=True)
class DeviationFamily:
    """Finite menu of Markov deviations.

    Enumeration order (also the tie-break order): deterministic delays
    ascending, exponential rates ascending, never-mixtures as given, never.
    ``refine`` adds a bounded scalar search around the best grid delay and rate.
    """

    deterministic_grid: Tuple[float, ...] = ()
    exponential_grid: Tuple[float, ...] = ()
    include_never: bool = True
    mixture_grid: Tuple[Tuple[float, float], ...] = ()
    refine: bool = False

    def __post_init__(self):
        object.__setattr__(self, "deterministic_grid", tuple(sorted(float(x) for x in self.deterministic_grid)))
        object.__setattr__(self, "exponential_grid", tuple(sorted(float(x) for x in self.exponential_grid)))
        object.__setattr__(self, "mixture_grid", tuple((float(t), float(w)) for t, w in self.mixture_grid))
        if not (self.deterministic_grid or self.exponential_grid or self.mixture_grid or self.include_never):
            raise EquilibriumError("deviation family is empty")
        if any(x <= 0 for x in self.deterministic_grid + self.exponential_grid):
            raise EquilibriumError("grid values must be positive")
        if any(t <= 0 or not 0 < w <= 1 for t, w in self.mixture_grid):
            raise EquilibriumError("mixture entries need tau > 0 and weight in (0, 1]")

    @classmethod
    def default(cls, lam: float, refine: bool = False) -> "DeviationFamily":
        """64 log-spaced delays in [0.01, 20]/lam, 64 log-spaced rates in
        [lam/20, 100 lam], 8 delays x weights {1/4, 1/2, 3/4} mixed with never."""
        taus = np.geomspace(0.01 / lam, 20.0 / lam, 64)
        mus = np.geomspace(lam / 20.0, 100.0 * lam, 64)
        mix_taus = np.geomspace(0.01 / lam, 20.0 / lam, 8)
        mixes = tuple((float(t), w) for t in mix_taus for w in (0.25, 0.5, 0.75))
        return cls(tuple(taus.tolist()), tuple(mus.tolist()), True, mixes, refine)

    def members(self) -> Iterator[MarkovStrategy]:
        for t in self.deterministic_grid:
            yield Deterministic(t)
        for m in self.exponential_grid:
            yield ExponentialDelay(m)
        for t, w in self.mixture_grid:
            yield Mixture(((w, Deterministic(t)), (1.0 - w, Never()))) if w < 1 else Deterministic(t)
        if self.include_never:
            yield Never()

    def to_dict(self) -> Dict[str, Any]:
        return {"deterministic_grid": list(self.deterministic_grid),
                "exponential_grid": list(self.exponential_grid),
                "include_never": self.include_never,
                "mixture_grid": [list(x) for x in self.mixture_grid],
                "refine": self.refine}


def _value(player: int, mine: DelayDistribution, opp: DelayDistribution, params: GameParams) -> float:
    f1, f2 = (mine, opp) if player == 1 else (opp, mine)
    return markov_value_for(player, f1, f2, params)


def _refine(player, opp, params, grid, make, best_val):
    """Bounded search on log-scale between the neighbours of the best grid point."""
    vals = []
    for x in grid:
        try:
            vals.append(_value(player, make(x).dist, opp, params))
        except DivergentError:
            vals.append(-math.inf)
    if not vals:
        return None
    i = int(np.argmax(vals))
    lo = math.log(grid[max(i - 1, 0)])
    hi = math.log(grid[min(i + 1, len(grid) - 1)])
    if hi <= lo:
        return None

    def neg(z):
        try:
            return -_value(player, make(math.exp(z)).dist, opp, params)
        except DivergentError:
            return math.inf

    res = minimize_scalar(neg, bounds=(lo, hi), method="bounded", options={"xatol": 1e-10})
    if -res.fun > best_val:
        return make(math.exp(res.x)), -res.fun
    return None


def best_markov_response(opponent: DelayDistribution, family: DeviationFamily, params: GameParams,
                         player: int = 1) -> Tuple[MarkovStrategy, float]:
    """First maximiser of the stationary value over ``family`` against ``opponent``."""
    best, best_val = None, -math.inf
    for s in family.members():
        try:
            v = _value(player, s.dist, opponent, params)
        except DivergentError:
            continue
        if v > best_val:
            best, best_val = s, v
    if best is None:
        raise EquilibriumError("every family member diverges")
    if family.refine:
        for grid, make in ((family.deterministic_grid, Deterministic), (family.exponential_grid, ExponentialDelay)):
            got = _refine(player, opponent, params, grid, make, best_val)
            if got is not None:
                best, best_val = got
    return best, best_val


@dataclass(frozen=True)
class Deviation:
    strategy: MarkovStrategy
    value: float
    gap: float


@dataclass(frozen=True)
class VerificationReport:
    candidate_values: Tuple[float, float]
    best_deviations: Tuple[Deviation, Deviation]
    epsilon: float
    verdict: str

    @property
    def confirmed(self) -> bool:
        return self.verdict == "confirmed"

    def to_dict(self) -> Dict[str, Any]:
        return {
            "schema_version": SCHEMA_VERSION,
            "epsilon": self.epsilon,
            "verdict": self.verdict,
            "players": [
                {"player": i + 1, "candidate_value": self.candidate_values[i],
                 "best_deviation": d.strategy.spec(), "deviation_value": d.value, "gap": d.gap}
                for i, d in enumerate(self.best_deviations)
            ],
        }

    def to_json(self) -> str:
        return json.dumps(_jsonable(self.to_dict()), indent=2, sort_keys=True)


def verify_mpe(f1: DelayDistribution, f2: DelayDistribution, family: DeviationFamily,
               params: GameParams, epsilon: float) -> VerificationReport:
    if not epsilon > 0:
        raise EquilibriumError("epsilon must be > 0")
    cand = (markov_value_for(1, f1, f2, params), markov_value_for(2, f1, f2, params))
    devs = []
    for player, opp in ((1, f2), (2, f1)):
        s, v = best_markov_response(opp, family, params, player)
        devs.append(Deviation(s, v, v - cand[player - 1]))
    ok = all(d.gap <= epsilon for d in devs)
    return VerificationReport(cand, tuple(devs), epsilon, "confirmed" if ok else "refuted")


def symmetric_grid_candidate(family: DeviationFamily, params: GameParams) -> Tuple[MarkovStrategy, float]:
    """Family member F whose symmetric pair (F, F) has the smallest best-response gap."""
    best, best_gap = None, math.inf
    for s in family.members():
        try:
            own = _value(1, s.dist, s.dist, params)
            _, dev = best_markov_response(s.dist, family, params)
        except (DivergentError, EquilibriumError):
            continue
        if dev - own < best_gap:
            best, best_gap = s, dev - own
    if best is None:
        raise EquilibriumError("no symmetric candidate could be evaluated")
    return best, best_gap


# --------------------------------------------------------------------------
# non-Markov probes


@dataclass(frozen=True)
class ProbeResult:
    probe: Dict[str, Any]
    seed: int
    mean: float
    se: float
    exact: Optional[float]
    exceeds: bool


@dataclass(frozen=True)
class ProbeReport:
    markov_best: float
    markov_best_strategy: Dict[str, Any]
    epsilon: float
    results: Tuple[ProbeResult, ...]
    bundle: Dict[str, Any]

    @property
    def exceedances(self) -> List[ProbeResult]:
        return [r for r in self.results if r.exceeds]

    @property
    def max_probe(self) -> Optional[ProbeResult]:
        return max(self.results, key=lambda r: r.mean) if self.results else None

    def to_dict(self) -> Dict[str, Any]:
        return {
            "schema_version": SCHEMA_VERSION,
            "markov_best": self.markov_best,
            "markov_best_strategy": self.markov_best_strategy,
            "epsilon": self.epsilon,
            "probes": [r.__dict__ for r in self.results],
            "exceedances": [dict(r.__dict__, reproduce=self.bundle) for r in self.exceedances],
        }

    def to_json(self) -> str:
        return json.dumps(_jsonable(self.to_dict()), indent=2, sort_keys=True)


def probe_nonmarkov_deviations(candidate: Tuple[DelayDistribution, DelayDistribution],
                               probes: Sequence[Strategy], params: GameParams, cfg: SimConfig,
                               epsilon: float, family: Optional[DeviationFamily] = None) -> ProbeReport:
    """Monte Carlo value of each probe as player 1 against the candidate's player-2 law.

    A probe exceeds when its mean is above the Markov best-response value
    plus ``epsilon`` plus three standard errors. Probe ``i`` uses master seed
    ``derive_seed(cfg.master_seed, i)``.
    """
    _, f2 = candidate
    family = family or DeviationFamily.default(params.lam, refine=True)
    best_s, best_v = best_markov_response(f2, family, params)
    opp = stationary(f2)
    bundle = {"params": params.__dict__, "opponent": opp.spec(), "replications": cfg.replications,
              "budget": cfg.budget, "horizon": cfg.horizon, "master_seed": cfg.master_seed}
    results = []
    for i, probe in enumerate(probes):
        seed = derive_seed(cfg.master_seed, i)
        stats = simulate_batch(probe, opp, params, replace(cfg, master_seed=seed))
        try:
            exact = finite_state_value(probe, opp, params)
        except PayoffError:
            exact = None
        exceeds = stats.mean1 > best_v + epsilon + 3.0 * stats.se1
        results.append(ProbeResult(probe.spec(), seed, stats.mean1, stats.se1, exact, exceeds))
    return ProbeReport(best_v, best_s.spec(), epsilon, tuple(results), bundle)


# --------------------------------------------------------------------------
# epsilon-best-response extraction


@dataclass(frozen=True)
class Extraction:
    strategy: MarkovStrategy
    value: float
    h0: History
    max_lambda: float
    histories: int

    def __iter__(self):
        return iter((self.strategy, self.value))


def _schedule_histories(s: ZenoSchedule, per_cascade: int) -> Iterator[History]:
    h_start = History.empty()
    while True:
        form = s.cascade_form(h_start)
        if form is None:
            yield h_start
            return
        h = h_start
        for _ in range(per_cascade):
            yield h
            d = s.next_distribution(h)
            h = h.append_inspection(h.final_time + d.atoms[0][0], (s.player,), (s.player,))
        h_start = close_limit(append_cascade(h_start, form), form.supremum())


def _sampled_histories(s1: Strategy, opp: MarkovStrategy, params: GameParams, cfg: SimConfig,
                       per_cascade: int) -> Iterator[History]:
    """Non-terminal prefixes of simulated plays, at most ``cfg.budget`` per play.

    Schedule cascades against an idle opponent are resolved in closed form
    after ``per_cascade`` explicit steps so plays stay short.
    """
    cfg = replace(cfg, cascade_steps=cfg.cascade_steps or per_cascade)
    for i in range(cfg.replications):
        res = sample_play(s1, opp, params, cfg, derive_seed(cfg.master_seed, i))
        found = isinstance(res.play.outcome, Discovered)
        last, cut = None, False
        for k, h in enumerate(res.play.history.prefixes()):
            if k > cfg.budget:
                cut = True
                break
            if last is not None:
                yield last
            last = h
        if last is not None and (cut or not found):
            yield last


def extract_markov_eps_best_response(s1: Strategy, f2: DelayDistribution, params: GameParams,
                                     cfg: SimConfig, per_cascade: int = 64) -> Extraction:
    """Replay ``s1``'s choice at the sampled history with the largest U~/P~ as a Markov strategy.

    Histories come from the empty history, the schedule's own cascades (for
    schedule-form strategies) and every non-terminal prefix of simulated
    plays against ``f2``; the first maximiser in that order is kept.
    """
    opp = stationary(f2)
    s1 = s1.for_player(1)
    if isinstance(s1, Never) or (isinstance(s1, MarkovStrategy) and s1.dist.is_never):
        return Extraction(never(), 0.0, History.empty(), 0.0, 0)

    def candidates():
        yield History.empty()
        if isinstance(s1, ZenoSchedule):
            yield from _schedule_histories(s1, per_cascade)
        yield from _sampled_histories(s1, opp, params, cfg, per_cascade)

    cache: Dict[DelayDistribution, float] = {}
    best_h, best_lam, count = None, -math.inf, 0
    for h in candidates():
        count += 1
        d = s1.next_distribution(h)
        if d.is_never:
            continue
        lam = cache.get(d)
        if lam is None:
            lam = cache[d] = lambda_ratio(d, f2, params)
        if lam > best_lam:
            best_h, best_lam = h, lam
    if best_h is None:
        return Extraction(never(), 0.0, History.empty(), 0.0, count)
    strat = markov_from_history(s1, best_h)
    try:
        value = markov_value_for(1, strat.dist, f2, params)
    except DivergentError:
        value = math.nan
    return Extraction(strat, value, best_h, best_lam, count)
