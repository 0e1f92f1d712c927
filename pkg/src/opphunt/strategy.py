"""Inspection strategies.

A strategy maps a history to a :class:`DelayDistribution`: the law of the
delay, measured from the time of the last index ``t_alpha*``, until the
player's next planned inspection. An atom at infinity means the player may
never inspect again.

Markov strategies return the same delay distribution after every history,
so "shifted to the time of the last inspection" is literal equality of the
returned objects.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

from scipy.optimize import brentq

from .history import FORMULAS, History, HistoryError, make_cascade, validate

MASS_TOL = 1e-12
_ONE_MINUS = 1.0 - 2.0 ** -53


class StrategyError(ValueError):
    pass


# --------------------------------------------------------------------------
# delay distributions


@dataclass(frozen=True)
class ExpComponent:
    rate: float
    weight: float


@dataclass(frozen=True, eq=False)
class GenericComponent:
    """Continuous component given by its conditional CDF on (0, inf).

    ``pdf`` is optional; quadrature falls back to a central difference of the CDF.
    """

    cdf: Callable[[float], float]
    weight: float
    pdf: Optional[Callable[[float], float]] = None
    name: str = "generic"

    def density(self, x: float) -> float:
        if self.pdf is not None:
            return self.pdf(x)
        h = 1e-6 * max(1.0, x)
        lo = max(x - h, 0.0)
        return (self.cdf(x + h) - self.cdf(lo)) / (x + h - lo)

    def quantile(self, u: float) -> float:
        hi = 1.0
        while self.cdf(hi) <= u:
            hi *= 2.0
            if hi > 1e300:
                raise StrategyError(f"CDF of {self.name} never reaches {u}")
        return brentq(lambda x: self.cdf(x) - u, 0.0, hi, xtol=1e-14, rtol=4 * 2.0 ** -52)


@dataclass(frozen=True)
class DelayDistribution:
    atoms: Tuple[Tuple[float, float], ...] = ()
    never_mass: float = 0.0
    exponentials: Tuple[ExpComponent, ...] = ()
    generic: Optional[GenericComponent] = None

    def __post_init__(self):
        atoms = tuple(sorted((float(d), float(m)) for d, m in self.atoms))
        object.__setattr__(self, "atoms", atoms)
        delays = [d for d, _ in atoms]
        if any(not (0 < d < math.inf) for d in delays):
            raise StrategyError(f"atom delays must be finite and positive: {delays}")
        if len(set(delays)) != len(delays):
            raise StrategyError(f"atom delays must be distinct: {delays}")
        masses = [m for _, m in atoms] + [self.never_mass] + [c.weight for c in self.exponentials]
        if self.generic is not None:
            masses.append(self.generic.weight)
        if any(not (0.0 <= m <= 1.0) for m in masses):
            raise StrategyError(f"masses must lie in [0, 1]: {masses}")
        if any(not (c.rate > 0 and math.isfinite(c.rate)) for c in self.exponentials):
            raise StrategyError("exponential rates must be positive and finite")
        total = math.fsum(masses)
        if abs(total - 1.0) > MASS_TOL:
            raise StrategyError(f"total mass {total!r} != 1")

    # -- queries ----------------------------------------------------------
    @property
    def has_generic(self) -> bool:
        return self.generic is not None and self.generic.weight > 0

    @property
    def is_never(self) -> bool:
        return self.never_mass == 1.0

    def cdf(self, t: float) -> float:
        """P(delay <= t)."""
        if t == math.inf:
            return 1.0
        if t <= 0:
            return 0.0
        acc = [m for d, m in self.atoms if d <= t]
        acc += [c.weight * -math.expm1(-c.rate * t) for c in self.exponentials]
        if self.generic is not None:
            acc.append(self.generic.weight * self.generic.cdf(t))
        return math.fsum(acc)

    def survival(self, t: float) -> float:
        """P(delay > t), counting the atom at infinity."""
        if t == math.inf:
            return 0.0
        if t < 0:
            return 1.0
        acc = [self.never_mass] + [m for d, m in self.atoms if d > t]
        acc += [c.weight * math.exp(-c.rate * t) for c in self.exponentials]
        if self.generic is not None:
            acc.append(self.generic.weight * (1.0 - self.generic.cdf(t)))
        return math.fsum(acc)

    def close_to(self, other: "DelayDistribution", tol: float = 1e-12) -> bool:
        if len(self.atoms) != len(other.atoms) or len(self.exponentials) != len(other.exponentials):
            return False
        for (d1, m1), (d2, m2) in zip(self.atoms, other.atoms):
            if abs(d1 - d2) > tol or abs(m1 - m2) > tol:
                return False
        for a, b in zip(self.exponentials, other.exponentials):
            if abs(a.rate - b.rate) > tol or abs(a.weight - b.weight) > tol:
                return False
        if (self.generic is None) != (other.generic is None):
            return False
        if self.generic is not None and self.generic is not other.generic:
            return False
        return abs(self.never_mass - other.never_mass) <= tol

    def describe(self) -> Dict[str, Any]:
        out: Dict[str, Any] = {"atoms": [list(a) for a in self.atoms], "never": self.never_mass}
        if self.exponentials:
            out["exponentials"] = [[c.rate, c.weight] for c in self.exponentials]
        if self.generic is not None:
            out["generic"] = [self.generic.name, self.generic.weight]
        return out


def atom(delay: float) -> DelayDistribution:
    return DelayDistribution(atoms=((delay, 1.0),))


def never_dist() -> DelayDistribution:
    return DelayDistribution(never_mass=1.0)


def exponential_dist(rate: float) -> DelayDistribution:
    return DelayDistribution(exponentials=(ExpComponent(rate, 1.0),))


def mix(parts: Sequence[Tuple[float, DelayDistribution]]) -> DelayDistribution:
    """Mixture of delay distributions; weights are normalised to sum to 1."""
    total = math.fsum(w for w, _ in parts)
    if not total > 0 or any(w < 0 for w, _ in parts):
        raise StrategyError("mixture weights must be non-negative with a positive sum")
    atoms: Dict[float, List[float]] = {}
    exps: Dict[float, List[float]] = {}
    never: List[float] = []
    generic = None
    for w, d in parts:
        w = w / total
        for delay, m in d.atoms:
            atoms.setdefault(delay, []).append(w * m)
        for c in d.exponentials:
            exps.setdefault(c.rate, []).append(w * c.weight)
        never.append(w * d.never_mass)
        if d.generic is not None:
            if generic is not None:
                raise StrategyError("at most one generic component per mixture")
            generic = replace(d.generic, weight=w * d.generic.weight)
    atoms_t = tuple((k, math.fsum(v)) for k, v in atoms.items() if math.fsum(v) > 0)
    exps_t = tuple(ExpComponent(k, math.fsum(v)) for k, v in exps.items() if math.fsum(v) > 0)
    # absorb rounding so the total is 1 to the last bit where possible
    never_m = math.fsum(never)
    masses = [m for _, m in atoms_t] + [c.weight for c in exps_t] + ([generic.weight] if generic else [])
    if never_m > 0:
        never_m = max(0.0, 1.0 - math.fsum(masses))
    return DelayDistribution(atoms_t, never_m, exps_t, generic)


def sample_delay(d: DelayDistribution, u: float) -> float:
    """Inverse-CDF draw from ``u`` in [0, 1).

    Cumulative mass is laid out as: atoms by ascending delay, then the
    exponential components in order, then the generic component, then the
    atom at infinity.
    """
    cum = 0.0
    for delay, m in d.atoms:
        nxt = cum + m
        if u < nxt:
            return delay
        cum = nxt
    for c in d.exponentials:
        nxt = cum + c.weight
        if u < nxt:
            v = min((u - cum) / c.weight, _ONE_MINUS)
            return -math.log1p(-v) / c.rate
        cum = nxt
    g = d.generic
    if g is not None and g.weight > 0:
        nxt = cum + g.weight
        if u < nxt:
            return g.quantile(min((u - cum) / g.weight, _ONE_MINUS))
        cum = nxt
    if d.never_mass > 0:
        return math.inf
    # rounding left u past the last finite component
    if g is not None and g.weight > 0:
        return g.quantile(_ONE_MINUS)
    if d.exponentials:
        c = d.exponentials[-1]
        return -math.log1p(-_ONE_MINUS) / c.rate
    return d.atoms[-1][0]


# --------------------------------------------------------------------------
# strategies

# event classes seen by reactive strategies
START, SELF, OTHER, TIE_WON, TIE_LOST = range(5)
N_CLASSES = 5


def event_class(h: History, player: int) -> Tuple[int, float]:
    """Class of the last record of ``h`` from ``player``'s side, and the gap before it."""
    rec = h.last_record()
    if rec is None:
        return START, 0.0
    gap = rec.time - h.previous_time()
    mine = rec.inspector == player
    if rec.is_tie:
        return (TIE_WON if mine else TIE_LOST), gap
    return (SELF if mine else OTHER), gap


class Strategy:
    kind: str = "abstract"
    markov: bool = False
    player: int = 1

    def next_distribution(self, h: History) -> DelayDistribution:
        raise NotImplementedError

    def spec(self) -> Dict[str, Any]:
        raise NotImplementedError

    def for_player(self, player: int) -> "Strategy":
        return self

    def table(self):
        """``(dists, class_table, threshold)`` for the batch kernels, or None.

        ``class_table[k][b]`` indexes ``dists`` for event class k and gap
        bucket b (0 if the last gap is below ``threshold``).
        """
        return None

    def state_key(self, h: History):
        """Hashable summary of everything the strategy's future depends on, or None."""
        return None

    def breakpoints(self) -> Tuple[float, ...]:
        """Delays at which the state reached after the next event changes."""
        return ()


class MarkovStrategy(Strategy):
    markov = True

    @property
    def dist(self) -> DelayDistribution:
        raise NotImplementedError

    def next_distribution(self, h: History) -> DelayDistribution:
        return self.dist

    def table(self):
        if self.dist.has_generic:
            return None
        return [self.dist], [[0, 0]] * N_CLASSES, math.inf

    def state_key(self, h: History):
        return ()


@dataclass(frozen=True)
class Never(MarkovStrategy):
    kind = "never"

    @property
    def dist(self):
        return never_dist()

    def spec(self):
        return {"kind": "never"}


@dataclass(frozen=True)
class Deterministic(MarkovStrategy):
    tau: float
    kind = "deterministic"

    def __post_init__(self):
        if not (0 < self.tau < math.inf):
            raise StrategyError(f"tau must be positive and finite, got {self.tau}")

    @property
    def dist(self):
        return atom(self.tau)

    def spec(self):
        return {"kind": "deterministic", "tau": self.tau}


@dataclass(frozen=True)
class ExponentialDelay(MarkovStrategy):
    mu: float
    kind = "exponential"

    def __post_init__(self):
        if not (0 < self.mu < math.inf):
            raise StrategyError(f"mu must be positive and finite, got {self.mu}")

    @property
    def dist(self):
        return exponential_dist(self.mu)

    def spec(self):
        return {"kind": "exponential", "mu": self.mu}


@dataclass(frozen=True)
class Mixture(MarkovStrategy):
    components: Tuple[Tuple[float, MarkovStrategy], ...]
    kind = "mixture"

    def __post_init__(self):
        if not self.components:
            raise StrategyError("mixture needs at least one component")
        for _, s in self.components:
            if not isinstance(s, MarkovStrategy):
                raise StrategyError(f"mixture components must be stationary, got {s.kind}")
        object.__setattr__(self, "_dist", mix([(w, s.dist) for w, s in self.components]))

    @property
    def dist(self):
        return self._dist

    def spec(self):
        return {"kind": "mixture",
                "components": [{"weight": w, **s.spec()} for w, s in self.components]}


@dataclass(frozen=True)
class Stationary(MarkovStrategy):
    """Markov strategy given directly by its stationary delay distribution."""

    law: DelayDistribution
    kind = "stationary"

    @property
    def dist(self):
        return self.law

    def spec(self):
        return {"kind": "stationary", **self.law.describe()}


def stationary(d: DelayDistribution) -> MarkovStrategy:
    """The simplest Markov strategy with stationary law ``d``."""
    if d.is_never:
        return Never()
    if not d.exponentials and d.generic is None and len(d.atoms) == 1 and d.atoms[0][1] == 1.0:
        return Deterministic(d.atoms[0][0])
    if not d.atoms and d.generic is None and len(d.exponentials) == 1 and d.exponentials[0].weight == 1.0:
        return ExponentialDelay(d.exponentials[0].rate)
    return Stationary(d)


@dataclass(frozen=True)
class ZenoSchedule(Strategy):
    """Inspect along harmonic cascades: base + span * n/(n+1) for n = 1, 2, ...

    Cascade k occupies [k*span, (k+1)*span). After ``cascades`` cascades the
    player stops inspecting. The rule reads only the current time, so the
    opponent's inspections do not shift the schedule.
    """

    span: float = 1.0
    cascades: int = 2
    player: int = 1
    kind = "zeno"

    def _cascade_at(self, t: float) -> Optional[Tuple[Dict[str, float], int]]:
        k = int(math.floor(t / self.span))
        if k >= self.cascades:
            return None
        params = {"base": k * self.span, "span": self.span, "shift": 0.0}
        return params, FORMULAS["harmonic"].first_after(params, t)

    def next_distribution(self, h: History) -> DelayDistribution:
        if h.is_open:
            raise StrategyError("history ends in an open cascade")
        found = self._cascade_at(h.final_time)
        if found is None:
            return never_dist()
        params, n = found
        return atom(FORMULAS["harmonic"].time(params, n) - h.final_time)

    def cascade_form(self, h: History):
        """Closed form of the remaining cascade from ``h``: a Cascade starting at alpha*."""
        found = self._cascade_at(h.final_time)
        if found is None:
            return None
        params, n = found
        params = dict(params, shift=float(n - 1))
        return make_cascade("harmonic", params, h.alpha_star, self.player)

    def for_player(self, player):
        return replace(self, player=player)

    def spec(self):
        return {"kind": "zeno", "span": self.span, "cascades": self.cascades}


@dataclass(frozen=True)
class Reactive(Strategy):
    """Finite-state rule: the next delay law depends on the class of the last
    record (start, own, opponent's, tie won, tie lost) and on whether the gap
    before it was shorter than ``threshold``.
    """

    rule: str
    params: Tuple[Tuple[str, Any], ...]
    dists: Tuple[DelayDistribution, ...]
    class_table: Tuple[Tuple[int, int], ...]
    threshold: float = math.inf
    player: int = 1
    kind = "reactive"

    def next_distribution(self, h: History) -> DelayDistribution:
        if h.is_open:
            raise StrategyError("history ends in an open cascade")
        cls, gap = event_class(h, self.player)
        return self.dists[self.class_table[cls][0 if gap < self.threshold else 1]]

    def state_key(self, h: History):
        cls, gap = event_class(h, self.player)
        return self.class_table[cls][0 if gap < self.threshold else 1]

    def breakpoints(self):
        return (self.threshold,) if math.isfinite(self.threshold) else ()

    def table(self):
        if any(d.has_generic for d in self.dists):
            return None
        return list(self.dists), [list(r) for r in self.class_table], self.threshold

    def for_player(self, player):
        return replace(self, player=player)

    def spec(self):
        return {"kind": "reactive", "rule": self.rule, "params": _unfreeze(self.params)}


def _freeze(obj):
    if isinstance(obj, dict):
        return tuple(sorted((k, _freeze(v)) for k, v in obj.items()))
    if isinstance(obj, list):
        return tuple(_freeze(v) for v in obj)
    return obj


def _unfreeze(obj):
    if isinstance(obj, tuple) and all(isinstance(x, tuple) and len(x) == 2 and isinstance(x[0], str) for x in obj) and obj:
        return {k: _unfreeze(v) for k, v in obj}
    if isinstance(obj, tuple):
        return [_unfreeze(v) for v in obj]
    return obj


def _markov_from_spec(spec) -> MarkovStrategy:
    s = strategy_from_spec(spec)
    if not isinstance(s, MarkovStrategy):
        raise StrategyError(f"reactive rules choose among stationary laws, got {s.kind}")
    return s


def reactive(rule: str, params: Dict[str, Any], player: int = 1) -> Reactive:
    """Build a named reactive rule.

    ``copy``: always ``base``.
    ``by_last``: ``start``, ``after_self``, ``after_other``, ``after_tie``
    (optionally ``after_tie_won``/``after_tie_lost``); missing entries fall back
    to ``start`` (ties fall back to ``after_tie``).
    ``by_gap``: ``fast`` after a gap shorter than ``threshold``, else ``slow``.
    ``table``: raw ``dists`` list, 5x2 ``table`` of indices, ``threshold``.
    """
    threshold = math.inf
    if rule == "copy":
        laws = [_markov_from_spec(params["base"]).dist]
        table = [[0, 0]] * N_CLASSES
    elif rule == "by_last":
        start = params["start"]
        tie = params.get("after_tie", start)
        order = [start, params.get("after_self", start), params.get("after_other", start),
                 params.get("after_tie_won", tie), params.get("after_tie_lost", tie)]
        laws = [_markov_from_spec(s).dist for s in order]
        table = [[k, k] for k in range(N_CLASSES)]
    elif rule == "by_gap":
        threshold = float(params["threshold"])
        laws = [_markov_from_spec(params["fast"]).dist, _markov_from_spec(params["slow"]).dist]
        table = [[1, 1]] + [[0, 1]] * (N_CLASSES - 1)
    elif rule == "table":
        laws = [_markov_from_spec(s).dist for s in params["dists"]]
        table = [list(map(int, row)) for row in params["table"]]
        threshold = float(params.get("threshold", math.inf))
        if len(table) != N_CLASSES or any(len(r) != 2 or not all(0 <= i < len(laws) for i in r) for r in table):
            raise StrategyError("table must be 5 rows of 2 valid indices")
    else:
        raise StrategyError(f"unknown reactive rule {rule!r}")
    if not threshold > 0:
        raise StrategyError("threshold must be positive")
    return Reactive(rule, _freeze(params), tuple(laws), tuple(tuple(r) for r in table), threshold, player)


# --------------------------------------------------------------------------
# constructors and operations


def never() -> Never:
    return Never()


def deterministic(tau: float) -> Deterministic:
    return Deterministic(float(tau))


def exponential(mu: float) -> ExponentialDelay:
    return ExponentialDelay(float(mu))


def mixture(components: Sequence[Tuple[float, Strategy]]) -> Mixture:
    return Mixture(tuple((float(w), s) for w, s in components))


def zeno_schedule(span: float = 1.0, cascades: int = 2) -> ZenoSchedule:
    return ZenoSchedule(float(span), int(cascades))


STRATEGY_KINDS = ("never", "deterministic", "exponential", "mixture", "zeno", "reactive")


def strategy_from_spec(spec: Dict[str, Any]) -> Strategy:
    kind = spec.get("kind")
    try:
        if kind == "never":
            return never()
        if kind == "deterministic":
            return deterministic(spec["tau"])
        if kind == "exponential":
            return exponential(spec["mu"])
        if kind == "mixture":
            return mixture([(c.get("weight", 1.0), strategy_from_spec({k: v for k, v in c.items() if k != "weight"}))
                            for c in spec["components"]])
        if kind == "zeno":
            return zeno_schedule(spec.get("span", 1.0), spec.get("cascades", 2))
        if kind == "reactive":
            return reactive(spec["rule"], spec.get("params", {}))
    except KeyError as exc:
        raise StrategyError(f"strategy {kind!r} is missing field {exc}") from exc
    raise StrategyError(f"unknown strategy kind {kind!r}; expected one of {STRATEGY_KINDS}")


def next_distribution(s: Strategy, h: History) -> DelayDistribution:
    problems = validate(h)
    if problems:
        raise HistoryError(f"invalid history: {problems[0]}")
    return s.next_distribution(h)


def is_markov(s: Strategy) -> bool:
    return s.markov


def markov_from_history(s: Strategy, h0: History) -> MarkovStrategy:
    """The Markov strategy that replays ``s``'s choice at ``h0`` after every inspection."""
    d = next_distribution(s, h0)
    if isinstance(s, MarkovStrategy):
        return s
    return stationary(d)
