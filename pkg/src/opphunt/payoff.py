"""Expected payoffs from the recursive payoff equation.

Everything reduces to one integral family. For delay laws ``F`` (own) and
``G`` (opponent), a decay rate ``kappa`` and a window ``(lo, hi]``::

    I(kappa; F, G, lo, hi) = E[exp(-kappa * s_F); s_F < s_G, lo < s_F <= hi]

plus the tie mass ``T(kappa) = sum over common atoms a of p_a q_a exp(-kappa a)``.
With ``A = r`` and ``B = r + lam``, player 1's per-cycle payoff, the expected
discount to the next inspection and the continuation factor are::

    U~ = (v1 - c) I(A;F1,F2) - v1 I(B;F1,F2) + v2 (I(A;F2,F1) - I(B;F2,F1))
         + 1/2 ((v1 - c + v2) T(A) - (v1 + v2) T(B))
    P~ = I(A;F1,F2) + I(A;F2,F1) + T(A)
    Q  = I(B;F1,F2) + I(B;F2,F1) + T(B)

Every first inspection, including the opponent's, is discounted at its own
time min(s1, s2). For a Markov pair the stationary value is U = U~ / (1 - Q).

Atom/exponential mixtures have closed forms; generic-CDF components go
through adaptive quadrature (QUADPACK via scipy), which also serves as an
independent check of the closed forms.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import integrate

from .engine import GameParams
from .history import History
from .strategy import DelayDistribution, Strategy

SCHEMA_VERSION = 1
QUAD_TOL = 1e-9
TAIL_MASS = 1e-14
DIVERGENCE_TOL = 1e-12


class PayoffError(ArithmeticError):
    pass


class DivergentError(PayoffError):
    pass


# --------------------------------------------------------------------------
# the integral family, closed form


def _window(a: float, lo: float, hi: float) -> float:
    """integral of exp(-a s) over (lo, hi], a > 0."""
    if hi <= lo:
        return 0.0
    head = math.exp(-a * lo)
    if hi == math.inf:
        return head / a
    return head * -math.expm1(-a * (hi - lo)) / a


def _has_generic(*ds: DelayDistribution) -> bool:
    return any(d.has_generic for d in ds)


def exp_component_window(rate: float, weight: float, g: DelayDistribution, kappa: float,
                         lo: float = 0.0, hi: float = math.inf) -> float:
    """E[exp(-kappa s); s < s_G, lo < s <= hi] for the part of s ~ weight * Exp(rate)."""
    a = rate + kappa
    terms = [g.never_mass * _window(a, lo, hi)]
    terms += [q * _window(a, lo, min(hi, b)) for b, q in g.atoms if b > lo]
    terms += [c.weight * _window(a + c.rate, lo, hi) for c in g.exponentials]
    return weight * rate * math.fsum(terms)


def atom_window(f: DelayDistribution, g: DelayDistribution, kappa: float,
                lo: float = 0.0, hi: float = math.inf) -> float:
    return math.fsum(p * math.exp(-kappa * a) * g.survival(a) for a, p in f.atoms if lo < a <= hi)


def first_mass(f: DelayDistribution, g: DelayDistribution, kappa: float,
               lo: float = 0.0, hi: float = math.inf) -> float:
    """Closed form of I(kappa; f, g, lo, hi); f and g must be atom/exponential mixtures."""
    if _has_generic(f, g):
        raise PayoffError("closed form needs atom/exponential mixtures; use quadrature")
    terms = [atom_window(f, g, kappa, lo, hi)]
    terms += [exp_component_window(c.rate, c.weight, g, kappa, lo, hi) for c in f.exponentials]
    return math.fsum(terms)


def tie_mass(f: DelayDistribution, g: DelayDistribution, kappa: float,
             lo: float = 0.0, hi: float = math.inf) -> float:
    other = dict(g.atoms)
    return math.fsum(p * other[a] * math.exp(-kappa * a)
                     for a, p in f.atoms if a in other and lo < a <= hi)


# --------------------------------------------------------------------------
# the integral family, quadrature


def _continuous_cutoff(f: DelayDistribution) -> float:
    """A time beyond which f's continuous part carries less than TAIL_MASS."""
    t = 1.0
    for c in f.exponentials:
        if c.weight > 0:
            t = max(t, math.log(max(c.weight, TAIL_MASS) / TAIL_MASS) / c.rate)
    if f.has_generic:
        g = f.generic
        while g.weight * (1.0 - g.cdf(t)) > TAIL_MASS:
            t *= 2.0
            if t > 1e12:
                raise PayoffError(f"generic component {g.name} has too heavy a tail")
    return t


def _density(f: DelayDistribution, s: float) -> float:
    out = math.fsum(c.weight * c.rate * math.exp(-c.rate * s) for c in f.exponentials)
    if f.has_generic:
        out += f.generic.weight * f.generic.density(s)
    return out


def first_mass_quad(f: DelayDistribution, g: DelayDistribution, kappa: float,
                    lo: float = 0.0, hi: float = math.inf) -> Tuple[float, float]:
    """Adaptive-quadrature value of I(kappa; f, g, lo, hi) and an error estimate."""
    total = atom_window(f, g, kappa, lo, hi)
    if not f.exponentials and not f.has_generic:
        return total, 0.0
    top = min(hi, max(_continuous_cutoff(f), lo + 1.0))
    if top <= lo:
        return total, 0.0
    pts = {b for b, _ in g.atoms if lo < b < top}
    for c in list(f.exponentials) + list(g.exponentials):
        for m in (0.1, 1.0, 5.0, 20.0):
            x = m / c.rate
            if lo < x < top:
                pts.add(x)
    edges = [lo] + sorted(pts) + [top]
    err = 0.0 if hi <= top else TAIL_MASS
    integrand = lambda s: math.exp(-kappa * s) * g.survival(s) * _density(f, s)
    for a, b in zip(edges[:-1], edges[1:]):
        val, e = integrate.quad(integrand, a, b, epsabs=1e-13, epsrel=1e-12, limit=200)
        total += val
        err += e
    if err > QUAD_TOL:
        raise PayoffError(f"quadrature did not converge: estimated error {err:.3g}")
    return total, err


# --------------------------------------------------------------------------
# per-cycle quantities


@dataclass(frozen=True)
class Pieces:
    """The six integrals a two-player cycle needs, and their error bound."""

    i12_r: float
    i12_b: float
    i21_r: float
    i21_b: float
    tie_r: float
    tie_b: float
    method: str
    err: float


def pieces(f1: DelayDistribution, f2: DelayDistribution, params: GameParams,
           method: str = "auto") -> Pieces:
    a, b = params.r, params.r + params.lam
    if method == "auto":
        method = "quadrature" if _has_generic(f1, f2) else "closed_form"
    if method == "closed_form":
        vals = [first_mass(f1, f2, a), first_mass(f1, f2, b), first_mass(f2, f1, a), first_mass(f2, f1, b)]
        err = 0.0
    elif method == "quadrature":
        got = [first_mass_quad(f1, f2, a), first_mass_quad(f1, f2, b),
               first_mass_quad(f2, f1, a), first_mass_quad(f2, f1, b)]
        vals = [v for v, _ in got]
        err = sum(e for _, e in got)
    else:
        raise ValueError(f"unknown method {method!r}")
    return Pieces(*vals, tie_mass(f1, f2, a), tie_mass(f1, f2, b), method, err)


def _u_tilde(pc: Pieces, params: GameParams, c: float) -> float:
    v1, v2 = params.v_finder, params.v_other
    return math.fsum([
        (v1 - c) * pc.i12_r, -v1 * pc.i12_b,
        v2 * pc.i21_r, -v2 * pc.i21_b,
        0.5 * (v1 - c + v2) * pc.tie_r, -0.5 * (v1 + v2) * pc.tie_b,
    ])


def tilde_u(f1, f2, params: GameParams, method: str = "auto") -> float:
    """Player 1's expected payoff from the next inspection, discounted to now."""
    return _u_tilde(pieces(f1, f2, params, method), params, params.cost_of(1))


def tilde_p(f1, f2, params: GameParams, method: str = "auto") -> float:
    """E[exp(-r * min(s1, s2))]; the factor is 0 at min = inf."""
    pc = pieces(f1, f2, params, method)
    return math.fsum([pc.i12_r, pc.i21_r, pc.tie_r])


def continuation_factor(f1, f2, params: GameParams, method: str = "auto") -> float:
    """Q = E[exp(-(r + lam) * min(s1, s2))]."""
    pc = pieces(f1, f2, params, method)
    return math.fsum([pc.i12_b, pc.i21_b, pc.tie_b])


def _ratio(u: float, p: float) -> float:
    if p > 0:
        return u / p
    if u == 0:
        return 0.0
    raise PayoffError(f"P~ = 0 but U~ = {u}")


def lambda_ratio(f1, f2, params: GameParams, method: str = "auto") -> float:
    """U~ / P~, with 0 for the pair that never inspects."""
    pc = pieces(f1, f2, params, method)
    return _ratio(_u_tilde(pc, params, params.cost_of(1)), math.fsum([pc.i12_r, pc.i21_r, pc.tie_r]))


def _fixed_point(u: float, q: float) -> float:
    if q >= 1.0 - DIVERGENCE_TOL:
        raise DivergentError(f"continuation factor {q} is too close to 1")
    return u / (1.0 - q)


def markov_value(f1, f2, params: GameParams, method: str = "auto") -> float:
    """Stationary value U = U~ / (1 - Q) of player 1 under a Markov pair."""
    pc = pieces(f1, f2, params, method)
    q = math.fsum([pc.i12_b, pc.i21_b, pc.tie_b])
    return _fixed_point(_u_tilde(pc, params, params.cost_of(1)), q)


def markov_value_for(player: int, f1, f2, params: GameParams, method: str = "auto") -> float:
    if player == 1:
        return markov_value(f1, f2, params, method)
    return markov_value(f2, f1, params.swapped(), method)


@dataclass(frozen=True)
class PayoffReport:
    u_tilde: float
    p_tilde: float
    q_factor: float
    lambda_ratio: float
    fixed_point_value: float
    method: str
    est_abs_error: float

    def to_json(self, **extra) -> str:
        d = {"schema_version": SCHEMA_VERSION, **asdict(self), **extra}
        return json.dumps(_jsonable(d), indent=2, sort_keys=True)


def _jsonable(obj):
    if isinstance(obj, float) and not math.isfinite(obj):
        return repr(obj)
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    return obj


def payoff_report(f1, f2, params: GameParams, method: str = "auto", player: int = 1) -> PayoffReport:
    if player == 2:
        f1, f2, params = f2, f1, params.swapped()
    pc = pieces(f1, f2, params, method)
    u = _u_tilde(pc, params, params.cost_of(1))
    p = math.fsum([pc.i12_r, pc.i21_r, pc.tie_r])
    q = math.fsum([pc.i12_b, pc.i21_b, pc.tie_b])
    try:
        fp = _fixed_point(u, q)
    except DivergentError:
        fp = math.nan
    return PayoffReport(u, p, q, _ratio(u, p), fp, pc.method, pc.err)


# --------------------------------------------------------------------------
# branches of the first inspection


@dataclass(frozen=True)
class Branch:
    """One way the next inspection can happen.

    ``weight`` is E[exp(-(r + lam) s); branch]; ``delay`` is a representative
    delay (exact for atoms, any point of the cell for continuous parts).
    """

    actual: int
    attempted: Tuple[int, ...]
    delay: float
    weight: float
    exact: bool


def _cells(cuts: Sequence[float]) -> List[Tuple[float, float]]:
    pts = [0.0] + sorted({c for c in cuts if 0 < c < math.inf}) + [math.inf]
    return list(zip(pts[:-1], pts[1:]))


def _rep(lo: float, hi: float) -> float:
    return 0.5 * (lo + hi) if hi < math.inf else lo + 1.0


def branches(f1: DelayDistribution, f2: DelayDistribution, kappa: float,
             cuts: Sequence[float] = ()) -> List[Branch]:
    out: List[Branch] = []
    cells = _cells(cuts)
    for me, f, g in ((1, f1, f2), (2, f2, f1)):
        for a, p in f.atoms:
            w = p * math.exp(-kappa * a) * g.survival(a)
            if w > 0:
                out.append(Branch(me, (me,), a, w, True))
        for lo, hi in cells:
            if f.exponentials:
                if f.has_generic or g.has_generic:
                    w, _ = first_mass_quad(DelayDistribution(exponentials=f.exponentials,
                                                             never_mass=1.0 - math.fsum(c.weight for c in f.exponentials)),
                                           g, kappa, lo, hi)
                else:
                    w = math.fsum(exp_component_window(c.rate, c.weight, g, kappa, lo, hi)
                                  for c in f.exponentials)
                if w > 0:
                    out.append(Branch(me, (me,), _rep(lo, hi), w, True))
            if f.has_generic:
                gen_only = DelayDistribution(never_mass=1.0 - f.generic.weight, generic=f.generic)
                w, _ = first_mass_quad(gen_only, g, kappa, lo, hi)
                if w > 0:
                    out.append(Branch(me, (me,), _rep(lo, hi), w, True))
    other = dict(f2.atoms)
    for a, p in f1.atoms:
        if a in other:
            w = 0.5 * p * other[a] * math.exp(-kappa * a)
            out.append(Branch(1, (1, 2), a, w, True))
            out.append(Branch(2, (1, 2), a, w, True))
    return out


# --------------------------------------------------------------------------
# finite-state pairs


def _key(s1: Strategy, s2: Strategy, h: History):
    k1, k2 = s1.state_key(h), s2.state_key(h)
    if k1 is None or k2 is None:
        return None
    return (k1, k2)


@dataclass
class _Node:
    h: History
    f1: DelayDistribution
    f2: DelayDistribution
    u1: float
    u2: float
    q: float
    children: List[Tuple[float, object, History]]


class FiniteStateModel:
    """Joint-state chain of two finite-state strategies.

    When both strategies expose a ``state_key`` whose value fixes their next
    delay law, the continuation value after a history depends only on the
    joint key. The values then solve the linear system V = U~ + M V.
    """

    def __init__(self, s1: Strategy, s2: Strategy, params: GameParams, h0: Optional[History] = None,
                 max_states: int = 10_000):
        self.s1, self.s2, self.params = s1.for_player(1), s2.for_player(2), params
        h0 = h0 if h0 is not None else History.empty()
        self.root = _key(self.s1, self.s2, h0)
        if self.root is None:
            raise PayoffError("strategies are not finite-state")
        cuts = tuple(self.s1.breakpoints()) + tuple(self.s2.breakpoints())
        kappa = params.r + params.lam
        self.nodes: Dict[object, _Node] = {}
        todo = [(self.root, h0)]
        while todo:
            key, h = todo.pop()
            if key in self.nodes:
                continue
            if len(self.nodes) >= max_states:
                raise PayoffError("too many joint states")
            f1, f2 = self.s1.next_distribution(h), self.s2.next_distribution(h)
            pc = pieces(f1, f2, params)
            u1 = _u_tilde(pc, params, params.cost_of(1))
            pc2 = pieces(f2, f1, params.swapped())
            u2 = _u_tilde(pc2, params.swapped(), params.cost_of(2))
            kids = []
            for br in branches(f1, f2, kappa, cuts):
                child = h.append_inspection(h.final_time + br.delay, br.attempted, (br.actual,))
                ck = _key(self.s1, self.s2, child)
                if ck is None:
                    raise PayoffError("a successor state is not finite-state")
                kids.append((br.weight, ck, child))
                if ck not in self.nodes:
                    todo.append((ck, child))
            self.nodes[key] = _Node(h, f1, f2, u1, u2, math.fsum(w for w, _, _ in kids), kids)
        self.keys = list(self.nodes)
        index = {k: i for i, k in enumerate(self.keys)}
        n = len(self.keys)
        m = np.zeros((n, n))
        for k, node in self.nodes.items():
            for w, ck, _ in node.children:
                m[index[k], index[ck]] += w
        if max(node.q for node in self.nodes.values()) >= 1.0 - DIVERGENCE_TOL:
            raise DivergentError("a joint state has continuation factor ~ 1")
        lhs = np.eye(n) - m
        self.values1 = dict(zip(self.keys, np.linalg.solve(lhs, [self.nodes[k].u1 for k in self.keys])))
        self.values2 = dict(zip(self.keys, np.linalg.solve(lhs, [self.nodes[k].u2 for k in self.keys])))

    def value(self, player: int = 1, key=None) -> float:
        key = self.root if key is None else key
        return float((self.values1 if player == 1 else self.values2)[key])


def finite_state_value(s1: Strategy, s2: Strategy, params: GameParams, player: int = 1,
                       h0: Optional[History] = None) -> float:
    return FiniteStateModel(s1, s2, params, h0).value(player)


# --------------------------------------------------------------------------
# recursive unrolling


@dataclass(frozen=True)
class RecursiveResult:
    value: float
    tail_bound: float
    nodes: int
    partial: bool
    rigorous: bool

    def __iter__(self):
        return iter((self.value, self.tail_bound))


def _abs_cycle(f1, f2, params: GameParams) -> float:
    """Upper bound on E|per-cycle payoff|: |-c + (1-e)v1| <= c + (1-e)|v1|."""
    ap = GameParams(params.r, params.lam, 0.0, abs(params.v_finder), abs(params.v_other))
    return _u_tilde(pieces(f1, f2, params), ap, -params.cost_of(1))


def evaluate_recursive(s1: Strategy, s2: Strategy, h: History, params: GameParams, depth: int,
                       max_nodes: int = 100_000) -> RecursiveResult:
    """Unroll the payoff recursion ``depth`` levels below ``h`` (level 0 is ``h``).

    The value counts per-cycle payoffs of levels 0..depth and sets the
    continuation at the frontier to 0. ``tail_bound`` bounds the omitted
    continuation: total frontier weight times a bound on |U| at each frontier
    node. The bound is exact when both strategies are finite-state
    (``rigorous``); otherwise it assumes the frontier node's own cycle repeats.
    """
    if depth < 0:
        raise ValueError("depth must be >= 0")
    s1, s2 = s1.for_player(1), s2.for_player(2)
    kappa = params.r + params.lam
    cuts = tuple(s1.breakpoints()) + tuple(s2.breakpoints())
    finite_state = _key(s1, s2, h) is not None
    model = FiniteStateModel(s1, s2, params, h) if finite_state else None

    frontier: Dict[object, List] = {_key(s1, s2, h) if finite_state else 0: [1.0, h]}
    memo: Dict[object, Tuple[float, List[Branch]]] = {}
    terms: List[float] = []
    partial = False
    nodes = 0
    serial = 0

    def expand(key, node_h):
        if finite_state and key in memo:
            return memo[key]
        f1, f2 = s1.next_distribution(node_h), s2.next_distribution(node_h)
        u = _u_tilde(pieces(f1, f2, params), params, params.cost_of(1))
        out = (u, branches(f1, f2, kappa, cuts), f1, f2)
        if finite_state:
            memo[key] = out
        return out

    for level in range(depth + 1):
        nxt: Dict[object, List] = {}
        for key, (w, node_h) in frontier.items():
            nodes += 1
            u, brs, _, _ = expand(key, node_h)
            terms.append(w * u)
            for br in brs:
                child = node_h.append_inspection(node_h.final_time + br.delay, br.attempted, (br.actual,))
                if finite_state:
                    ck = _key(s1, s2, child)
                else:
                    serial += 1
                    ck = serial
                slot = nxt.get(ck)
                if slot is None:
                    nxt[ck] = [w * br.weight, child]
                else:
                    slot[0] += w * br.weight
        frontier = nxt
        if len(frontier) > max_nodes and level < depth:
            partial = True
            break

    value = math.fsum(terms)
    bounds = []
    rigorous = finite_state
    for key, (w, node_h) in frontier.items():
        if finite_state:
            bounds.append(w * abs(model.value(1, key)))
        else:
            u, brs, f1, f2 = expand(key, node_h)
            q = math.fsum(b.weight for b in brs)
            if q >= 1.0 - DIVERGENCE_TOL:
                bounds.append(math.inf)
            else:
                bounds.append(w * _abs_cycle(f1, f2, params) / (1.0 - q))
    tail = math.fsum(bounds)
    # rounding allowance for the level-by-level accumulation
    tail += 4.0 * (depth + 2) * 2.0 ** -52 * (math.fsum(abs(t) for t in terms) + tail)
    return RecursiveResult(value, tail, nodes, partial, rigorous)
