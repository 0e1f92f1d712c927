"""Ordinal-indexed inspection histories and plays.

A history is stored as a finite list of segments: runs of explicit inspection
records and closed-form cascades (infinitely many inspections converging to a
limit time). Times ``t_alpha`` for every ``alpha <= alpha_star`` are recovered
from the segments, so a transfinite history never has to be materialised.

Histories are immutable. ``append_inspection`` shares the trailing record
buffer with its parent when the parent is the buffer's current owner, which
keeps long simulated plays linear in their length.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace, field
from typing import Callable, Dict, FrozenSet, Iterator, List, Optional, Sequence, Tuple, Union

from .ordinal import ZERO, OMEGA, Ordinal, OrdinalError, parse as parse_ordinal

PLAYERS = (1, 2)
LIMIT_TOL = 1e-12
HEADER = "#history v1"


class HistoryError(ValueError):
    pass


# --------------------------------------------------------------------------
# cascade time formulas


@dataclass(frozen=True)
class CascadeFormula:
    """Closed form ``n -> u_n`` (n >= 1) for the times of a cascade."""

    name: str
    time: Callable[[Dict[str, float], int], float]
    supremum: Callable[[Dict[str, float]], float]
    first_after: Callable[[Dict[str, float], float], int]
    required: Tuple[str, ...]


def _harmonic_time(p, n):
    k = n + p["shift"]
    return p["base"] + p["span"] * (k / (k + 1))


def _harmonic_first_after(p, t):
    # smallest n >= 1 with u_n > t
    if p["span"] <= 0:
        raise HistoryError("harmonic cascade needs span > 0")
    x = (t - p["base"]) / p["span"]
    if x < 0.5:
        n = 1
    elif x >= 1.0:
        raise HistoryError(f"time {t} is past the cascade limit")
    else:
        n = max(1, int(math.floor(x / (1.0 - x))) + 1 - int(p["shift"]))
    while n > 1 and _harmonic_time(p, n - 1) > t:
        n -= 1
    while _harmonic_time(p, n) <= t:
        n += 1
    return n


def _geometric_time(p, n):
    return p["base"] + p["span"] * (1.0 - p["ratio"] ** (n + p["shift"]))


def _geometric_first_after(p, t):
    x = (t - p["base"]) / p["span"]
    if x >= 1.0:
        raise HistoryError(f"time {t} is past the cascade limit")
    if x <= 0:
        n = 1
    else:
        n = max(1, int(math.floor(math.log1p(-x) / math.log(p["ratio"]))) - int(p["shift"]))
    while n > 1 and _geometric_time(p, n - 1) > t:
        n -= 1
    while _geometric_time(p, n) <= t:
        n += 1
    return n


FORMULAS: Dict[str, CascadeFormula] = {
    "harmonic": CascadeFormula(
        "harmonic", _harmonic_time, lambda p: p["base"] + p["span"],
        _harmonic_first_after, ("base", "span", "shift"),
    ),
    "geometric": CascadeFormula(
        "geometric", _geometric_time, lambda p: p["base"] + p["span"],
        _geometric_first_after, ("base", "span", "ratio", "shift"),
    ),
}


# --------------------------------------------------------------------------
# records and segments


def _players(s) -> FrozenSet[int]:
    if isinstance(s, int):
        s = (s,)
    return frozenset(int(x) for x in s)


@dataclass(frozen=True)
class InspectionRecord:
    index: Ordinal
    time: float
    attempted: FrozenSet[int]
    actual: FrozenSet[int]

    @property
    def inspector(self) -> int:
        (p,) = self.actual
        return p

    @property
    def is_tie(self) -> bool:
        return len(self.attempted) > 1


def _check_sets(attempted: FrozenSet[int], actual: FrozenSet[int]) -> Optional[str]:
    if not attempted:
        return "attempted set is empty"
    if not attempted <= set(PLAYERS):
        return f"unknown players in {sorted(attempted)}"
    if len(actual) != 1:
        return f"actual set must be a singleton, got {sorted(actual)}"
    if not actual <= attempted:
        return f"actual {sorted(actual)} is not a subset of attempted {sorted(attempted)}"
    return None


@dataclass(frozen=True)
class Explicit:
    records: Tuple[InspectionRecord, ...]


@dataclass(frozen=True)
class Cascade:
    """Inspections at ``start_index + n`` and times ``u_n`` for n = 1, 2, ...

    ``count`` is None for an infinite cascade, whose limit index is
    ``start_index + omega``; ``limit_time`` stays None until the limit is closed.
    A finite ``count`` describes a run of ``count`` records and has no limit.
    """

    formula: str
    params: Tuple[Tuple[str, float], ...]
    start_index: Ordinal
    attempted: FrozenSet[int]
    actual: FrozenSet[int]
    limit_time: Optional[float] = None
    count: Optional[int] = None

    @property
    def param_dict(self) -> Dict[str, float]:
        return dict(self.params)

    def time(self, n: int) -> float:
        return FORMULAS[self.formula].time(self.param_dict, n)

    def supremum(self) -> float:
        return FORMULAS[self.formula].supremum(self.param_dict)

    @property
    def limit_index(self) -> Optional[Ordinal]:
        if self.count is not None:
            return None
        return self.start_index + OMEGA

    @property
    def end_index(self) -> Optional[Ordinal]:
        if self.count is not None:
            return self.start_index + self.count
        return self.limit_index if self.limit_time is not None else None

    @property
    def is_open(self) -> bool:
        return self.count is None and self.limit_time is None

    def record(self, n: int) -> InspectionRecord:
        return InspectionRecord(self.start_index + n, self.time(n), self.attempted, self.actual)


def make_cascade(formula: str, params: Dict[str, float], start_index: Ordinal,
                 player: Union[int, Sequence[int]] = 1, actual=None,
                 count: Optional[int] = None) -> Cascade:
    if formula not in FORMULAS:
        raise HistoryError(f"unknown cascade formula {formula!r}")
    spec = FORMULAS[formula]
    full = {"shift": 0.0, **{k: float(v) for k, v in params.items()}}
    missing = [k for k in spec.required if k not in full]
    if missing:
        raise HistoryError(f"cascade formula {formula!r} needs {missing}")
    attempted = _players(player)
    actual = _players(actual) if actual is not None else attempted
    return Cascade(formula, tuple(sorted(full.items())), Ordinal.of(start_index),
                   attempted, actual, None, count)


Segment = Union[Explicit, Cascade]


# --------------------------------------------------------------------------
# history


class History:
    """Immutable ordinal-indexed history.

    ``alpha_star`` is None only while the final cascade is still open.
    """

    __slots__ = ("_head", "_buf", "_n", "alpha_star", "final_time", "_hash")

    def __init__(self, segments: Sequence[Segment] = (), alpha_star: Optional[Ordinal] = None,
                 final_time: Optional[float] = None):
        segs = list(segments)
        buf: List[InspectionRecord] = []
        if segs and isinstance(segs[-1], Explicit):
            buf = list(segs.pop().records)
        self._head: Tuple[Segment, ...] = tuple(segs)
        self._buf = buf
        self._n = len(buf)
        self._hash = None
        if alpha_star is None and final_time is None:
            alpha_star, final_time = self._derive_end()
        self.alpha_star = alpha_star
        self.final_time = final_time

    @classmethod
    def empty(cls) -> "History":
        return cls((), ZERO, 0.0)

    @classmethod
    def _from_parts(cls, head, buf, n, alpha_star, final_time) -> "History":
        h = cls.__new__(cls)
        h._head, h._buf, h._n = head, buf, n
        h.alpha_star, h.final_time, h._hash = alpha_star, final_time, None
        return h

    def _derive_end(self):
        if self._n:
            last = self._buf[self._n - 1]
            return last.index, last.time
        if self._head:
            seg = self._head[-1]
            if isinstance(seg, Cascade):
                if seg.is_open:
                    return None, None
                if seg.count is not None:
                    return seg.end_index, seg.time(seg.count)
                return seg.limit_index, seg.limit_time
            last = seg.records[-1]
            return last.index, last.time
        return ZERO, 0.0

    # -- views ------------------------------------------------------------
    @property
    def segments(self) -> Tuple[Segment, ...]:
        if self._n:
            return self._head + (Explicit(tuple(self._buf[: self._n])),)
        return self._head

    @property
    def is_open(self) -> bool:
        return self.alpha_star is None

    def tail_records(self) -> Sequence[InspectionRecord]:
        """Explicit records after the last cascade."""
        return self._buf[: self._n]

    def last_record(self) -> Optional[InspectionRecord]:
        """The record at alpha_star, or None when alpha_star is a limit."""
        if self.alpha_star is None or self.alpha_star.is_limit():
            return None
        if self._n:
            return self._buf[self._n - 1]
        seg = self._head[-1]
        if isinstance(seg, Cascade):
            return seg.record(seg.count)
        return seg.records[-1]

    def previous_time(self) -> float:
        """Time at the index just before alpha_star (0 for the empty history)."""
        if self.alpha_star is None or self.alpha_star.is_limit():
            raise HistoryError("previous_time needs a history ending in a record")
        return self.time_at(self.alpha_star.predecessor())

    def num_records(self) -> Optional[int]:
        """Number of inspection records, or None if infinite."""
        total = self._n
        for seg in self._head:
            if isinstance(seg, Explicit):
                total += len(seg.records)
            elif seg.count is None:
                return None
            else:
                total += seg.count
        return total

    def records(self) -> Iterator[InspectionRecord]:
        """Iterate records in index order; infinite cascades are expanded lazily."""
        for seg in self.segments:
            if isinstance(seg, Explicit):
                yield from seg.records
            elif seg.count is not None:
                for n in range(1, seg.count + 1):
                    yield seg.record(n)
            else:
                n = 1
                while True:
                    yield seg.record(n)
                    n += 1

    def limit_indices(self) -> List[Ordinal]:
        out = [ZERO]
        for seg in self._head:
            if isinstance(seg, Cascade) and seg.count is None and seg.limit_time is not None:
                out.append(seg.limit_index)
        return out

    def time_at(self, alpha: Union[Ordinal, int]) -> float:
        alpha = Ordinal.of(alpha)
        if alpha == ZERO:
            return 0.0
        if self.alpha_star is not None and alpha > self.alpha_star:
            raise HistoryError(f"index {alpha} is beyond alpha* = {self.alpha_star}")
        for seg in self.segments:
            if isinstance(seg, Explicit):
                for rec in seg.records:
                    if rec.index == alpha:
                        return rec.time
                continue
            n = alpha.offset_from(seg.start_index)
            if n is not None and n >= 1 and (seg.count is None or n <= seg.count):
                return seg.time(n)
            if seg.count is None and alpha == seg.limit_index:
                if seg.limit_time is None:
                    raise HistoryError(f"limit {alpha} is not closed yet")
                return seg.limit_time
        raise HistoryError(f"no time recorded for index {alpha}")

    # -- equality ---------------------------------------------------------
    def _key(self):
        return (self.segments, self.alpha_star, self.final_time)

    def __eq__(self, other):
        if not isinstance(other, History):
            return NotImplemented
        return self._key() == other._key()

    def __hash__(self):
        if self._hash is None:
            self._hash = hash(self._key())
        return self._hash

    def __repr__(self):
        return f"History(alpha_star={self.alpha_star}, final_time={self.final_time}, segments={len(self.segments)})"

    # -- extension --------------------------------------------------------
    def append_inspection(self, time: float, attempted, actual) -> "History":
        return append_inspection(self, time, attempted, actual)

    def close_limit(self, limit_time: float) -> "History":
        return close_limit(self, limit_time)

    def prefixes(self) -> Iterator["History"]:
        """Every history obtained by cutting this one after a record or limit.

        Infinite cascades contribute only their closed limit, not their
        infinitely many intermediate prefixes.
        """
        h = History.empty()
        yield h
        for seg in self.segments:
            if isinstance(seg, Explicit):
                for rec in seg.records:
                    h = append_inspection(h, rec.time, rec.attempted, rec.actual)
                    yield h
            elif seg.count is not None:
                for k in range(1, seg.count + 1):
                    yield append_cascade(h, replace(seg, count=k))
                h = append_cascade(h, seg)
            elif seg.limit_time is not None:
                h = close_limit(append_cascade(h, replace(seg, limit_time=None)), seg.limit_time)
                yield h


def _as_float(t) -> float:
    return float(t)


def append_inspection(h: History, time: float, attempted, actual) -> History:
    if h.is_open:
        raise HistoryError("cannot append after an open cascade; close its limit first")
    time = _as_float(time)
    if not math.isfinite(time):
        raise HistoryError(f"inspection time must be finite, got {time}")
    if not time > h.final_time:
        raise HistoryError(f"inspection time {time} does not exceed current time {h.final_time}")
    attempted, actual = _players(attempted), _players(actual)
    problem = _check_sets(attempted, actual)
    if problem:
        raise HistoryError(problem)
    rec = InspectionRecord(h.alpha_star.successor(), time, attempted, actual)
    buf = h._buf
    if h._n == len(buf):
        buf.append(rec)
    else:
        buf = buf[: h._n] + [rec]
    return History._from_parts(h._head, buf, h._n + 1, rec.index, time)


def append_cascade(h: History, cascade: Cascade) -> History:
    """Start a cascade right after ``h``; infinite cascades leave the history open."""
    if h.is_open:
        raise HistoryError("previous cascade is still open")
    if cascade.start_index != h.alpha_star:
        cascade = Cascade(cascade.formula, cascade.params, h.alpha_star, cascade.attempted,
                          cascade.actual, cascade.limit_time, cascade.count)
    if not cascade.time(1) > h.final_time:
        raise HistoryError("cascade does not start after the current time")
    head = h.segments + (cascade,)
    if cascade.count is not None:
        return History._from_parts(head, [], 0, cascade.end_index, cascade.time(cascade.count))
    if cascade.limit_time is not None:
        return History._from_parts(head, [], 0, cascade.limit_index, cascade.limit_time)
    return History._from_parts(head, [], 0, None, None)


def close_limit(h: History, limit_time: float) -> History:
    if not h._head or h._n or not isinstance(h._head[-1], Cascade):
        raise HistoryError("close_limit needs a history ending in a cascade")
    seg = h._head[-1]
    if not seg.is_open:
        raise HistoryError("the final cascade is already closed or finite")
    limit_time = _as_float(limit_time)
    sup = seg.supremum()
    if not math.isfinite(limit_time) or abs(limit_time - sup) > LIMIT_TOL:
        raise HistoryError(f"limit time {limit_time} differs from the cascade supremum {sup}")
    closed = Cascade(seg.formula, seg.params, seg.start_index, seg.attempted, seg.actual,
                     limit_time, None)
    return History._from_parts(h._head[:-1] + (closed,), [], 0, closed.limit_index, limit_time)


def zeno_example_history() -> History:
    """Player 1 inspects at 1/2, 2/3, 3/4, ... and then at 1+1/2, 1+2/3, ...

    alpha* = w*2 with t_w = 1 and t_{w*2} = 2.
    """
    h = History.empty()
    for k in range(2):
        h = append_cascade(h, make_cascade("harmonic", {"base": float(k), "span": 1.0}, h.alpha_star, 1))
        h = close_limit(h, float(k + 1))
    return h


# --------------------------------------------------------------------------
# validation


@dataclass(frozen=True)
class Violation:
    kind: str
    index: Optional[Ordinal]
    message: str

    def __str__(self):
        at = f" at {self.index}" if self.index is not None else ""
        return f"{self.kind}{at}: {self.message}"


def validate(h: History) -> List[Violation]:
    out: List[Violation] = []
    cur_index, cur_time = ZERO, 0.0

    def check_record(rec: InspectionRecord):
        nonlocal cur_index, cur_time
        if rec.index.is_limit():
            out.append(Violation("successor-only", rec.index,
                                 "inspection recorded at a limit ordinal"))
        elif rec.index != cur_index.successor():
            out.append(Violation("contiguity", rec.index,
                                 f"expected index {cur_index.successor()} after {cur_index}"))
        if not math.isfinite(rec.time) or rec.time < 0:
            out.append(Violation("finite-times", rec.index, f"time {rec.time} is not a finite non-negative real"))
        elif not rec.time > cur_time:
            out.append(Violation("monotonicity", rec.index,
                                 f"time {rec.time} does not exceed {cur_time}"))
        problem = _check_sets(rec.attempted, rec.actual)
        if problem:
            out.append(Violation("inspector-sets", rec.index, problem))
        cur_index, cur_time = rec.index, rec.time

    segs = h.segments
    for i, seg in enumerate(segs):
        if isinstance(seg, Explicit):
            if not seg.records:
                out.append(Violation("empty-segment", cur_index, "explicit segment without records"))
            for rec in seg.records:
                check_record(rec)
            continue
        if seg.formula not in FORMULAS:
            out.append(Violation("formula", seg.start_index, f"unknown formula {seg.formula!r}"))
            continue
        if seg.start_index != cur_index:
            out.append(Violation("contiguity", seg.start_index,
                                 f"cascade starts at {seg.start_index}, history is at {cur_index}"))
        problem = _check_sets(seg.attempted, seg.actual)
        if problem:
            out.append(Violation("inspector-sets", seg.start_index, problem))
        u1, u2 = seg.time(1), seg.time(2)
        if not (u1 > cur_time and u2 > u1):
            out.append(Violation("monotonicity", seg.start_index.successor(),
                                 "cascade times do not increase past the current time"))
        if seg.count is not None:
            if seg.count < 1:
                out.append(Violation("empty-segment", seg.start_index, "finite cascade with no records"))
                continue
            cur_index, cur_time = seg.end_index, seg.time(seg.count)
            continue
        sup = seg.supremum()
        if not math.isfinite(sup):
            out.append(Violation("limit-continuity", seg.limit_index, "cascade supremum is not finite"))
        if seg.limit_time is None:
            out.append(Violation("open-cascade", seg.limit_index, "cascade limit has not been closed"))
            if i != len(segs) - 1:
                out.append(Violation("contiguity", seg.limit_index, "segments follow an open cascade"))
            cur_index, cur_time = seg.limit_index, sup
            continue
        if abs(seg.limit_time - sup) > LIMIT_TOL:
            out.append(Violation("limit-continuity", seg.limit_index,
                                 f"t = {seg.limit_time} but the times below converge to {sup}"))
        cur_index, cur_time = seg.limit_index, seg.limit_time

    if h.alpha_star is not None and h.alpha_star != cur_index:
        out.append(Violation("alpha-star", h.alpha_star, f"segments end at {cur_index}"))
    if h.final_time is not None and h.final_time != cur_time:
        out.append(Violation("alpha-star", h.alpha_star, f"final time {h.final_time} but segments end at {cur_time}"))
    return out


# --------------------------------------------------------------------------
# plays


@dataclass(frozen=True)
class Discovered:
    by: int
    at: float


@dataclass(frozen=True)
class Undiscovered:
    pass


@dataclass(frozen=True)
class Play:
    """A history plus how the game ended.

    ``end_time`` is infinite when nobody ever inspects again.
    """

    history: History
    outcome: Union[Discovered, Undiscovered]
    truncated: bool = False
    end_time: float = math.inf


def validate_play(p: Play) -> List[Violation]:
    out = validate(p.history)
    if isinstance(p.outcome, Discovered):
        last = p.history.last_record()
        if last is None or last.actual != frozenset({p.outcome.by}) or last.time != p.outcome.at:
            out.append(Violation("outcome", p.history.alpha_star,
                                 "the discovering inspection must be the last record"))
        if p.end_time != p.outcome.at:
            out.append(Violation("outcome", p.history.alpha_star, "end_time must equal the discovery time"))
    return out


# --------------------------------------------------------------------------
# text format


def _fmt_time(t: float) -> str:
    return "inf" if t == math.inf else repr(float(t))


def _fmt_players(s: FrozenSet[int]) -> str:
    return ",".join(str(p) for p in sorted(s))


def _fmt_param(v: float) -> str:
    return repr(float(v))


def serialize(h: History) -> str:
    lines = [HEADER, f"LIMIT\t0\t{_fmt_time(0.0)}"]
    for seg in h.segments:
        if isinstance(seg, Explicit):
            for r in seg.records:
                lines.append(f"{r.index}\t{_fmt_time(r.time)}\t{_fmt_players(r.attempted)}\t{_fmt_players(r.actual)}")
            continue
        params = [f"{k}={_fmt_param(v)}" for k, v in seg.params]
        params += [f"attempted={_fmt_players(seg.attempted)}", f"actual={_fmt_players(seg.actual)}"]
        if seg.count is not None:
            params.append(f"count={seg.count}")
            end_idx, end_t = seg.end_index, _fmt_time(seg.time(seg.count))
        else:
            end_idx = seg.limit_index
            end_t = "open" if seg.limit_time is None else _fmt_time(seg.limit_time)
        lines.append(f"CASCADE\t{seg.formula}\t{';'.join(params)}\t{end_idx}\t{end_t}")
        if seg.count is None and seg.limit_time is not None:
            lines.append(f"LIMIT\t{seg.limit_index}\t{_fmt_time(seg.limit_time)}")
    return "\n".join(lines) + "\n"


def serialize_play(p: Play) -> str:
    text = serialize(p.history)
    if isinstance(p.outcome, Discovered):
        tail = f"OUTCOME\tdiscovered\t{p.outcome.by}\t{_fmt_time(p.outcome.at)}\t{int(p.truncated)}"
    else:
        tail = f"OUTCOME\tundiscovered\t-\t{_fmt_time(p.end_time)}\t{int(p.truncated)}"
    return text + tail + "\n"


def _parse_players(s: str) -> FrozenSet[int]:
    return frozenset(int(x) for x in s.split(",") if x)


def _parse_lines(text: str):
    segs: List[Segment] = []
    records: List[InspectionRecord] = []
    outcome_line = None
    cur = ZERO
    lines = text.splitlines()
    if not lines or lines[0] != HEADER:
        raise HistoryError(f"line 1: expected header {HEADER!r}")
    for lineno, line in enumerate(lines, 1):
        if not line or line.startswith("#"):
            continue
        cols = line.split("\t")
        try:
            if cols[0] == "LIMIT":
                continue
            if cols[0] == "OUTCOME":
                outcome_line = cols
                continue
            if cols[0] == "CASCADE":
                if records:
                    segs.append(Explicit(tuple(records)))
                    records = []
                _, formula, raw, _end_idx, end_t = cols
                kv = dict(item.split("=", 1) for item in raw.split(";"))
                attempted = _parse_players(kv.pop("attempted"))
                actual = _parse_players(kv.pop("actual"))
                count = int(kv.pop("count")) if "count" in kv else None
                params = tuple(sorted((k, float(v)) for k, v in kv.items()))
                limit_time = None
                if count is None and end_t != "open":
                    limit_time = float(end_t)
                seg = Cascade(formula, params, cur, attempted, actual, limit_time, count)
                segs.append(seg)
                cur = seg.end_index if seg.end_index is not None else seg.limit_index
                continue
            idx = parse_ordinal(cols[0])
            records.append(InspectionRecord(idx, float(cols[1]), _parse_players(cols[2]), _parse_players(cols[3])))
            cur = idx
        except (ValueError, KeyError, IndexError, OrdinalError) as exc:
            raise HistoryError(f"line {lineno}: cannot parse {line!r}: {exc}") from exc
    if records:
        segs.append(Explicit(tuple(records)))
    return segs, outcome_line


def parse(text: str) -> History:
    segs, _ = _parse_lines(text)
    return History(segs)


def parse_play(text: str) -> Play:
    segs, cols = _parse_lines(text)
    if cols is None:
        raise HistoryError("play text has no OUTCOME line")
    h = History(segs)
    _, kind, by, t, trunc = cols
    if kind == "discovered":
        return Play(h, Discovered(int(by), float(t)), bool(int(trunc)), float(t))
    return Play(h, Undiscovered(), bool(int(trunc)), float(t))
