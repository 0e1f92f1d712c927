"""Countable ordinals below omega^omega in Cantor normal form.

An :class:`Ordinal` is a finite, strictly decreasing list of
``(exponent, coefficient)`` pairs read as ``sum omega**exponent * coefficient``.
Exponents are natural numbers, so every value is below ``omega**omega``.
That is enough to index any history built from finitely nested cascades.

Text form is ``w^k*c + ... + w*c + n``; :func:`parse` inverts :meth:`Ordinal.__str__`.
"""
from __future__ import annotations

import re
from functools import total_ordering
from typing import Iterable, Tuple, Union

Term = Tuple[int, int]


class OrdinalError(ValueError):
    pass


@total_ordering
class Ordinal:
    __slots__ = ("_terms",)

    def __init__(self, terms: Iterable[Term] = ()):
        terms = tuple((int(e), int(c)) for e, c in terms)
        prev = None
        for e, c in terms:
            if e < 0:
                raise OrdinalError(f"negative exponent {e}")
            if c < 1:
                raise OrdinalError(f"coefficient must be >= 1, got {c}")
            if prev is not None and e >= prev:
                raise OrdinalError(f"exponents must strictly decrease: {terms}")
            prev = e
        self._terms: Tuple[Term, ...] = terms

    @classmethod
    def of(cls, n: Union[int, "Ordinal"]) -> "Ordinal":
        if isinstance(n, Ordinal):
            return n
        if n < 0:
            raise OrdinalError(f"no negative ordinals: {n}")
        return cls(((0, n),)) if n else cls()

    @classmethod
    def omega_power(cls, k: int, c: int = 1) -> "Ordinal":
        return cls(((k, c),))

    @property
    def terms(self) -> Tuple[Term, ...]:
        return self._terms

    # -- ordering ---------------------------------------------------------
    def compare(self, other: "Ordinal") -> int:
        """-1, 0 or 1; lexicographic on CNF terms (shorter prefix is smaller)."""
        other = Ordinal.of(other)
        for (e1, c1), (e2, c2) in zip(self._terms, other._terms):
            if e1 != e2:
                return 1 if e1 > e2 else -1
            if c1 != c2:
                return 1 if c1 > c2 else -1
        n1, n2 = len(self._terms), len(other._terms)
        return (n1 > n2) - (n1 < n2)

    def __eq__(self, other):
        if isinstance(other, int):
            other = Ordinal.of(other) if other >= 0 else None
        if not isinstance(other, Ordinal):
            return NotImplemented
        return self._terms == other._terms

    def __lt__(self, other):
        if isinstance(other, int):
            other = Ordinal.of(other)
        if not isinstance(other, Ordinal):
            return NotImplemented
        return self.compare(other) < 0

    def __hash__(self):
        return hash(self._terms)

    def __bool__(self):
        return bool(self._terms)

    # -- structure --------------------------------------------------------
    def is_limit(self) -> bool:
        # 0 counts as a limit: t_0 is the sup over the empty prefix.
        return not self._terms or self._terms[-1][0] != 0

    def is_successor(self) -> bool:
        return not self.is_limit()

    def is_finite(self) -> bool:
        return not self._terms or self._terms[0][0] == 0

    def finite_part(self) -> int:
        if self._terms and self._terms[-1][0] == 0:
            return self._terms[-1][1]
        return 0

    def limit_part(self) -> "Ordinal":
        """The largest limit ordinal <= self (drops the omega^0 term)."""
        if self.is_limit():
            return self
        return Ordinal(self._terms[:-1])

    def successor(self) -> "Ordinal":
        if self._terms and self._terms[-1][0] == 0:
            return Ordinal(self._terms[:-1] + ((0, self._terms[-1][1] + 1),))
        return Ordinal(self._terms + ((0, 1),))

    def predecessor(self) -> "Ordinal":
        if self.is_limit():
            raise OrdinalError(f"{self} is a limit ordinal and has no predecessor")
        e, c = self._terms[-1]
        return Ordinal(self._terms[:-1] + (((0, c - 1),) if c > 1 else ()))

    def __add__(self, other: Union["Ordinal", int]) -> "Ordinal":
        other = Ordinal.of(other)
        if not other._terms:
            return self
        lead_e, lead_c = other._terms[0]
        kept = [t for t in self._terms if t[0] > lead_e]
        merged = [t for t in self._terms if t[0] == lead_e]
        if merged:
            kept.append((lead_e, merged[0][1] + lead_c))
        else:
            kept.append((lead_e, lead_c))
        return Ordinal(tuple(kept) + other._terms[1:])

    def __radd__(self, other: int) -> "Ordinal":
        return Ordinal.of(other) + self

    def fundamental_term(self, n: int) -> "Ordinal":
        """n-th term of the canonical fundamental sequence of a nonzero limit.

        With ``self = g + w^k`` (k >= 1) the sequence is ``g + w^(k-1) * n``.
        """
        if not self._terms or not self.is_limit():
            raise OrdinalError(f"fundamental sequences need a nonzero limit, got {self}")
        if n < 0:
            raise OrdinalError("n must be a natural number")
        k, c = self._terms[-1]
        base = Ordinal(self._terms[:-1] + (((k, c - 1),) if c > 1 else ()))
        if n == 0:
            return base
        return base + Ordinal(((k - 1, n),))

    def offset_from(self, start: "Ordinal") -> int | None:
        """n with ``start + n == self`` for a natural n, else None."""
        start = Ordinal.of(start)
        if self.limit_part() != start.limit_part():
            return None
        n = self.finite_part() - start.finite_part()
        return n if n >= 0 else None

    # -- text -------------------------------------------------------------
    def __str__(self) -> str:
        if not self._terms:
            return "0"
        parts = []
        for e, c in self._terms:
            if e == 0:
                parts.append(str(c))
                continue
            s = "w" if e == 1 else f"w^{e}"
            parts.append(s if c == 1 else f"{s}*{c}")
        return " + ".join(parts)

    def __repr__(self) -> str:
        return f"Ordinal({str(self)!r})"


ZERO = Ordinal()
ONE = Ordinal.of(1)
OMEGA = Ordinal.omega_power(1)

_TERM_RE = re.compile(r"^(?:w(?:\^(\d+))?(?:\*(\d+))?|(\d+))$")


def parse(text: str) -> Ordinal:
    text = text.strip()
    if text == "0":
        return ZERO
    terms = []
    for raw in text.split("+"):
        m = _TERM_RE.match(raw.strip())
        if not m:
            raise OrdinalError(f"cannot parse ordinal term {raw!r} in {text!r}")
        if m.group(3) is not None:
            terms.append((0, int(m.group(3))))
        else:
            e = int(m.group(1)) if m.group(1) is not None else 1
            c = int(m.group(2)) if m.group(2) is not None else 1
            terms.append((e, c))
    return Ordinal(terms)


def compare(a: Ordinal, b: Ordinal) -> str:
    return ("less", "equal", "greater")[Ordinal.of(a).compare(b) + 1]


def successor(a: Ordinal) -> Ordinal:
    return Ordinal.of(a).successor()


def is_limit(a: Ordinal) -> bool:
    return Ordinal.of(a).is_limit()


def add(a: Ordinal, b: Ordinal) -> Ordinal:
    return Ordinal.of(a) + b


def fundamental_term(a: Ordinal, n: int) -> Ordinal:
    return Ordinal.of(a).fundamental_term(n)
