import itertools

import pytest
from hypothesis import given, strategies as st

from opphunt.ordinal import (OMEGA, ONE, ZERO, Ordinal, OrdinalError, add, compare, fundamental_term,
                             is_limit, parse, successor)

W = OMEGA


def w(k=1, c=1):
    return Ordinal.omega_power(k, c)


def small_ordinals(max_exp=2, max_coef=3):
    """Every CNF ordinal with exponents <= max_exp and coefficients <= max_coef."""
    out = []
    for coefs in itertools.product(range(max_coef + 1), repeat=max_exp + 1):
        terms = [(k, c) for k, c in zip(range(max_exp, -1, -1), coefs) if c]
        out.append(Ordinal(terms))
    return out


ordinals = st.lists(st.tuples(st.integers(0, 4), st.integers(1, 5)), max_size=4).map(
    lambda ts: Ordinal(sorted({k: c for k, c in ts}.items(), reverse=True)))


def test_compare_examples():
    assert compare(W, Ordinal.of(5)) == "greater"
    assert compare(W + 3, w(1, 2)) == "less"
    assert compare(w(1, 2), w(1, 2)) == "equal"


def test_successor_examples():
    assert successor(ZERO) == ONE
    assert successor(W) == W + 1
    assert successor(w(1, 2) + 4) == w(1, 2) + 5


def test_is_limit_examples():
    assert is_limit(w(1, 2))
    assert not is_limit(W + 3)
    assert is_limit(ZERO)


def test_add_examples():
    assert add(Ordinal.of(3), W) == W
    assert add(W, Ordinal.of(3)) == W + 3
    assert add(W + 1, W) == w(1, 2)


def test_fundamental_term_examples():
    for n in (0, 1, 7):
        assert fundamental_term(W, n) == Ordinal.of(n)
        assert fundamental_term(w(1, 2), n) == W + n
        assert fundamental_term(w(2), n) == Ordinal([(1, n)] if n else [])


def test_fundamental_term_rejects_successors():
    with pytest.raises(OrdinalError):
        fundamental_term(W + 1, 3)
    with pytest.raises(OrdinalError):
        fundamental_term(ZERO, 3)


def test_parse_and_render_round_trip():
    for text in ("0", "7", "w", "w + 1", "w*2 + 4", "w^2*3 + w + 2"):
        assert str(parse(text)) == text
        assert parse(text.replace(" ", "")) == parse(text)
    assert parse("w^1*1") == W
    with pytest.raises(OrdinalError):
        parse("w+w^2")


def test_invalid_terms_rejected():
    with pytest.raises(OrdinalError):
        Ordinal([(1, 1), (2, 1)])
    with pytest.raises(OrdinalError):
        Ordinal([(1, 0)])


def test_offset_from():
    assert (W + 5).offset_from(W) == 5
    assert (W + 5).offset_from(W + 2) == 3
    assert w(1, 2).offset_from(W) is None
    assert Ordinal.of(4).offset_from(ZERO) == 4


def test_exhaustive_fundamental_sequences():
    for a in small_ordinals():
        if a == ZERO or not a.is_limit():
            continue
        prev = None
        for n in range(101):
            t = fundamental_term(a, n)
            assert t < a
            if prev is not None:
                assert prev < t
            prev = t


@given(ordinals, ordinals)
def test_compare_is_antisymmetric(a, b):
    assert a.compare(b) == -b.compare(a)
    assert (a == b) == (a.compare(b) == 0)


@given(ordinals, ordinals, ordinals)
def test_addition_associative_and_monotone(a, b, c):
    assert (a + b) + c == a + (b + c)
    assert a + b >= a
    if b < c:
        assert a + b < a + c


@given(ordinals)
def test_successor_predecessor(a):
    assert a.successor().predecessor() == a
    assert a < a.successor()
    assert not a.successor().is_limit()
