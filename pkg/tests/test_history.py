from pathlib import Path

import pytest
from hypothesis import given, settings, strategies as st

from opphunt.history import (Discovered, Explicit, History, HistoryError, InspectionRecord, Play,
                             Undiscovered, append_cascade, append_inspection, close_limit, make_cascade,
                             parse, parse_play, serialize, serialize_play, validate, validate_play,
                             zeno_example_history)
from opphunt.ordinal import OMEGA, ZERO, Ordinal, fundamental_term

FIXTURE = Path(__file__).parent / "fixtures" / "zeno_example.txt"
W2 = Ordinal.omega_power(1, 2)


def kinds(h):
    return [v.kind for v in validate(h)]


def test_example_history_times():
    h = zeno_example_history()
    assert validate(h) == []
    assert h.time_at(0) == 0.0
    assert h.time_at(1) == 0.5
    assert h.time_at(2) == 2 / 3
    assert h.time_at(3) == 0.75
    assert h.time_at(OMEGA) == 1.0
    assert h.time_at(OMEGA + 1) == 1.5
    assert h.time_at(W2) == 2.0
    assert h.alpha_star == W2
    assert h.limit_indices() == [ZERO, OMEGA, W2]


def test_example_matches_fixture():
    assert serialize(zeno_example_history()) == FIXTURE.read_text()
    assert parse(FIXTURE.read_text()) == zeno_example_history()


def test_append_to_empty():
    h = append_inspection(History.empty(), 0.5, {1}, {1})
    assert h.alpha_star == Ordinal.of(1)
    assert h.time_at(1) == 0.5
    assert validate(h) == []


def test_append_tie_record():
    h = append_inspection(History.empty(), 1.0, {1, 2}, {2})
    rec = h.last_record()
    assert rec.attempted == frozenset({1, 2})
    assert rec.actual == frozenset({2})
    assert rec.is_tie and rec.inspector == 2


@pytest.mark.parametrize("t", [0.0, -1.0, 0.5])
def test_append_must_increase(t):
    h = append_inspection(History.empty(), 0.5, {1}, {1})
    with pytest.raises(HistoryError):
        append_inspection(h, t, {1}, {1})


@pytest.mark.parametrize("attempted,actual", [({1}, {2}), ({1, 2}, {1, 2}), (set(), set()), ({3}, {3})])
def test_append_rejects_bad_inspector_sets(attempted, actual):
    with pytest.raises(HistoryError):
        append_inspection(History.empty(), 1.0, attempted, actual)


def test_append_does_not_disturb_shared_prefix():
    h = append_inspection(History.empty(), 1.0, {1}, {1})
    a = append_inspection(h, 2.0, {1}, {1})
    b = append_inspection(h, 3.0, {2}, {2})
    assert h.num_records() == 1
    assert a.time_at(2) == 2.0 and b.time_at(2) == 3.0


def test_close_limit_examples():
    c1 = make_cascade("harmonic", {"base": 0.0, "span": 1.0, "shift": 0.0}, ZERO)
    h = close_limit(append_cascade(History.empty(), c1), 1.0)
    assert h.alpha_star == OMEGA and h.final_time == 1.0
    c2 = make_cascade("harmonic", {"base": 1.0, "span": 1.0, "shift": 0.0}, OMEGA)
    h2 = close_limit(append_cascade(h, c2), 2.0)
    assert h2.alpha_star == W2 and h2.final_time == 2.0
    with pytest.raises(HistoryError):
        close_limit(append_cascade(History.empty(), c1), 1.5)


def test_validate_flags_limit_continuity():
    c = make_cascade("harmonic", {"base": 0.0, "span": 1.0, "shift": 0.0}, ZERO)
    bad = History([c.__class__(**{**c.__dict__, "limit_time": 2.0})])
    assert "limit-continuity" in kinds(bad)


def test_validate_flags_record_at_limit_index():
    bad = History([Explicit((InspectionRecord(OMEGA, 1.0, frozenset({1}), frozenset({1})),))])
    assert "successor-only" in kinds(bad)


def test_validate_flags_decreasing_times():
    recs = (InspectionRecord(Ordinal.of(1), 2.0, frozenset({1}), frozenset({1})),
            InspectionRecord(Ordinal.of(2), 1.0, frozenset({1}), frozenset({1})))
    assert "monotonicity" in kinds(History([Explicit(recs)]))


def test_limit_times_match_fundamental_sequences():
    h = zeno_example_history()
    for alpha in h.limit_indices()[1:]:
        t = h.time_at(alpha)
        for n in range(1, 51):
            assert h.time_at(fundamental_term(alpha, n)) < t
        assert abs(h.time_at(fundamental_term(alpha, 10 ** 10)) - t) < 1e-9


def test_cascade_records_are_lazy():
    h = zeno_example_history()
    assert h.num_records() is None
    first = [r.time for _, r in zip(range(3), h.records())]
    assert first == [0.5, 2 / 3, 0.75]


def test_prefixes_end_with_history():
    h = History.empty()
    for t in (0.5, 1.0, 1.5):
        h = append_inspection(h, t, {1}, {1})
    ps = list(h.prefixes())
    assert ps[0] == History.empty() and ps[-1] == h and len(ps) == 4


def test_play_round_trip():
    h = append_inspection(History.empty(), 1.0, {1, 2}, {1})
    for p in (Play(h, Discovered(1, 1.0), end_time=1.0), Play(h, Undiscovered())):
        assert validate_play(p) == []
        assert parse_play(serialize_play(p)) == p
    p = Play(h, Undiscovered(), truncated=True)
    assert parse_play(serialize_play(p)).truncated


def test_play_outcome_must_match_last_record():
    h = append_inspection(History.empty(), 1.0, {1}, {1})
    assert validate_play(Play(h, Discovered(2, 1.0), end_time=1.0)) != []
    assert validate_play(Play(h, Discovered(1, 1.0))) != []


def test_parse_rejects_garbage():
    with pytest.raises(HistoryError):
        parse("#history v1\nnot a row\n")
    with pytest.raises(HistoryError):
        parse("LIMIT\t0\t0.0\n")


@st.composite
def finite_histories(draw):
    n = draw(st.integers(0, 30))
    gaps = draw(st.lists(st.floats(1e-6, 10.0, allow_nan=False), min_size=n, max_size=n))
    who = draw(st.lists(st.sampled_from([(1, 1), (2, 2), (12, 1), (12, 2)]), min_size=n, max_size=n))
    h, t = History.empty(), 0.0
    for g, (a, b) in zip(gaps, who):
        t += g
        if t <= h.final_time:
            continue
        h = append_inspection(h, t, {1, 2} if a == 12 else {a}, {b})
    return h


@settings(max_examples=1000, deadline=None)
@given(finite_histories())
def test_serialize_round_trip_and_validity(h):
    assert validate(h) == []
    text = serialize(h)
    assert serialize(parse(text)) == text
    assert parse(text) == h


@given(finite_histories(), st.floats(1e-6, 5.0))
def test_valid_append_stays_valid(h, gap):
    h2 = append_inspection(h, h.final_time + gap, {2}, {2})
    assert validate(h2) == []
    assert h2.previous_time() == h.final_time
