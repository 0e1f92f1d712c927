import math

import pytest
from hypothesis import given, settings, strategies as st

from opphunt.engine import GameParams
from opphunt.history import History
from opphunt.payoff import (DivergentError, FiniteStateModel, continuation_factor, evaluate_recursive,
                            finite_state_value, lambda_ratio, markov_value, markov_value_for, payoff_report,
                            pieces, tilde_p, tilde_u)
from opphunt.strategy import (DelayDistribution, GenericComponent, atom, deterministic, exponential,
                              exponential_dist, mix, never_dist, reactive, stationary)

P = GameParams(r=0.15, lam=0.8, cost=0.2, v_finder=1.3, v_other=0.4)

params_st = st.builds(GameParams, r=st.floats(0.0, 0.5), lam=st.floats(0.2, 3.0), cost=st.floats(0.0, 1.0),
                      v_finder=st.floats(0.0, 2.0), v_other=st.floats(0.0, 1.0))


@st.composite
def markov_dists(draw):
    kind = draw(st.sampled_from(["atom", "exp", "mix", "never-mix"]))
    if kind == "atom":
        return atom(draw(st.floats(0.05, 4.0)))
    if kind == "exp":
        return exponential_dist(draw(st.floats(0.1, 5.0)))
    w = draw(st.floats(0.1, 0.9))
    taus = sorted(draw(st.sets(st.floats(0.05, 4.0), min_size=2, max_size=2)))
    parts = [(w * 0.5, atom(taus[0])), (w * 0.5, atom(taus[1])),
             ((1 - w), exponential_dist(draw(st.floats(0.1, 5.0))))]
    if kind == "never-mix":
        parts = [(p * 0.7, d) for p, d in parts] + [(0.3, never_dist())]
    return mix(parts)


def test_atom_before_atom():
    t1, t2 = 0.6, 1.1
    g = math.exp(-P.r * t1) * (-P.cost + (1 - math.exp(-P.lam * t1)) * P.v_finder)
    assert tilde_u(atom(t1), atom(t2), P) == pytest.approx(g, rel=1e-14)
    assert continuation_factor(atom(t1), atom(t2), P) == pytest.approx(math.exp(-(P.r + P.lam) * t1), rel=1e-14)
    assert lambda_ratio(atom(t1), atom(t2), P) == pytest.approx(-P.cost + (1 - math.exp(-P.lam * t1)) * P.v_finder,
                                                                rel=1e-13)


def test_symmetric_atoms_split_ties():
    t = 0.9
    q = 1 - math.exp(-P.lam * t)
    g = math.exp(-P.r * t) * (0.5 * (-P.cost + q * P.v_finder) + 0.5 * q * P.v_other)
    assert tilde_u(atom(t), atom(t), P) == pytest.approx(g, rel=1e-14)
    assert tilde_p(atom(t), atom(t), P) == pytest.approx(math.exp(-P.r * t), rel=1e-14)


def test_never_never_is_zero():
    n = never_dist()
    assert tilde_u(n, n, P) == 0.0
    assert continuation_factor(n, n, P) == 0.0
    assert lambda_ratio(n, n, P) == 0.0
    assert markov_value(n, n, P) == 0.0


def test_exponential_pairs():
    m1, m2 = 1.3, 0.6
    e1, e2 = exponential_dist(m1), exponential_dist(m2)
    assert tilde_p(e1, e2, P) == pytest.approx((m1 + m2) / (m1 + m2 + P.r), rel=1e-13)
    assert continuation_factor(e1, e2, P) == pytest.approx((m1 + m2) / (m1 + m2 + P.r + P.lam), rel=1e-13)
    r0 = GameParams(r=0.0, lam=1.0)
    assert tilde_p(e1, never_dist(), r0) == pytest.approx(1.0, rel=1e-14)


def test_lambda_ratio_without_discounting_equals_tilde_u():
    r0 = GameParams(r=0.0, lam=0.5, cost=0.1, v_finder=1.0, v_other=0.2)
    assert lambda_ratio(atom(1.2), atom(1.2), r0) == pytest.approx(tilde_u(atom(1.2), atom(1.2), r0), rel=1e-14)


def test_markov_value_oracles():
    t = 0.7
    c0 = GameParams(r=0.2, lam=0.9, cost=0.0, v_finder=1.5, v_other=0.7)
    oracle = math.exp(-c0.r * t) * (1 - math.exp(-c0.lam * t)) * c0.v_finder / (1 - math.exp(-(c0.r + c0.lam) * t))
    assert markov_value(atom(t), never_dist(), c0) == pytest.approx(oracle, rel=1e-13)
    r0 = GameParams(r=0.0, lam=0.6, cost=0.1, v_finder=1.0, v_other=0.3)
    expect = tilde_u(atom(t), atom(t), r0) / (1 - math.exp(-r0.lam * t))
    assert markov_value(atom(t), atom(t), r0) == pytest.approx(expect, rel=1e-13)


def test_degenerate_continuation_is_divergent():
    with pytest.raises(DivergentError):
        markov_value(atom(1e-14), never_dist(), GameParams(r=0.0, lam=1.0))
    assert math.isnan(payoff_report(atom(1e-14), never_dist(), GameParams(r=0.0, lam=1.0)).fixed_point_value)


def test_player_two_value_uses_swapped_seat():
    f1, f2 = atom(0.5), exponential_dist(2.0)
    assert markov_value_for(2, f1, f2, P) == markov_value(f2, f1, P.swapped())


def test_per_player_costs():
    p = GameParams(r=0.1, lam=1.0, cost=0.0, cost1=0.3, cost2=0.0, v_finder=1.0)
    assert markov_value_for(2, atom(2.0), atom(0.5), p) > markov_value_for(1, atom(0.5), atom(2.0), p)


def test_generic_component_uses_quadrature():
    mu = 1.7
    g = GenericComponent(lambda x: -math.expm1(-mu * x), 1.0, pdf=lambda x: mu * math.exp(-mu * x), name="exp")
    d = DelayDistribution(generic=g)
    assert pieces(d, atom(1.0), P).method == "quadrature"
    assert markov_value(d, atom(1.0), P) == pytest.approx(markov_value(exponential_dist(mu), atom(1.0), P), abs=1e-8)


def test_report_fields_consistent():
    rep = payoff_report(atom(0.5), exponential_dist(1.0), P)
    assert rep.fixed_point_value == pytest.approx(rep.u_tilde / (1 - rep.q_factor))
    assert rep.lambda_ratio == pytest.approx(rep.u_tilde / rep.p_tilde)
    assert '"schema_version": 1' in rep.to_json()


@settings(max_examples=200, deadline=None)
@given(markov_dists(), markov_dists(), params_st)
def test_closed_form_matches_quadrature(f1, f2, params):
    a = pieces(f1, f2, params, "closed_form")
    b = pieces(f1, f2, params, "quadrature")
    for k in ("i12_r", "i21_r", "tie_r", "i12_b", "i21_b", "tie_b"):
        assert abs(getattr(a, k) - getattr(b, k)) <= 1e-9, k
    for fn in (tilde_u, tilde_p, continuation_factor):
        assert abs(fn(f1, f2, params, "closed_form") - fn(f1, f2, params, "quadrature")) <= 1e-8


@settings(max_examples=200, deadline=None)
@given(markov_dists(), markov_dists(), params_st)
def test_ratio_identities(f1, f2, params):
    u, p, q = tilde_u(f1, f2, params), tilde_p(f1, f2, params), continuation_factor(f1, f2, params)
    assert q <= p + 1e-15
    if p > 0:
        assert lambda_ratio(f1, f2, params) * p == pytest.approx(u, abs=1e-10)


@settings(max_examples=50, deadline=None)
@given(markov_dists(), markov_dists(), params_st, st.floats(0.5, 10.0))
def test_values_scale_with_payoffs(f1, f2, params, k):
    try:
        v = markov_value(f1, f2, params)
    except DivergentError:
        return
    assert markov_value(f1, f2, params.scaled(k)) == pytest.approx(k * v, rel=1e-10, abs=1e-12)


def test_recursive_depth_zero():
    res = evaluate_recursive(deterministic(0.5), exponential(1.0), History.empty(), P, 0)
    assert res.value == pytest.approx(tilde_u(atom(0.5), exponential_dist(1.0), P), rel=1e-13)
    q = continuation_factor(atom(0.5), exponential_dist(1.0), P)
    v = markov_value(atom(0.5), exponential_dist(1.0), P)
    assert res.tail_bound >= q * abs(v) * 0.999


@pytest.mark.parametrize("d", [0, 1, 3, 7, 15])
def test_recursive_geometric_partial_sums(d):
    f1, f2 = exponential_dist(1.2), mix([(0.5, atom(0.4)), (0.5, exponential_dist(0.8))])
    u, q = tilde_u(f1, f2, P), continuation_factor(f1, f2, P)
    value, tail = evaluate_recursive(stationary(f1), stationary(f2), History.empty(), P, d)
    assert value == pytest.approx(u * (1 - q ** (d + 1)) / (1 - q), rel=1e-11, abs=1e-13)
    assert abs(value - markov_value(f1, f2, P)) <= tail


def test_recursive_tail_dominates_later_changes():
    s1 = reactive("by_last", {"start": {"kind": "deterministic", "tau": 0.5},
                              "after_other": {"kind": "exponential", "mu": 3.0}})
    s2 = deterministic(0.7)
    prev = [evaluate_recursive(s1, s2, History.empty(), P, d) for d in range(12)]
    for d in range(7):
        assert abs(prev[d].value - prev[d + 5].value) <= prev[d].tail_bound
    exact = finite_state_value(s1, s2, P)
    assert abs(prev[-1].value - exact) <= prev[-1].tail_bound
    assert prev[-1].rigorous


def test_finite_state_model_reduces_to_markov_value():
    f1, f2 = atom(0.6), exponential_dist(1.5)
    copy = reactive("copy", {"base": {"kind": "deterministic", "tau": 0.6}})
    assert finite_state_value(copy, exponential(1.5), P) == pytest.approx(markov_value(f1, f2, P), rel=1e-12)
    m = FiniteStateModel(copy, exponential(1.5), P)
    assert m.value(2) == pytest.approx(markov_value_for(2, f1, f2, P), rel=1e-12)


def test_recursive_node_cap_flags_partial():
    # schedule nodes carry their own clock, so nothing merges and the frontier grows
    from opphunt.strategy import zeno_schedule
    res = evaluate_recursive(zeno_schedule(), exponential(2.0), History.empty(), P, 30, max_nodes=5)
    assert res.partial and not res.rigorous
    small = evaluate_recursive(deterministic(0.3), exponential(2.0), History.empty(), P, 30, max_nodes=5)
    assert not small.partial
