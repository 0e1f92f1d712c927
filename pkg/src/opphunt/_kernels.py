"""Batch play sampler for finite-state strategy pairs.

Two implementations of the same per-replication recurrence:

* ``_batch_numba``: one scalar loop per replication, compiled with numba.
* ``_batch_numpy``: all replications advanced in lockstep with numpy arrays.

Set ``OPPHUNT_DISABLE_NUMBA=1`` to force the numpy path (also used when numba
is not importable). Both consume each replication's splitmix64 stream in the
same order as :func:`opphunt.engine.sample_play`: player-1 delay, player-2
delay, tie coin (ties only), prize check.
"""
from __future__ import annotations

import math
import os

import numpy as np

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
MIX1 = 0xBF58476D1CE4E5B9
MIX2 = 0x94D049BB133111EB
TWO_M53 = 2.0 ** -53
ONE_MINUS = 1.0 - 2.0 ** -53

START, SELF, OTHER, TIE_WON, TIE_LOST = range(5)

# outcome codes
UNDISCOVERED, FOUND_BY_1, FOUND_BY_2 = 0, 1, 2


def _numba_wanted() -> bool:
    return os.environ.get("OPPHUNT_DISABLE_NUMBA", "").lower() not in ("1", "true", "yes")


try:
    import numba

    HAVE_NUMBA = True
    _jit = numba.njit(cache=True, nogil=True)
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False

    def _jit(fn):
        return fn


# --------------------------------------------------------------------------
# splitmix64, python ints


def mix64(z: int) -> int:
    z &= MASK64
    z = ((z ^ (z >> 30)) * MIX1) & MASK64
    z = ((z ^ (z >> 27)) * MIX2) & MASK64
    return z ^ (z >> 31)


def derive_seed(master: int, i: int) -> int:
    """Seed of replication ``i``: mix64(master XOR i * 0x9E3779B97F4A7C15)."""
    return mix64((master & MASK64) ^ ((i * GOLDEN) & MASK64))


def derive_seeds(master: int, n: int, start: int = 0) -> np.ndarray:
    idx = np.arange(start, start + n, dtype=np.uint64)
    z = np.uint64(master & MASK64) ^ (idx * np.uint64(GOLDEN))
    return _mix64_np(z)


def _mix64_np(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * np.uint64(MIX1)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(MIX2)
    return z ^ (z >> np.uint64(31))


class SplitMix64:
    """Per-play uniform stream; ``uniform()`` returns (next >> 11) * 2**-53."""

    __slots__ = ("state", "draws")

    def __init__(self, seed: int):
        self.state = seed & MASK64
        self.draws = 0

    def uniform(self) -> float:
        self.state = (self.state + GOLDEN) & MASK64
        self.draws += 1
        return (mix64(self.state) >> 11) * TWO_M53


# --------------------------------------------------------------------------
# packing


class PackedStrategy:
    """Arrays describing a finite-state strategy for the kernels."""

    def __init__(self, dists, class_table, threshold):
        k = len(dists)
        a = max(1, max(len(d.atoms) for d in dists))
        e = max(1, max(len(d.exponentials) for d in dists))
        self.atom_delay = np.zeros((k, a))
        self.atom_mass = np.zeros((k, a))
        self.n_atoms = np.zeros(k, dtype=np.int64)
        self.exp_rate = np.ones((k, e))
        self.exp_weight = np.zeros((k, e))
        self.n_exp = np.zeros(k, dtype=np.int64)
        self.never = np.zeros(k)
        for i, d in enumerate(dists):
            if d.generic is not None:
                raise ValueError("generic components are not supported by the batch kernels")
            self.n_atoms[i] = len(d.atoms)
            for j, (delay, m) in enumerate(d.atoms):
                self.atom_delay[i, j], self.atom_mass[i, j] = delay, m
            self.n_exp[i] = len(d.exponentials)
            for j, c in enumerate(d.exponentials):
                self.exp_rate[i, j], self.exp_weight[i, j] = c.rate, c.weight
            self.never[i] = d.never_mass
        self.table = np.asarray(class_table, dtype=np.int64).reshape(5, 2)
        self.threshold = float(threshold)

    def arrays(self):
        return (self.atom_delay, self.atom_mass, self.n_atoms, self.exp_rate, self.exp_weight,
                self.n_exp, self.never, self.table, self.threshold)


# --------------------------------------------------------------------------
# scalar kernel (numba)


@_jit
def _next_class(actual, tie, player):
    if tie:
        return TIE_WON if actual == player else TIE_LOST
    return SELF if actual == player else OTHER


@_jit
def _batch_scalar(seeds, ad1, am1, na1, er1, ew1, ne1, nv1, tb1, th1,
                  ad2, am2, na2, er2, ew2, ne2, nv2, tb2, th2,
                  lam, r, c1, c2, v_finder, v_other, horizon, budget,
                  pay1, pay2, outcome, truncated, n_events, end_time,
                  first_time, first_tie, first_actual, draws):
    golden = np.uint64(GOLDEN)
    m1 = np.uint64(MIX1)
    m2 = np.uint64(MIX2)
    s30 = np.uint64(30)
    s27 = np.uint64(27)
    s31 = np.uint64(31)
    s11 = np.uint64(11)
    for i in range(seeds.shape[0]):
        state = seeds[i]
        t = 0.0
        gap = 0.0
        cls1 = START
        cls2 = START
        p1 = 0.0
        p2 = 0.0
        out = UNDISCOVERED
        trunc = True
        events = 0
        nd = 0
        stop_t = 0.0
        first_time[i] = math.inf
        first_tie[i] = False
        first_actual[i] = 0
        for _ in range(budget):
            k1 = tb1[cls1, 0 if gap < th1 else 1]
            k2 = tb2[cls2, 0 if gap < th2 else 1]
            state = state + golden
            z = state
            z = (z ^ (z >> s30)) * m1
            z = (z ^ (z >> s27)) * m2
            z = z ^ (z >> s31)
            u1 = np.float64(z >> s11) * TWO_M53
            state = state + golden
            z = state
            z = (z ^ (z >> s30)) * m1
            z = (z ^ (z >> s27)) * m2
            z = z ^ (z >> s31)
            u2 = np.float64(z >> s11) * TWO_M53
            nd += 2
            # delay draws are written out in place: calling a helper with array
            # arguments costs a refcount round trip per array per event
            d1 = -1.0
            cum = 0.0
            for j in range(na1[k1]):
                nxt = cum + am1[k1, j]
                if u1 < nxt:
                    d1 = ad1[k1, j]
                    break
                cum = nxt
            if d1 < 0.0:
                for j in range(ne1[k1]):
                    w = ew1[k1, j]
                    nxt = cum + w
                    if u1 < nxt:
                        d1 = -math.log1p(-min((u1 - cum) / w, ONE_MINUS)) / er1[k1, j]
                        break
                    cum = nxt
            if d1 < 0.0:
                if nv1[k1] > 0.0:
                    d1 = math.inf
                elif ne1[k1] > 0:
                    d1 = -math.log1p(-ONE_MINUS) / er1[k1, ne1[k1] - 1]
                else:
                    d1 = ad1[k1, na1[k1] - 1]
            d2 = -1.0
            cum = 0.0
            for j in range(na2[k2]):
                nxt = cum + am2[k2, j]
                if u2 < nxt:
                    d2 = ad2[k2, j]
                    break
                cum = nxt
            if d2 < 0.0:
                for j in range(ne2[k2]):
                    w = ew2[k2, j]
                    nxt = cum + w
                    if u2 < nxt:
                        d2 = -math.log1p(-min((u2 - cum) / w, ONE_MINUS)) / er2[k2, j]
                        break
                    cum = nxt
            if d2 < 0.0:
                if nv2[k2] > 0.0:
                    d2 = math.inf
                elif ne2[k2] > 0:
                    d2 = -math.log1p(-ONE_MINUS) / er2[k2, ne2[k2] - 1]
                else:
                    d2 = ad2[k2, na2[k2] - 1]
            s1 = t + d1
            s2 = t + d2
            m = min(s1, s2)
            if m == math.inf:
                trunc = False
                stop_t = math.inf
                break
            if m > horizon:
                stop_t = horizon
                break
            tie = s1 == s2
            if tie:
                state = state + golden
                z = state
                z = (z ^ (z >> s30)) * m1
                z = (z ^ (z >> s27)) * m2
                z = z ^ (z >> s31)
                nd += 1
                actual = 1 if np.float64(z >> s11) * TWO_M53 < 0.5 else 2
            else:
                actual = 1 if s1 < s2 else 2
            state = state + golden
            z = state
            z = (z ^ (z >> s30)) * m1
            z = (z ^ (z >> s27)) * m2
            z = z ^ (z >> s31)
            nd += 1
            found = np.float64(z >> s11) * TWO_M53 < -math.expm1(-lam * (m - t))
            if events == 0:
                first_time[i] = m
                first_tie[i] = tie
                first_actual[i] = actual
            events += 1
            disc = math.exp(-r * m)
            if actual == 1:
                p1 -= c1 * disc
            else:
                p2 -= c2 * disc
            stop_t = m
            if found:
                if actual == 1:
                    p1 += v_finder * disc
                    p2 += v_other * disc
                else:
                    p2 += v_finder * disc
                    p1 += v_other * disc
                out = actual
                trunc = False
                break
            gap = m - t
            t = m
            cls1 = _next_class(actual, tie, 1)
            cls2 = _next_class(actual, tie, 2)
        pay1[i] = p1
        pay2[i] = p2
        outcome[i] = out
        truncated[i] = trunc
        n_events[i] = events
        end_time[i] = stop_t
        draws[i] = nd


_batch_numba = _batch_scalar if HAVE_NUMBA else None


# --------------------------------------------------------------------------
# numpy lockstep kernel


def _uniform_np(state):
    state = state + np.uint64(GOLDEN)
    return state, (_mix64_np(state) >> np.uint64(11)).astype(np.float64) * TWO_M53


def _draw_np(kidx, u, ad, am, na, er, ew, ne, nv):
    out = np.empty(u.shape[0])
    for k in np.unique(kidx):
        sel = np.nonzero(kidx == k)[0]
        uk = u[sel]
        res = np.full(sel.shape[0], np.nan)
        done = np.zeros(sel.shape[0], dtype=bool)
        cum = np.zeros(sel.shape[0])
        for j in range(na[k]):
            nxt = cum + am[k, j]
            hit = ~done & (uk < nxt)
            res[hit] = ad[k, j]
            done |= hit
            cum = nxt
        for j in range(ne[k]):
            w = ew[k, j]
            nxt = cum + w
            hit = ~done & (uk < nxt)
            v = np.minimum((uk[hit] - cum[hit]) / w, ONE_MINUS)
            res[hit] = -np.log1p(-v) / er[k, j]
            done |= hit
            cum = nxt
        rest = ~done
        if nv[k] > 0.0:
            res[rest] = math.inf
        elif ne[k] > 0:
            res[rest] = -math.log1p(-ONE_MINUS) / er[k, ne[k] - 1]
        else:
            res[rest] = ad[k, na[k] - 1]
        out[sel] = res
    return out


def _next_class_np(actual, tie, player):
    mine = actual == player
    return np.where(tie, np.where(mine, TIE_WON, TIE_LOST), np.where(mine, SELF, OTHER))


def _batch_numpy(seeds, ad1, am1, na1, er1, ew1, ne1, nv1, tb1, th1,
                 ad2, am2, na2, er2, ew2, ne2, nv2, tb2, th2,
                 lam, r, c1, c2, v_finder, v_other, horizon, budget,
                 pay1, pay2, outcome, truncated, n_events, end_time,
                 first_time, first_tie, first_actual, draws):
    n = seeds.shape[0]
    state = seeds.copy()
    t = np.zeros(n)
    gap = np.zeros(n)
    cls1 = np.full(n, START, dtype=np.int64)
    cls2 = np.full(n, START, dtype=np.int64)
    pay1[:] = 0.0
    pay2[:] = 0.0
    outcome[:] = UNDISCOVERED
    truncated[:] = True
    n_events[:] = 0
    end_time[:] = 0.0
    first_time[:] = math.inf
    first_tie[:] = False
    first_actual[:] = 0
    draws[:] = 0
    act = np.arange(n)
    for _ in range(budget):
        if act.size == 0:
            break
        st = state[act]
        tt = t[act]
        g = gap[act]
        k1 = tb1[cls1[act], np.where(g < th1, 0, 1)]
        k2 = tb2[cls2[act], np.where(g < th2, 0, 1)]
        st, u1 = _uniform_np(st)
        st, u2 = _uniform_np(st)
        draws[act] += 2
        s1 = tt + _draw_np(k1, u1, ad1, am1, na1, er1, ew1, ne1, nv1)
        s2 = tt + _draw_np(k2, u2, ad2, am2, na2, er2, ew2, ne2, nv2)
        m = np.minimum(s1, s2)

        gone = m == math.inf
        if gone.any():
            idx = act[gone]
            truncated[idx] = False
            end_time[idx] = math.inf
        late = ~gone & (m > horizon)
        if late.any():
            end_time[act[late]] = horizon
        live = ~gone & ~late
        state[act] = st
        act, st, tt, m, s1, s2 = act[live], st[live], tt[live], m[live], s1[live], s2[live]
        if act.size == 0:
            break

        tie = s1 == s2
        actual = np.where(s1 < s2, 1, 2)
        if tie.any():
            ti = np.nonzero(tie)[0]
            st_t, coin = _uniform_np(st[ti])
            st[ti] = st_t
            draws[act[ti]] += 1
            actual[ti] = np.where(coin < 0.5, 1, 2)
        st, up = _uniform_np(st)
        draws[act] += 1
        found = up < -np.expm1(-lam * (m - tt))
        state[act] = st

        fresh = n_events[act] == 0
        if fresh.any():
            fi = act[fresh]
            first_time[fi] = m[fresh]
            first_tie[fi] = tie[fresh]
            first_actual[fi] = actual[fresh]
        n_events[act] += 1
        disc = np.exp(-r * m)
        one = actual == 1
        pay1[act[one]] -= c1 * disc[one]
        pay2[act[~one]] -= c2 * disc[~one]
        end_time[act] = m

        if found.any():
            fa = act[found]
            f1 = one[found]
            d = disc[found]
            pay1[fa] += np.where(f1, v_finder, v_other) * d
            pay2[fa] += np.where(f1, v_other, v_finder) * d
            outcome[fa] = actual[found]
            truncated[fa] = False
        keep = ~found
        act, m, tt, actual, tie = act[keep], m[keep], tt[keep], actual[keep], tie[keep]
        gap[act] = m - tt
        t[act] = m
        cls1[act] = _next_class_np(actual, tie, 1)
        cls2[act] = _next_class_np(actual, tie, 2)


def run_batch(seeds, packed1: PackedStrategy, packed2: PackedStrategy, lam, r, c1, c2,
              v_finder, v_other, horizon, budget, use_numba=None):
    """Simulate one play per seed; returns a dict of per-replication arrays."""
    if use_numba is None:
        use_numba = HAVE_NUMBA and _numba_wanted()
    seeds = np.ascontiguousarray(seeds, dtype=np.uint64)
    n = seeds.shape[0]
    out = {
        "pay1": np.zeros(n), "pay2": np.zeros(n),
        "outcome": np.zeros(n, dtype=np.int8), "truncated": np.zeros(n, dtype=np.bool_),
        "n_events": np.zeros(n, dtype=np.int64), "end_time": np.zeros(n),
        "first_time": np.zeros(n), "first_tie": np.zeros(n, dtype=np.bool_),
        "first_actual": np.zeros(n, dtype=np.int8), "draws": np.zeros(n, dtype=np.int64),
    }
    fn = _batch_numba if use_numba else _batch_numpy
    fn(seeds, *packed1.arrays(), *packed2.arrays(), float(lam), float(r), float(c1), float(c2),
       float(v_finder), float(v_other), float(horizon), int(budget),
       out["pay1"], out["pay2"], out["outcome"], out["truncated"], out["n_events"],
       out["end_time"], out["first_time"], out["first_tie"], out["first_actual"], out["draws"])
    return out
