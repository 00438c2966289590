"""Next-event simulation of the contact process.

Each infected vertex v carries rate 1 + λ deg(v). An event picks v with
probability proportional to that rate (Fenwick tree descent), then recovers v
with probability 1 / (1 + λ deg(v)) or else fires an arrow to a uniform
neighbour, which becomes infected if it is healthy.
"""

from dataclasses import dataclass
from typing import Optional

import numba
import numpy as np

from ..lazy_graph import LazyGraph, lazy_reveal
from ..rng import as_u64, derive_stream_seed

# stop reasons
EXTINCT, HORIZON, CAP, BUDGET = 0, 1, 2, 3


@dataclass(frozen=True)
class SimParams:
    """Infection rate, time horizon and finite-size survival proxy.

    ``ever_infected_cap`` ends a run as surviving once that many distinct
    vertices have been infected; ``max_events`` ends it as censored.
    """

    lam: float
    horizon: float
    ever_infected_cap: Optional[int] = None
    seed: int = 0
    max_events: int = 10**8

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError("lambda must be nonnegative")
        if self.horizon < 0:
            raise ValueError("horizon must be nonnegative")


@dataclass(frozen=True)
class SimOutcome:
    """Result of one run.

    ``extinction_time`` is the extinction time when ``extinct``; otherwise it is
    the time the run stopped (the horizon, or earlier when the ever-infected cap
    or the event budget ended it).
    """

    extinction_time: float
    extinct: bool
    survived_proxy: bool
    ever_infected: int
    peak_infected: int
    events_processed: int
    stop_reason: int = EXTINCT

    @property
    def capped(self):
        return not self.extinct


@numba.njit(cache=True)
def _fw_add(tree, i, w):
    i += 1
    n = tree.shape[0] - 1
    while i <= n:
        tree[i] += w
        i += i & (-i)


@numba.njit(cache=True)
def _fw_find(tree, r, top):
    # smallest index whose prefix sum exceeds r
    pos = 0
    step = top
    while step > 0:
        nxt = pos + step
        if nxt < tree.shape[0] and tree[nxt] <= r:
            pos = nxt
            r -= tree[nxt]
        step >>= 1
    return pos


@numba.njit(cache=True)
def _simulate(indptr, indices, lam, horizon, cap, max_events, init, seed32,
              lazy, pos, marks, L, torus, code, prm, K, h0, nlev, bstart, order, skey, rs,
              state):
    """Core loop; ``state`` receives the infected indicator at stop time.

    In lazy mode ``indptr``/``indices`` are ignored and neighbourhoods are
    revealed on first infection through :func:`lazy_reveal`.
    """
    np.random.seed(seed32)
    n = state.shape[0]
    tree = np.zeros(n + 1)
    top = 1
    while top * 2 <= n:
        top *= 2
    rate = np.zeros(n)
    ever = np.zeros(n, dtype=np.bool_)
    if lazy:
        start = -np.ones(n, dtype=np.int64)
        cnt = np.zeros(n, dtype=np.int64)
        nbuf = np.empty(max(64, n), dtype=np.int64)
        used = 0
        scratch = np.empty(64, dtype=np.int64)
        revealed = np.zeros(n, dtype=np.bool_)
        pend_head = -np.ones(n, dtype=np.int64)
        pend_val = np.empty(64, dtype=np.int64)
        pend_next = np.empty(64, dtype=np.int64)
        npend = 0
    else:
        start = indptr[:-1].copy()
        cnt = indptr[1:] - indptr[:-1]
        nbuf = indices.copy()
        used = 0
        scratch = np.empty(0, dtype=np.int64)
        revealed = np.zeros(0, dtype=np.bool_)
        pend_head = np.zeros(0, dtype=np.int64)
        pend_val = np.zeros(0, dtype=np.int64)
        pend_next = np.zeros(0, dtype=np.int64)
        npend = 0
    state[:] = False
    n_inf = 0
    n_ever = 0
    total = 0.0
    for i in range(init.shape[0]):
        v = init[i]
        if state[v]:
            continue
        if lazy and start[v] < 0:
            k, npend, pend_val, pend_next, scratch = lazy_reveal(
                v, pos, marks, L, torus, code, prm, K, h0, nlev, bstart, order, skey,
                revealed, pend_head, pend_next, pend_val, npend, rs, scratch)
            while used + k > nbuf.shape[0]:
                grown = np.empty(2 * nbuf.shape[0], dtype=np.int64)
                grown[:used] = nbuf[:used]
                nbuf = grown
            nbuf[used:used + k] = scratch[:k]
            start[v] = used
            cnt[v] = k
            used += k
        state[v] = True
        ever[v] = True
        n_ever += 1
        n_inf += 1
        rate[v] = 1.0 + lam * cnt[v]
        _fw_add(tree, v, rate[v])
        total += rate[v]
    peak = n_inf
    t = 0.0
    events = 0
    if n_inf == 0:
        return 0.0, EXTINCT, n_ever, peak, events
    if cap > 0 and n_ever >= cap:
        return 0.0, CAP, n_ever, peak, events
    while True:
        t += np.random.exponential(1.0) / total
        if t > horizon:
            return horizon, HORIZON, n_ever, peak, events
        if events >= max_events:
            return t, BUDGET, n_ever, peak, events
        events += 1
        v = _fw_find(tree, np.random.random() * total, top)
        while v >= n or not state[v]:
            # float drift in the tree can land on a healthy slot; redraw
            v = _fw_find(tree, np.random.random() * total, top)
        if np.random.random() * rate[v] < 1.0:
            state[v] = False
            _fw_add(tree, v, -rate[v])
            total -= rate[v]
            n_inf -= 1
            if n_inf == 0:
                return t, EXTINCT, n_ever, peak, events
            if events % 1048576 == 0:
                total = 0.0
                tree[:] = 0.0
                for w in range(n):
                    if state[w]:
                        _fw_add(tree, w, rate[w])
                        total += rate[w]
            continue
        u = nbuf[start[v] + np.random.randint(0, cnt[v])]
        if state[u]:
            continue
        if lazy and start[u] < 0:
            k, npend, pend_val, pend_next, scratch = lazy_reveal(
                u, pos, marks, L, torus, code, prm, K, h0, nlev, bstart, order, skey,
                revealed, pend_head, pend_next, pend_val, npend, rs, scratch)
            while used + k > nbuf.shape[0]:
                grown = np.empty(2 * nbuf.shape[0], dtype=np.int64)
                grown[:used] = nbuf[:used]
                nbuf = grown
            nbuf[used:used + k] = scratch[:k]
            start[u] = used
            cnt[u] = k
            used += k
        state[u] = True
        rate[u] = 1.0 + lam * cnt[u]
        _fw_add(tree, u, rate[u])
        total += rate[u]
        n_inf += 1
        if n_inf > peak:
            peak = n_inf
        if not ever[u]:
            ever[u] = True
            n_ever += 1
            if cap > 0 and n_ever >= cap:
                return t, CAP, n_ever, peak, events


_EMPTY_I = np.zeros(1, dtype=np.int64)


def _seed32(seed):
    return np.uint32(derive_stream_seed(seed, 0x5EED) & 0xFFFFFFFF)


def _outcome(res, cap):
    time, reason, ever, peak, events = res
    return SimOutcome(
        extinction_time=float(time),
        extinct=reason == EXTINCT,
        survived_proxy=reason in (HORIZON, CAP),
        ever_infected=int(ever),
        peak_infected=int(peak),
        events_processed=int(events),
        stop_reason=int(reason),
    )


def _init_array(initial, n):
    init = np.array(sorted(set(int(v) for v in initial)), dtype=np.int64)
    if init.size and (init[0] < 0 or init[-1] >= n):
        raise ValueError("initial set contains ids outside the graph")
    return init


def run_next_event(graph, params, initial, final_state=None):
    """Simulate from ``initial`` on ``graph`` until extinction, horizon, cap or budget.

    Parameters
    ----------
    final_state : ndarray of bool, optional
        Receives the infected indicator when the run stops.
    """
    n = graph.n_vertices
    init = _init_array(initial, n)
    state = np.zeros(n, dtype=np.bool_) if final_state is None else final_state
    cap = params.ever_infected_cap or 0
    res = _simulate(
        graph.indptr, graph.indices, float(params.lam), float(params.horizon), int(cap),
        int(params.max_events), init, _seed32(params.seed), False,
        np.zeros((0, 1)), np.zeros(0), 0.0, False, 0, np.zeros(8), 0, 1.0, 0, _EMPTY_I,
        _EMPTY_I, _EMPTY_I, np.zeros(1, dtype=np.uint64), state,
    )
    return _outcome(res, cap)


def run_lazy(cloud, spec, graph_seed, params, initial):
    """Run on a graph with the law of :func:`sample_graph_exact`, revealing
    neighbourhoods only for vertices that get infected (see :class:`LazyGraph`)."""
    n = cloud.size
    init = _init_array(initial, n)
    state = np.zeros(n, dtype=np.bool_)
    cap = params.ever_infected_cap or 0
    g = LazyGraph(cloud, spec, graph_seed)
    dummy = np.zeros(1, dtype=np.int64)
    res = _simulate(
        dummy, dummy, float(params.lam), float(params.horizon), int(cap),
        int(params.max_events), init, _seed32(params.seed), True, *g.arrays(), g.rs, state,
    )
    return _outcome(res, cap)


@numba.njit(cache=True)
def _batch_hits(indptr, indices, lam, horizon, init, target, seeds):
    n = indptr.shape[0] - 1
    state = np.zeros(n, dtype=np.bool_)
    hits = np.zeros(seeds.shape[0], dtype=np.bool_)
    ei, eu = np.zeros(1, dtype=np.int64), np.zeros(1, dtype=np.uint64)
    for r in range(seeds.shape[0]):
        _simulate(indptr, indices, lam, horizon, 0, 1 << 62, init, seeds[r], False,
                  np.zeros((0, 1)), np.zeros(0), 0.0, False, 0, np.zeros(8), 0, 1.0, 0, ei, ei,
                  ei, eu, state)
        for i in range(target.shape[0]):
            if state[target[i]]:
                hits[r] = True
                break
    return hits


@numba.njit(cache=True)
def _batch_times(indptr, indices, lam, horizon, cap, max_events, init, seeds):
    n = indptr.shape[0] - 1
    state = np.zeros(n, dtype=np.bool_)
    out = np.empty(seeds.shape[0])
    reason = np.empty(seeds.shape[0], dtype=np.int64)
    ei, eu = np.zeros(1, dtype=np.int64), np.zeros(1, dtype=np.uint64)
    for r in range(seeds.shape[0]):
        t, why, _, _, _ = _simulate(
            indptr, indices, lam, horizon, cap, max_events, init, seeds[r], False,
            np.zeros((0, 1)), np.zeros(0), 0.0, False, 0, np.zeros(8), 0, 1.0, 0, ei, ei, ei,
            eu, state)
        out[r] = t
        reason[r] = why
    return out, reason


def replicate_seeds(seed, count):
    return np.array([derive_stream_seed(seed, i) & 0xFFFFFFFF for i in range(count)],
                    dtype=np.uint32)


def extinction_times(graph, lam, initial, replicates, seed, horizon=np.inf, cap=0,
                     max_events=10**8):
    """Stop times and stop reasons of ``replicates`` independent runs."""
    init = _init_array(initial, graph.n_vertices)
    return _batch_times(graph.indptr, graph.indices, float(lam), float(horizon), int(cap),
                        int(max_events), init, replicate_seeds(seed, replicates))


def hit_indicators(graph, lam, t, A, B, replicates, seed):
    """Indicators of ξ_t^A ∩ B ≠ ∅ over independent runs."""
    init = _init_array(A, graph.n_vertices)
    target = _init_array(B, graph.n_vertices)
    return _batch_hits(graph.indptr, graph.indices, float(lam), float(t), init, target,
                       replicate_seeds(seed, replicates))


def duality_gap(graph, lam, t, A, B, replicates, seed):
    """Independent estimates of P(ξ_t^A ∩ B ≠ ∅) and P(ξ_t^B ∩ A ≠ ∅).

    Returns
    -------
    (p_ab, p_ba, z) with z the pooled two-proportion z-score.
    """
    if not A or not B:
        raise ValueError("A and B must be nonempty")
    h_ab = hit_indicators(graph, lam, t, A, B, replicates, derive_stream_seed(seed, 1))
    h_ba = hit_indicators(graph, lam, t, B, A, replicates, derive_stream_seed(seed, 2))
    p1, p2 = h_ab.mean(), h_ba.mean()
    pool = 0.5 * (p1 + p2)
    var = pool * (1.0 - pool) * 2.0 / replicates
    z = 0.0 if var == 0 else (p1 - p2) / np.sqrt(var)
    return float(p1), float(p2), float(z)
