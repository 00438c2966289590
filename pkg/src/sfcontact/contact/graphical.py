"""Graphical representation: pre-drawn recovery marks and transmission arrows.

Streams are generated on first request from seeds derived per vertex or per
directed edge and memoized, so a run only materializes what it touches.
Arrows carry an extra uniform mark; keeping arrows with mark < λ'/λ gives the
rate-λ' stream as a thinning of the rate-λ one.
"""

import heapq

import numpy as np
from scipy import stats

from ..rng import derive_stream_seed
from .engine import CAP, EXTINCT, HORIZON, SimOutcome

_REC, _TRN = 1, 2


class EventStream:
    """Poisson recovery marks (rate 1) and arrows (rate λ) on [0, horizon]."""

    def __init__(self, graph, lam, horizon, seed, _base=None, _keep=1.0):
        if horizon < 0:
            raise ValueError("horizon must be nonnegative")
        self.graph = graph
        self.lam = float(lam)
        self.horizon = float(horizon)
        self.seed = int(seed)
        self._base = _base
        self._keep = _keep
        self._rec = {}
        self._arr = {}

    def thinned(self, lam):
        """The rate-``lam`` stream obtained by thinning this one (``lam`` ≤ λ)."""
        if lam > self.lam:
            raise ValueError("thinning needs a smaller rate")
        root = self._base or self
        keep = 0.0 if root.lam == 0 else lam / root.lam
        return EventStream(self.graph, lam, self.horizon, self.seed, _base=root, _keep=keep)

    def _poisson(self, rate, seed):
        rng = np.random.default_rng(seed)
        k = rng.poisson(rate * self.horizon) if rate > 0 and self.horizon > 0 else 0
        times = np.sort(rng.random(k) * self.horizon)
        return times, rng.random(k)

    def recoveries(self, v):
        if self._base is not None:
            return self._base.recoveries(v)
        out = self._rec.get(v)
        if out is None:
            s = derive_stream_seed(derive_stream_seed(self.seed, _REC), int(v))
            out = self._poisson(1.0, s)[0]
            self._rec[v] = out
        return out

    def arrows(self, u, v):
        """Arrow times on the directed edge u → v."""
        if self._base is not None:
            times, marks = self._base._arrow_pair(u, v)
            return times[marks < self._keep]
        return self._arrow_pair(u, v)[0]

    def _arrow_pair(self, u, v):
        key = (int(u), int(v))
        out = self._arr.get(key)
        if out is None:
            s = derive_stream_seed(derive_stream_seed(self.seed, _TRN), (key[0] << 32) | key[1])
            out = self._poisson(self.lam, s)
            self._arr[key] = out
        return out


def build_event_stream(graph, lam, horizon, seed):
    return EventStream(graph, lam, horizon, seed)


def _next_after(times, t):
    i = np.searchsorted(times, t, side="right")
    return times[i] if i < times.shape[0] else np.inf


def run_on_stream(stream, graph, initial, horizon=None, cap=None, trajectory=None, log=None):
    """Deterministic contact-process run driven by ``stream``.

    Parameters
    ----------
    horizon : float, optional
        Defaults to the stream horizon; may not exceed it.
    trajectory : list, optional
        Receives ``(time, frozenset)`` after every change of the infected set,
        starting with the state at time 0.
    log : list, optional
        Receives event lines ``time kind vertex [target]``.
    """
    horizon = stream.horizon if horizon is None else float(horizon)
    if horizon > stream.horizon:
        raise ValueError("stream horizon shorter than the requested horizon")
    infected = set(int(v) for v in initial)
    ever = set(infected)
    version = {}
    heap = []
    seq = 0

    def schedule(v, t):
        nonlocal seq
        ver = version.get(v, 0)
        heapq.heappush(heap, (_next_after(stream.recoveries(v), t), seq, _REC, v, -1, ver))
        seq += 1
        for u in graph.neighbors(v):
            heapq.heappush(heap, (_next_after(stream.arrows(v, u), t), seq, _TRN, v, int(u), ver))
            seq += 1

    for v in sorted(infected):
        schedule(v, 0.0)
    if trajectory is not None:
        trajectory.append((0.0, frozenset(infected)))
    peak = len(infected)
    events = 0
    if not infected:
        return SimOutcome(0.0, True, False, 0, 0, 0, EXTINCT)
    if cap and len(ever) >= cap:
        return SimOutcome(0.0, False, True, len(ever), peak, 0, CAP)
    while heap:
        t, _, kind, v, u, ver = heapq.heappop(heap)
        if t > horizon:
            break
        if v not in infected or version.get(v, 0) != ver:
            continue
        events += 1
        if kind == _REC:
            if log is not None:
                log.append(f"{t:.9g} REC {v}")
            infected.discard(v)
            version[v] = ver + 1
            if trajectory is not None:
                trajectory.append((t, frozenset(infected)))
            if not infected:
                return SimOutcome(float(t), True, False, len(ever), peak, events, EXTINCT)
            continue
        if log is not None:
            log.append(f"{t:.9g} TRN {v} {u}")
        heapq.heappush(heap, (_next_after(stream.arrows(v, u), t), seq, _TRN, v, u, ver))
        seq += 1
        if u not in infected:
            infected.add(u)
            schedule(u, t)
            peak = max(peak, len(infected))
            if trajectory is not None:
                trajectory.append((t, frozenset(infected)))
            if u not in ever:
                ever.add(u)
                if cap and len(ever) >= cap:
                    return SimOutcome(float(t), False, True, len(ever), peak, events, CAP)
    return SimOutcome(horizon, False, True, len(ever), peak, events, HORIZON)


def state_at(trajectory, t):
    """Infected set at time ``t`` from a recorded trajectory."""
    times = [x[0] for x in trajectory]
    i = np.searchsorted(times, t, side="right") - 1
    return trajectory[max(i, 0)][1]


def _reach(stream, trace):
    """Whether an infection path from (trace[0], 0) follows ``trace`` in order.

    The reachable times at each trace vertex form disjoint intervals
    [arrival, next recovery); an arrow inside one of them extends the path.
    """
    rec = stream.recoveries(trace[0])
    intervals = [(0.0, rec[0] if rec.shape[0] else stream.horizon)]
    for a, b in zip(trace[:-1], trace[1:]):
        arrows = stream.arrows(a, b)
        rec = stream.recoveries(b)
        nxt = []
        for lo, hi in intervals:
            i = np.searchsorted(arrows, lo, side="left")
            while i < arrows.shape[0] and arrows[i] < hi:
                s = arrows[i]
                end = min(_next_after(rec, s), stream.horizon)
                if nxt and nxt[-1][1] == end:
                    pass
                else:
                    nxt.append((s, end))
                # every later arrow before the recovery lands in the same interval
                i = np.searchsorted(arrows, end, side="left")
        if not nxt:
            return False
        intervals = nxt
    return True


def _check_trace(graph, trace):
    for a, b in zip(trace[:-1], trace[1:]):
        if b not in set(graph.neighbors(a).tolist()):
            raise ValueError(f"trace step {a}->{b} is not an edge of the graph")


def trace_realization_probabilities(graph, lam, traces, replicates, seed, horizon=50.0,
                                    confidence=0.99):
    """Estimates and exact binomial confidence intervals for several traces on shared streams.

    Returns a list of ``(estimate, ci_low, ci_high)`` aligned with ``traces``.
    """
    traces = [tuple(int(v) for v in p) for p in traces]
    for p in traces:
        _check_trace(graph, p)
    hits = np.zeros(len(traces), dtype=np.int64)
    for r in range(replicates):
        stream = EventStream(graph, lam, horizon, derive_stream_seed(seed, r))
        for k, p in enumerate(traces):
            if len(p) == 1 or _reach(stream, p):
                hits[k] += 1
    out = []
    for h in hits:
        ci = stats.binomtest(int(h), replicates).proportion_ci(confidence, method="exact")
        out.append((h / replicates, ci.low, ci.high))
    return out


def trace_realization_probability(graph, lam, trace, replicates, seed, horizon=50.0,
                                  confidence=0.99):
    """Monte Carlo P(some infection path from (trace[0], 0) has ordered trace ``trace``).

    Returns ``(estimate, ci_low, ci_high)`` with a Clopper–Pearson interval.
    """
    return trace_realization_probabilities(
        graph, lam, [trace], replicates, seed, horizon, confidence)[0]
