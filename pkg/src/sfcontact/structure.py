"""Degree tails, star chains and the good-box hierarchy.

Edges needed by the searches are drawn on demand with the same pair-keyed
uniforms as the graph samplers (keys are vertex ids), so a search agrees with
the graph that :func:`sample_graph_exact` would produce for the same seed.
"""

import itertools
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .graph_sampler import GraphSample, degree_sequence
from .kernels import connection_probability
from .point_process import displacement
from .rng import as_u64, key_uniform, pair_uniforms


class InsufficientTail(ValueError):
    pass


def degree_tail_fit(graph, k_min, min_count=100, per_decade=20, min_tail=50):
    """Least-squares slope of log CCDF against log k for k ≥ ``k_min``.

    The empirical CCDF P(D ≥ k) is evaluated on a log-spaced grid of integers
    from ``k_min`` up to the largest k still carried by ``min_tail`` vertices.

    Returns
    -------
    (slope, stderr)
    """
    deg = degree_sequence(graph) if isinstance(graph, GraphSample) else np.asarray(graph)
    deg = np.sort(deg.astype(np.int64))
    k_min = max(int(k_min), 1)
    n = deg.shape[0]
    if np.count_nonzero(deg >= k_min) < min_count:
        raise InsufficientTail(f"fewer than {min_count} vertices with degree >= {k_min}")
    tail = deg[deg >= k_min]
    if tail[0] == tail[-1]:
        raise InsufficientTail("all tail degrees are equal")
    k_top = deg[-min_tail] if n >= min_tail else deg[-1]
    if k_top <= k_min:
        raise InsufficientTail("tail spans a single degree value")
    decades = math.log10(k_top / k_min)
    ks = np.unique(np.floor(k_min * 10 ** np.linspace(0, decades, max(3, int(per_decade * decades) + 1))))
    ks = ks[ks <= k_top]
    if ks.shape[0] < 3:
        raise InsufficientTail("fewer than three distinct tail points")
    ccdf = (n - np.searchsorted(deg, ks, side="left")) / n
    from .experiments.fitting import fit_loglog_slope
    return fit_loglog_slope(list(zip(ks, ccdf)))


# star chain --------------------------------------------------------------------

@dataclass(frozen=True)
class StarChainParams:
    """Scales of the star chain: r = ceil(β log(1/λ) / λ²), T_sp = r^{-1/γ},
    T_k = T_sp^θ e^{-kθ}, R_k = ½ T_sp^{-(γ+γ/δ)/d} e^{k(γ+γ/δ)/d}."""

    lam: float
    beta_star: float = 1.0
    theta: Optional[float] = None
    K: int = 3

    def resolve(self, spec):
        lo, hi = 1.0, spec.gamma + spec.gamma / spec.delta
        theta = 0.5 * (lo + hi) if self.theta is None else self.theta
        if not lo < theta < hi:
            raise ValueError(f"theta_chain must satisfy 1 < theta < gamma + gamma/delta = {hi}")
        if not 0.0 < self.lam < 1.0:
            raise ValueError("lambda must lie in (0, 1)")
        return theta

    def r(self):
        return max(1, math.ceil(self.beta_star * math.log(1.0 / self.lam) / self.lam ** 2))

    def t_sp(self, spec):
        return self.r() ** (-1.0 / spec.gamma)

    def mark_threshold(self, spec, k):
        theta = self.resolve(spec)
        return self.t_sp(spec) ** theta * math.exp(-k * theta)

    def radius(self, spec, k):
        if k == 0:
            return 0.0
        e = (spec.gamma + spec.gamma / spec.delta) / spec.dim
        return 0.5 * self.t_sp(spec) ** (-e) * math.exp(k * e)


@dataclass(frozen=True)
class StarRecord:
    index: int
    midpoint: int
    mark: float
    neighbors: tuple
    connector: Optional[int]


@dataclass(frozen=True)
class StarChainResult:
    stars: list = field(default_factory=list)
    found: int = 0
    requested: int = 0
    r: int = 1

    @property
    def complete(self):
        return self.found == self.requested


class DomainTooSmall(ValueError):
    pass


def _halfball_extent(x, nhat, R):
    # per-coordinate range of {y : |y - x| <= R, (y - x)·nhat >= 0}
    lo = np.where(nhat <= 0, -R, -R * np.sqrt(np.maximum(0.0, 1 - nhat ** 2)))
    hi = np.where(nhat >= 0, R, R * np.sqrt(np.maximum(0.0, 1 - nhat ** 2)))
    return x + lo, x + hi


def _adjacent(cloud, spec, seed, u, vs):
    vs = np.asarray(vs, dtype=np.int64)
    if vs.size == 0:
        return np.zeros(0, dtype=bool)
    pos = cloud.positions
    dist = np.sqrt(np.sum(displacement(cloud.domain, pos[u], pos[vs]) ** 2, axis=-1))
    p = connection_probability(spec, np.full(vs.shape, cloud.marks[u]), cloud.marks[vs], dist)
    uu = pair_uniforms(seed, np.full(vs.shape, u), vs)
    return (uu < np.asarray(p)) & (vs != u)


def find_star_chain(cloud, spec, x, params, seed=0):
    """Constructive search for K consecutive stars beyond the hyperplane through ``x``.

    Annulus k holds R_{k-1} ≤ |y - x| < R_k on the side (y - x)·x̂ ≥ 0. Star k
    has midpoint x_k (x itself for k = 1, otherwise the smallest mark in
    S_k with marks in [T_{k+1}, T_k)), at least r neighbours in S_k^{(1)}
    (marks in [1/2, 3/4)) and, for k ≥ 2, a connector in S_{k-1}^{(2)} (marks in
    [3/4, 1)) adjacent to x_{k-1} and x_k. The search stops at the first failure.
    """
    params.resolve(spec)
    K = int(params.K)
    r = params.r()
    if K == 0:
        return StarChainResult([], 0, 0, r)
    dom = cloud.domain
    pos = cloud.positions
    xpos = pos[x]
    if cloud.marks[x] >= params.t_sp(spec):
        raise ValueError("x must have mark below T_sp")
    norm = np.linalg.norm(xpos)
    if norm == 0:
        raise ValueError("x at the origin leaves the half-space undefined")
    nhat = xpos / norm
    R_end = params.radius(spec, K + 1)
    if dom.is_torus:
        if R_end > dom.L / 2:
            raise DomainTooSmall(f"R_(K+1) = {R_end:.6g} exceeds half the torus side")
    else:
        lo, hi = _halfball_extent(xpos, nhat, R_end)
        if np.any(lo < -dom.L / 2) or np.any(hi > dom.L / 2):
            raise DomainTooSmall(f"half-ball of radius R_(K+1) = {R_end:.6g} leaves the domain")
    disp = displacement(dom, xpos, pos)
    dist = np.sqrt(np.sum(disp ** 2, axis=1))
    beyond = disp @ nhat >= 0.0
    marks = cloud.marks
    ids = np.arange(cloud.size)
    useed = as_u64(seed)

    def annulus(k):
        return beyond & (dist >= params.radius(spec, k - 1)) & (dist < params.radius(spec, k)) & (ids != x)

    stars = []
    prev = None
    for k in range(1, K + 1):
        ring = annulus(k)
        if k == 1:
            mid = int(x)
        else:
            sk = ring & (marks >= params.mark_threshold(spec, k + 1)) & (marks < params.mark_threshold(spec, k))
            if not np.any(sk):
                break
            cand = ids[sk]
            mid = int(cand[np.lexsort((cand, marks[cand]))[0]])
        leaves = ids[ring & (marks >= 0.5) & (marks < 0.75)]
        nbrs = leaves[_adjacent(cloud, spec, useed, mid, leaves)]
        connector = None
        if k >= 2:
            pool = ids[annulus(k - 1) & (marks >= 0.75)]
            both = _adjacent(cloud, spec, useed, prev.midpoint, pool) & _adjacent(cloud, spec, useed, mid, pool)
            if not np.any(both):
                break
            connector = int(pool[both][0])
        if nbrs.shape[0] < r:
            break
        prev = StarRecord(k, mid, float(marks[mid]), tuple(int(v) for v in nbrs), connector)
        stars.append(prev)
    return StarChainResult(stars, len(stars), K, r)


# box hierarchy ------------------------------------------------------------------

@dataclass(frozen=True)
class BoxHierarchy:
    """Layers k = 0..k_p of cubes of side 2^k tiling [0, n_p 2^{k_p}]^d.

    Layer k uses mark interval (½ e^{-(k+1)θd}, ½ e^{-kθd}) for midpoints and
    color k for neighbour/connector candidates (marks ≥ 1/2).
    """

    n: float
    d: int
    a: float
    theta3: float
    eps1: float
    eps3: float
    S: int
    n_p: int
    k_p: int
    color_probs: np.ndarray

    def side(self, k):
        return self.n_p * 2 ** (self.k_p - k)

    def box_count(self, k):
        return self.side(k) ** self.d

    def mark_interval(self, k):
        td = self.theta3 * self.d
        return 0.5 * math.exp(-(k + 1) * td), 0.5 * math.exp(-k * td)

    def parent(self, v):
        return tuple(int(c) // 2 for c in v)

    def lattice(self, k):
        return itertools.product(range(self.side(k)), repeat=self.d)

    def snake(self):
        """Top-layer boxes in boustrophedon order; consecutive boxes share a face."""
        def rec(dim):
            if dim == 1:
                return [(i,) for i in range(self.side(self.k_p))]
            sub = rec(dim - 1)
            out = []
            for i in range(self.side(self.k_p)):
                out.extend((i,) + s for s in (sub if i % 2 == 0 else sub[::-1]))
            return out
        return rec(self.d)


def hierarchy_defaults(spec):
    """(a, theta3, eps1, eps3) at the midpoints of their admissible windows."""
    g = spec.gamma + spec.gamma / spec.delta
    ln2 = math.log(2.0)
    eps1 = 0.5 * ln2 * (g - 1.0)
    theta3 = 0.5 * ((eps1 + ln2) / g + ln2)
    eps3 = 0.5 * min(theta3 * spec.gamma, spec.delta * eps1)
    return 1.0 / (2.0 * ln2), theta3, eps1, eps3


def build_box_hierarchy(n, d, spec, a=None, theta3=None, eps1=None, eps3=None, S=3):
    """Materialize the layered tessellation; parameter windows are checked."""
    da, dt, de1, de3 = hierarchy_defaults(spec)
    a = da if a is None else a
    eps1 = de1 if eps1 is None else eps1
    theta3 = dt if theta3 is None else theta3
    eps3 = (0.5 * min(theta3 * spec.gamma, spec.delta * eps1)) if eps3 is None else eps3
    ln2 = math.log(2.0)
    g = spec.gamma + spec.gamma / spec.delta
    if not 0.0 < a < 1.0 / ln2:
        raise ValueError("window violated: 0 < a < 1/log 2")
    if not eps1 > 0.0:
        raise ValueError("window violated: eps1 > 0")
    if not (eps1 + ln2) / g < ln2:
        raise ValueError("window violated: (eps1 + log 2)/(gamma + gamma/delta) < log 2")
    if not (eps1 + ln2) / g < theta3 < ln2:
        raise ValueError("window violated: (eps1 + log 2)/(gamma + gamma/delta) < theta3 < log 2")
    if not 0.0 < eps3 < min(theta3 * spec.gamma, spec.delta * eps1):
        raise ValueError("window violated: 0 < eps3 < theta3*gamma ∧ delta*eps1")
    if S < 1:
        raise ValueError("star size S must be positive")
    # the guard keeps exact powers of two from flooring one step low
    n_p = int(math.floor(n ** ((1.0 - a * ln2) / d) + 1e-9))
    k_p = int(math.floor(a * math.log(n) / d + 1e-9))
    if n_p < 1:
        raise ValueError("volume too small for the hierarchy")
    rate = min(theta3 * spec.gamma, spec.delta * eps1) - eps3
    w = np.exp(-np.arange(k_p + 1) * d * rate)
    return BoxHierarchy(float(n), int(d), a, theta3, eps1, eps3, int(S), n_p, k_p, w / w.sum())


def _colors(h, cloud, seed):
    # per-vertex color in 0..k_p, or -1 for marks < 1/2 and for the null color
    u = np.array([key_uniform(seed, np.uint64(i)) for i in range(cloud.size)])
    cdf = np.cumsum(h.color_probs)
    col = np.searchsorted(cdf, u, side="right")
    col[col > h.k_p] = -1
    col[cloud.marks < 0.5] = -1
    return col


def classify_good_boxes(h, cloud, spec, seed, return_flags=False):
    """Per-layer counts of good boxes (index k = layer).

    The hierarchy is anchored at the domain corner (-L/2, ..., -L/2).
    """
    useed = as_u64(seed)
    cseed = as_u64(int(useed) ^ 0xC0105EED)
    corner = -0.5 * cloud.domain.L
    rel = cloud.positions - corner
    marks = cloud.marks
    ids = np.arange(cloud.size)
    col = _colors(h, cloud, cseed)
    flags = {}
    counts = np.zeros(h.k_p + 1, dtype=np.int64)

    def boxes_at(k, sel):
        side = h.side(k)
        cell = np.floor(rel[sel] / 2 ** k).astype(np.int64)
        inside = np.all((cell >= 0) & (cell < side), axis=1)
        out = {}
        for i, c in zip(ids[sel][inside], map(tuple, cell[inside])):
            out.setdefault(c, []).append(int(i))
        return out

    def star_ok(mid, nset):
        if len(nset) < h.S:
            return False
        return int(np.count_nonzero(_adjacent(cloud, spec, useed, mid, nset))) >= h.S

    def connected(a_, b_, cset):
        if not cset:
            return False
        both = _adjacent(cloud, spec, useed, a_, cset) & _adjacent(cloud, spec, useed, b_, cset)
        return bool(np.any(both))

    mids = {}
    for k in range(h.k_p, -1, -1):
        lo, hi = h.mark_interval(k)
        cand = boxes_at(k, (marks > lo) & (marks < hi))
        mids[k] = {c: min(v, key=lambda i: (marks[i], i)) for c, v in cand.items()}
        colored = boxes_at(k, col == k)
        nsets = {c: [i for i in v if marks[i] < 0.75] for c, v in colored.items()}
        csets = {c: [i for i in v if marks[i] >= 0.75] for c, v in colored.items()}
        good = {}
        if k == h.k_p:
            prev = None
            for c in h.snake():
                m = mids[k].get(c)
                ok = m is not None and star_ok(m, nsets.get(c, []))
                if ok and prev is not None:
                    ok = prev[1] and connected(prev[0], m, csets.get(c, []))
                good[c] = ok
                prev = (m, ok)
                if not ok:
                    break
        else:
            for c, m in mids[k].items():
                par = h.parent(c)
                if not flags[k + 1].get(par, False):
                    continue
                good[c] = star_ok(m, nsets.get(c, [])) and connected(mids[k + 1][par], m, csets.get(c, []))
        flags[k] = good
        counts[k] = sum(good.values())
    if return_flags:
        return counts, flags
    return counts


def good_box_fraction(counts, h):
    """Layer-0 good count divided by the volume n."""
    return float(counts[0]) / h.n
