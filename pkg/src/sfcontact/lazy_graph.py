"""Lazily revealed graphs over a point cloud.

A pair {u, v} is decided once, when the first of its endpoints is revealed;
the outcome is stored as pending for the other endpoint. The revealed graph
therefore has the same law as the exact sampler's graph whatever the reveal
order, while a reveal costs roughly the vertex's degree plus a polylogarithmic
number of index lookups instead of a scan over the whole cloud.

Space is cut into nested dyadic cells: 2^K cells per axis at level 0 and
2^{K-l} at level l. A pair belongs to the finest level at which its cells touch
(coordinates differ by at most one per axis), and pairs that touch at no level
below the top are handled by the top level. Vertices are sorted by mark binade
and then by the Morton key of their level-0 cell, so inside one binade every
cell of every level is a contiguous key range. For each (level, touching cell,
binade) the kernel at the binade's lower mark and the level's minimal distance
is an envelope q; candidates are found by geometric skipping and accepted with
probability p / q.
"""

from dataclasses import dataclass

import numba
import numpy as np

from .graph_sampler import _dist
from .kernels import kernel_value
from .rng import GOLDEN, as_u64, fmix64

NBINADE = 64


def dyadic_levels(L, d):
    """Return (K, h_0, number of non-top levels) of the nested cell hierarchy.

    h_0 = L / 2^K with 2^K the largest power of two not above L, capped so the
    d·K Morton bits fit in 62 bits. Level l has 2^{K-l} ≥ 4 cells per axis.
    """
    if L < 4:
        return 0, max(float(L), 1.0), 0
    K = min(int(np.floor(np.log2(L))), 62 // d)
    while 2.0 ** K > L:
        K -= 1
    return K, L / 2.0 ** K, max(0, K - 1)


@numba.njit(cache=True)
def _cell0(x, L, h0, m0):
    c = np.int64(np.floor((x + 0.5 * L) / h0))
    if c < 0:
        return np.int64(0)
    if c >= m0:
        return m0 - 1
    return c


@numba.njit(cache=True)
def _morton(coords, d, bits):
    key = np.int64(0)
    for b in range(bits):
        for k in range(d):
            key |= ((coords[k] >> b) & 1) << (b * d + k)
    return key


@numba.njit(cache=True)
def _build_index(pos, marks, L, K, h0):
    n, d = pos.shape
    m0 = np.int64(1) << K
    binade = np.empty(n, dtype=np.int64)
    key = np.empty(n, dtype=np.int64)
    coords = np.empty(d, dtype=np.int64)
    cnt = np.zeros(NBINADE + 1, dtype=np.int64)
    for v in range(n):
        b = np.int64(np.floor(-np.log2(marks[v])))
        b = min(max(b, 0), NBINADE - 1)
        binade[v] = b
        cnt[b + 1] += 1
        for k in range(d):
            coords[k] = _cell0(pos[v, k], L, h0, m0)
        key[v] = _morton(coords, d, K)
    for b in range(NBINADE):
        cnt[b + 1] += cnt[b]
    bstart = cnt.copy()
    # two stable counting sorts: by key, then by binade
    kcnt = np.zeros((np.int64(1) << (d * K)) + 1, dtype=np.int64)
    for v in range(n):
        kcnt[key[v] + 1] += 1
    for i in range(kcnt.shape[0] - 1):
        kcnt[i + 1] += kcnt[i]
    by_key = np.empty(n, dtype=np.int64)
    for v in range(n):
        by_key[kcnt[key[v]]] = v
        kcnt[key[v]] += 1
    order = np.empty(n, dtype=np.int64)
    skey = np.empty(n, dtype=np.int64)
    fill = cnt[:NBINADE].copy()
    for i in range(n):
        v = by_key[i]
        order[fill[binade[v]]] = v
        skey[fill[binade[v]]] = key[v]
        fill[binade[v]] += 1
    return bstart, order, skey


@numba.njit(cache=True)
def _uniform(rs):
    # SplitMix64 counter stream; rs[0] is the state, result in (0, 1]
    rs[0] += GOLDEN
    return (float(fmix64(rs[0]) >> np.uint64(11)) + 1.0) * (1.0 / 9007199254740992.0)


@numba.njit(cache=True)
def _append(arr, k, x):
    if k >= arr.shape[0]:
        grown = np.empty(2 * arr.shape[0], dtype=arr.dtype)
        grown[:k] = arr[:k]
        arr = grown
    arr[k] = x
    return arr


@numba.njit(cache=True)
def _touch(pos, u, v, L, torus, h0, m0, level):
    # cells of u and v at ``level`` differ by at most one per axis
    m = m0 >> level
    for k in range(pos.shape[1]):
        df = abs((_cell0(pos[u, k], L, h0, m0) >> level) - (_cell0(pos[v, k], L, h0, m0) >> level))
        if torus:
            df = min(df, m - df)
        if df > 1:
            return False
    return True


@numba.njit(cache=True)
def lazy_reveal(u, pos, marks, L, torus, code, prm, K, h0, nlev, bstart, order, skey,
                revealed, pend_head, pend_next, pend_val, npend, rs, out):
    """Reveal ``u``; return (count, pending size, pending values, pending links, out).

    Edges to already revealed vertices are read from the pending lists; pairs
    with unrevealed vertices are drawn now and pushed onto the other
    endpoint's pending list. ``out[:count]`` holds the neighbours.
    """
    d = pos.shape[1]
    m0 = np.int64(1) << K
    revealed[u] = True
    k = 0
    e = pend_head[u]
    while e >= 0:
        out = _append(out, k, pend_val[e])
        k += 1
        e = pend_next[e]
    tu = marks[u]
    cu = np.empty(d, dtype=np.int64)
    for kk in range(d):
        cu[kk] = _cell0(pos[u, kk], L, h0, m0)
    cc = np.empty(d, dtype=np.int64)
    for l in range(nlev + 1):
        top = l == nlev
        lb = 0.0 if l == 0 else h0 * 2.0 ** (l - 1)
        m = m0 >> l
        noff = 1 if top else 3 ** d
        for b in range(NBINADE):
            if bstart[b] == bstart[b + 1]:
                continue
            q = kernel_value(code, prm, tu, 2.0 ** (-(b + 1)), lb)
            if q <= 0.0:
                continue
            for o in range(noff):
                if top:
                    s0, s1 = bstart[b], bstart[b + 1]
                else:
                    ok = True
                    rem = o
                    for kk in range(d):
                        c = (cu[kk] >> l) + rem % 3 - 1
                        rem //= 3
                        if torus:
                            c %= m
                        elif c < 0 or c >= m:
                            ok = False
                            break
                        cc[kk] = c
                    if not ok:
                        continue
                    lo = _morton(cc, d, K - l) << (d * l)
                    hi = lo + (np.int64(1) << (d * l))
                    seg = skey[bstart[b]:bstart[b + 1]]
                    s0 = bstart[b] + np.searchsorted(seg, lo)
                    s1 = bstart[b] + np.searchsorted(seg, hi)
                i = s0
                while i < s1:
                    if q < 1.0:
                        # compare as a float: for tiny q the skip overflows int64
                        skip = np.floor(np.log(_uniform(rs)) / np.log1p(-q))
                        if skip >= s1 - i:
                            break
                        i += np.int64(skip)
                    v = order[i]
                    i += 1
                    if v == u or revealed[v]:
                        continue
                    if l > 0 and _touch(pos, u, v, L, torus, h0, m0, l - 1):
                        continue
                    p = kernel_value(code, prm, tu, marks[v], _dist(pos, u, v, L, torus))
                    if _uniform(rs) * q < p:
                        out = _append(out, k, v)
                        k += 1
                        pend_val = _append(pend_val, npend, u)
                        pend_next = _append(pend_next, npend, pend_head[v])
                        pend_head[v] = npend
                        npend += 1
    return k, npend, pend_val, pend_next, out


@dataclass
class LazyGraph:
    """Neighbourhoods revealed on demand with the exact sampler's edge law.

    Parameters
    ----------
    cloud : PointCloud
    spec : KernelSpec
    seed : int
        Keys the counter stream used for the pair decisions.
    """

    cloud: object
    spec: object
    seed: int

    def __post_init__(self):
        if self.spec.dim != self.cloud.domain.d:
            raise ValueError("kernel and cloud dimensions differ")
        n = self.cloud.size
        L = float(self.cloud.domain.L)
        self.K, self.h0, self.nlev = dyadic_levels(L, self.cloud.domain.d)
        self.bstart, self.order, self.skey = _build_index(
            self.cloud.positions, self.cloud.marks, L, self.K, self.h0)
        self.revealed = np.zeros(n, dtype=np.bool_)
        self.pend_head = -np.ones(n, dtype=np.int64)
        self.pend_val = np.empty(64, dtype=np.int64)
        self.pend_next = np.empty(64, dtype=np.int64)
        self.npend = 0
        self.rs = np.array([fmix64(as_u64(self.seed) ^ np.uint64(0x1A27))], dtype=np.uint64)
        self._cache = {}

    def arrays(self):
        """Cloud, kernel and index arguments of :func:`lazy_reveal`, in order."""
        c = self.cloud
        return (c.positions, c.marks, float(c.domain.L), c.domain.is_torus, self.spec.code,
                self.spec.packed(), self.K, self.h0, self.nlev, self.bstart, self.order,
                self.skey)

    def neighbors(self, u):
        """Sorted neighbour ids of ``u``, revealing it on first request."""
        u = int(u)
        if u not in self._cache:
            out = np.empty(64, dtype=np.int64)
            k, self.npend, self.pend_val, self.pend_next, out = lazy_reveal(
                u, *self.arrays(), self.revealed, self.pend_head, self.pend_next,
                self.pend_val, self.npend, self.rs, out)
            self._cache[u] = np.sort(out[:k])
        return self._cache[u]
