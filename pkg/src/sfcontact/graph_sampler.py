"""Bernoulli edge sampling over point clouds.

Randomness for the pair {u, v} is a counter hash of the seed and the two vertex
keys, so any sampler (exact scan, accelerated thinning, lazy reveal) can replay
the draw for a given pair without consuming a shared stream.
"""

import math
from dataclasses import dataclass

import numba
import numpy as np

from .kernels import kernel_value
from .rng import as_u64, fmix64, key_uniform, pair_uniform

EXACT_LIMIT = 50_000
ACCELERATED_ABOVE = 2_000


@dataclass(frozen=True, eq=False)
class GraphSample:
    """Immutable undirected simple graph in CSR form over ``cloud``."""

    cloud: object
    indptr: np.ndarray
    indices: np.ndarray

    def __post_init__(self):
        self.indptr.flags.writeable = False
        self.indices.flags.writeable = False

    @property
    def n_vertices(self):
        return self.indptr.shape[0] - 1

    @property
    def edge_count(self):
        return self.indices.shape[0] // 2

    def neighbors(self, v):
        return self.indices[self.indptr[v]:self.indptr[v + 1]]

    @property
    def adjacency(self):
        return [self.neighbors(v).tolist() for v in range(self.n_vertices)]

    def edges(self):
        """(E, 2) array of edges with u < v, lexicographically sorted."""
        src = np.repeat(np.arange(self.n_vertices), np.diff(self.indptr))
        keep = src < self.indices
        return np.column_stack([src[keep], self.indices[keep]])

    @classmethod
    def from_edges(cls, n, edges, cloud=None):
        """Build from an edge array; duplicates and self-loops are dropped."""
        e = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        e = e[e[:, 0] != e[:, 1]]
        e = np.sort(e, axis=1)
        e = np.unique(e, axis=0)
        src = np.concatenate([e[:, 0], e[:, 1]])
        dst = np.concatenate([e[:, 1], e[:, 0]])
        order = np.lexsort((dst, src))
        src, dst = src[order], dst[order]
        indptr = np.zeros(n + 1, dtype=np.int64)
        np.add.at(indptr, src + 1, 1)
        return cls(cloud, np.cumsum(indptr), dst.astype(np.int64))


def degree_sequence(graph):
    return np.diff(graph.indptr).astype(np.int64)


def vertex_keys(cloud, mode="id"):
    """Per-vertex uint64 keys for pair randomness.

    ``"id"`` uses the vertex id; ``"position"`` hashes the position and mark
    bits, which makes the edge set invariant under relabelling.
    """
    n = cloud.size
    if mode == "id":
        return np.arange(n, dtype=np.uint64)
    if mode != "position":
        raise ValueError(f"unknown key mode {mode!r}")
    bits = np.column_stack([cloud.positions, cloud.marks]).view(np.uint64)
    return _hash_rows(np.ascontiguousarray(bits))


@numba.njit(cache=True)
def _hash_rows(bits):
    out = np.empty(bits.shape[0], dtype=np.uint64)
    for i in range(bits.shape[0]):
        h = np.uint64(0x243F6A8885A308D3)
        for k in range(bits.shape[1]):
            h = fmix64(h ^ bits[i, k])
        out[i] = h
    return out


@numba.njit(cache=True)
def _dist(pos, i, j, L, torus):
    acc = 0.0
    for k in range(pos.shape[1]):
        x = pos[j, k] - pos[i, k]
        if torus:
            if x > 0.5 * L:
                x -= L
            elif x < -0.5 * L:
                x += L
        acc += x * x
    return np.sqrt(acc)


@numba.njit(cache=True)
def _push(buf, n, a, b):
    if n >= buf.shape[0]:
        new = np.empty((2 * buf.shape[0], 2), dtype=np.int64)
        new[:n] = buf[:n]
        buf = new
    buf[n, 0] = a
    buf[n, 1] = b
    return buf


@numba.njit(cache=True)
def _exact_edges(pos, marks, keys, L, torus, code, prm, seed):
    n = marks.shape[0]
    buf = np.empty((max(16, 4 * n), 2), dtype=np.int64)
    m = 0
    for i in range(n):
        for j in range(i + 1, n):
            p = kernel_value(code, prm, marks[i], marks[j], _dist(pos, i, j, L, torus))
            if p > 0.0 and pair_uniform(seed, keys[i], keys[j]) < p:
                buf = _push(buf, m, i, j)
                m += 1
    return buf[:m]


def _check_kernel(cloud, spec):
    if spec.dim != cloud.domain.d:
        raise ValueError(f"kernel dim {spec.dim} differs from cloud dimension {cloud.domain.d}")


def sample_graph_exact(cloud, spec, seed, allow_large=False, key_mode="id"):
    """Test every pair (i, j), i < j, once against one keyed uniform.

    Refuses more than 50 000 vertices unless ``allow_large`` is set.
    """
    _check_kernel(cloud, spec)
    if cloud.size > EXACT_LIMIT and not allow_large:
        raise ValueError(
            f"exact sampler refuses {cloud.size} > {EXACT_LIMIT} vertices; "
            "use the accelerated sampler or pass allow_large=True"
        )
    edges = _exact_edges(
        cloud.positions, cloud.marks, vertex_keys(cloud, key_mode),
        float(cloud.domain.L), cloud.domain.is_torus, spec.code, spec.packed(), as_u64(seed),
    )
    return GraphSample.from_edges(cloud.size, edges, cloud)


# accelerated sampler ---------------------------------------------------------

def _levels(L):
    """Cell grids m_j = floor(L / 2^j) while m_j >= 3, side h_j = L / m_j."""
    sizes = []
    j = 0
    while L > 0 and int(np.floor(L / 2.0 ** j)) >= 3:
        m = int(np.floor(L / 2.0 ** j))
        sizes.append((m, L / m))
        j += 1
    return sizes


@numba.njit(cache=True)
def _near(coords, jj, u, v, m, torus):
    for k in range(coords.shape[2]):
        df = abs(coords[jj, u, k] - coords[jj, v, k])
        if torus:
            df = min(df, m - df)
        if df > 1:
            return False
    return True


@numba.njit(cache=True)
def _geometric(q, big):
    # trials to first success; log1p keeps tiny q (where 1 - q rounds to 1) exact
    if q >= 1.0:
        return np.int64(1)
    g = np.floor(np.log(1.0 - np.random.random()) / np.log1p(-q)) + 1.0
    return np.int64(g) if g < big else big


@numba.njit(cache=True)
def _accel_level(j, ms, coords, pos, marks, keys, band, q, L, torus, code, prm,
                 seed, seg_cell, seg_band, seg_start, seg_end, order, buf, nbuf):
    n = marks.shape[0]
    d = pos.shape[1]
    nb = q.shape[0]
    m = ms[j]
    top = j == ms.shape[0] - 1
    nxt = np.empty((nb, nb), dtype=np.int64)
    cum = np.zeros((nb, nb), dtype=np.int64)
    big = np.int64(1) << np.int64(62)
    for a in range(nb):
        for b in range(nb):
            nxt[a, b] = _geometric(q[a, b], big) - 1 if q[a, b] > 0.0 else big
    noff = 1 if top else 3 ** d
    cell = np.empty(d, dtype=np.int64)
    for u in range(n):
        a = band[u]
        for o in range(noff):
            ok = True
            flat = 0
            rem = o
            for k in range(d):
                off = rem % 3 - 1 if not top else 0
                rem //= 3
                c = coords[j, u, k] + off
                if torus:
                    c %= m
                elif c < 0 or c >= m:
                    ok = False
                cell[k] = c
                flat = flat * m + c
            if not ok:
                continue
            # segments of this cell, one per band present, sorted by band
            s0 = np.searchsorted(seg_cell, flat)
            s1 = np.searchsorted(seg_cell, flat, side="right")
            for sg in range(s0, s1):
                b = seg_band[sg]
                if b < a:
                    continue
                cnt = seg_end[sg] - seg_start[sg]
                base = cum[a, b]
                cum[a, b] = base + cnt
                while nxt[a, b] < base + cnt:
                    v = order[seg_start[sg] + nxt[a, b] - base]
                    nxt[a, b] += _geometric(q[a, b], big)
                    if v == u or (a == b and v < u):
                        continue
                    lower = False
                    for jj in range(j):
                        if _near(coords, jj, u, v, ms[jj], torus):
                            lower = True
                            break
                    if lower:
                        continue
                    p = kernel_value(code, prm, marks[u], marks[v], _dist(pos, u, v, L, torus))
                    if pair_uniform(seed, keys[u], keys[v]) * q[a, b] < p:
                        buf = _push(buf, nbuf, min(u, v), max(u, v))
                        nbuf += 1
    return buf, nbuf


@numba.njit(cache=True)
def _seed_numba(s):
    np.random.seed(s)


def sample_graph_accelerated(cloud, spec, seed, key_mode="id"):
    """Same edge law as :func:`sample_graph_exact` at near-linear cost.

    Pairs are assigned to the finest cell level at which they sit in
    neighbouring cells. Per (level, mark band, mark band) the kernel at the
    band's minimal marks and the level's minimal distance is an upper envelope
    q; candidates are drawn by geometric skipping with success q and kept with
    probability p / q using the pair-keyed uniform.
    """
    _check_kernel(cloud, spec)
    n = cloud.size
    if n < 2:
        return GraphSample.from_edges(n, np.empty((0, 2)), cloud)
    dom = cloud.domain
    L = float(dom.L)
    d = dom.d
    levels = _levels(L) + [(1, L)]
    ms = np.array([m for m, _ in levels], dtype=np.int64)
    hs = [h for _, h in levels]
    coords = np.empty((len(levels), n, d), dtype=np.int64)
    shifted = cloud.positions + 0.5 * L
    for j, (m, h) in enumerate(levels):
        coords[j] = np.clip(np.floor(shifted / h).astype(np.int64), 0, m - 1)
    marks = cloud.marks
    band = np.minimum(np.floor(-np.log2(marks)).astype(np.int64), 62)
    nb = int(band.max()) + 1
    band_min = np.ones(nb)
    np.minimum.at(band_min, band, marks)
    code, prm = spec.code, spec.packed()
    keys = vertex_keys(cloud, key_mode)
    useed = as_u64(seed)
    _seed_numba(np.uint32(int(fmix64(useed ^ np.uint64(0x5A17))) & 0xFFFFFFFF))
    buf = np.empty((max(16, 4 * n), 2), dtype=np.int64)
    nbuf = 0
    for j in range(len(levels)):
        lb = 0.0 if j == 0 else hs[j - 1]
        q = np.empty((nb, nb))
        for a in range(nb):
            for b in range(nb):
                q[a, b] = kernel_value(code, prm, band_min[a], band_min[b], lb)
        flat = np.zeros(n, dtype=np.int64)
        for k in range(d):
            flat = flat * ms[j] + coords[j, :, k]
        order = np.lexsort((band, flat))
        fk, bk = flat[order], band[order]
        brk = np.flatnonzero((np.diff(fk) != 0) | (np.diff(bk) != 0)) + 1
        starts = np.concatenate([[0], brk]).astype(np.int64)
        ends = np.concatenate([brk, [n]]).astype(np.int64)
        buf, nbuf = _accel_level(
            j, ms, coords, cloud.positions, marks, keys, band, q, L, dom.is_torus,
            code, prm, useed, fk[starts], bk[starts], starts, ends,
            order.astype(np.int64), buf, nbuf,
        )
    return GraphSample.from_edges(n, buf[:nbuf], cloud)


def sample_graph(cloud, spec, seed, key_mode="id"):
    """Exact scan for small clouds, accelerated sampler otherwise."""
    if cloud.size <= ACCELERATED_ABOVE:
        return sample_graph_exact(cloud, spec, seed, key_mode=key_mode)
    return sample_graph_accelerated(cloud, spec, seed, key_mode=key_mode)


@numba.njit(cache=True)
def reveal_neighbors_nb(pos, marks, keys, L, torus, code, prm, seed, u, out):
    """Fill ``out`` with the neighbours of ``u`` under the exact sampler's draws.

    The uniform is drawn first and compared with a cached envelope
    ``kernel(t_u, lower end of v's mark binade, lower end of the distance
    binade)``. The kernel is nonincreasing in both marks and in distance, so
    the exact probability is only evaluated for pairs that pass.
    """
    env = np.full((128, 64), -1.0)
    fbuf = np.empty(2)
    ibuf = fbuf.view(np.int64)
    tu = marks[u]
    k = 0
    for v in range(marks.shape[0]):
        if v == u:
            continue
        w = pair_uniform(seed, keys[u], keys[v])
        r = _dist(pos, u, v, L, torus)
        if r > 0.0:
            fbuf[0] = marks[v]
            fbuf[1] = r
            em = ((ibuf[0] >> 52) & 0x7FF) - 1022
            er = ((ibuf[1] >> 52) & 0x7FF) - 1022
            mi = -em
            ri = er + 64
            if mi < 64 and 0 <= ri < 128:
                q = env[ri, mi]
                if q < 0.0:
                    q = kernel_value(code, prm, tu, math.ldexp(0.5, em), math.ldexp(0.5, er))
                    env[ri, mi] = q
                if w >= q:
                    continue
        p = kernel_value(code, prm, tu, marks[v], r)
        if p > 0.0 and w < p:
            out[k] = v
            k += 1
    return k


def reveal_neighbors(cloud, spec, seed, u, key_mode="id"):
    """Neighbour ids of ``u`` exactly as :func:`sample_graph_exact` would draw them."""
    _check_kernel(cloud, spec)
    out = np.empty(cloud.size, dtype=np.int64)
    k = reveal_neighbors_nb(
        cloud.positions, cloud.marks, vertex_keys(cloud, key_mode), float(cloud.domain.L),
        cloud.domain.is_torus, spec.code, spec.packed(), as_u64(seed), int(u), out,
    )
    return out[:k].copy()


def write_graph(graph, edge_path, vertex_path):
    """Edge list ``u v`` and vertex table ``id x_1..x_d mark`` (12 significant digits)."""
    with open(edge_path, "w") as fh:
        for u, v in graph.edges():
            fh.write(f"{u} {v}\n")
    cloud = graph.cloud
    with open(vertex_path, "w") as fh:
        for i in range(cloud.size):
            xs = " ".join(f"{x:.12g}" for x in cloud.positions[i])
            fh.write(f"{i} {xs} {cloud.marks[i]:.12g}\n")
