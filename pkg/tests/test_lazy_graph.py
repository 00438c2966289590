import numpy as np
import pytest
from scipy import stats

from sfcontact.kernels import KernelSpec, connection_probability
from sfcontact.lazy_graph import LazyGraph, dyadic_levels
from sfcontact.point_process import Boundary, SpatialDomain, distance, sample_point_cloud

CASES = [
    (1, 60.0, Boundary.TORUS, KernelSpec("PrefAttachUpper", 0.8, 2.0, kappa2=0.3)),
    (1, 60.0, Boundary.FREE, KernelSpec("AgeRCM", 0.6, 1.5, beta_scale=0.5)),
    (2, 9.0, Boundary.TORUS, KernelSpec("PrefAttachUpper", 0.8, 2.0, kappa2=0.3, dim=2)),
]


def pair_probabilities(cloud, spec):
    n = cloud.size
    i, j = np.triu_indices(n, 1)
    r = distance(cloud.domain, cloud.positions[i], cloud.positions[j])
    return i, j, connection_probability(spec, cloud.marks[i], cloud.marks[j], r)


def reveal_all(cloud, spec, seed):
    g = LazyGraph(cloud, spec, seed)
    adj = np.zeros((cloud.size, cloud.size), dtype=bool)
    for u in np.random.default_rng(seed).permutation(cloud.size):
        adj[u, g.neighbors(u)] = True
    return adj


def test_dyadic_levels():
    K, h0, nlev = dyadic_levels(1000.0, 1)
    assert (K, nlev) == (9, 8) and h0 == pytest.approx(1000.0 / 512)
    assert dyadic_levels(3.0, 1)[2] == 0
    K, h0, _ = dyadic_levels(2.0 ** 40, 2)
    assert K == 31 and h0 == 2.0 ** 9


@pytest.mark.parametrize("d,L,bd,spec", CASES)
def test_pair_frequencies_match_kernel(d, L, bd, spec):
    cloud = sample_point_cloud(SpatialDomain(d, L, bd), 7)
    i, j, p = pair_probabilities(cloud, spec)
    runs = 300
    hits = np.zeros(p.size)
    for s in range(runs):
        adj = reveal_all(cloud, spec, s)
        assert np.array_equal(adj, adj.T)
        hits += adj[i, j]
    assert np.all(hits[p == 0.0] == 0) and np.all(hits[p == 1.0] == runs)
    inner = (p > 0.0) & (p < 1.0)
    var = runs * p[inner] * (1.0 - p[inner])
    chi2 = np.sum((hits[inner] - runs * p[inner]) ** 2 / var)
    assert stats.chi2.sf(chi2, inner.sum()) > 1e-3
    # total edge count, the quantity most sensitive to a systematic bias
    z = (hits.sum() - runs * p.sum()) / np.sqrt(var.sum())
    assert abs(z) < 4


def test_partial_reveal_law():
    # the first revealed vertex sees each pair at its kernel probability
    spec = KernelSpec("PrefAttachUpper", 0.8, 2.0, kappa2=0.5)
    cloud = sample_point_cloud(SpatialDomain(1, 200.0, Boundary.TORUS), 3)
    u = int(np.argmin(cloud.marks))
    r = distance(cloud.domain, cloud.positions[u], cloud.positions)
    p = connection_probability(spec, cloud.marks[u], cloud.marks, r)
    p[u] = 0.0
    degs = [LazyGraph(cloud, spec, s).neighbors(u).size for s in range(2000)]
    se = np.sqrt(np.sum(p * (1 - p)) / 2000)
    assert np.mean(degs) == pytest.approx(p.sum(), abs=4 * se)


def test_deterministic_and_cached():
    spec = KernelSpec(kappa2=0.3)
    cloud = sample_point_cloud(SpatialDomain(1, 100.0, Boundary.TORUS), 1)
    a, b = LazyGraph(cloud, spec, 5), LazyGraph(cloud, spec, 5)
    for u in range(0, cloud.size, 7):
        assert np.array_equal(a.neighbors(u), b.neighbors(u))
        assert a.neighbors(u) is a.neighbors(u)


def test_dimension_mismatch_rejected():
    cloud = sample_point_cloud(SpatialDomain(2, 5.0, Boundary.TORUS), 1)
    with pytest.raises(ValueError):
        LazyGraph(cloud, KernelSpec(kappa2=0.3), 1)


def test_tiny_envelopes_skip_past_cells():
    # q near 1e-20 makes the geometric skip exceed the int64 range
    spec = KernelSpec(kappa2=1e-40)
    cloud = sample_point_cloud(SpatialDomain(1, 5000.0, Boundary.TORUS), 2)
    g = LazyGraph(cloud, spec, 1)
    assert sum(g.neighbors(u).size for u in range(0, cloud.size, 50)) == 0
