"""Numerical companions of the path-counting bounds.

ν_n(s) = ∫_ℓ^1 ν_{n-1}(u) K(u, s) du with K(u, s) = κ (u∧s)^{-γ} (u∨s)^{γ-1}
and ν_1(s) = K(t0, s); its bound α_n s^{-γ} + 1{s≥ℓ} β_n s^{γ-1}; trace sets
Q_A, R_A and their (2λ)^{|p|} weights.
"""

import math
import warnings
from dataclasses import dataclass
from functools import lru_cache

import numpy as np


@dataclass(frozen=True)
class BoundsParams:
    kappa: float
    gamma: float
    ell: float
    t0: float
    c_const: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.gamma < 1.0:
            raise ValueError("gamma must lie in (0, 1)")
        if not 0.0 < self.ell < 1.0:
            raise ValueError("ell must lie in (0, 1)")
        if not 0.0 < self.t0 < 1.0:
            raise ValueError("t0 must lie in (0, 1)")
        if not self.kappa > 0.0 or not self.c_const > 0.0:
            raise ValueError("kappa and c_const must be positive")

    @property
    def log_inv_ell(self):
        return math.log(1.0 / self.ell)

    def window(self):
        """(holds, message) for c^{-2} < log(1/ℓ)^2 < ℓ^{1-2γ}/3."""
        L2 = self.log_inv_ell ** 2
        lo = self.c_const ** -2
        hi = self.ell ** (1.0 - 2.0 * self.gamma) / 3.0
        if not lo < L2:
            return False, f"c^-2 = {lo:.6g} is not below log(1/ell)^2 = {L2:.6g}"
        if not L2 < hi:
            return False, f"log(1/ell)^2 = {L2:.6g} is not below ell^(1-2gamma)/3 = {hi:.6g}"
        return True, ""


class WindowViolation(ValueError):
    pass


def kernel_K(kappa, gamma, u, s):
    lo, hi = np.minimum(u, s), np.maximum(u, s)
    return kappa * lo ** (-gamma) * hi ** (gamma - 1.0)


_GL_X, _GL_W = np.polynomial.legendre.leggauss(12)


def _bary_weights(x):
    w = np.array([1.0 / np.prod(x[j] - np.delete(x, j)) for j in range(x.shape[0])])
    return w


_BARY = _bary_weights(_GL_X)


def _interp(xn, fn, x):
    # barycentric Lagrange interpolation of node values fn at points x (reference panel)
    diff = x[:, None] - xn[None, :]
    exact = diff == 0
    diff[exact] = 1.0
    tmp = _BARY[None, :] / diff
    out = (tmp @ fn) / tmp.sum(axis=1)
    hit = exact.any(axis=1)
    if np.any(hit):
        out[hit] = fn[np.argmax(exact[hit], axis=1)]
    return out


class NuEvaluator:
    """ν_n evaluated by panel Gauss–Legendre quadrature in w = log u.

    Panels of width ≤ ``width`` cover [log ℓ, 0] with a breakpoint at log t0;
    the panel containing log s is split at log s, where K has its kink. Level
    n−1 is stored at the panel nodes and interpolated inside split panels.
    """

    def __init__(self, p, width=0.25):
        self.p = p
        a, b = math.log(p.ell), 0.0
        cuts = [a, b]
        if a < math.log(p.t0) < b:
            cuts.append(math.log(p.t0))
        cuts = sorted(cuts)
        edges = [cuts[0]]
        for lo, hi in zip(cuts[:-1], cuts[1:]):
            m = max(1, math.ceil((hi - lo) / width))
            edges.extend(np.linspace(lo, hi, m + 1)[1:].tolist())
        self.edges = np.array(edges)
        lo, hi = self.edges[:-1, None], self.edges[1:, None]
        self.nodes = 0.5 * (hi - lo) * _GL_X[None, :] + 0.5 * (hi + lo)
        self.wts = 0.5 * (hi - lo) * _GL_W[None, :]
        self._levels = {}

    def _level_nodes(self, n):
        """ν_n at all panel nodes, shape (panels, 12)."""
        if n not in self._levels:
            u = np.exp(self.nodes)
            if n == 1:
                vals = kernel_K(self.p.kappa, self.p.gamma, self.p.t0, u)
            else:
                vals = np.array([self.value(n, float(s)) for s in u.ravel()]).reshape(u.shape)
            self._levels[n] = vals
        return self._levels[n]

    def value(self, n, s):
        p = self.p
        if n == 1:
            return float(kernel_K(p.kappa, p.gamma, p.t0, s))
        prev = self._level_nodes(n - 1)
        w = math.log(s)
        u = np.exp(self.nodes)
        total = 0.0
        split = -1
        if self.edges[0] < w < self.edges[-1]:
            split = int(np.searchsorted(self.edges, w, side="right") - 1)
            if self.edges[split] == w:
                split = -1
        mask = np.ones(self.nodes.shape[0], dtype=bool)
        if split >= 0:
            mask[split] = False
        f = prev[mask] * kernel_K(p.kappa, p.gamma, u[mask], s) * u[mask]
        total = float(np.sum(f * self.wts[mask]))
        if split >= 0:
            lo, hi = self.edges[split], self.edges[split + 1]
            for a, b in ((lo, w), (w, hi)):
                x = 0.5 * (b - a) * _GL_X + 0.5 * (b + a)
                ref = (2.0 * x - (lo + hi)) / (hi - lo)
                if n - 1 == 1:
                    vals = kernel_K(p.kappa, p.gamma, p.t0, np.exp(x))
                else:
                    vals = _interp(_GL_X, prev[split], ref)
                uu = np.exp(x)
                total += float(np.sum(vals * kernel_K(p.kappa, p.gamma, uu, s) * uu * 0.5 * (b - a) * _GL_W))
        return total


@lru_cache(maxsize=64)
def _evaluator(p):
    return NuEvaluator(p)


def nu_value(p, n, s):
    """ν_{ℓ,n}^{t0}(s) by iterated quadrature of the recursion."""
    if n < 1:
        raise ValueError("n must be at least 1")
    if not 0.0 < s < 1.0:
        raise ValueError("s must lie in (0, 1)")
    key = BoundsParams(p.kappa, p.gamma, p.ell, p.t0, 1.0)
    return _evaluator(key).value(int(n), float(s))


def log_alpha_beta(p, n):
    """(log α_n, log β_n) of the recursion, computed in log space."""
    if n < 1:
        raise ValueError("n must be at least 1")
    la = math.log(p.kappa) + (p.gamma - 1.0) * math.log(p.t0)
    lb = math.log(p.kappa) - p.gamma * math.log(p.t0)
    lc = math.log(p.c_const)
    lL = math.log(p.log_inv_ell)
    le = (1.0 - 2.0 * p.gamma) * math.log(p.ell)
    for _ in range(n - 1):
        la, lb = (lc + np.logaddexp(la + lL, lb), lc + np.logaddexp(la + le, lb + lL))
    return float(la), float(lb)


def alpha_beta(p, n):
    """α_n, β_n from α_{n+1} = c(α_n L + β_n), β_{n+1} = c(α_n ℓ^{1-2γ} + β_n L).

    L = log(1/ℓ), α_1 = κ t0^{γ-1}, β_1 = κ t0^{-γ}. Up to n = 50 the recursion
    is run directly; beyond that in log space (returns inf on overflow).
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    if n > 50:
        la, lb = log_alpha_beta(p, n)
        with np.errstate(over="ignore"):
            return float(np.exp(la)), float(np.exp(lb))
    a = p.kappa * p.t0 ** (p.gamma - 1.0)
    b = p.kappa * p.t0 ** (-p.gamma)
    c, L, e = p.c_const, p.log_inv_ell, p.ell ** (1.0 - 2.0 * p.gamma)
    for _ in range(n - 1):
        a, b = c * (a * L + b), c * (a * e + b * L)
    return a, b


def alpha_closed_bound(p, n, check_window=True):
    """(2c)^{n-2} c^2 (ℓ^{1/2-γ} t0^{γ-1} + t0^{-γ}) ℓ^{(1-2γ)(n/2-1)}.

    Raises
    ------
    WindowViolation
        When ``check_window`` and c, ℓ sit outside the admissible window.
    """
    if n < 2:
        raise ValueError("closed bound needs n >= 2")
    if check_window:
        ok, msg = p.window()
        if not ok:
            raise WindowViolation(msg)
    g, c, ell, t0 = p.gamma, p.c_const, p.ell, p.t0
    return ((2 * c) ** (n - 2) * c ** 2 * (ell ** (0.5 - g) * t0 ** (g - 1) + t0 ** (-g))
            * ell ** ((1 - 2 * g) * (n / 2 - 1)))


def nu_bound(p, n, s):
    a, b = alpha_beta(p, n)
    return a * s ** (-p.gamma) + (b * s ** (p.gamma - 1.0) if s >= p.ell else 0.0)


def fit_constant_c(p, n_max, grid, tol=1e-4, c_max=1e6):
    """Smallest c (to ``tol``) with ν_n(s) ≤ α_n s^{-γ} + 1{s≥ℓ} β_n s^{γ-1}
    for n = 2..n_max and every s in ``grid``."""
    grid = [float(s) for s in grid]
    nus = {(n, s): nu_value(p, n, s) for n in range(2, n_max + 1) for s in grid}

    def ok(c):
        q = BoundsParams(p.kappa, p.gamma, p.ell, p.t0, c)
        return all(v <= nu_bound(q, n, s) for (n, s), v in nus.items())

    hi = 1.0
    while not ok(hi):
        hi *= 2.0
        if hi > c_max:
            raise RuntimeError(f"no c <= {c_max:g} dominates the quadrature")
    lo = 0.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if ok(mid):
            hi = mid
        else:
            lo = mid
    return hi


def bounds_table(p, n_max, grid, nu_levels=4):
    """Rows (n, alpha_n, beta_n, closed_bound, nu_check_max_ratio).

    The ν check (max over ``grid`` of ν_n / bound) is computed for n ≤
    ``nu_levels`` and left as NaN above; the closed bound is NaN at n = 1 or
    when the window fails.
    """
    ok, _ = p.window()
    rows = []
    for n in range(1, n_max + 1):
        a, b = alpha_beta(p, n)
        cb = alpha_closed_bound(p, n, check_window=False) if (n >= 2 and ok) else float("nan")
        if n <= nu_levels:
            ratio = max(nu_value(p, n, s) / nu_bound(p, n, s) for s in grid)
        else:
            ratio = float("nan")
        rows.append((n, a, b, cb, ratio))
    return rows


# traces -------------------------------------------------------------------------

MAX_TRACE_LENGTH = 12
MAX_TRACE_GRAPH = 1000


@dataclass(frozen=True)
class TraceQuery:
    root: int
    A: frozenset = frozenset()
    max_length: int = 4

    def __post_init__(self):
        object.__setattr__(self, "A", frozenset(int(v) for v in self.A))
        if self.root in self.A:
            raise ValueError("root must not belong to A")


@dataclass(frozen=True)
class TraceEnumeration:
    Q: dict
    R: dict

    def q_count(self, n):
        return len(self.Q.get(n, []))

    def r_count(self, n):
        return len(self.R.get(n, []))

    def all_traces(self):
        out = []
        for d in (self.Q, self.R):
            for n in sorted(d):
                out.extend(d[n])
        return out


def enumerate_traces(graph, q):
    """Depth-first enumeration of Q_A^n (n ≥ 1) and R_A^n (n ≥ 3) up to ``q.max_length`` edges.

    Q_A^n: the first n vertices are distinct and outside A, the last lies in A.
    R_A^n: the first n vertices are distinct and outside A, the last repeats one of them.
    """
    if q.max_length > MAX_TRACE_LENGTH:
        raise ValueError(f"max length {q.max_length} exceeds the guard {MAX_TRACE_LENGTH}")
    if graph.n_vertices > MAX_TRACE_GRAPH:
        raise ValueError(f"graph has more than {MAX_TRACE_GRAPH} vertices")
    Q, R = {}, {}
    adj = graph.adjacency
    path = [int(q.root)]
    on_path = {int(q.root)}

    def dfs():
        n = len(path)
        for w in adj[path[-1]]:
            if w in q.A:
                Q.setdefault(n, []).append(tuple(path) + (w,))
            elif w in on_path:
                if n >= 3:
                    R.setdefault(n, []).append(tuple(path) + (w,))
            elif n < q.max_length:
                path.append(w)
                on_path.add(w)
                dfs()
                path.pop()
                on_path.discard(w)

    dfs()
    return TraceEnumeration(Q, R)


def trace_weight_sum(graph, q, lam):
    """Σ (2λ)^{|p|} over the enumerated Q_A ∪ R_A."""
    if not lam < 0.5:
        raise ValueError("lambda must be below 1/2")
    e = enumerate_traces(graph, q)
    return float(sum((2 * lam) ** n * (e.q_count(n) + e.r_count(n))
                     for n in set(e.Q) | set(e.R)))


def survival_upper_bound(deg_root, lam, c_lemma, T, weight_sum):
    """exp(c λ² deg)/T + T · weight_sum."""
    if not T > 0:
        raise ValueError("T must be positive")
    if not lam < 0.5:
        raise ValueError("lambda must be below 1/2")
    if math.isinf(T):
        return 0.0 if weight_sum == 0 else math.inf
    return math.exp(c_lemma * lam ** 2 * deg_root) / T + T * weight_sum


def optimal_T(deg_root, lam, c_lemma, weight_sum):
    """Minimizer sqrt(exp(c λ² deg) / weight_sum); infinite when the sum vanishes."""
    if weight_sum <= 0:
        return math.inf
    return math.sqrt(math.exp(c_lemma * lam ** 2 * deg_root) / weight_sum)


def rho_tau_rate(lam, tau):
    """λ^{1/(3-τ)} on (2, 5/2]; λ^{2τ-3}/log(1/λ)^{τ-2} on (5/2, 3];
    λ^{2τ-3}/log(1/λ)^{2τ-4} above 3."""
    if not tau > 2:
        raise ValueError("tau must exceed 2")
    if not 0.0 < lam < 1.0:
        raise ValueError("lambda must lie in (0, 1)")
    if tau <= 2.5:
        return lam ** (1.0 / (3.0 - tau))
    if tau <= 3.0:
        return lam ** (2 * tau - 3) / math.log(1 / lam) ** (tau - 2)
    return lam ** (2 * tau - 3) / math.log(1 / lam) ** (2 * tau - 4)


def gamma_envelope(lam, gamma):
    """λ^{2/γ-1} / log(1/λ)^{(1-γ)/γ}."""
    if not 0.0 < gamma < 1.0 or not 0.0 < lam < 1.0:
        raise ValueError("gamma and lambda must lie in (0, 1)")
    return lam ** (2.0 / gamma - 1.0) / math.log(1.0 / lam) ** ((1.0 - gamma) / gamma)
