"""Monte Carlo pipelines, CSV output and config-driven runs."""

import csv
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .. import __version__
from ..bounds import BoundsParams, bounds_table, fit_constant_c
from ..contact.engine import SimParams, run_lazy, run_next_event, extinction_times
from ..contact.graphical import EventStream, run_on_stream
from ..graph_sampler import (
    degree_sequence, sample_graph, sample_graph_accelerated, sample_graph_exact, write_graph,
)
from ..kernels import KernelSpec
from ..point_process import Boundary, SpatialDomain, add_palm_origin, sample_point_cloud
from ..rng import derive_stream_seed
from ..structure import (
    StarChainParams, build_box_hierarchy, classify_good_boxes, degree_tail_fit,
    find_star_chain, good_box_fraction,
)
from .config import load_config
from .fitting import censored_median, wilson_ci

WORKERS_ENV = "SFCONTACT_WORKERS"

# pipeline tags keep stream families apart
TAG_GAMMA, TAG_EXTINCTION, TAG_CHAIN, TAG_BOXES, TAG_GRAPH = 11, 12, 13, 14, 15


def stream_seed(master, tag, i=0, j=0):
    """Seed for replica ``j`` of parameter point ``i`` in pipeline family ``tag``."""
    return derive_stream_seed(derive_stream_seed(master, tag), (int(i) << 32) | int(j))


def default_workers():
    try:
        return max(1, int(os.environ.get(WORKERS_ENV, "1")))
    except ValueError:
        return 1


def _map(fn, items, workers):
    """Ordered map; results come back in item order whatever the schedule."""
    workers = workers or default_workers()
    items = list(items)
    if workers <= 1 or len(items) < 2:
        return [fn(x) for x in items]
    chunk = max(1, len(items) // (4 * workers))
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items, chunksize=chunk))


# Γ(λ) ----------------------------------------------------------------------------

@dataclass(frozen=True)
class GammaEstimateRecord:
    lam: float
    volume: float
    replicas: int
    survivals: int
    gamma_hat: float
    ci_low: float
    ci_high: float


def gamma_volume(lam, max_volume=1e6, exponent=4.0):
    """Torus volume min(max_volume, ceil(λ^{-exponent}))."""
    if lam <= 0:
        return float(max_volume)
    return float(min(max_volume, math.ceil(lam ** -exponent)))


def _gamma_replica(job):
    spec, lam, volume, horizon, cap, seed = job
    dom = SpatialDomain(spec.dim, volume ** (1.0 / spec.dim), Boundary.TORUS)
    cloud = add_palm_origin(sample_point_cloud(dom, derive_stream_seed(seed, 1)),
                            derive_stream_seed(seed, 2))
    out = run_lazy(cloud, spec, derive_stream_seed(seed, 3),
                   SimParams(lam, horizon, cap, derive_stream_seed(seed, 4)),
                   [cloud.palm_origin])
    return out.survived_proxy


def estimate_gamma(spec, lambdas, replicas, seed, max_volume=1e6, volume_exponent=4.0,
                   horizon=50.0, cap=200, workers=None):
    """Survival-proxy frequency from the Palm origin, one record per λ.

    Each replica draws a fresh torus cloud with an origin vertex and runs the
    contact process on the lazily revealed graph from the origin alone.
    """
    records = []
    for i, lam in enumerate(lambdas):
        vol = gamma_volume(lam, max_volume, volume_exponent)
        jobs = [(spec, float(lam), vol, horizon, cap, stream_seed(seed, TAG_GAMMA, i, r))
                for r in range(replicas)]
        surv = int(sum(_map(_gamma_replica, jobs, workers)))
        lo, hi = wilson_ci(surv, replicas)
        records.append(GammaEstimateRecord(float(lam), vol, int(replicas), surv,
                                           surv / replicas if replicas else 0.0, lo, hi))
    return records


# τ_n ------------------------------------------------------------------------------

@dataclass(frozen=True)
class ExtinctionRecord:
    n: float
    lam: float
    replica: int
    tau: float
    capped: bool
    vertices: int


def _extinction_replica(job):
    spec, lam, n, horizon, max_events, seed = job
    dom = SpatialDomain.from_volume(n, spec.dim)
    cloud = sample_point_cloud(dom, derive_stream_seed(seed, 1))
    if cloud.size == 0:
        return 0.0, False, 0
    graph = sample_graph(cloud, spec, derive_stream_seed(seed, 2))
    times, reason = extinction_times(graph, lam, range(cloud.size), 1,
                                     derive_stream_seed(seed, 3), horizon, 0, max_events)
    return float(times[0]), bool(reason[0] != 0), cloud.size


def extinction_scaling(spec, lam, volumes, replicas, seed, horizon=math.inf,
                       max_events=10**8, workers=None):
    """Extinction times from the fully infected box graph of each volume.

    Runs stopped by the horizon or the event budget are flagged ``capped`` and
    carry their stopping time.
    """
    records = []
    for i, n in enumerate(volumes):
        jobs = [(spec, float(lam), float(n), horizon, max_events,
                 stream_seed(seed, TAG_EXTINCTION, i, r)) for r in range(replicas)]
        for r, (tau, capped, nv) in enumerate(_map(_extinction_replica, jobs, workers)):
            records.append(ExtinctionRecord(float(n), float(lam), r, tau, capped, nv))
    return records


def extinction_medians(records):
    """{n: censored median of τ}."""
    by_n = {}
    for rec in records:
        by_n.setdefault(rec.n, []).append(rec)
    return {n: censored_median([r.tau for r in rs], [r.capped for r in rs])
            for n, rs in sorted(by_n.items())}


# star chain ---------------------------------------------------------------------

def star_chain_domain(spec, lambdas, K, beta_star=1.0, theta=None, offset=1.0):
    """Free box just large enough for every λ's half-ball of radius R_(K+1) around x = offset·e1."""
    R = max(StarChainParams(l, beta_star, theta, K).radius(spec, K + 1) for l in lambdas)
    return SpatialDomain(spec.dim, 2.0 * (R + offset) * (1 + 1e-9), Boundary.FREE)


def _chain_trial(job):
    spec, lambdas, K, beta_star, theta, seed = job
    dom = star_chain_domain(spec, lambdas, K, beta_star, theta)
    base = sample_point_cloud(dom, derive_stream_seed(seed, 1))
    u = float(np.random.default_rng(derive_stream_seed(seed, 2)).random())
    xpos = np.zeros((1, spec.dim))
    xpos[0, 0] = 1.0
    found = []
    results = []
    for lam in lambdas:
        params = StarChainParams(lam, beta_star, theta, K)
        # common random numbers: same cloud and same quantile of x's mark across λ
        mark = max(u, 1e-12) * params.t_sp(spec)
        cloud = base.with_vertices(xpos, [mark])
        res = find_star_chain(cloud, spec, cloud.size - 1, params, derive_stream_seed(seed, 3))
        found.append(res.found)
        results.append(res)
    return found, results


def star_chain_success(spec, lambdas, K, trials, seed, beta_star=1.0, theta=None, workers=None):
    """Per-λ frequency of complete chains over ``trials`` shared clouds."""
    jobs = [(spec, list(lambdas), K, beta_star, theta, stream_seed(seed, TAG_CHAIN, 0, r))
            for r in range(trials)]
    founds = np.array([f for f, _ in _map(_chain_trial, jobs, workers)])
    return [(float(l), float(np.mean(founds[:, i] == K))) for i, l in enumerate(lambdas)], founds


# boxes ------------------------------------------------------------------------

def _box_trial(job):
    spec, h, seed = job
    dom = SpatialDomain.from_volume(h.n, h.d)
    cloud = sample_point_cloud(dom, derive_stream_seed(seed, 1))
    return classify_good_boxes(h, cloud, spec, derive_stream_seed(seed, 2))


def good_box_runs(spec, n, clouds, seed, S=3, workers=None, **windows):
    h = build_box_hierarchy(n, spec.dim, spec, S=S, **windows)
    jobs = [(spec, h, stream_seed(seed, TAG_BOXES, int(n), r)) for r in range(clouds)]
    return h, _map(_box_trial, jobs, workers)


# CSV ------------------------------------------------------------------------

def _cell(v):
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_cell(v) for v in row])


GAMMA_HEADER = ["lambda", "volume", "replicas", "survivals", "gamma_hat", "ci_low", "ci_high"]
EXTINCTION_HEADER = ["n", "lambda", "replica", "tau", "capped", "vertices"]
BOXES_HEADER = ["layer", "boxes", "good"]
CHAIN_HEADER = ["star_index", "midpoint_mark", "neighbors", "connector_found"]
BOUNDS_HEADER = ["n", "alpha_n", "beta_n", "closed_bound", "nu_check_max_ratio"]


# config runner ----------------------------------------------------------------

def kernel_from_config(cfg):
    return KernelSpec(
        variant=cfg["kernel.variant"], gamma=cfg["kernel.gamma"], delta=cfg["kernel.delta"],
        alpha=cfg["kernel.alpha"], kappa1=cfg["kernel.kappa1"], kappa2=cfg["kernel.kappa2"],
        beta_scale=cfg["kernel.beta_scale"], dim=cfg["kernel.dim"],
    )


def _sample(cfg, spec, cloud, seed):
    kind = cfg["graph.sampler"]
    if kind == "exact":
        return sample_graph_exact(cloud, spec, seed)
    if kind == "accelerated":
        return sample_graph_accelerated(cloud, spec, seed)
    return sample_graph(cloud, spec, seed)


def _graph_from_config(cfg, spec, seed):
    dom = SpatialDomain(spec.dim, cfg["graph.volume"] ** (1.0 / spec.dim), cfg["graph.boundary"])
    cloud = add_palm_origin(sample_point_cloud(dom, stream_seed(seed, TAG_GRAPH, 0, 1)),
                            stream_seed(seed, TAG_GRAPH, 0, 2))
    return _sample(cfg, spec, cloud, stream_seed(seed, TAG_GRAPH, 0, 3))


def run_pipeline(cfg, out_dir, workers=None):
    """Execute ``cfg['pipeline']``, writing CSVs and ``manifest.json`` to ``out_dir``.

    Returns the list of files written.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    name = cfg["pipeline"]
    seed = cfg["run.seed"]
    workers = workers or cfg["run.workers"] or None
    spec = kernel_from_config(cfg)
    written = []
    extra = {}

    if name == "estimate_gamma":
        recs = estimate_gamma(spec, cfg["sim.lambda"], cfg["run.replicas"], seed,
                              cfg["gamma.max_volume"], cfg["gamma.volume_exponent"],
                              cfg["sim.horizon"], cfg["sim.cap"], workers)
        write_csv(out / "gamma.csv", GAMMA_HEADER,
                  [(r.lam, r.volume, r.replicas, r.survivals, r.gamma_hat, r.ci_low, r.ci_high)
                   for r in recs])
        written.append("gamma.csv")
    elif name == "extinction_scaling":
        lam = cfg["sim.lambda"][0]
        recs = extinction_scaling(spec, lam, cfg["extinction.volumes"], cfg["run.replicas"],
                                  seed, cfg["extinction.horizon"], cfg["sim.max_events"], workers)
        write_csv(out / "extinction.csv", EXTINCTION_HEADER,
                  [(r.n, r.lam, r.replica, r.tau, r.capped, r.vertices) for r in recs])
        written.append("extinction.csv")
        extra["medians"] = {repr(k): repr(v) for k, v in extinction_medians(recs).items()}
    elif name == "sample_graph":
        g = _graph_from_config(cfg, spec, seed)
        write_graph(g, out / "edges.txt", out / "vertices.txt")
        written += ["edges.txt", "vertices.txt"]
    elif name == "degree_stats":
        g = _graph_from_config(cfg, spec, seed)
        deg = degree_sequence(g)
        marks = g.cloud.marks
        rows = []
        for k in range(10):
            lo, hi = 10.0 ** -(k + 1), 10.0 ** -k
            sel = (marks >= lo) & (marks < hi)
            m = int(sel.sum())
            mean = float(deg[sel].mean()) if m else float("nan")
            se = float(deg[sel].std(ddof=1) / math.sqrt(m)) if m > 1 else float("nan")
            rows.append((lo, hi, m, mean, se))
        write_csv(out / "degrees.csv", ["mark_low", "mark_high", "vertices", "mean_degree", "stderr"], rows)
        written.append("degrees.csv")
        try:
            slope, se = degree_tail_fit(g, cfg["degree.k_min"])
            extra["tail_fit"] = {"slope": repr(slope), "stderr": repr(se)}
        except ValueError as exc:
            extra["tail_fit"] = {"error": str(exc)}
    elif name == "simulate":
        g = _graph_from_config(cfg, spec, seed)
        lam = cfg["sim.lambda"][0]
        origin = [g.cloud.palm_origin]
        sim_seed = stream_seed(seed, TAG_GRAPH, 0, 4)
        if cfg["sim.event_log"]:
            log = []
            stream = EventStream(g, lam, cfg["sim.horizon"], sim_seed)
            res = run_on_stream(stream, g, origin, cap=cfg["sim.cap"], log=log)
            (out / "events.log").write_text("".join(line + "\n" for line in log))
            written.append("events.log")
        else:
            res = run_next_event(g, SimParams(lam, cfg["sim.horizon"], cfg["sim.cap"], sim_seed), origin)
        write_csv(out / "simulate.csv",
                  ["extinction_time", "extinct", "survived_proxy", "ever_infected",
                   "peak_infected", "events_processed"],
                  [(res.extinction_time, res.extinct, res.survived_proxy, res.ever_infected,
                    res.peak_infected, res.events_processed)])
        written.append("simulate.csv")
    elif name == "star_chain":
        lams = cfg["sim.lambda"]
        K = cfg["chain.K"]
        jobs = [(spec, lams, K, cfg["chain.beta_star"], cfg["chain.theta"],
                 stream_seed(seed, TAG_CHAIN, 0, r)) for r in range(cfg["chain.clouds"])]
        trials = _map(_chain_trial, jobs, workers)
        first = trials[0][1][0]
        write_csv(out / "chain.csv", CHAIN_HEADER,
                  [(s.index, s.mark, len(s.neighbors), s.connector is not None) for s in first.stars])
        write_csv(out / "chain_summary.csv", ["lambda", "trial", "found", "requested"],
                  [(l, t, f[i], K) for t, (f, _) in enumerate(trials) for i, l in enumerate(lams)])
        written += ["chain.csv", "chain_summary.csv"]
    elif name == "box_hierarchy":
        windows = {k: cfg[f"boxes.{k}"] for k in ("a", "theta3", "eps1", "eps3")}
        h, runs = good_box_runs(spec, cfg["boxes.n"], cfg["boxes.clouds"], seed, cfg["boxes.S"],
                                workers, **windows)
        write_csv(out / "boxes.csv", BOXES_HEADER,
                  [(k, h.box_count(k), int(runs[0][k])) for k in range(h.k_p + 1)])
        write_csv(out / "box_summary.csv", ["cloud", "fraction"],
                  [(i, good_box_fraction(c, h)) for i, c in enumerate(runs)])
        written += ["boxes.csv", "box_summary.csv"]
    elif name == "bounds_table":
        p = BoundsParams(cfg["bounds.kappa"], cfg["bounds.gamma"], cfg["bounds.ell"], cfg["bounds.t0"])
        grid = np.geomspace(max(p.ell, 1e-3), 0.99, cfg["bounds.grid_points"]).tolist()
        c = cfg["bounds.c"]
        if c is None:
            c = fit_constant_c(p, 4, grid)
        p = BoundsParams(p.kappa, p.gamma, p.ell, p.t0, c)
        extra["c_const"] = repr(c)
        extra["window"] = p.window()[1] or "ok"
        write_csv(out / "bounds.csv", BOUNDS_HEADER, bounds_table(p, cfg["bounds.n_max"], grid))
        written.append("bounds.csv")
    else:  # parse_config already rejects unknown names
        raise ValueError(name)

    manifest = {
        "pipeline": name,
        "seed": seed,
        "version": __version__,
        "config": cfg.echo(),
        "results": extra,
        "files": written,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return written + ["manifest.json"]


def run_config(path, out_dir="out", overrides=None, workers=None):
    """Load a config file, apply ``overrides`` (key -> raw string) and run it."""
    cfg = load_config(path)
    for k, v in (overrides or {}).items():
        cfg.set(k, v)
    return run_pipeline(cfg, out_dir, workers)
