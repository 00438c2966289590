"""Flat ``key=value`` configuration files with namespaced keys."""

import math
from dataclasses import dataclass, field


class ConfigError(ValueError):
    pass


def _floats(text):
    return [float(x) for x in text.split(",") if x.strip()]


def _ints(text):
    return [int(float(x)) for x in text.split(",") if x.strip()]


def _opt_float(text):
    return None if text.strip().lower() in ("", "none") else float(text)


def _int(text):
    return int(float(text))


PIPELINES = (
    "sample_graph", "degree_stats", "simulate", "estimate_gamma",
    "extinction_scaling", "star_chain", "box_hierarchy", "bounds_table",
)


def _pipeline(text):
    name = text.strip().replace("-", "_")
    if name not in PIPELINES:
        raise ValueError(f"unknown pipeline {text!r}")
    return name


# key -> (parser, default)
SCHEMA = {
    "pipeline": (_pipeline, "estimate_gamma"),
    "kernel.variant": (str, "PrefAttachUpper"),
    "kernel.gamma": (float, 0.8),
    "kernel.delta": (float, 2.0),
    "kernel.alpha": (float, 1.0),
    "kernel.kappa1": (float, 1.0),
    "kernel.kappa2": (float, 1.0),
    "kernel.beta_scale": (float, 1.0),
    "kernel.dim": (_int, 1),
    "graph.volume": (float, 1000.0),
    "graph.boundary": (str, "torus"),
    "graph.sampler": (str, "auto"),
    "sim.lambda": (_floats, [0.2]),
    "sim.horizon": (float, 50.0),
    "sim.cap": (_int, 200),
    "sim.max_events": (_int, 10**8),
    "sim.event_log": (_int, 0),
    "run.replicas": (_int, 100),
    "run.seed": (_int, 1),
    "run.workers": (_int, 0),
    "gamma.max_volume": (float, 1e6),
    "gamma.volume_exponent": (float, 4.0),
    "extinction.volumes": (_ints, [100, 200, 400, 800]),
    "extinction.horizon": (float, math.inf),
    "degree.k_min": (_int, 20),
    "chain.beta_star": (float, 1.0),
    "chain.theta": (_opt_float, None),
    "chain.K": (_int, 3),
    "chain.clouds": (_int, 1),
    "boxes.n": (float, 4096.0),
    "boxes.a": (_opt_float, None),
    "boxes.theta3": (_opt_float, None),
    "boxes.eps1": (_opt_float, None),
    "boxes.eps3": (_opt_float, None),
    "boxes.S": (_int, 3),
    "boxes.clouds": (_int, 1),
    "bounds.kappa": (float, 4.0),
    "bounds.gamma": (float, 0.8),
    "bounds.ell": (float, 1e-6),
    "bounds.t0": (float, 0.5),
    "bounds.c": (_opt_float, None),
    "bounds.n_max": (_int, 20),
    "bounds.grid_points": (_int, 8),
}


@dataclass
class Config:
    values: dict = field(default_factory=dict)
    explicit: dict = field(default_factory=dict)

    def __getitem__(self, key):
        return self.values[key]

    def set(self, key, raw):
        if key not in SCHEMA:
            raise ConfigError(f"unknown key {key!r}")
        parser, _ = SCHEMA[key]
        try:
            self.values[key] = parser(str(raw))
        except ValueError as exc:
            raise ConfigError(f"bad value for {key!r}: {exc}") from None
        self.explicit[key] = str(raw)

    def echo(self):
        """Effective settings as strings, sorted by key."""
        return {k: _show(self.values[k]) for k in sorted(self.values)}


def _show(v):
    if isinstance(v, list):
        return ",".join(_show(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def default_config():
    return Config({k: d for k, (_, d) in SCHEMA.items()}, {})


def parse_config(text, source="<config>"):
    """Parse ``key=value`` lines; '#' starts a comment.

    Raises
    ------
    ConfigError
        With the line number for malformed lines, unknown keys or bad values.
    """
    cfg = default_config()
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError(f"{source}:{lineno}: expected key=value, got {body!r}")
        key, raw = (part.strip() for part in body.split("=", 1))
        try:
            cfg.set(key, raw)
        except ConfigError as exc:
            raise ConfigError(f"{source}:{lineno}: {exc}") from None
    return cfg


def load_config(path):
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read(), str(path))
