"""Command-line entry point: ``sfcontact [global flags] <subcommand> [--set key=value ...]``."""

import argparse
import sys

from .experiments.config import PIPELINES, ConfigError, default_config, load_config
from .experiments.pipelines import WORKERS_ENV, run_pipeline


def build_parser():
    ap = argparse.ArgumentParser(prog="sfcontact", description=__doc__)
    ap.add_argument("--config", help="key=value config file")
    ap.add_argument("--seed", type=int, help="master seed (overrides run.seed)")
    ap.add_argument("--out-dir", default="out", help="directory for CSVs and manifest")
    ap.add_argument("--workers", type=int,
                    help=f"worker processes (default: run.workers, then ${WORKERS_ENV}, then 1)")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in PIPELINES:
        p = sub.add_parser(name.replace("_", "-"), help=f"run the {name} pipeline")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override a config key (repeatable)")
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config) if args.config else default_config()
        cfg.set("pipeline", args.command)
        for item in args.set:
            if "=" not in item:
                raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
            key, value = item.split("=", 1)
            cfg.set(key.strip(), value.strip())
        if args.seed is not None:
            cfg.set("run.seed", str(args.seed))
        files = run_pipeline(cfg, args.out_dir, args.workers)
    except (ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    for f in files:
        print(f"{args.out_dir}/{f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
