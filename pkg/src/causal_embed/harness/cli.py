"""``causal-embed`` command line.

Every subcommand takes the same flags; ``--config`` is required. On failure
the last line on standard error is ``error: <code>: <message>`` and the exit
status is nonzero (2 for configuration problems, 1 otherwise).
"""

from __future__ import annotations

import argparse
import logging
import os
import sys

from ..errors import CausalEmbedError, ConfigError
from . import pipeline
from .config import apply_overrides, load_config

LOG_LEVELS = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}

COMMANDS = {
    "generate": (pipeline.run_generate, "write one dataset CSV per replication"),
    "train": (pipeline.run_train, "fit stage-1 and stage-2 models on generated data"),
    "estimate": (pipeline.run_estimate, "evaluate the queries against saved models"),
    "evaluate": (pipeline.run_experiment, "generate, train, estimate and report in one go"),
    "report": (pipeline.report, "aggregate existing replication files"),
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="causal-embed", description="Neural mean embedding causal estimation")
    sub = p.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in COMMANDS.items():
        s = sub.add_parser(name, help=help_text)
        s.add_argument("--config", required=True, help="experiment YAML file")
        s.add_argument("--out", help="output directory (overrides output_dir)")
        s.add_argument("--seed", type=int, help="base seed (overrides seed)")
        s.add_argument("--workers", type=int, help="parallel replications")
        s.add_argument("--replications", type=int, help="replication count")
    return p


def configure_logging() -> None:
    name = os.environ.get("CAUSAL_EMBED_LOG", "error").strip().lower()
    if name not in LOG_LEVELS:
        raise ConfigError(f"CAUSAL_EMBED_LOG must be one of {', '.join(LOG_LEVELS)}, got {name!r}")
    logging.basicConfig(level=LOG_LEVELS[name], stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s", force=True)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        configure_logging()
        cfg = load_config(args.config)
        cfg = apply_overrides(cfg, args.seed, args.replications, args.workers, args.out)
        fn = COMMANDS[args.command][0]
        result = fn(cfg)
        if args.command in ("evaluate", "report"):
            for row in result:
                if row["query"] == "ALL":
                    print(f"{row['method']}: mean squared error {row['mean_squared_error']:.6g} "
                          f"over {row['replications']} replication(s)")
        print(f"wrote {cfg.output_dir}")
        return 0
    except CausalEmbedError as e:
        print(f"error: {e.code}: {e}", file=sys.stderr)
        return 2 if isinstance(e, ConfigError) else 1
    except OSError as e:
        print(f"error: io_error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
