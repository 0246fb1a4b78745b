"""``fastgrpo <command> --config FILE --out DIR [--seed N]``.

Exit status: 0 when every assertion in the bundle passes, 1 when any fails,
2 for configuration or input errors.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .config import COMMAND_CONFIGS, ConfigError, load_run_config
from .experiments import RUNNERS


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fastgrpo", description="Windowed-SDE GRPO experiments on 2-D flows.")
    p.add_argument("command", choices=sorted(COMMAND_CONFIGS))
    p.add_argument("--config", required=True, help="JSON run config")
    p.add_argument("--out", required=True, help="report bundle directory")
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = load_run_config(args.command, args.config)
        if args.seed is not None:
            cfg.seed = args.seed
        summary = RUNNERS[args.command](cfg, Path(args.out), Path(args.config).resolve().parent)
    except (ConfigError, ValueError, OSError) as exc:
        print(f"fastgrpo {args.command}: error: {exc}", file=sys.stderr)
        return 2
    for name, a in summary["assertions"].items():
        print(f"{'PASS' if a['passed'] else 'FAIL'} {name}")
    return 0 if summary["passed"] else 1


if __name__ == "__main__":
    sys.exit(main())
