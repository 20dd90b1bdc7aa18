"""Run a demo experiment config through the CLI and report the wall time.

    python3 scripts/run_demo.py                       # regression, 200 seeds
    python3 scripts/run_demo.py --config scripts/configs/demo_classification.json
"""

import argparse
import sys
import time
from pathlib import Path

from dco.cli import main

HERE = Path(__file__).resolve().parent


def run(argv=None) -> int:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--config", default=str(HERE / "configs" / "demo_regression.json"))
    p.add_argument("--out", default=None, help="output directory (default: the config's 'out')")
    p.add_argument("--seeds", type=int, default=None)
    args = p.parse_args(argv)

    cli_args = ["experiment", "--config", args.config]
    if args.out:
        cli_args += ["--out", args.out]
    if args.seeds:
        cli_args += ["--seeds", str(args.seeds)]
    start = time.perf_counter()
    code = main(cli_args)
    print(f"\nfinished in {time.perf_counter() - start:.1f} s (exit {code})")
    return code


if __name__ == "__main__":
    sys.exit(run())
