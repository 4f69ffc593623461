"""Run one experiment config through the command-line runner.

    python scripts/run_experiment.py scripts/configs/onepoint.json [--format csv]

The subcommand is taken from the config's ``name``; output goes to its
``out_dir`` unless --out is given.  Exit status is nonzero when a gate fails.
"""

import argparse
import json
import sys

from massive_sholo.cli_runner import SUBCOMMANDS, main


def run(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("config")
    ap.add_argument("--out")
    ap.add_argument("--format", default="both", choices=("json", "csv", "both"))
    args = ap.parse_args(argv)
    with open(args.config) as fh:
        name = json.load(fh).get("name", "")
    if name not in SUBCOMMANDS:
        ap.error(f"config name {name!r} is not a runner subcommand")
    cmd = [name, "--config", args.config, "--format", args.format]
    if args.out:
        cmd += ["--out", args.out]
    return main(cmd)


if __name__ == "__main__":
    sys.exit(run())
