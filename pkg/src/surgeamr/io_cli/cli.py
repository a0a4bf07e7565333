"""Command line interface: run, check, plot, gauges."""

from __future__ import annotations

import argparse
import json
import os
import sys

from ..grid import ConfigError
from .config import load_config
from .output import list_frames
from .render import VARIABLES, render_raster


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="surgeamr",
        description="Storm-surge shallow water solver on adaptive lat-lon "
                    "patches")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a simulation")
    p_run.add_argument("config")

    p_check = sub.add_parser("check",
                             help="validate a configuration without running")
    p_check.add_argument("config")

    p_plot = sub.add_parser("plot", help="render a frame to a PNG")
    p_plot.add_argument("outdir")
    p_plot.add_argument("--frame", type=int, required=True)
    p_plot.add_argument("--var", required=True, choices=VARIABLES)
    p_plot.add_argument("--bounds", type=float, nargs=4,
                        metavar=("LON0", "LAT0", "LON1", "LAT1"))
    p_plot.add_argument("--vmin", type=float)
    p_plot.add_argument("--vmax", type=float)
    p_plot.add_argument("--out")

    p_gauges = sub.add_parser("gauges", help="export recorded gauge series")
    p_gauges.add_argument("outdir")
    p_gauges.add_argument("--id", type=int)
    p_gauges.add_argument("--csv", action="store_true",
                          help="print the series as CSV to stdout")
    return parser


def cli(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "check":
            cfg = load_config(args.config)
            print(json.dumps(cfg.resolved_dict(), indent=2, sort_keys=True))
            return 0
        if args.command == "run":
            cfg = load_config(args.config)
            from .driver import run_simulation
            run_simulation(cfg, log=print)
            return 0
        if args.command == "plot":
            frames = list_frames(args.outdir)
            if args.frame not in frames:
                valid = (f"0..{max(frames)}" if frames else "none")
                raise ConfigError(
                    f"frame {args.frame} not found (valid frames: {valid})")
            value_range = None
            if args.vmin is not None and args.vmax is not None:
                value_range = (args.vmin, args.vmax)
            path = render_raster(args.outdir, args.frame, args.var,
                                 bounds=tuple(args.bounds) if args.bounds
                                 else None,
                                 out_path=args.out, value_range=value_range)
            print(path)
            return 0
        if args.command == "gauges":
            gdir = os.path.join(args.outdir, "gauges")
            if not os.path.isdir(gdir):
                raise ConfigError(f"no gauge output found under {args.outdir}")
            names = sorted(os.listdir(gdir))
            if args.id is None and not args.csv:
                for name in names:
                    print(name)
                return 0
            wanted = (f"gauge_{args.id}.csv" if args.id is not None
                      else None)
            for name in names:
                if wanted is not None and name != wanted:
                    continue
                with open(os.path.join(gdir, name)) as fh:
                    sys.stdout.write(fh.read())
                if wanted is not None:
                    return 0
            if wanted is not None:
                raise ConfigError(f"gauge {args.id} has no recorded series")
            return 0
    except (ConfigError, ValueError, FileNotFoundError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    return 0


def main():
    sys.exit(cli())


if __name__ == "__main__":
    main()
