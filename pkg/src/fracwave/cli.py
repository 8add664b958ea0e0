import argparse
import sys

from .config import ConfigError, ExperimentConfig
from .runner import SUBCOMMANDS, VIEWS, emit_plotdata, output_root, run


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="fracwave", description="Waves in long-range random media.")
    ap.add_argument("subcommand", choices=SUBCOMMANDS + ("plotdata", "config"))
    ap.add_argument("--config", help="sectioned key = value file; defaults when omitted")
    ap.add_argument("--seed", type=int)
    ap.add_argument("--out", help="output root (overrides the config and FRACWAVE_OUT)")
    ap.add_argument("--replicas", type=int)
    ap.add_argument("--overwrite", action="store_true")
    ap.add_argument("--workers", type=int)
    ap.add_argument("--view", choices=tuple(VIEWS), help="plotdata: which view to emit")
    args = ap.parse_args(argv)
    try:
        cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
    except ConfigError as exc:
        print(f"invalid config: {exc}", file=sys.stderr)
        return 2
    if args.subcommand == "config":
        sys.stdout.write(cfg.to_text())
        return 0
    if args.subcommand == "plotdata":
        views = [args.view] if args.view else list(VIEWS)
        for v in views:
            print(emit_plotdata(output_root(cfg, args.out), v))
        return 0
    try:
        directory, status = run(cfg, args.subcommand, out=args.out, seed=args.seed, replicas=args.replicas,
                                overwrite=args.overwrite, workers=args.workers)
    except (ConfigError, FileExistsError) as exc:
        print(exc, file=sys.stderr)
        return 2
    print(directory)
    return status


if __name__ == "__main__":
    sys.exit(main())
