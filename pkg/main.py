import sys
import argparse
import logging
logging.basicConfig(
    level=logging.INFO, # -v switches to DEBUG
    format="%(asctime)s - %(levelname)s - %(message)s",
    datefmt="%H:%M:%S"
)

from utils.errors import PipelineError
from utils.experiment import load_experiment
from phases.simulate_phase import run_simulate
from phases.identify_phase import run_identify
from phases.emulate_phase import run_emulate
from phases.compare_phase import run_compare
from phases.goldens_phase import GOLDEN_FILE, GOLDENS, run_regenerate_goldens


def positive_int(value):
    try:
        number = int(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"'{value}' is not an integer") from None
    if number < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {number}")
    return number


def build_parser():
    parser = argparse.ArgumentParser(
        prog="main.py",
        description="Pregnancy target-trial emulation: simulate worlds, check identifiability, "
                    "emulate trials and compare time-zero designs against the oracle.")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="simulate a world and write truth + observed files")
    p.add_argument("-c", "--config", required=True, help="config module name under config/ or a .json path")
    p.add_argument("-o", "--out", help="output directory (default: OUTPUT_DIR of the config)")
    p.add_argument("--force", action="store_true", help="overwrite existing outputs")

    p = sub.add_parser("identify", help="identifiability verdicts for a catalog graph or an edge-list file")
    p.add_argument("target", help="fig3a, fig3b, fig3c or path to a .dag file")
    p.add_argument("--measured", nargs="+", default=(), metavar="NODE", help="treat extra nodes as measured")
    p.add_argument("--json", action="store_true", help="print machine-readable records")

    p = sub.add_parser("emulate", help="run one protocol under one time-zero design on a data directory")
    p.add_argument("data", help="directory written by 'simulate' (or data in the same schema)")
    p.add_argument("-p", "--protocol", required=True, help="protocol name under config/protocols or a .json path")
    p.add_argument("-d", "--design", required=True, help="time-zero design: 4A-4E or the anchor name")
    p.add_argument("-o", "--out", help="output directory (default: the data directory)")
    p.add_argument("--method", choices=["ITT_ANALOG", "PER_PROTOCOL", "NAIVE_AS_TREATED"])
    p.add_argument("--scale", nargs="+", choices=["RD", "RR"], default=["RD", "RR"])
    p.add_argument("--n-boot", type=int, help="bootstrap resamples (default from the estimation settings)")
    p.add_argument("--seed", type=int, default=0, help="bootstrap seed")
    strat = p.add_mutually_exclusive_group()
    strat.add_argument("--stratify", dest="stratify", action="store_true", default=None,
                       help="one estimate per prior-use stratum")
    strat.add_argument("--no-stratify", dest="stratify", action="store_false")
    p.add_argument("--composite", action="store_true", help="loss-or-outcome composite endpoint")
    p.add_argument("--force", action="store_true")

    p = sub.add_parser("compare", help="bias table of several designs against the oracle")
    p.add_argument("-c", "--config", required=True)
    p.add_argument("--designs", nargs="+", help="override DESIGNS of the config")
    p.add_argument("--n-repeats", type=positive_int, help="override N_REPEATS of the config")
    p.add_argument("--workers", type=positive_int, default=1, help="worker processes for the repeats")
    p.add_argument("-o", "--out")
    p.add_argument("--force", action="store_true")

    p = sub.add_parser("regenerate-goldens", help="recompute golden values and print the diff")
    p.add_argument("--write", action="store_true", help="store the new values (default: dry run)")
    p.add_argument("--only", nargs="+", choices=sorted(GOLDENS), metavar="NAME")
    p.add_argument("--path", default=str(GOLDEN_FILE))
    return parser


def main(argv=None):
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.verbose:
        logging.getLogger().setLevel(logging.DEBUG)

    try:
        if args.command == "simulate":
            run_simulate(load_experiment(args.config), out_dir=args.out, force=args.force, argv=argv)
        elif args.command == "identify":
            print(run_identify(args.target, measured=args.measured, as_json=args.json))
        elif args.command == "emulate":
            run_emulate(args.data, args.protocol, args.design, out_dir=args.out, force=args.force,
                        method=args.method, scales=args.scale, n_boot=args.n_boot, seed=args.seed,
                        stratify=args.stratify, composite=args.composite, argv=argv)
        elif args.command == "compare":
            experiment = load_experiment(args.config)
            if args.n_repeats is None and experiment.n_repeats < 1:
                parser.error("N_REPEATS must be >= 1")
            run_compare(experiment, designs=args.designs, n_repeats=args.n_repeats, out_dir=args.out,
                        force=args.force, workers=args.workers, argv=argv)
        elif args.command == "regenerate-goldens":
            run_regenerate_goldens(args.path, write=args.write, names=args.only)
    except PipelineError as e:
        logging.error(f"{type(e).__name__}: {e}")
        sys.exit(e.exit_code)

    logging.info("Done.")
    return 0


if __name__ == "__main__":
    main()
