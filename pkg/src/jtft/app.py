import argparse
import logging
import sys

from jtft import __version__
from jtft.constants import APP_NAME, EXIT_CONFIG, EXIT_OK, RNDF_SEEDS, SUBSEQUENCE_LEN
from jtft.core.errors import ConfigError, translate_error

logger = logging.getLogger("jtft.app")


class _ArgumentParser(argparse.ArgumentParser):
    """Raise ConfigError instead of exiting so usage errors map to exit code 1."""

    def __init__(self, *args, **kwargs) -> None:
        kwargs.setdefault("allow_abbrev", False)
        super().__init__(*args, **kwargs)

    def error(self, message: str):
        raise ConfigError(f"{self.prog}: {message}")


def _int_list(text: str) -> tuple[int, ...]:
    try:
        values = tuple(int(part) for part in text.split(",") if part.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(
            f"expected comma-separated integers, got {text!r}"
        ) from None
    if not values:
        raise argparse.ArgumentTypeError("expected at least one integer")
    return values


def build_parser() -> argparse.ArgumentParser:
    parser = _ArgumentParser(
        prog=APP_NAME, description="Joint time-frequency Transformer forecaster"
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug output on stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_ArgumentParser)

    p = sub.add_parser("train", help="train and evaluate from an experiment file")
    p.add_argument("-c", "--config", help="experiment TOML file")
    p.add_argument(
        "--raw-scale", action="store_true", help="report test metrics on the raw data scale"
    )

    p = sub.add_parser("eval", help="score a checkpoint on a dataset's test split")
    p.add_argument("-m", "--checkpoint", required=True)
    p.add_argument("-d", "--dataset", required=True)
    p.add_argument("-T", "--horizon", type=int, required=True)
    p.add_argument(
        "-o", "--output", help="metrics file (default: eval.jsonl next to the checkpoint)"
    )
    p.add_argument("--raw-scale", action="store_true")

    p = sub.add_parser("reconstruct-bench", help="LRNF / RNDF / TOPF reconstruction error")
    p.add_argument("-d", "--dataset", required=True)
    p.add_argument("--kmax", type=_int_list, default=(4, 8, 16))
    p.add_argument("--len", dest="length", type=int, default=SUBSEQUENCE_LEN)
    p.add_argument("--seeds", type=int, default=RNDF_SEEDS)
    p.add_argument("--steps", type=int, help="LRNF optimizer steps")
    p.add_argument("--max-rows", type=int)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-o", "--output-dir", default="runs/reconstruction")

    p = sub.add_parser("gradcheck", help="finite-difference check of every parameter group")
    p.add_argument("--preset", default="tiny")

    p = sub.add_parser("scale-bench", help="forward+backward time against look-back length")
    p.add_argument(
        "--lengths",
        type=_int_list,
        default=(256, 512, 1024, 2048),
        help="comma-separated look-backs; each needs at least n_t=32 patches (P=16, S=8), "
        "so the shortest usable look-back is 256",
    )
    p.add_argument("--repeats", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-o", "--output-dir", default="runs/scalebench")

    p = sub.add_parser("ablate", help="PatchS / PatchS+JTFR / JTFT from one experiment file")
    p.add_argument("-c", "--config", help="experiment TOML file")
    p.add_argument("--raw-scale", action="store_true")
    return parser


def _dispatch(args: argparse.Namespace, extra: list[str]) -> int:
    from jtft.cli import commands

    if extra and args.command not in ("train", "ablate"):
        raise ConfigError(f"Unrecognized arguments: {' '.join(extra)}")
    if args.command == "train":
        return commands.cmd_train(args.config, extra, raw_scale=args.raw_scale)
    if args.command == "ablate":
        return commands.cmd_ablate(args.config, extra, raw_scale=args.raw_scale)
    if args.command == "eval":
        return commands.cmd_eval(
            args.checkpoint,
            args.dataset,
            args.horizon,
            raw_scale=args.raw_scale,
            output=args.output,
        )
    if args.command == "reconstruct-bench":
        return commands.cmd_reconstruct_bench(
            args.dataset,
            args.kmax,
            args.length,
            args.seeds,
            output_dir=args.output_dir,
            max_rows=args.max_rows,
            lrnf_steps=args.steps,
            seed=args.seed,
        )
    if args.command == "gradcheck":
        return commands.cmd_gradcheck(args.preset)
    if args.command == "scale-bench":
        return commands.cmd_scalebench(
            args.lengths, args.repeats, output_dir=args.output_dir, seed=args.seed
        )
    raise ConfigError(f"Unknown command {args.command!r}")


def run(argv: list[str] | None = None) -> int:
    """Parse, run one command and translate any failure into an exit code."""
    from jtft.logging_setup import setup_logging

    argv = sys.argv[1:] if argv is None else argv
    verbose = "-v" in argv or "--verbose" in argv
    setup_logging(verbose)
    try:
        args, extra = build_parser().parse_known_args(argv)
        logger.info("Starting %s %s", APP_NAME, args.command)
        code = _dispatch(args, extra)
    except Exception as e:
        code, message, detail = translate_error(e)
        logger.error("%s", message)
        if detail and detail != message:
            logger.debug("Detail: %s", detail)
        if code == EXIT_CONFIG and not hasattr(e, "user_message"):
            logger.exception("Unexpected error")
        return code
    logger.info("Finished with exit code %d", code)
    return code if code is not None else EXIT_OK


def main() -> None:
    sys.exit(run())
