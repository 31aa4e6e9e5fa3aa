"""
A2U Lab command-line entry point
Exit codes: 0 success, 2 validation error, 3 numerical failure, 4 I/O error
"""
import argparse
import sys
from pathlib import Path
from typing import Optional, Sequence

import structlog

from ..a2u import A2UMode, ChannelSharing, Normalization
from ..errors import A2ULabError
from ..logging_setup import configure_logging
from ..recon import DATASETS, COMPARISON_ROWS
from ..settings import LOG_LEVELS, get_settings
from ..upsampling import UpsamplerKind
from ..visualizer import LabVisualizer
from .commands import cmd_compare, cmd_dump_kernels, cmd_eval, cmd_gradcheck, cmd_params, cmd_train
from .gradcheck_suites import GradScope

logger = structlog.get_logger()


def _common_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(add_help=False)
    parser.add_argument("--log-level", choices=LOG_LEVELS, type=str.upper, default=None)
    parser.add_argument("--seed", type=int, default=None)
    return parser


def _a2u_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--a2u-mode", choices=[m.value for m in A2UMode], default=None)
    parser.add_argument("--a2u-channel", choices=[c.value for c in ChannelSharing], default=None)
    parser.add_argument("--a2u-pw", action="store_true", help="pointwise weight sets instead of shuffled projections")
    parser.add_argument("--a2u-norm", choices=[n.value for n in Normalization], default=None)
    parser.add_argument("--paired-down", action="store_true", help="generate the downsampling kernels too")
    parser.add_argument("--k-en", type=int, default=None, help="encoder kernel side (A2U k_en, CARAFE/IndexNet k_enc)")


def _run_parser() -> argparse.ArgumentParser:
    """Flags shared by the commands that build a RunConfig."""
    parser = argparse.ArgumentParser(add_help=False)
    parser.add_argument("--config", type=Path, default=None, help="JSON run config; flags override it")
    parser.add_argument("--upsampler", choices=[k.value for k in UpsamplerKind], default=None)
    _a2u_flags(parser)
    parser.add_argument("--k-up", type=int, default=None)
    parser.add_argument("--full-scale", action="store_true", help="100 epochs, decays at 50/70/85, 60k/10k images")
    parser.add_argument("--threads", type=int, default=None)
    parser.add_argument("--out", type=Path, default=None, help="output directory")
    parser.add_argument("--dataset", choices=DATASETS, default=None)
    parser.add_argument("--dataset-dir", type=Path, default=None)
    parser.add_argument("--train-images", type=Path, default=None)
    parser.add_argument("--test-images", type=Path, default=None)
    parser.add_argument("--epochs", type=int, default=None)
    parser.add_argument("--max-steps", type=int, default=None)
    return parser


def build_parser() -> argparse.ArgumentParser:
    common, run = _common_parser(), _run_parser()
    parser = argparse.ArgumentParser(prog="a2u-lab", description="Affinity-aware upsampling lab")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", parents=[common, run], help="train the toy reconstruction net")
    p.set_defaults(handler=cmd_train)

    p = sub.add_parser("eval", parents=[common, run], help="evaluate a checkpoint on the test split")
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--dump-images", type=int, default=0, metavar="N", help="write N reconstructions as PGM")
    p.set_defaults(handler=cmd_eval)

    p = sub.add_parser("gradcheck", parents=[common], help="finite-difference gradient checks")
    p.add_argument("--scope", choices=[s.value for s in GradScope], default=GradScope.ALL.value)
    p.set_defaults(handler=cmd_gradcheck)

    p = sub.add_parser("params", parents=[common], help="A2U parameter counts: closed form vs instantiated")
    _a2u_flags(p)
    p.add_argument("--channels", type=int, default=64)
    p.add_argument("--s-u", type=int, default=3)
    p.add_argument("--rank", type=int, default=1)
    p.add_argument("--sweep", action="store_true", help="all six mode × channel variants")
    p.set_defaults(handler=cmd_params)

    p = sub.add_parser("dump-kernels", parents=[common, run], help="write the kernel maps of one forward pass")
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--input", type=Path, default=None, help="PGM image (default: a test-split image)")
    p.add_argument("--index", type=int, default=0, help="test-split image index when --input is absent")
    p.set_defaults(handler=cmd_dump_kernels)

    p = sub.add_parser("compare", parents=[common, run], help="train every down/up pairing and tabulate")
    p.add_argument("--rows", nargs="*", choices=[r.slug for r in COMPARISON_ROWS], default=None)
    p.set_defaults(handler=cmd_compare)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Parse, configure logging, dispatch; library errors become exit codes."""
    args = build_parser().parse_args(argv)
    configure_logging(args.log_level or get_settings().log_level)
    logger.debug("command_started", command=args.command)
    try:
        return args.handler(args)
    except A2ULabError as exc:
        logger.error("command_failed", command=args.command, exit_code=exc.exit_code, **exc.to_dict())
        LabVisualizer().print_error(exc.message)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
