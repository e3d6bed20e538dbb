import logging
import sys
from typing import Optional, Sequence

from gordinlab.cli.runner import build_parser, dispatch


def configure_logging(verbose: bool = False) -> None:
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(asctime)s [%(levelname)s] %(name)s: %(message)s",
    )


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(args.verbose)
    return dispatch(args)


def run() -> None:
    sys.exit(main())
