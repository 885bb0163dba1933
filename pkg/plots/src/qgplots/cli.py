"""Command line for rendering qgflow artifacts to PNG."""

import argparse
import sys
from pathlib import Path

from . import __version__
from .io import read_table
from .render import KINDS, render


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qgflow-plots", description="Render qgflow CSV artifacts to figures."
    )
    parser.add_argument(
        "--version", action="version", version=f"qgflow-plots {__version__}"
    )
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("render", help="render one figure kind from CSV input")
    p.add_argument("--kind", required=True, choices=sorted(KINDS))
    p.add_argument("--in", dest="inputs", required=True, nargs="+",
                   help="input CSV artifact(s)")
    p.add_argument("--out", required=True, help="output PNG path")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    try:
        for i, src in enumerate(args.inputs):
            table = read_table(src)
            target = out
            if len(args.inputs) > 1:
                target = out.with_name(f"{out.stem}-{i}{out.suffix}")
            render(args.kind, table, target)
            print(f"wrote {target}")
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
