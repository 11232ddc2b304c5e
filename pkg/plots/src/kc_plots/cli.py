"""Command-line entry point: `kc-plots render --spec PATH`.

Exit codes: 0 on success, 2 on spec problems, 3 on input schema mismatch.
"""

from __future__ import annotations

import argparse
import sys

from .figures import FigureSpec, SchemaError, render

__all__ = ["main"]


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="kc-plots",
        description="render figures from kinetic-chaos schema=1 CSV outputs")
    sub = parser.add_subparsers(dest="command", required=True)
    pr = sub.add_parser("render")
    pr.add_argument("--spec", required=True,
                    help="key = value figure description ([figure] section)")
    args = parser.parse_args(argv)
    try:
        spec = FigureSpec.from_file(args.spec)
    except ValueError as exc:
        print(f"spec error: {exc}", file=sys.stderr)
        return 2
    try:
        out = render(spec)
    except SchemaError as exc:
        print(f"schema error: {exc}", file=sys.stderr)
        return 3
    print(out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
