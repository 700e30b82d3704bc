"""figgen command line: render experiment CSVs into figure files.

Usage: figgen <kind> --in curve.csv [curve2.csv ...] --out figure.png
Kinds: transient, sweep, comparison, tracking, stability.
Exits 0 on success, 2 on schema mismatch (with a column diagnostic), 3 on
bad arguments.
"""

from __future__ import annotations

import argparse
import sys

from .render import KINDS, FigureSpec, SchemaError, render


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="figgen", description=__doc__)
    ap.add_argument("kind", choices=KINDS)
    ap.add_argument("--in", dest="inputs", nargs="+", required=True,
                    metavar="CSV", help="input CSV file(s)")
    ap.add_argument("--out", required=True, help="output image path")
    ap.add_argument("--label", action="append", default=[],
                    help="override curve labels (repeatable, in plot order)")
    ap.add_argument("--title", default="")
    ap.add_argument("--bound", type=float,
                    help="stability kind: step-size bound marker position")
    ap.add_argument("--flip-iter", type=int,
                    help="tracking kind: target sign-flip iteration marker")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        spec = FigureSpec(kind=args.kind, inputs=args.inputs, output=args.out,
                          labels=args.label, title=args.title, bound=args.bound,
                          flip_iter=args.flip_iter)
        render(spec)
    except SchemaError as exc:
        print(f"schema error: {exc}", file=sys.stderr)
        return 2
    print(args.out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
