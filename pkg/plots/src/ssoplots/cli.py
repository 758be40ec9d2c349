"""Entry point: plots <kind> <run_dir> -o <image>."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .figures import KINDS, FigureSpec, render


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="plots", description=__doc__)
    parser.add_argument("kind", help=f"one of: {', '.join(KINDS)}")
    parser.add_argument("run_dir", help="solver run directory (or sweep directory)")
    parser.add_argument("-o", "--out", required=True, help="output image path")
    parser.add_argument("--dpi", type=int, default=150)
    args = parser.parse_args(argv)
    spec = FigureSpec(Path(args.run_dir), args.kind, Path(args.out), {"dpi": args.dpi})
    try:
        render(spec)
    except (ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(args.out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
