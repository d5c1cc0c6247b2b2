"""Command-line entry: flags or a TOML spec file describing one figure."""

from __future__ import annotations

import argparse
import sys

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

from .figures import CHANNELS, FigureSpec, render
from .reader import SchemaError


def spec_from_file(path: str) -> FigureSpec:
    with open(path, "rb") as fh:
        doc = tomllib.load(fh)
    known = {"csv", "channels", "window", "out"}
    extra = set(doc) - known
    if extra:
        raise ValueError(f"unknown spec key(s) {sorted(extra)}; allowed {sorted(known)}")
    window = doc.get("window", [None, None])
    if len(window) != 2:
        raise ValueError("window must be [t_start, t_end]")
    return FigureSpec(
        csv_paths=list(doc["csv"]),
        channels=list(doc.get("channels", ["frequency"])),
        t_start=window[0], t_end=window[1],
        out_path=doc.get("out", "figure.png"))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="plot", description="Render figures from simulator result CSVs.")
    parser.add_argument("inputs", nargs="+",
                        help="result CSV files (max 4), or one .toml spec file")
    parser.add_argument("--channels", nargs="+", default=["frequency"],
                        choices=CHANNELS, help="channels to stack in the figure")
    parser.add_argument("--window", nargs=2, type=float, metavar=("T0", "T1"),
                        default=None, help="time window, s")
    parser.add_argument("--out", default="figure.png", help="output image path")
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 1 if exc.code not in (0, None) else 0
    try:
        if len(args.inputs) == 1 and args.inputs[0].endswith(".toml"):
            spec = spec_from_file(args.inputs[0])
        else:
            t0, t1 = args.window if args.window else (None, None)
            spec = FigureSpec(csv_paths=args.inputs, channels=args.channels,
                              t_start=t0, t_end=t1, out_path=args.out)
        out = render(spec)
    except (SchemaError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return 2
    print(out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
