"""Command line entry: fracground-plot --spec <figure-spec.json>."""

from __future__ import annotations

import argparse
import sys

from .figures import load_figure_spec, render
from .schema import SchemaError


def main(argv: list | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="fracground-plot",
        description="Render figures from fracground run records and sweep tables",
    )
    parser.add_argument("--spec", required=True, help="path to a figure-spec JSON file")
    args = parser.parse_args(argv)
    try:
        spec = load_figure_spec(args.spec)
        out = render(spec)
    except (SchemaError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {out}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
