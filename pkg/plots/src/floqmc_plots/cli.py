"""plots render --spec <file> | plots report <directory> [--out file]."""

import argparse
import json
import sys

from .figures import FigureSpec, RenderError, render, report


def main(argv=None):
    p = argparse.ArgumentParser(prog="plots", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)
    sp = sub.add_parser("render")
    sp.add_argument("--spec", required=True, help="JSON FigureSpec file")
    sp = sub.add_parser("report")
    sp.add_argument("directory")
    sp.add_argument("--out")
    args = p.parse_args(argv)
    if args.command == "render":
        with open(args.spec) as fh:
            doc = json.load(fh)
        try:
            spec = FigureSpec(
                kind=doc["kind"], inputs=doc["inputs"], output=doc["output"],
                options=doc.get("options", {}),
            )
            path = render(spec)
        except (RenderError, KeyError, FileNotFoundError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 1
        print(path)
        return 0
    out, rendered, skipped = report(args.directory, args.out)
    print(out)
    if rendered:
        print("rendered: " + ", ".join(rendered))
    if skipped:
        print("skipped: " + ", ".join(skipped))
    return 0


if __name__ == "__main__":
    sys.exit(main())
