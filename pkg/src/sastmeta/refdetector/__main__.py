"""Adapter entry point: ``python -m sastmeta.refdetector BUNDLE OUT [--rulepack FILE]``."""

import argparse
import sys

from sastmeta.errors import SastMetaError
from sastmeta.refdetector import load_bundle, load_rulepack, scan_app


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="python -m sastmeta.refdetector")
    parser.add_argument("bundle")
    parser.add_argument("out")
    parser.add_argument("--rulepack", default=None)
    args = parser.parse_args(argv)
    try:
        report = scan_app(load_bundle(args.bundle), load_rulepack(args.rulepack))
    except SastMetaError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return 3
    with open(args.out, "w", encoding="utf-8") as f:
        f.write(report)
    return 0


if __name__ == "__main__":
    sys.exit(main())
