"""Command-line wrapper: lms3-extract --model M --demos F --tests F --out DIR."""

from __future__ import annotations

import argparse
import sys

from .extract import POOLING_LAST_TOKEN, POOLINGS, ExtractionConfig, extract


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lms3-extract", description=__doc__)
    parser.add_argument("--model", required=True, help="checkpoint path or identifier")
    parser.add_argument("--layer", type=int, default=None,
                        help="decoder block index (default: middle block)")
    parser.add_argument("--pooling", choices=POOLINGS, default=POOLING_LAST_TOKEN)
    parser.add_argument("--max-length", type=int, default=512)
    parser.add_argument("--device", default="cpu")
    parser.add_argument("--demos", required=True,
                        help="JSONL with id/problem/solution per line")
    parser.add_argument("--tests", required=True, help="JSONL with id/problem per line")
    parser.add_argument("--out", required=True, help="bundle directory to write")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    config = ExtractionConfig(model=args.model, layer=args.layer,
                              pooling=args.pooling, max_length=args.max_length,
                              device=args.device)
    try:
        out = extract(config, args.demos, args.tests, args.out)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
