"""Command-line entry point for the embedding exporter."""

from __future__ import annotations

import argparse
import sys

from .export import ExportJob, export_embeddings


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="respembed",
        description="Export mean-pooled last-hidden-state response embeddings.",
    )
    parser.add_argument("--model", required=True, help="model name or local path")
    parser.add_argument("--groups", required=True, help="line-delimited groups file")
    parser.add_argument("--out", required=True, help="output embeddings file")
    parser.add_argument("--max-len", type=int, default=512, help="token truncation length")
    parser.add_argument("--batch", type=int, default=16, help="inference batch size")
    parser.add_argument(
        "--binary", action="store_true", help="write the binary REALEMB1 format"
    )
    parser.add_argument(
        "--with-prompt",
        action="store_true",
        help="experimental: embed prompt+response as one string",
    )
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    job = ExportJob(
        model=args.model,
        groups_path=args.groups,
        out_path=args.out,
        max_length=args.max_len,
        batch_size=args.batch,
        binary=args.binary,
        with_prompt=args.with_prompt,
    )
    try:
        result = export_embeddings(job)
    except (ValueError, RuntimeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    truncated_note = f" truncated={len(result.truncated)} log={result.log_path}" if result.truncated else ""
    print(
        f"export status=ok records={result.count} dim={result.dimension} "
        f"out={args.out}{truncated_note}"
    )
    return 0


if __name__ == "__main__":
    sys.exit(main())
