"""CLI: embed an image directory plus titles into GEOEMB files."""

from __future__ import annotations

import argparse
import sys

from .encoder import DEFAULT_MODEL_ID, load_encoder
from .extract import extract


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="geotag-extract",
        description="Embed images and titles with frozen CLIP ViT-B/32 and "
                    "write GEOEMB files")
    parser.add_argument("--images", required=True, help="directory of <image_id>.<ext> files")
    parser.add_argument("--metadata", required=True, help="metadata CSV with titles")
    parser.add_argument("--out-img", required=True, help="output image GEOEMB")
    parser.add_argument("--out-txt", required=True, help="output title GEOEMB")
    parser.add_argument("--batch-size", type=int, default=64)
    parser.add_argument("--model", default=DEFAULT_MODEL_ID,
                        help=f"encoder weights id (default {DEFAULT_MODEL_ID})")
    args = parser.parse_args(argv)

    try:
        encoder = load_encoder(args.model)
    except Exception as exc:
        print(f"error: cannot load encoder {args.model!r}: {exc}", file=sys.stderr)
        return 2
    try:
        summary = extract(args.images, args.metadata, args.out_img, args.out_txt,
                          args.batch_size, encoder)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

    print(f"embedded {summary['embedded']} ids "
          f"({summary['missing_titles']} empty titles, "
          f"{len(summary['unreadable'])} unreadable images, "
          f"{summary['ignored_files']} ignored files)")
    if summary["unreadable"]:
        print(f"unreadable: {summary['unreadable']}", file=sys.stderr)
    return 0


if __name__ == "__main__":
    sys.exit(main())
