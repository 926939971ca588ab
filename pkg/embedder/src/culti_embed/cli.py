"""culti-embed command line front end."""

from __future__ import annotations

import argparse
import sys

from .cropper import CropSpec
from .encoder import load_encoder
from .errors import EmbedderError, ManifestFormatError
from .pipeline import embed_corpus


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on usage errors; keep 2 for data problems instead.
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="culti-embed",
        description="Embed a manifest of described images into paired "
        "text/image CEMB stores, one global vector plus seeded "
        "random crops per image.",
    )
    parser.add_argument("--manifest", required=True, help="manifest JSONL path")
    parser.add_argument("--out-texts", required=True, help="text store output path")
    parser.add_argument("--out-images", required=True, help="image store output path")
    parser.add_argument("--encoder", default="lite-32", help="encoder name (default lite-32)")
    parser.add_argument("--n-patches", type=int, default=9, help="crops per image (default 9)")
    parser.add_argument("--scale-min", type=float, default=0.4, help="min crop scale (default 0.4)")
    parser.add_argument("--scale-max", type=float, default=0.8, help="max crop scale (default 0.8)")
    parser.add_argument("--seed", type=int, default=42, help="crop sampling seed (default 42)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        spec = CropSpec(
            n_patches=args.n_patches,
            scale_min=args.scale_min,
            scale_max=args.scale_max,
            seed=args.seed,
        )
    except ValueError as exc:
        print(f"culti-embed: {exc}", file=sys.stderr)
        return 1
    try:
        encoder = load_encoder(args.encoder)
        summary = embed_corpus(
            args.manifest, spec, encoder, args.out_texts, args.out_images
        )
    except ManifestFormatError as exc:
        where = f" (line {exc.line_no})" if exc.line_no is not None else ""
        print(f"culti-embed: manifest error{where}: {exc}", file=sys.stderr)
        return 2
    except EmbedderError as exc:
        print(f"culti-embed: {exc}", file=sys.stderr)
        return 2
    except (FileNotFoundError, OSError) as exc:
        print(f"culti-embed: {exc}", file=sys.stderr)
        return 2
    print(f"records\t{summary.n_records}")
    print(f"patches\t{summary.n_patches}")
    print(f"dim\t{summary.dim}")
    print(f"text_bytes\t{summary.text_bytes}")
    print(f"image_bytes\t{summary.image_bytes}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
