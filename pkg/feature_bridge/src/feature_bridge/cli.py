"""Command line: ``feature-bridge extract`` turns a video into MGF1."""

from __future__ import annotations

import argparse
import sys

from .errors import BridgeError
from .extract import extract_video_features
from .video import FRAME_RATE

EXIT_CODES = {
    "error": 1,
    "config": 2,
    "validation": 4,
    "format": 7,
    "alignment": 8,
}


def cmd_extract(args) -> int:
    result = extract_video_features(
        args.video,
        args.out,
        weights=args.weights,
        seed=args.seed,
        batch_size=args.batch_size,
        expected_frames=args.frames,
        expected_fps=args.expected_fps,
    )
    print(f"{result.path}: {result.clip_count} records of dim {result.dim}")
    print(f"weights: {result.meta['weights_source']}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="feature-bridge",
        description="Extract per-clip video features into MGF1 files.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("extract", help="video -> MGF1 clip features")
    p.add_argument("--video", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--weights", help="pretrained backbone state dict")
    p.add_argument("--seed", type=int, default=0,
                   help="fallback initialization seed when no --weights")
    p.add_argument("--batch-size", type=int, default=4)
    p.add_argument("--frames", type=int, help="expected decoded frame count")
    p.add_argument("--expected-fps", type=float, default=FRAME_RATE)
    p.set_defaults(func=cmd_extract)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except BridgeError as exc:
        print(f"feature-bridge: {exc.category} error: {exc}", file=sys.stderr)
        return EXIT_CODES.get(exc.category, 1)
    except OSError as exc:
        print(f"feature-bridge: io error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
