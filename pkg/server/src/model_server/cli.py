"""Command-line entry points: ``serve`` and ``export-cam``."""

from __future__ import annotations

import argparse
import sys

from .models import ARCHITECTURES, load_model


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="scb-model-server")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("serve", help="run the /v1 scoring service")
    p.add_argument("--arch", choices=ARCHITECTURES, default="resnet50")
    p.add_argument("--port", type=int, default=8008)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--weights", choices=("pretrained", "random"), default="pretrained")
    p.add_argument("--max-batch", type=int, default=64)

    p = sub.add_parser("export-cam", help="write a CAM for one image as SMAP")
    p.add_argument("--arch", choices=ARCHITECTURES, default="resnet50")
    p.add_argument("--variant", choices=("gradcam", "gradcam++"), default="gradcam")
    p.add_argument("--image", required=True)
    p.add_argument("--class-id", type=int, required=True, dest="class_id")
    p.add_argument("--out", required=True)
    p.add_argument("--weights", choices=("pretrained", "random"), default="pretrained")

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        model = load_model(args.arch, weights=args.weights)
    except Exception as exc:  # weight download failures included
        print(f"error loading {args.arch} ({args.weights}): {exc}", file=sys.stderr)
        return 1

    if args.command == "serve":
        import uvicorn

        from .app import create_app

        app = create_app(model, max_batch=args.max_batch)
        uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
        return 0

    from .gradcam import export_cam

    try:
        export_cam(model, args.image, args.class_id, args.variant, args.out)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {args.out}: {args.variant} for class {args.class_id} ({args.arch})")
    return 0


if __name__ == "__main__":
    sys.exit(main())
