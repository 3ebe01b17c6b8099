"""Run the sidecar: python -m embed_service [--backbone clip|hash] [--port N]."""

import argparse

import uvicorn

from .app import create_app
from .backbones import create_backbone


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="embed_service", description=__doc__)
    parser.add_argument("--backbone", default="clip", choices=["clip", "hash"])
    parser.add_argument("--model-name", help="pretrained model identifier for the clip backbone")
    parser.add_argument("--dim", type=int, default=512, help="dimension of the hash backbone")
    parser.add_argument("--max-batch", type=int, default=64)
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=8088)
    args = parser.parse_args(argv)

    backbone = create_backbone(args.backbone, dim=args.dim, model_name=args.model_name)
    app = create_app(backbone, max_batch=args.max_batch)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
