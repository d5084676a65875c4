"""Launch the service: ``python -m textseg_service`` or ``textseg-service``."""

from __future__ import annotations

import argparse
from pathlib import Path

import uvicorn

from .app import create_app
from .config import ServiceConfig


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="textseg-service")
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=8077)
    parser.add_argument("--device", default="cpu")
    parser.add_argument("--max-request-pixels", type=int, default=16_000_000)
    parser.add_argument("--segmenter-checkpoint", type=Path, default=None)
    parser.add_argument("--detector-checkpoint", type=Path, default=None)
    parser.add_argument("--recognizer-checkpoint", type=Path, default=None)
    args = parser.parse_args(argv)
    checkpoints = {
        role: path
        for role, path in (
            ("segmenter", args.segmenter_checkpoint),
            ("detector", args.detector_checkpoint),
            ("recognizer", args.recognizer_checkpoint),
        )
        if path is not None
    }
    config = ServiceConfig(
        host=args.host,
        port=args.port,
        device=args.device,
        max_request_pixels=args.max_request_pixels,
        checkpoints=checkpoints,
    )
    app = create_app(config)
    uvicorn.run(app, host=config.host, port=config.port, log_level="info")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
