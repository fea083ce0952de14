"""Run the scoring service: python -m scorer_service --model echo --port 8080"""

import argparse

import uvicorn

from .app import ServiceConfig, create_app


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="meshforge-scorer")
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=8080)
    parser.add_argument("--model", default="echo",
                        help="echo, tiny-random-clip, or a transformers model id")
    parser.add_argument("--device", default="cpu")
    parser.add_argument("--max-batch", type=int, default=32)
    parser.add_argument("--max-request-mb", type=int, default=256)
    args = parser.parse_args(argv)
    config = ServiceConfig(
        host=args.host, port=args.port, model=args.model, device=args.device,
        max_batch=args.max_batch, max_request_bytes=args.max_request_mb * 1024 * 1024,
    )
    uvicorn.run(create_app(config), host=config.host, port=config.port,
                log_level="warning")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
