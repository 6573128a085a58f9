"""Serve the adapter: ``captree-adapter serve --config adapter.toml``."""

from __future__ import annotations

import argparse
import logging
from pathlib import Path

from .config import AdapterConfig
from .server import create_app


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="captree-adapter")
    sub = parser.add_subparsers(dest="command", required=True)
    serve = sub.add_parser("serve", help="run the HTTP adapter")
    serve.add_argument("--config", help="TOML config; defaults to all-stub roles")
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--port", type=int, default=8199)
    serve.add_argument("--canned", help="canned response directory (replay mode)")
    serve.add_argument("--record", action="store_true", help="record missing canned responses")
    serve.add_argument("--embed-dim", type=int, default=32)
    serve.add_argument("--seed", type=int, default=0)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO)
    if args.config:
        config = AdapterConfig.from_toml(Path(args.config))
    else:
        config = AdapterConfig.all_stub(embed_dim=args.embed_dim, seed=args.seed)
    if args.canned:
        config.canned_dir = Path(args.canned)
    if args.record:
        config.record = True

    import uvicorn

    uvicorn.run(create_app(config), host=args.host, port=args.port, log_level="warning")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
