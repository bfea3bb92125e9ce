"""Service entry point: HTTP by default, line-delimited JSON over stdio with
--stdio. The --stub-encoder flag swaps in the deterministic hash encoder for
protocol testing without model weights."""

from __future__ import annotations

import argparse
import sys

from .app import ServiceConfig, canonical_json, create_app, parse_score_request, score_payload
from .encoder import DEFAULT_MODEL, StubEncoder


def _build_encoder(args):
    if args.stub_encoder:
        return StubEncoder(max_batch_size=args.batch_size)
    from .encoder import ClipEncoder

    return ClipEncoder(args.model, args.device, args.batch_size)


def serve_stdio(encoder, stdin=None, stdout=None) -> None:
    stdin = stdin or sys.stdin
    stdout = stdout or sys.stdout
    for line in stdin:
        line = line.strip()
        if not line:
            continue
        try:
            prompt, images = parse_score_request(line.encode("utf-8"))
            payload = score_payload(encoder, prompt, images)
        except Exception as exc:  # report errors in-band, one line per request
            payload = {"error": str(exc)}
        stdout.write(canonical_json(payload).decode("utf-8") + "\n")
        stdout.flush()


def main(argv=None) -> int:
    p = argparse.ArgumentParser(prog="clip-scorer", description=__doc__)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8650)
    p.add_argument("--model", default=DEFAULT_MODEL)
    p.add_argument("--device", default="cpu")
    p.add_argument("--batch-size", type=int, default=16)
    p.add_argument("--stdio", action="store_true", help="serve over stdin/stdout")
    p.add_argument(
        "--stub-encoder",
        action="store_true",
        help="use the deterministic hash encoder (protocol testing only)",
    )
    args = p.parse_args(argv)
    config = ServiceConfig(args.host, args.port, args.model, args.device, args.batch_size)
    try:
        encoder = _build_encoder(args)
    except Exception as exc:
        print(f"error: could not load encoder: {exc}", file=sys.stderr)
        return 1
    if args.stdio:
        serve_stdio(encoder)
        return 0
    import uvicorn

    uvicorn.run(create_app(encoder), host=config.host, port=config.port, log_level="warning")
    return 0


if __name__ == "__main__":
    sys.exit(main())
