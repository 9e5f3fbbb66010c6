"""embed-bridge command line: text lines in, EMB1 bytes out.

Reads UTF-8 text (one sentence per line) from --input or standard
input, encodes it in batches, and writes an EMB1 stream to --output or
standard output.  All diagnostics go to standard error; the stream
stays clean for piping.  Input is read fully before the header is
emitted so the row count is exact even on non-seekable outputs.

Exit codes: 0 success, 1 bad invocation or malformed input, 2 model
load failure.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import dataclass

from . import __version__, emb1
from .encoder import DEFAULT_MODEL, ModelLoadFailure, load_encoder


@dataclass
class BridgeConfig:
    model_name: str = DEFAULT_MODEL
    batch_size: int = 32
    device: str | None = None
    input_path: str | None = None    # None reads standard input
    output_path: str | None = None   # None writes standard output


def _read_lines(config: BridgeConfig) -> list[str]:
    if config.input_path is None:
        raw = sys.stdin.buffer.read()
    else:
        with open(config.input_path, "rb") as fh:
            raw = fh.read()
    text = raw.decode("utf-8")  # strict: malformed input is a hard error
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()  # trailing newline is a terminator, not an empty sentence
    return lines


def bridge_encode(config: BridgeConfig, encoder=None) -> int:
    """Encode the configured input to EMB1; returns the row count."""
    if config.batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    if encoder is None:
        encoder = load_encoder(config.model_name, config.device)
    lines = _read_lines(config)

    out = sys.stdout.buffer if config.output_path is None \
        else open(config.output_path, "wb")
    try:
        out.write(emb1.pack_header(encoder.dims, len(lines)))
        for start in range(0, len(lines), config.batch_size):
            batch = lines[start:start + config.batch_size]
            vectors = encoder.encode(batch)
            if vectors.shape != (len(batch), encoder.dims):
                raise ValueError(
                    f"encoder returned {vectors.shape}, expected "
                    f"({len(batch)}, {encoder.dims})"
                )
            out.write(emb1.row_bytes(vectors))
        out.flush()
    finally:
        if config.output_path is not None:
            out.close()
    return len(lines)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="embed-bridge",
        description="encode one sentence per line into an EMB1 embedding stream",
    )
    parser.add_argument("--model", default=DEFAULT_MODEL)
    parser.add_argument("--batch-size", type=int, default=32)
    parser.add_argument("--device", default=None,
                        help="device hint, e.g. cpu or cuda")
    parser.add_argument("--input", default=None, help="default: standard input")
    parser.add_argument("--output", default=None, help="default: standard output")
    args = parser.parse_args(argv)

    config = BridgeConfig(
        model_name=args.model,
        batch_size=args.batch_size,
        device=args.device,
        input_path=args.input,
        output_path=args.output,
    )
    try:
        encoder = load_encoder(config.model_name, config.device)
    except ModelLoadFailure as exc:
        print(f"embed-bridge: {exc}", file=sys.stderr)
        return 2
    print(f"embed-bridge {__version__}: model={config.model_name} "
          f"dims={encoder.dims}", file=sys.stderr)
    try:
        rows = bridge_encode(config, encoder)
    except (UnicodeDecodeError, ValueError, OSError) as exc:
        print(f"embed-bridge: {exc}", file=sys.stderr)
        return 1
    print(f"embed-bridge: wrote {rows} rows", file=sys.stderr)
    return 0


if __name__ == "__main__":
    sys.exit(main())
