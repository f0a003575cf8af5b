"""Command line entry point: `python3 -m encoder_bridge` or `encoder-bridge`."""
import argparse
import sys

from .config import BridgeConfig, BridgeError
from .server import serve


def _floats(text: str):
    return tuple(float(part) for part in text.split(","))


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="encoder-bridge",
        description="Serve an image encoder over the newline-JSON stdio protocol",
    )
    parser.add_argument("--model", default="echo",
                        help="echo, hog, or tv:<torchvision model name> (default echo)")
    parser.add_argument("--dim", type=int, default=64,
                        help="embedding dimension for echo mode (default 64)")
    parser.add_argument("--resolution", type=int, default=None,
                        help="input resolution for model encoders (hog 64, tv 224)")
    parser.add_argument("--batch-size", type=int, default=8,
                        help="max requests encoded as one batch (default 8)")
    parser.add_argument("--device", default="cpu", help="torch device (default cpu)")
    parser.add_argument("--mean", type=_floats, default=None,
                        help="per-channel normalization mean, comma separated")
    parser.add_argument("--std", type=_floats, default=None,
                        help="per-channel normalization std, comma separated")
    args = parser.parse_args(argv)
    try:
        config = BridgeConfig(
            model=args.model,
            device=args.device,
            batch_size=args.batch_size,
            mean=args.mean,
            std=args.std,
            resolution=args.resolution,
            dim=args.dim,
        )
    except BridgeError as exc:
        print(f"encoder-bridge: {exc}", file=sys.stderr)
        return 2
    return serve(config)


if __name__ == "__main__":
    raise SystemExit(main())
