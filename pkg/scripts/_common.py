"""Shared argument handling for the experiment scripts."""

import argparse
import logging
from pathlib import Path

from spikedx.config import RunConfig, load_config


def parse(description: str) -> tuple[RunConfig, Path]:
    p = argparse.ArgumentParser(description=description)
    p.add_argument("--config", type=Path, default=None, help="JSON config (see configs/)")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", type=Path, default=None, help="write the result CSV here")
    args = p.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    overrides = {} if args.seed is None else {"seed": args.seed}
    return load_config(args.config, overrides), args.out


def table(rows: list[dict], key: str, value: str = "f1") -> None:
    """Print pooled rows as a key x decoder grid."""
    decoders = list(dict.fromkeys(r["decoder"] for r in rows))
    keys = list(dict.fromkeys(r[key] for r in rows))
    print(f"{key:>16s} " + " ".join(f"{d:>18s}" for d in decoders))
    for k in keys:
        cells = {r["decoder"]: r[value] for r in rows if r[key] == k}
        label = f"{k:.4f}" if isinstance(k, float) else str(k)
        print(f"{label:>16s} " + " ".join(f"{cells.get(d, float('nan')):18.3f}" for d in decoders))
