#!/usr/bin/env python3
"""Write the default experiment configuration as JSON, for use with the CLI.

Usage: python3 scripts/write_default_config.py [--seed N] [--out config.json]
"""

import argparse
import json

from tta_align.config import ExperimentConfig


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--seed", type=int, default=0, help="data sampling seed")
    parser.add_argument("--out", default="config.json")
    args = parser.parse_args()

    cfg = ExperimentConfig.default(seed=args.seed)
    with open(args.out, "w") as fh:
        json.dump(cfg.to_dict(), fh, indent=2)
        fh.write("\n")
    print(f"wrote {args.out}")


if __name__ == "__main__":
    main()
