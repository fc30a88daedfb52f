#!/usr/bin/env python3
"""Write the synthetic health-insurance bundle (data.csv, schema.json, model.json).

Usage:
    python scripts/generate_synthetic_bundle.py bundle/ --rows 10000 --seed 0
    fairness-ssat verify --data bundle/data.csv --schema bundle/schema.json --model bundle/model.json
"""

import argparse
import logging
from pathlib import Path

from rich.logging import RichHandler

from fairness_ssat.synthetic import write_bundle


def main() -> None:
    """Parse arguments and write the bundle."""
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("directory", type=Path, help="Output directory")
    parser.add_argument("--rows", type=int, default=10_000, help="Number of rows (default: 10000)")
    parser.add_argument("--seed", type=int, default=0, help="Generator seed (default: 0)")
    args = parser.parse_args()

    logging.basicConfig(level=logging.INFO, format="%(message)s", handlers=[RichHandler(show_path=False)])
    paths = write_bundle(args.directory, rows=args.rows, seed=args.seed)
    for role, path in paths.items():
        logging.getLogger(__name__).info(f"{role}: {path}")


if __name__ == "__main__":
    main()
