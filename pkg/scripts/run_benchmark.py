"""Run the synthetic benchmark pipeline and print its report.

    python scripts/run_benchmark.py [--config configs/synth.ini] [--out DIR] [--force]
"""
import argparse
import logging
import time
from pathlib import Path

from churnboost.pipeline import run_pipeline, validate_config

ROOT = Path(__file__).resolve().parents[1]


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--config", default=ROOT / "configs" / "synth.ini", type=Path)
    parser.add_argument("--out", type=Path)
    parser.add_argument("--force", action="store_true")
    args = parser.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")

    cfg = validate_config(args.config, {"out": args.out.resolve() if args.out else None})
    t0 = time.perf_counter()
    entries = run_pipeline(cfg, force=args.force)
    print(f"\n{len(entries)} stages in {time.perf_counter() - t0:.1f}s, artifacts in {cfg.out}\n")
    print((cfg.out / "report.txt").read_text())


if __name__ == "__main__":
    main()
