"""Regenerate the cached sweep CSVs used by the acceptance tests.

Usage: python tests/acceptance/make_data.py [--force] [name ...]
Each CSV is the exact output of ``qecnoise sweep specs/<name>.json``.
"""

from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

from qecnoise.cli import main as cli

HERE = Path(__file__).parent
SPECS = HERE / "specs"
DATA = HERE / "data"


def main() -> int:
    ap = argparse.ArgumentParser()
    ap.add_argument("names", nargs="*")
    ap.add_argument("--force", action="store_true")
    ap.add_argument("--workers", type=int, default=1)
    args = ap.parse_args()
    names = args.names or sorted(p.stem for p in SPECS.glob("*.json"))
    for name in names:
        out = DATA / f"{name}.csv"
        if out.exists() and not args.force:
            continue
        t0 = time.time()
        tmp = out.with_suffix(".part")
        code = cli(["sweep", str(SPECS / f"{name}.json"), "-o", str(tmp), "-j", str(args.workers)])
        tmp.replace(out)
        print(f"{name}: exit {code} in {time.time() - t0:.0f}s", flush=True)
    return 0


if __name__ == "__main__":
    sys.exit(main())
