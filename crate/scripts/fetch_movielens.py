#!/usr/bin/env python3
"""Fetch MovieLens-100K into data/ml-100k/u.data.

grouplens.org is often unreachable from build sandboxes, so this pulls the
copy bundled in the pytorch-widedeep wheel from PyPI and rewrites it in the
original tab-separated `user item rating timestamp` layout.

Needs pandas with a parquet engine (pyarrow).
"""

import io
import subprocess
import sys
import tempfile
import zipfile
from pathlib import Path

import pandas as pd

WHEEL = "pytorch-widedeep==1.7.0"
MEMBER = "pytorch_widedeep/datasets/data/MovieLens100k_data.parquet.brotli"
OUT = Path(__file__).resolve().parent.parent / "data" / "ml-100k" / "u.data"


def main() -> int:
    if OUT.exists():
        print(f"{OUT} already present")
        return 0
    with tempfile.TemporaryDirectory() as tmp:
        subprocess.run(
            [sys.executable, "-m", "pip", "download", WHEEL, "--no-deps", "-d", tmp, "-q"],
            check=True,
        )
        wheel = next(Path(tmp).glob("*.whl"))
        with zipfile.ZipFile(wheel) as z:
            df = pd.read_parquet(io.BytesIO(z.read(MEMBER)))
    df = df[["user_id", "movie_id", "rating", "timestamp"]]
    OUT.parent.mkdir(parents=True, exist_ok=True)
    df.to_csv(OUT, sep="\t", header=False, index=False)
    print(f"wrote {len(df)} ratings to {OUT}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
