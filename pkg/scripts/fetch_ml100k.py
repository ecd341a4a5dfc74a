"""Write MovieLens 100K in ``::`` format (ratings.dat, movies.dat).

The ratings come from the copy bundled inside the ``pytorch-widedeep``
wheel, which pip can fetch from a package index even where the GroupLens
site is unreachable. Pass ``--wheel`` to reuse an already-downloaded wheel.

    python scripts/fetch_ml100k.py --out data/ml-100k
"""

import argparse
import glob
import io
import subprocess
import sys
import tempfile
import zipfile
from pathlib import Path

import pandas as pd

PREFIX = "pytorch_widedeep/datasets/data/MovieLens100k_"
GENRES = [
    "unknown", "Action", "Adventure", "Animation", "Children's", "Comedy", "Crime",
    "Documentary", "Drama", "Fantasy", "Film-Noir", "Horror", "Musical", "Mystery",
    "Romance", "Sci-Fi", "Thriller", "War", "Western",
]


def download_wheel(dest: str) -> str:
    subprocess.run(
        [sys.executable, "-m", "pip", "download", "pytorch-widedeep==1.6.5",
         "--no-deps", "--timeout", "120", "-d", dest],
        check=True,
    )
    return glob.glob(f"{dest}/pytorch_widedeep-*.whl")[0]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="data/ml-100k")
    ap.add_argument("--wheel", help="path to a pytorch_widedeep wheel")
    args = ap.parse_args()

    with tempfile.TemporaryDirectory() as tmp:
        wheel = args.wheel or download_wheel(tmp)
        with zipfile.ZipFile(wheel) as z:
            ratings = pd.read_parquet(io.BytesIO(z.read(PREFIX + "data.parquet.brotli")))
            items = pd.read_parquet(io.BytesIO(z.read(PREFIX + "items.parquet.brotli")))

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    ratings = ratings.sort_values(["user_id", "movie_id"])
    with open(out / "ratings.dat", "w", encoding="latin-1", newline="\n") as f:
        for u, p, r, t in ratings[["user_id", "movie_id", "rating", "timestamp"]].itertuples(index=False):
            f.write(f"{u}::{p}::{r}::{t}\n")
    with open(out / "movies.dat", "w", encoding="latin-1", newline="\n") as f:
        for _, row in items.sort_values("movie_id").iterrows():
            # ML-100K flags "unknown" as a genre; the ML-1M files have no such label
            genres = [g for g in GENRES[1:] if int(row[g]) == 1] or ["Unknown"]
            title = str(row["movie_title"]).replace("::", ":")
            f.write(f"{row['movie_id']}::{title}::{'|'.join(genres)}\n")
    print(f"wrote {len(ratings)} ratings and {len(items)} movies to {out}")


if __name__ == "__main__":
    main()
