"""Rebuild the gzipped catalog CSVs shipped in ``src/cfbench/data``.

Inputs are the raw public files:

* ``adult.data`` / ``adult.test`` from the UCI Adult (1994 census) release
* ``compas-scores-two-years.csv`` from the ProPublica COMPAS analysis

Usage::

    python tools/build_catalog_data.py RAW_DIR

Give Me Some Credit (Kaggle ``cs-training.csv``) cannot be redistributed and is
not rebuilt here; point ``CFBENCH_DATA_DIR`` at a directory containing it.
"""
import sys
from pathlib import Path

import pandas as pd

ADULT_COLUMNS = [
    "age", "workclass", "fnlwgt", "education", "education-num", "marital-status",
    "occupation", "relationship", "race", "sex", "capital-gain", "capital-loss",
    "hours-per-week", "native-country", "income",
]

OUT = Path(__file__).resolve().parents[1] / "src" / "cfbench" / "data"


def build_adult(raw: Path) -> None:
    frames = []
    for name in ("adult.data", "adult.test"):
        df = pd.read_csv(raw / name, header=None, names=ADULT_COLUMNS, skipinitialspace=True,
                         comment="|", na_values="?", dtype=str)
        frames.append(df)
    df = pd.concat(frames, ignore_index=True).dropna(how="all")
    # the test file spells labels with a trailing period
    df["income"] = df["income"].str.rstrip(".")
    df.to_csv(OUT / "adult.csv.gz", index=False, compression={"method": "gzip", "mtime": 0})
    print("adult", df.shape)


def build_compas(raw: Path) -> None:
    df = pd.read_csv(raw / "compas-scores-two-years.csv")
    jail_in = pd.to_datetime(df["c_jail_in"])
    jail_out = pd.to_datetime(df["c_jail_out"])
    out = pd.DataFrame({
        "age": df["age"],
        "two_year_recid": df["two_year_recid"].map({0: "no", 1: "yes"}),
        "priors_count": df["priors_count"],
        "length_of_stay": (jail_out - jail_in).dt.days,
        "c_charge_degree": df["c_charge_degree"],
        "race": df["race"],
        "sex": df["sex"],
        "score_text": df["score_text"],
    })
    out.to_csv(OUT / "compas.csv.gz", index=False, compression={"method": "gzip", "mtime": 0})
    print("compas", out.shape)


if __name__ == "__main__":
    raw_dir = Path(sys.argv[1])
    OUT.mkdir(parents=True, exist_ok=True)
    build_adult(raw_dir)
    build_compas(raw_dir)
