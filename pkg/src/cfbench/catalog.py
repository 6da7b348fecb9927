"""Catalog of processed benchmark data sets and their classifier training settings."""
from __future__ import annotations

import os
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from .dataset import (
    Dataset,
    EncodedDataset,
    binarize_categoricals,
    fit_scaling,
    load_csv,
    load_schema_config,
    minmax_scale,
    split,
    synthetic_generate,
)

DATA_ENV = "CFBENCH_DATA_DIR"

SCHEMA_FILES = {
    "adult": "adult.yaml",
    "compas": "compas.yaml",
    "compas_table": "compas_table.yaml",
    "gmc": "gmc.yaml",
}
SYNTHETIC = {"synthetic": dict(n=4000, correlation=0.9, seed=0)}

# (epochs, batch_size) per data set and architecture; learning rate is 0.002 everywhere
TRAIN_SETTINGS = {
    ("adult", "mlp"): (10, 1024),
    ("adult", "linear"): (100, 2048),
    ("compas", "mlp"): (25, 25),
    ("compas", "linear"): (25, 128),
    ("gmc", "mlp"): (10, 2048),
    ("gmc", "linear"): (10, 2048),
    ("synthetic", "mlp"): (25, 64),
    ("synthetic", "linear"): (25, 64),
}

REFERENCE_ACCURACY = {
    ("adult", "linear"): 0.83,
    ("adult", "mlp"): 0.84,
    ("compas", "linear"): 0.84,
    ("compas", "mlp"): 0.85,
    ("gmc", "linear"): 0.92,
    ("gmc", "mlp"): 0.93,
}


class DataUnavailableError(FileNotFoundError):
    """The raw file for a catalog data set is not present on this machine."""


@dataclass(frozen=True)
class PreparedData:
    name: str
    train: EncodedDataset
    test: EncodedDataset

    @property
    def schema(self):
        return self.train.schema


def list_datasets() -> list[str]:
    return sorted(SCHEMA_FILES) + sorted(SYNTHETIC)


def schema_path(name: str) -> Path:
    return Path(str(resources.files("cfbench") / "data" / SCHEMA_FILES[name]))


def _locate(file_name: str, data_dir: str | Path | None) -> Path:
    candidates = []
    if data_dir is not None:
        candidates.append(Path(data_dir) / file_name)
    if os.environ.get(DATA_ENV):
        candidates.append(Path(os.environ[DATA_ENV]) / file_name)
    candidates.append(Path(str(resources.files("cfbench") / "data" / file_name)))
    for c in candidates:
        if c.is_file():
            return c
    raise DataUnavailableError(
        f"{file_name} not found (looked in: {', '.join(str(c.parent) for c in candidates)}); "
        f"set {DATA_ENV} to the directory holding it"
    )


def is_available(name: str, data_dir=None) -> bool:
    if name in SYNTHETIC:
        return True
    try:
        _locate(load_schema_config(schema_path(name))["file"], data_dir)
    except DataUnavailableError:
        return False
    return True


def load_raw(name: str, data_dir: str | Path | None = None) -> Dataset:
    """Load a catalog data set with missing rows dropped (categoricals still strings)."""
    if name in SYNTHETIC:
        return synthetic_generate(**SYNTHETIC[name])
    if name not in SCHEMA_FILES:
        raise KeyError(f"unknown data set {name!r}; choose from {list_datasets()}")
    cfg = load_schema_config(schema_path(name))
    path = _locate(cfg["file"], data_dir)
    return load_csv(path, cfg["schema"], cfg["target"], cfg["positive_target"], name=name)


def prepare(name: str, seed: int = 0, train_fraction: float = 0.8, data_dir=None) -> PreparedData:
    """Binarize, split and min-max scale a catalog data set.

    Categorical levels and scaling bounds are fit on the full processed table for
    the binarization (a property of the data set) but on the training split only
    for the min-max bounds; test rows outside the training range encode outside
    ``[0, 1]``.
    """
    ds = binarize_categoricals(load_raw(name, data_dir))
    train, test = split(ds, train_fraction, seed)
    params = fit_scaling(train)
    return PreparedData(name, minmax_scale(train, params), minmax_scale(test, params))
