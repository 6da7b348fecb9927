"""Configuration-driven benchmark runner.

For every (dataset, model, method) cell the runner trains (or reuses) the
classifier, builds any setup artefact once (VAE per data set, FACE graph per
data set/model/mode), generates one counterfactual per cohort member,
evaluates the cell and writes::

    records.csv, records.json          one row per cell
    per_instance/<cell>.jsonl          one JSON object per attempted factual
    plots/<cell>_costs.csv             per-instance c0/c1 plus median/q25/q75 rows
    models/<dataset>__<arch>.json      trained classifier weights
    manifest.json                      config echo, checksums, accuracies
"""
from __future__ import annotations

import csv
import dataclasses
import json
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from . import catalog
from .evaluation import BenchmarkRecord, cost_l0, cost_l1, evaluate
from .generative import VaeTrainConfig, train_vae
from .model import TrainConfig, accuracy, check_threshold, save_weights, train
from .recourse import METHODS, RecourseProblem, build_graph, get_method
from .recourse.core import METHOD_ERROR, CounterfactualResult

logger = logging.getLogger(__name__)

ARCHS = ("linear", "mlp")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class MethodEntry:
    name: str
    params: dict = field(default_factory=dict)


@dataclass(frozen=True)
class RunConfig:
    datasets: tuple[str, ...]
    models: tuple[str, ...]
    methods: tuple[MethodEntry, ...]
    cohort_size: int = 100
    seed: int = 0
    theta: float = 0.5
    output_dir: str | None = None
    parallel: bool = False
    workers: int = 4
    vae: dict = field(default_factory=dict)
    train: dict = field(default_factory=dict)
    data_dir: str | None = None

    def __post_init__(self):
        if not self.datasets or not self.models or not self.methods:
            raise ConfigError("datasets, models and methods must be non-empty")
        if self.cohort_size < 1:
            raise ConfigError("cohort_size must be >= 1")
        bad = set(self.models) - set(ARCHS)
        if bad:
            raise ConfigError(f"unknown model(s) {sorted(bad)}; choose from {list(ARCHS)}")
        for m in self.methods:
            if m.name not in METHODS:
                raise ConfigError(f"unknown method {m.name!r}; choose from {sorted(METHODS)}")
            try:
                METHODS[m.name].make_params(m.params)
            except (TypeError, ValueError) as exc:
                raise ConfigError(str(exc)) from exc
        unknown = set(self.datasets) - set(catalog.list_datasets())
        if unknown:
            raise ConfigError(f"unknown dataset(s) {sorted(unknown)}; choose from {catalog.list_datasets()}")
        try:
            check_threshold(self.theta)
            VaeTrainConfig(**self.vae)
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc


_TOP_KEYS = {f.name for f in dataclasses.fields(RunConfig)}


def config_from_dict(doc: dict) -> RunConfig:
    if not isinstance(doc, dict):
        raise ConfigError("configuration must be a mapping")
    unknown = set(doc) - _TOP_KEYS
    if unknown:
        raise ConfigError(f"unknown configuration key(s) {sorted(unknown)}")
    methods = []
    for entry in doc.get("methods") or []:
        if isinstance(entry, str):
            methods.append(MethodEntry(entry))
        elif isinstance(entry, dict) and isinstance(entry.get("name"), str):
            extra = set(entry) - {"name", "params"}
            if extra:
                raise ConfigError(f"method entry {entry['name']!r}: unknown key(s) {sorted(extra)}")
            methods.append(MethodEntry(entry["name"], dict(entry.get("params") or {})))
        else:
            raise ConfigError(f"invalid method entry {entry!r}")
    kw = {k: v for k, v in doc.items() if k != "methods"}
    for key in ("datasets", "models"):
        if key in kw and not isinstance(kw[key], list):
            raise ConfigError(f"{key} must be a list")
        kw[key] = tuple(kw.get(key) or ())
    try:
        return RunConfig(methods=tuple(methods), **kw)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path) -> RunConfig:
    try:
        doc = yaml.safe_load(Path(path).read_text())
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot read configuration {path}: {exc}") from exc
    return config_from_dict(doc)


# --------------------------------------------------------------------------- helpers

def cell_name(dataset: str, arch: str, method: str) -> str:
    return f"{dataset}__{arch}__{method}"


def instance_seed(run_seed: int, index: int) -> int:
    return int(np.random.SeedSequence([run_seed, index]).generate_state(1)[0])


def sample_cohort(model, data, size: int, seed: int, theta: float = 0.5) -> np.ndarray:
    """Seeded sample (without replacement, original order kept) of rows with ``f < theta``."""
    X = data.matrix
    neg = np.flatnonzero(np.asarray(model.predict_proba(X)) < theta)
    if neg.size == 0:
        return np.empty((0, X.shape[1]))
    pick = np.random.default_rng(seed).choice(neg, min(size, neg.size), replace=False)
    return X[np.sort(pick)]


def _with_seed(params, seed):
    if "seed" in {f.name for f in dataclasses.fields(params)}:
        return dataclasses.replace(params, seed=seed)
    return params


def _run_one(spec, params, setup, model, x, schema, theta, seed, user_seeded) -> CounterfactualResult:
    p = RecourseProblem.from_schema(model, x, schema, theta)
    prm = params if user_seeded else _with_seed(params, seed)
    t0 = time.perf_counter()
    try:
        res = spec.run(p, prm, setup)
    except Exception as exc:  # isolate per-instance crashes
        logger.warning("%s failed on an instance: %s", spec.name, exc)
        return CounterfactualResult("failure", spec.name, p.factual, None, METHOD_ERROR, 0,
                                    time.perf_counter() - t0, {"error": repr(exc)})
    return dataclasses.replace(res, wall_time_seconds=time.perf_counter() - t0)


# --------------------------------------------------------------------------- runner

@dataclass
class RunOutcome:
    records: list[BenchmarkRecord]
    results: dict[str, list[CounterfactualResult]]
    manifest: dict

    @property
    def exit_code(self) -> int:
        return 0 if all(r.error is None for r in self.records) else 1


def _error_record(dataset, arch, method, family, msg) -> BenchmarkRecord:
    return BenchmarkRecord(dataset, arch, method, family, 0, 0, math.nan, None, None, None, None,
                           None, None, None, None, None, None, 0.0, msg)


def run(config: RunConfig, out_dir=None) -> RunOutcome:
    out = Path(out_dir or config.output_dir or "bench_out")
    for sub in ("per_instance", "plots", "models"):
        (out / sub).mkdir(parents=True, exist_ok=True)
    records: list[BenchmarkRecord] = []
    results: dict[str, list] = {}
    manifest = {"config": _config_doc(config), "models": {}, "setup": {}}
    vae_cfg = VaeTrainConfig(**{"seed": config.seed, **config.vae})

    for ds_name in config.datasets:
        try:
            data = catalog.prepare(ds_name, seed=config.seed, data_dir=config.data_dir)
        except Exception as exc:
            logger.error("dataset %s unavailable: %s", ds_name, exc)
            for arch in config.models:
                for m in config.methods:
                    records.append(_error_record(ds_name, arch, m.name, METHODS[m.name].family,
                                                 f"dataset unavailable: {exc}"))
            continue
        vae, vae_time = None, 0.0
        for arch in config.models:
            try:
                model = _train_model(config, data, ds_name, arch, out, manifest)
            except Exception as exc:
                for m in config.methods:
                    records.append(_error_record(ds_name, arch, m.name, METHODS[m.name].family,
                                                 f"model training failed: {exc}"))
                continue
            cohort = sample_cohort(model, data.test, config.cohort_size, config.seed, config.theta)
            graphs = {}
            for entry in config.methods:
                spec = get_method(entry.name)
                cell = cell_name(ds_name, arch, entry.name)
                params = spec.make_params(entry.params)
                setup, setup_time = {}, 0.0
                try:
                    if "vae" in spec.needs:
                        if vae is None:
                            t0 = time.perf_counter()
                            vae = train_vae(data.train, None, vae_cfg)
                            vae_time = time.perf_counter() - t0
                            vae.save(out / "models" / f"{ds_name}__vae.json")
                            manifest["setup"][f"{ds_name}__vae"] = {"final_loss": vae.loss_history[-1]}
                        setup["vae"], setup_time = vae, vae_time
                    if "graph" in spec.needs:
                        key = (params.mode, params.k, params.radius, params.max_graph_nodes)
                        if key not in graphs:
                            t0 = time.perf_counter()
                            graphs[key] = (build_graph(data.train, model, params, config.theta),
                                           time.perf_counter() - t0)
                        setup["graph"], setup_time = graphs[key]
                        manifest["setup"][f"{cell}__graph"] = {
                            "nodes": setup["graph"].n_nodes, "edges": setup["graph"].n_edges}
                except Exception as exc:
                    records.append(_error_record(ds_name, arch, entry.name, spec.family, f"setup failed: {exc}"))
                    continue
                if cohort.shape[0] == 0:
                    records.append(_error_record(ds_name, arch, entry.name, spec.family, "empty negative cohort"))
                    continue
                user_seeded = "seed" in entry.params
                args = [(spec, params, setup, model, x, data.schema, config.theta,
                         instance_seed(config.seed, i), user_seeded) for i, x in enumerate(cohort)]
                if config.parallel:
                    with ThreadPoolExecutor(config.workers) as pool:
                        res = list(pool.map(lambda a: _run_one(*a), args))
                else:
                    res = [_run_one(*a) for a in args]
                rec = evaluate(res, model, data.train, data.schema, dataset=ds_name, model_arch=arch,
                               method=entry.name, family=spec.family, theta=config.theta,
                               setup_time=setup_time, timed=not config.parallel)
                records.append(rec)
                results[cell] = res
                _write_instances(out / "per_instance" / f"{cell}.jsonl", res)
                _write_plot_data(out / "plots" / f"{cell}_costs.csv", res)
                logger.info("%s: success %.2f", cell, rec.success_rate)
    write_records(out, records)
    (out / "manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True))
    return RunOutcome(records, results, manifest)


def _train_model(config, data, ds_name, arch, out, manifest):
    epochs, batch = catalog.TRAIN_SETTINGS[(ds_name, arch)]
    kw = {"epochs": epochs, "batch_size": batch, "seed": config.seed}
    kw.update(config.train.get(arch, {}) if isinstance(config.train.get(arch), dict) else {})
    model = train(arch, data.train, TrainConfig(**kw))
    save_weights(model, out / "models" / f"{ds_name}__{arch}.json", data.train.scaling_params)
    manifest["models"][f"{ds_name}__{arch}"] = {
        "checksum": model.checksum(),
        "test_accuracy": accuracy(model, data.test.matrix, data.test.target, config.theta),
        "train_settings": kw,
    }
    return model


def _config_doc(config: RunConfig) -> dict:
    d = dataclasses.asdict(config)
    d["methods"] = [{"name": m.name, "params": m.params} for m in config.methods]
    d["datasets"], d["models"] = list(config.datasets), list(config.models)
    return d


# --------------------------------------------------------------------------- output

RECORD_FIELDS = [f.name for f in dataclasses.fields(BenchmarkRecord)]


def _fmt(v):
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return "NA"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_records(out: Path, records) -> None:
    with open(out / "records.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RECORD_FIELDS)
        for r in records:
            w.writerow([_fmt(getattr(r, f)) for f in RECORD_FIELDS])
    docs = [{k: (None if isinstance(v, float) and math.isnan(v) else v) for k, v in r.to_dict().items()}
            for r in records]
    (out / "records.json").write_text(json.dumps(docs, indent=1))


def _write_instances(path: Path, results) -> None:
    with open(path, "w") as fh:
        for i, r in enumerate(results):
            fh.write(json.dumps({"instance": i, **r.to_json_dict()}) + "\n")


def plot_rows(results) -> list[dict]:
    """Per-instance c0/c1 rows for successes followed by median, q25 and q75 rows."""
    rows = []
    for i, r in enumerate(results):
        if r.success:
            rows.append({"row_type": "instance", "instance": i,
                         "c0": cost_l0(r.factual, r.counterfactual), "c1": cost_l1(r.factual, r.counterfactual)})
    c0 = np.array([r["c0"] for r in rows])
    c1 = np.array([r["c1"] for r in rows])
    for name, q in (("median", 50), ("q25", 25), ("q75", 75)):
        rows.append({"row_type": name, "instance": None,
                     "c0": float(np.percentile(c0, q)) if c0.size else None,
                     "c1": float(np.percentile(c1, q)) if c1.size else None})
    return rows


def _write_plot_data(path: Path, results) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["row_type", "instance", "c0", "c1"])
        for r in plot_rows(results):
            w.writerow([r["row_type"], _fmt(r["instance"]), _fmt(r["c0"]), _fmt(r["c1"])])


def read_records(out_dir) -> list[dict]:
    return json.loads((Path(out_dir) / "records.json").read_text())


def format_report(records: list[dict], fmt: str) -> str:
    if fmt == "json":
        return json.dumps(records, indent=1)
    if fmt == "csv":
        lines = [",".join(RECORD_FIELDS)]
        lines += [",".join(_fmt(r.get(f)) for f in RECORD_FIELDS) for r in records]
        return "\n".join(lines)
    if fmt == "md":
        cols = ["dataset", "model_arch", "method", "family", "mean_c0", "mean_c1", "ynn",
                "redundancy", "violation", "success_rate", "avg_time_seconds", "setup_time_seconds"]
        head = "| " + " | ".join(cols) + " |"
        sep = "|" + "---|" * len(cols)
        body = []
        for r in records:
            cells = []
            for c in cols:
                v = r.get(c)
                cells.append("NA" if v is None else (f"{v:.3g}" if isinstance(v, float) else str(v)))
            body.append("| " + " | ".join(cells) + " |")
        return "\n".join([head, sep, *body])
    raise ValueError(f"unknown report format {fmt!r}")
