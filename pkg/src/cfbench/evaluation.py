"""Evaluation measures for counterfactuals and their aggregation into benchmark records."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy.spatial import cKDTree

from .dataset import binary_mask, immutable_mask

L0_TOL = 1e-9
VIOLATION_TOL = 1e-5
YNN_K = 5


def _pair(x, cf):
    x = np.asarray(x, dtype=float)
    cf = np.asarray(cf, dtype=float)
    if x.shape != cf.shape:
        raise ValueError(f"dimension mismatch: {x.shape} vs {cf.shape}")
    return x, cf


def cost_l0(x, cf, tol: float = L0_TOL) -> float:
    """Fraction of coordinates with ``|cf - x| > tol``."""
    x, cf = _pair(x, cf)
    out = np.count_nonzero(np.abs(cf - x) > tol, axis=-1) / x.shape[-1]
    return float(out) if x.ndim == 1 else out


def cost_l1(x, cf) -> float:
    """Mean absolute change per coordinate."""
    x, cf = _pair(x, cf)
    out = np.abs(cf - x).sum(axis=-1) / x.shape[-1]
    return float(out) if x.ndim == 1 else out


def ynn(counterfactuals, model, data, k: int = YNN_K, theta: float = 0.5) -> float | None:
    """Neighbourhood agreement of counterfactual labels with their k nearest training points.

    ``1 - mean |f_b(cf) - f_b(neighbour)|`` with ``f_b = 1[f > 0.5]`` over the
    ``k`` euclidean nearest rows of ``data`` (an encoded data set or a
    matrix). ``None`` when there are no counterfactuals. ``theta`` is
    accepted for interface symmetry; the labels use 0.5.
    """
    cfs = np.asarray(counterfactuals, dtype=float)
    if cfs.size == 0:
        return None
    cfs = np.atleast_2d(cfs)
    pool = np.asarray(getattr(data, "matrix", data), dtype=float)
    if k > pool.shape[0]:
        raise ValueError(f"k = {k} exceeds the {pool.shape[0]} available neighbours")
    _, idx = cKDTree(pool).query(cfs, k=k)
    idx = idx.reshape(cfs.shape[0], k)
    lab_cf = np.asarray(model.predict_proba(cfs)) > 0.5
    lab_pool = np.asarray(model.predict_proba(pool)) > 0.5
    mismatch = lab_pool[idx] != lab_cf[:, None]
    return float(1.0 - mismatch.mean())


def redundancy(x, cf, model, theta: float = 0.5, tol: float = L0_TOL) -> int:
    """Number of changed coordinates whose single reversion keeps ``f > theta``."""
    x, cf = _pair(x, cf)
    changed = np.flatnonzero(np.abs(cf - x) > tol)
    if changed.size == 0:
        return 0
    trials = np.repeat(cf[None, :], changed.size, axis=0)
    trials[np.arange(changed.size), changed] = x[changed]
    return int(np.count_nonzero(np.asarray(model.predict_proba(trials)) > theta))


def constraint_violation(x, cf, schema, tol: float = VIOLATION_TOL) -> int:
    """Number of immutable coordinates that changed.

    Continuous ones count when ``|delta| > tol``, binary ones on any change.
    """
    x, cf = _pair(x, cf)
    frozen, binm = immutable_mask(schema), binary_mask(schema)
    delta = np.abs(cf - x)
    changed = np.where(binm, delta > 0, delta > tol)
    return int(np.count_nonzero(changed & frozen))


def success_rate(results) -> float:
    results = list(results)
    if not results:
        raise ValueError("success rate needs at least one attempt")
    return sum(r.success for r in results) / len(results)


def avg_time(results) -> float:
    results = list(results)
    if not results:
        raise ValueError("average time needs at least one attempt")
    return float(np.mean([r.wall_time_seconds for r in results]))


@dataclass(frozen=True)
class BenchmarkRecord:
    dataset: str
    model_arch: str
    method: str
    family: str
    n_attempted: int
    n_succeeded: int
    success_rate: float
    mean_c0: float | None
    mean_c1: float | None
    median_c0: float | None
    median_c1: float | None
    iqr_c0: float | None
    iqr_c1: float | None
    ynn: float | None
    redundancy: float | None
    violation: float | None
    avg_time_seconds: float | None
    setup_time_seconds: float
    error: str | None = None

    TIMING_FIELDS = ("avg_time_seconds", "setup_time_seconds")

    def to_dict(self, include_time: bool = True) -> dict:
        d = asdict(self)
        if not include_time:
            for f in self.TIMING_FIELDS:
                d.pop(f)
        return d


def _stats(v):
    if v.size == 0:
        return None, None, None
    q25, med, q75 = np.percentile(v, [25, 50, 75])
    return float(v.mean()), float(med), float(q75 - q25)


def evaluate(results, model, train, schema, *, dataset: str, model_arch: str, method: str,
             family: str, theta: float = 0.5, setup_time: float = 0.0, timed: bool = True,
             k: int = YNN_K) -> BenchmarkRecord:
    """Aggregate per-instance results into one :class:`BenchmarkRecord`.

    Cost, yNN, redundancy and violation statistics use successes only; the
    success rate and average time use every attempt.
    """
    results = list(results)
    n = len(results)
    if n == 0:
        raise ValueError("no attempts to evaluate")
    ok = [r for r in results if r.success]
    if ok:
        X = np.array([r.factual for r in ok])
        C = np.array([r.counterfactual for r in ok])
        c0 = np.atleast_1d(cost_l0(X, C))
        c1 = np.atleast_1d(cost_l1(X, C))
        red = float(np.mean([redundancy(r.factual, r.counterfactual, model, theta) for r in ok]))
        vio = float(np.mean([constraint_violation(r.factual, r.counterfactual, schema) for r in ok]))
        y = ynn(C, model, train, k, theta)
    else:
        c0 = c1 = np.empty(0)
        red = vio = y = None
    m0, med0, iqr0 = _stats(c0)
    m1, med1, iqr1 = _stats(c1)
    return BenchmarkRecord(
        dataset, model_arch, method, family, n, len(ok), len(ok) / n,
        m0, m1, med0, med1, iqr0, iqr1, y, red, vio,
        avg_time(results) if timed else None, float(setup_time),
    )


def is_missing(v) -> bool:
    return v is None or (isinstance(v, float) and math.isnan(v))
