"""LIME-lite: a kernel-weighted least-squares linear fit of ``f`` around one point.

Only the sampling and weighted regression parts of LIME are kept. The result
is consumed by the actionable-recourse search when the classifier is not
linear.
"""
from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

logger = logging.getLogger(__name__)

RIDGE_FALLBACK = 1e-6


@dataclass(frozen=True)
class LocalLinearModel:
    """``f(x) ~ coefficients . x + intercept`` near ``anchor`` (probability scale).

    ``r2`` is the weighted coefficient of determination on the fitting sample.
    """

    coefficients: np.ndarray
    intercept: float
    anchor: np.ndarray
    kernel_width: float
    r2: float = math.nan
    warnings: tuple[str, ...] = field(default=())

    def __post_init__(self):
        c = np.array(self.coefficients, dtype=float)
        a = np.array(self.anchor, dtype=float)
        if c.shape != a.shape or c.ndim != 1:
            raise ValueError("coefficients and anchor must be vectors of equal length")
        if not np.isfinite(c).all() or not math.isfinite(self.intercept):
            raise ValueError("surrogate coefficients must be finite")
        c.setflags(write=False)
        a.setflags(write=False)
        object.__setattr__(self, "coefficients", c)
        object.__setattr__(self, "anchor", a)

    @property
    def d(self) -> int:
        return self.coefficients.size

    def predict(self, x):
        return np.asarray(x, dtype=float) @ self.coefficients + self.intercept


def default_kernel_width(d: int) -> float:
    return 0.75 * math.sqrt(d)


def lime_fit(
    model,
    x,
    n_samples: int = 1000,
    kernel_width: float | None = None,
    seed: int = 0,
    binary_mask=None,
    scale: float = 0.1,
    flip_prob: float = 0.1,
) -> LocalLinearModel:
    """Fit a local linear surrogate of ``model.predict_proba`` around ``x``.

    Continuous coordinates get Gaussian noise with standard deviation ``scale``;
    binary coordinates are flipped independently with probability ``flip_prob``.
    Samples are weighted by ``exp(-dist^2 / width^2)`` with ``dist`` the
    euclidean distance to ``x``.
    """
    x = np.asarray(x, dtype=float)
    d = x.size
    if n_samples < d + 2:
        raise ValueError(f"n_samples must be at least d + 2 = {d + 2}, got {n_samples}")
    width = default_kernel_width(d) if kernel_width is None else float(kernel_width)
    if not width > 0:
        raise ValueError("kernel_width must be positive")
    bm = np.zeros(d, dtype=bool) if binary_mask is None else np.asarray(binary_mask, dtype=bool)

    rng = np.random.default_rng(seed)
    Z = x + scale * rng.standard_normal((n_samples, d))
    flips = rng.random((n_samples, d)) < flip_prob
    Z[:, bm] = np.where(flips[:, bm], 1.0 - x[bm], x[bm])
    Z[0] = x
    y = np.asarray(model.predict_proba(Z), dtype=float)
    w = np.exp(-np.sum((Z - x) ** 2, axis=1) / width**2)

    A = np.hstack([np.ones((n_samples, 1)), Z - x])
    sw = np.sqrt(w)[:, None]
    Aw, yw = A * sw, y * sw[:, 0]
    notes = []
    gram = Aw.T @ Aw
    if np.linalg.matrix_rank(gram) < d + 1:
        msg = f"singular design matrix; ridge fallback lambda={RIDGE_FALLBACK}"
        warnings.warn(msg, RuntimeWarning, stacklevel=2)
        notes.append(msg)
        reg = RIDGE_FALLBACK * np.eye(d + 1)
        reg[0, 0] = 0.0
        beta = np.linalg.solve(gram + reg, Aw.T @ yw)
    else:
        beta = np.linalg.lstsq(Aw, yw, rcond=None)[0]

    pred = A @ beta
    ybar = np.average(y, weights=w)
    ss_tot = np.sum(w * (y - ybar) ** 2)
    r2 = 1.0 - np.sum(w * (y - pred) ** 2) / ss_tot if ss_tot > 0 else math.nan
    coef = beta[1:]
    return LocalLinearModel(coef, float(beta[0] - coef @ x), x, width, float(r2), tuple(notes))
