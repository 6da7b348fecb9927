"""Problem/result value types and admissible-action handling shared by all methods."""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logit as _logit

from ..dataset import DECREASE_ONLY, DIRECTIONS, FREE, INCREASE_ONLY, binary_mask, immutable_mask
from ..model import check_threshold

SUCCESS = "success"
FAILURE = "failure"

# failure reasons
BUDGET_EXHAUSTED = "budget_exhausted"
NO_VALIDATED_ACTION = "no_validated_action"
NO_REACHABLE_POSITIVE = "no_reachable_positive"
METHOD_ERROR = "method_error"


class NotNegativeError(ValueError):
    """The factual is not in the negative class ``f(x) < theta``."""


def _readonly(a, dtype=float):
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class RecourseProblem:
    """One factual ``x`` with ``f(x) < theta`` and its admissible action set.

    ``frozen`` marks immutable coordinates; ``directions`` holds one of
    ``free``/``increase_only``/``decrease_only`` per coordinate; every
    coordinate is boxed to ``[lower, upper]`` (``[0, 1]`` widened to include
    the factual, since test rows may encode slightly outside the unit box).
    """

    model: object
    factual: np.ndarray
    theta: float = 0.5
    frozen: np.ndarray | None = None
    directions: tuple[str, ...] | None = None
    binary: np.ndarray | None = None
    cost_weights: tuple[float, float] = (0.0, 1.0)
    lower: np.ndarray = field(init=False)
    upper: np.ndarray = field(init=False)

    def __post_init__(self):
        x = _readonly(self.factual)
        if x.ndim != 1 or x.size != self.model.d:
            raise ValueError(f"factual must be a vector of length {self.model.d}")
        d = x.size
        theta = check_threshold(self.theta)
        p = self.model.predict_proba(x)
        if not p < theta:
            raise NotNegativeError(f"factual has f(x) = {p:.6g} which is not below theta = {theta}")
        frozen = np.zeros(d, bool) if self.frozen is None else np.asarray(self.frozen, bool)
        binary = np.zeros(d, bool) if self.binary is None else np.asarray(self.binary, bool)
        directions = (FREE,) * d if self.directions is None else tuple(self.directions)
        if frozen.shape != (d,) or binary.shape != (d,) or len(directions) != d:
            raise ValueError("frozen, binary and directions need one entry per feature")
        bad = set(directions) - set(DIRECTIONS)
        if bad:
            raise ValueError(f"unknown direction(s) {sorted(bad)}")
        w0, w1 = (float(c) for c in self.cost_weights)
        if w0 < 0 or w1 < 0 or not math.isclose(w0 + w1, 1.0):
            raise ValueError("cost_weights must be a convex combination (non-negative, summing to 1)")
        object.__setattr__(self, "factual", x)
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "frozen", _readonly(frozen, bool))
        object.__setattr__(self, "binary", _readonly(binary, bool))
        object.__setattr__(self, "directions", directions)
        object.__setattr__(self, "cost_weights", (w0, w1))
        object.__setattr__(self, "lower", _readonly(np.minimum(0.0, x)))
        object.__setattr__(self, "upper", _readonly(np.maximum(1.0, x)))

    @classmethod
    def from_schema(cls, model, factual, schema, theta: float = 0.5, **kw) -> "RecourseProblem":
        return cls(
            model,
            factual,
            theta,
            frozen=immutable_mask(schema),
            directions=tuple(f.direction for f in schema),
            binary=binary_mask(schema),
            **kw,
        )

    @property
    def d(self) -> int:
        return self.factual.size

    @property
    def mutable(self) -> np.ndarray:
        return ~self.frozen

    @property
    def logit_threshold(self) -> float:
        return float(_logit(self.theta))

    def is_valid(self, candidate) -> bool:
        """Strict crossing ``f(candidate) > theta``."""
        return bool(self.model.predict_proba(candidate) > self.theta)

    def clip_box(self, candidate) -> np.ndarray:
        return np.clip(candidate, self.lower, self.upper)

    def round_binary(self, candidate) -> np.ndarray:
        out = np.array(candidate, dtype=float)
        out[..., self.binary] = (out[..., self.binary] >= 0.5).astype(float)
        return out


def project_to_actions(p: RecourseProblem, candidate) -> np.ndarray:
    """Map ``candidate`` (a vector or a batch of rows) into the admissible set.

    Frozen coordinates are reset to the factual, direction-restricted ones are
    clamped to the allowed side of the factual, and everything is boxed.
    """
    c = np.array(candidate, dtype=float)
    if c.shape[-1] != p.d:
        raise ValueError(f"candidate must have {p.d} coordinates")
    x = p.factual
    inc = np.array([dr == INCREASE_ONLY for dr in p.directions])
    dec = np.array([dr == DECREASE_ONLY for dr in p.directions])
    c = np.where(inc, np.maximum(c, x), c)
    c = np.where(dec, np.minimum(c, x), c)
    c = np.clip(c, p.lower, p.upper)
    return np.where(p.frozen, x, c)


def movable(p: RecourseProblem, point, direction) -> np.ndarray:
    """Coordinates where moving ``point`` along ``direction`` is not undone by projection."""
    point = np.asarray(point, dtype=float)
    up, down = direction > 0, direction < 0
    inc = np.array([dr == INCREASE_ONLY for dr in p.directions])
    dec = np.array([dr == DECREASE_ONLY for dr in p.directions])
    blocked = (
        p.frozen
        | (up & (point >= p.upper))
        | (down & (point <= p.lower))
        | (down & inc & (point <= p.factual))
        | (up & dec & (point >= p.factual))
    )
    return ~blocked


@dataclass(frozen=True, eq=False)
class CounterfactualResult:
    status: str
    method_name: str
    factual: np.ndarray
    counterfactual: np.ndarray | None = None
    reason: str | None = None
    iterations: int = 0
    wall_time_seconds: float = 0.0
    info: dict = field(default_factory=dict)

    @property
    def success(self) -> bool:
        return self.status == SUCCESS

    @property
    def delta(self) -> np.ndarray | None:
        return None if self.counterfactual is None else self.counterfactual - self.factual

    def to_json_dict(self, include_time: bool = True) -> dict:
        out = {
            "method": self.method_name,
            "status": self.status,
            "reason": self.reason,
            "iterations": int(self.iterations),
            "factual": self.factual.tolist(),
            "counterfactual": None if self.counterfactual is None else self.counterfactual.tolist(),
            "delta": None if self.counterfactual is None else self.delta.tolist(),
        }
        if include_time:
            out["wall_time_seconds"] = self.wall_time_seconds
        if self.info:
            out["info"] = _jsonable(self.info)
        return out


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, np.generic):
        return v.item()
    return v


def finalize(
    p: RecourseProblem,
    candidate,
    method: str,
    iterations: int,
    start: float,
    reason: str = BUDGET_EXHAUSTED,
    info: dict | None = None,
) -> CounterfactualResult:
    """Single exit point: success iff ``candidate`` strictly crosses ``theta``.

    ``candidate=None`` (or a non-crossing candidate) yields a failure with
    ``reason``. ``start`` is a :func:`time.perf_counter` stamp.
    """
    elapsed = time.perf_counter() - start
    if candidate is not None:
        cf = _readonly(candidate)
        if cf.shape == p.factual.shape and np.isfinite(cf).all() and p.is_valid(cf):
            return CounterfactualResult(SUCCESS, method, p.factual, cf, None, iterations, elapsed, info or {})
    return CounterfactualResult(FAILURE, method, p.factual, None, reason, iterations, elapsed, info or {})


@dataclass(frozen=True, eq=False)
class LatentProblem:
    """A :class:`RecourseProblem` searched through a VAE decoder.

    The latent action set is the box ``encode(x) +- half_width``.
    """

    problem: RecourseProblem
    vae: object
    half_width: float = 3.0
    z0: np.ndarray = field(init=False)

    def __post_init__(self):
        if not self.half_width > 0:
            raise ValueError("half_width must be positive")
        if self.vae.d != self.problem.d:
            raise ValueError("VAE input dimension does not match the problem")
        object.__setattr__(self, "z0", _readonly(self.vae.encode(self.problem.factual)))

    @property
    def z_lower(self) -> np.ndarray:
        return self.z0 - self.half_width

    @property
    def z_upper(self) -> np.ndarray:
        return self.z0 + self.half_width

    def clamp(self, z) -> np.ndarray:
        return np.clip(z, self.z_lower, self.z_upper)
