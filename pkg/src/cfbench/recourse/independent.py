"""Input-space recourse methods: Wachter, Growing Spheres, CEM(-VAE), DICE, AR.

Gradient-based methods relax binary coordinates to ``[0, 1]`` while
optimizing and round them at 0.5 before every validity check, so a returned
counterfactual always carries 0/1 values in binary columns.
"""
from __future__ import annotations

import heapq
import itertools
import math
import time
from dataclasses import dataclass

import numpy as np
from scipy.special import logit as _logit

from ..model import LinearModel
from ..surrogate import LocalLinearModel, lime_fit
from .core import (
    NO_VALIDATED_ACTION,
    CounterfactualResult,
    RecourseProblem,
    finalize,
    movable,
    project_to_actions,
)

HINGE_MARGIN = 0.05
LAMBDA_MAX = 1e8


def _soft_threshold(v, t):
    return np.sign(v) * np.maximum(np.abs(v) - t, 0.0)


def _hinge_target(theta: float) -> float:
    """Logit the hinge pushes past: ``logit(theta + margin)``."""
    return float(_logit(min(theta + HINGE_MARGIN, 1.0 - 1e-9)))


# --------------------------------------------------------------------------- Wachter

@dataclass(frozen=True)
class WachterParams:
    learning_rate: float = 0.01
    lambda_init: float = 0.01
    lambda_growth: float = 1.5
    max_iters: int = 2000
    inner_iters: int = 100
    tol: float = 1e-6

    def __post_init__(self):
        if min(self.learning_rate, self.lambda_init, self.tol) <= 0 or self.lambda_growth <= 1:
            raise ValueError("Wachter parameters must be positive with lambda_growth > 1")
        if self.max_iters < 1 or self.inner_iters < 1:
            raise ValueError("iteration budgets must be >= 1")


def wachter(p: RecourseProblem, params: WachterParams = WachterParams()) -> CounterfactualResult:
    """Minimize ``lambda * BCE(f(x'), 1) + ||x' - x||_1`` by proximal gradient.

    The BCE gradient step is followed by soft-thresholding toward the factual
    (the exact proximal map of the l1 term) and a box clip. Immutable
    features are not protected. ``lambda`` is multiplied by ``lambda_growth``
    whenever an inner loop converges without crossing; the trace is returned
    in ``info["lambdas"]``.
    """
    start = time.perf_counter()
    x = p.factual
    xc = x.copy()
    lam = params.lambda_init
    lambdas = [lam]
    inner = 0
    for it in range(1, params.max_iters + 1):
        f = p.model.predict_proba(xc)
        grad = -lam * (1.0 - f) * p.model.logit_gradient(xc)
        new = x + _soft_threshold(xc - params.learning_rate * grad - x, params.learning_rate)
        new = p.clip_box(new)
        step = np.max(np.abs(new - xc))
        xc = new
        cand = p.round_binary(xc)
        if p.is_valid(cand):
            return finalize(p, cand, "wachter", it, start, info={"lambdas": lambdas})
        inner += 1
        if step < params.tol or inner >= params.inner_iters:
            # capped: a point pinned at a box corner would otherwise overflow
            lam = min(lam * params.lambda_growth, LAMBDA_MAX)
            lambdas.append(lam)
            inner = 0
    return finalize(p, None, "wachter", params.max_iters, start, info={"lambdas": lambdas})


# --------------------------------------------------------------------------- Growing Spheres

@dataclass(frozen=True)
class GsParams:
    step: float = 0.02
    samples_per_shell: int = 500
    max_shells: int | None = None
    shells_per_batch: int = 10
    seed: int = 0

    def __post_init__(self):
        if not self.step > 0:
            raise ValueError("step must be positive")
        if self.samples_per_shell < 1 or self.shells_per_batch < 1:
            raise ValueError("sample counts must be >= 1")
        if self.max_shells is not None and self.max_shells < 1:
            raise ValueError("max_shells must be >= 1")


def _shell_samples(rng, n_dims, r_in, r_out, count):
    """Uniform samples from shells ``r_in <= ||v|| <= r_out`` in ``n_dims`` dimensions.

    ``r_in``/``r_out`` may be arrays of length ``count`` (one shell per sample).
    """
    v = rng.standard_normal((count, n_dims))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    u = rng.random(count)
    lo = np.asarray(r_in, dtype=float) ** n_dims
    r = (u * (np.asarray(r_out, dtype=float) ** n_dims - lo) + lo) ** (1.0 / n_dims)
    return v * r[:, None]


def growing_spheres(p: RecourseProblem, params: GsParams = GsParams()) -> CounterfactualResult:
    """Random search in growing spherical shells around the factual.

    Shell ``s`` covers radii ``[s*step, (s+1)*step]`` over the mutable
    continuous coordinates; mutable binary coordinates are redrawn from
    Bernoulli(0.5) in every sample; immutable coordinates are never touched.
    The lowest shell holding a positive sample wins, ties broken by l1 cost.
    """
    start = time.perf_counter()
    rng = np.random.default_rng(params.seed)
    x = p.factual
    cont = np.flatnonzero(p.mutable & ~p.binary)
    binm = np.flatnonzero(p.mutable & p.binary)
    if cont.size == 0 and binm.size == 0:
        return finalize(p, None, "growing_spheres", 0, start)
    max_shells = params.max_shells or int(math.ceil(math.sqrt(max(cont.size, 1)) / params.step)) + 1
    m = params.samples_per_shell
    shell = 0
    batch = 1
    while shell < max_shells:
        # batches of shells double up to shells_per_batch; most searches end in the first shells
        nb = min(batch, max_shells - shell)
        batch = min(2 * batch, params.shells_per_batch)
        cands = np.repeat(x[None, :], nb * m, axis=0)
        shell_id = np.repeat(np.arange(shell, shell + nb), m)
        if cont.size:
            cands[:, cont] += _shell_samples(rng, cont.size, shell_id * params.step,
                                             (shell_id + 1) * params.step, nb * m)
        if binm.size:
            cands[:, binm] = rng.integers(0, 2, size=(nb * m, binm.size)).astype(float)
        cands = project_to_actions(p, cands)
        pos = np.asarray(p.model.predict_proba(cands)) > p.theta
        if pos.any():
            first = shell_id[pos].min()
            idx = np.flatnonzero(pos & (shell_id == first))
            cost = np.abs(cands[idx] - x).sum(axis=1)
            best = idx[np.argmin(cost)]
            return finalize(p, cands[best], "growing_spheres", int(first) + 1, start, info={"shell": int(first)})
        shell += nb
    return finalize(p, None, "growing_spheres", max_shells, start)


# --------------------------------------------------------------------------- CEM

@dataclass(frozen=True)
class CemParams:
    l1_weight: float = 0.9
    l2_weight: float = 0.1
    vae_weight: float = 0.0
    learning_rate: float = 0.01
    max_iters: int = 1000
    c_init: float = 1.0
    search_steps: int = 5

    def __post_init__(self):
        if min(self.l1_weight, self.l2_weight, self.vae_weight) < 0:
            raise ValueError("CEM weights must be non-negative")
        if not (self.learning_rate > 0 and self.c_init > 0):
            raise ValueError("learning_rate and c_init must be positive")
        if self.max_iters < 1 or self.search_steps < 1:
            raise ValueError("iteration budgets must be >= 1")


def cem(p: RecourseProblem, params: CemParams = CemParams(), vae=None) -> CounterfactualResult:
    """Elastic-net counterfactual by iterative shrinkage-thresholding.

    Smooth part: ``c * hinge + l2 * ||d||^2`` (plus
    ``vae_weight * ||x' - AE(x')||^2`` for the autoencoder-regularized
    variant), where the hinge is ``max(0, logit(theta + 0.05) - logit f(x'))``.
    The l1 part is handled by soft-thresholding at ``l1 * learning_rate``.
    The constant ``c`` is tuned by bisection over ``search_steps`` rounds that
    share ``max_iters``. Returns the feasible iterate of least elastic-net
    cost. Immutables are not protected.
    """
    if (params.vae_weight > 0) != (vae is not None):
        raise ValueError("a VAE is required iff vae_weight > 0")
    start = time.perf_counter()
    name = "cem_vae" if vae is not None else "cem"
    x = p.factual
    target = _hinge_target(p.theta)
    lr = params.learning_rate
    per_round = max(1, params.max_iters // params.search_steps)
    c, lo, hi = params.c_init, 0.0, math.inf
    best, best_cost = None, math.inf
    total = 0
    for _ in range(params.search_steps):
        xc = x.copy()
        found = False
        for _ in range(per_round):
            total += 1
            g = 2.0 * params.l2_weight * (xc - x)
            if p.model.logit(xc) < target:
                g = g - c * p.model.logit_gradient(xc)
            if vae is not None:
                r = xc - vae.reconstruct(xc)
                _, jt = vae.reconstruct_vjp(xc, r)
                g = g + params.vae_weight * 2.0 * (r - jt)
            xc = p.clip_box(x + _soft_threshold(xc - lr * g - x, params.l1_weight * lr))
            cand = p.round_binary(xc)
            if p.is_valid(cand):
                found = True
                d = cand - x
                cost = params.l1_weight * np.abs(d).sum() + params.l2_weight * d @ d
                if cost < best_cost:
                    best, best_cost = cand, cost
        if found:
            hi = min(hi, c)
        else:
            lo = max(lo, c)
        c = (lo + hi) / 2.0 if math.isfinite(hi) else c * 10.0
    return finalize(p, best, name, total, start, info={"c_final": c})


# --------------------------------------------------------------------------- DICE (single)

@dataclass(frozen=True)
class DiceParams:
    proximity_weight: float = 0.5
    diversity_weight: float = 1.0  # unused with a single counterfactual
    learning_rate: float = 0.01
    max_iters: int = 1000
    patience: int = 50

    def __post_init__(self):
        if min(self.proximity_weight, self.diversity_weight) < 0:
            raise ValueError("DICE weights must be non-negative")
        if not self.learning_rate > 0 or self.max_iters < 1:
            raise ValueError("learning_rate must be positive and max_iters >= 1")


def dice_single(p: RecourseProblem, params: DiceParams = DiceParams()) -> CounterfactualResult:
    """One counterfactual from ``hinge + proximity_weight * ||d||_1 / d``.

    Gradient steps are normalized so the largest coordinate moves by
    ``learning_rate``; each step is followed by soft-thresholding and
    projection onto the admissible actions. Returns the first crossing.
    """
    start = time.perf_counter()
    x = p.factual
    target = _hinge_target(p.theta)
    lr = params.learning_rate
    thresh = lr * params.proximity_weight / p.d
    xc = x.copy()
    cand = x
    best, since = -np.inf, 0
    for it in range(1, params.max_iters + 1):
        g = np.zeros(p.d)
        # hinge activity is judged on the rounded point that will be returned
        if p.model.logit(cand) < target:
            g = -p.model.logit_gradient(xc)
        g = np.where(movable(p, xc, -g), g, 0.0)
        gmax = np.max(np.abs(g))
        if gmax > 0:
            g = g / gmax
        xc = project_to_actions(p, x + _soft_threshold(xc - lr * g - x, thresh))
        cand = project_to_actions(p, p.round_binary(xc))
        if p.is_valid(cand):
            return finalize(p, cand, "dice", it, start)
        score = p.model.logit(cand)
        if score > best + 1e-9:
            best, since = score, 0
        else:
            since += 1
        if since >= params.patience:
            # the relaxed gradient stalls on binary coordinates: commit the best single flip
            flipped = _best_binary_flip(p, cand)
            if flipped is not None and p.model.logit(flipped) > score:
                xc = flipped
                cand = flipped
                if p.is_valid(cand):
                    return finalize(p, cand, "dice", it, start)
            since = 0
    return finalize(p, None, "dice", params.max_iters, start)


def _best_binary_flip(p: RecourseProblem, point):
    """``point`` with the single admissible binary flip that maximizes ``f`` (None if no flip exists)."""
    js = np.flatnonzero(p.binary & p.mutable)
    if js.size == 0:
        return None
    trials = np.repeat(point[None, :], js.size, axis=0)
    trials[np.arange(js.size), js] = 1.0 - point[js]
    trials = project_to_actions(p, trials)
    return trials[int(np.argmax(p.model.logit(trials)))]


# --------------------------------------------------------------------------- Actionable Recourse

@dataclass(frozen=True)
class ArParams:
    grid_steps_per_feature: int = 10
    flipset_size: int = 150
    max_nodes: int = 200_000
    lime_samples: int = 1000
    lime_scale: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.grid_steps_per_feature < 2:
            raise ValueError("grid_steps_per_feature must be >= 2")
        if self.flipset_size < 1 or self.max_nodes < 1:
            raise ValueError("flipset_size and max_nodes must be >= 1")


def action_grid(p: RecourseProblem, grid_steps: int) -> list[np.ndarray]:
    """Admissible per-feature changes ``delta_j`` (always including 0), ascending cost."""
    x = p.factual
    out = []
    for j in range(p.d):
        if p.frozen[j]:
            levels = np.array([x[j]])
        elif p.binary[j]:
            levels = np.array([x[j], 1.0 - x[j]])
        else:
            levels = np.append(np.linspace(0.0, 1.0, grid_steps + 1), x[j])
        levels = project_to_actions_1d(p, j, levels)
        deltas = np.unique(levels - x[j])
        out.append(deltas[np.argsort(np.abs(deltas), kind="stable")])
    return out


def project_to_actions_1d(p: RecourseProblem, j: int, levels) -> np.ndarray:
    rows = np.repeat(p.factual[None, :], len(levels), axis=0)
    rows[:, j] = levels
    return project_to_actions(p, rows)[:, j]


def _linear_form(p: RecourseProblem, linear):
    """``(a, need)`` such that a change ``delta`` crosses iff ``a . delta > need``."""
    if isinstance(linear, LinearModel):
        a = linear.coefficients
        need = p.logit_threshold - linear.logit(p.factual)
    elif isinstance(linear, LocalLinearModel):
        a = np.asarray(linear.coefficients)
        need = p.theta - float(linear.predict(p.factual))
    else:
        raise TypeError("actionable recourse needs a LinearModel or LocalLinearModel")
    return np.asarray(a, dtype=float), float(need)


def flipset(p: RecourseProblem, a, need, grid, max_goals: int, max_nodes: int):
    """Yield ``(cost, delta)`` for grid actions with ``a . delta > need`` in ascending l1 cost.

    Best-first search over features (largest ``|a_j|`` first) with the
    admissible heuristic ``remaining_need / max |a_j|`` over undecided
    features and pruning of branches that cannot reach ``need``.
    Stops after ``max_goals`` goals or ``max_nodes`` expansions; the number of
    expansions is the generator's return value.
    """
    order = sorted(range(p.d), key=lambda j: -abs(a[j]))
    opts = [grid[j] for j in order]
    gains = [a[j] * opts[i] for i, j in enumerate(order)]
    best_gain_rest = np.append(np.cumsum([g.max() for g in gains][::-1])[::-1], 0.0)
    max_slope = np.append(
        np.maximum.accumulate([abs(a[j]) if len(opts[i]) > 1 else 0.0 for i, j in enumerate(order)][::-1])[::-1],
        0.0,
    )
    n = len(order)

    def h(depth, gain):
        rest = need - gain
        if rest < 0:
            return 0.0
        return rest / max_slope[depth] if max_slope[depth] > 0 else math.inf

    counter = itertools.count()
    heap = [(h(0, 0.0), next(counter), 0.0, 0.0, 0, ())]
    goals = expanded = 0
    while heap and goals < max_goals and expanded < max_nodes:
        _, _, cost, gain, depth, choice = heapq.heappop(heap)
        if depth == n:
            delta = np.zeros(p.d)
            for i, k in enumerate(choice):
                delta[order[i]] = opts[i][k]
            goals += 1
            yield cost, delta
            continue
        expanded += 1
        for k, dv in enumerate(opts[depth]):
            g2 = gain + gains[depth][k]
            if g2 + best_gain_rest[depth + 1] <= need:
                continue
            c2 = cost + abs(dv)
            est = c2 + h(depth + 1, g2)
            if depth + 1 == n and not g2 > need:
                continue
            if math.isfinite(est):
                heapq.heappush(heap, (est, next(counter), c2, g2, depth + 1, choice + (k,)))
    return expanded


def actionable_recourse(p: RecourseProblem, linear=None, params: ArParams = ArParams()) -> CounterfactualResult:
    """Cheapest validated grid action under a linear (or local linear) score.

    ``linear`` defaults to the classifier itself when it is a
    :class:`LinearModel`; otherwise a LIME-lite surrogate is fitted around the
    factual. Candidate actions are enumerated in ascending l1 cost and
    each is checked against the true classifier; the first one that
    crosses is returned. If none of the first ``flipset_size`` candidates
    validates the result is a failure.
    """
    start = time.perf_counter()
    name = "ar"
    info = {}
    if linear is None:
        if isinstance(p.model, LinearModel):
            linear = p.model
        else:
            linear = lime_fit(p.model, p.factual, params.lime_samples, seed=params.seed,
                              binary_mask=p.binary, scale=params.lime_scale)
    if isinstance(linear, LocalLinearModel):
        name = "ar_lime"
        info["surrogate_r2"] = linear.r2
    a, need = _linear_form(p, linear)
    grid = action_grid(p, params.grid_steps_per_feature)
    gen = flipset(p, a, need, grid, params.flipset_size, params.max_nodes)
    checked = 0
    try:
        for _, delta in gen:
            checked += 1
            cand = p.factual + delta
            if p.is_valid(cand):
                info["flipset_rank"] = checked
                return finalize(p, cand, name, checked, start, info=info)
    finally:
        gen.close()
    info["flipset_checked"] = checked
    return finalize(p, None, name, checked, start, reason=NO_VALIDATED_ACTION, info=info)
