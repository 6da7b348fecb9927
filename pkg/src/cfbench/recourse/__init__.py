"""Recourse methods and a registry used by the benchmark runner.

Each registered method has a family (``independence`` for input-space search,
``dependence`` for search through a generative model or data graph), the
setup artefacts it needs (``vae`` and/or ``graph``), a parameter dataclass
and a ``run(problem, params, setup)`` callable.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Callable

from ..surrogate import lime_fit
from .core import (
    FAILURE,
    SUCCESS,
    CounterfactualResult,
    LatentProblem,
    NotNegativeError,
    RecourseProblem,
    finalize,
    project_to_actions,
)
from .dependent import (
    ClueParams,
    FaceParams,
    RecourseGraph,
    ReviseParams,
    binary_entropy,
    build_graph,
    clue_lite,
    entropy_gradient,
    face,
    revise,
)
from .independent import (
    ArParams,
    CemParams,
    DiceParams,
    GsParams,
    WachterParams,
    actionable_recourse,
    cem,
    dice_single,
    growing_spheres,
    wachter,
)

INDEPENDENCE = "independence"
DEPENDENCE = "dependence"


@dataclass(frozen=True)
class MethodSpec:
    name: str
    family: str
    needs: frozenset
    params_type: type
    defaults: dict
    run: Callable
    summary: str

    def make_params(self, overrides: dict | None = None):
        kw = dict(self.defaults)
        kw.update(overrides or {})
        known = {f.name for f in dataclasses.fields(self.params_type)}
        unknown = set(kw) - known
        if unknown:
            raise ValueError(f"{self.name}: unknown parameter(s) {sorted(unknown)}")
        return self.params_type(**kw)


def _latent(p, setup):
    return LatentProblem(p, setup["vae"], setup.get("latent_half_width", 3.0))


def _ar_lime(p, params, setup):
    surrogate = lime_fit(p.model, p.factual, params.lime_samples, seed=params.seed,
                         binary_mask=p.binary, scale=params.lime_scale)
    return actionable_recourse(p, surrogate, params)


METHODS: dict[str, MethodSpec] = {
    m.name: m
    for m in [
        MethodSpec("wachter", INDEPENDENCE, frozenset(), WachterParams, {},
                   lambda p, k, s: wachter(p, k), "l1-regularized gradient search with growing lambda"),
        MethodSpec("growing_spheres", INDEPENDENCE, frozenset(), GsParams, {},
                   lambda p, k, s: growing_spheres(p, k), "random search in growing shells"),
        MethodSpec("cem", INDEPENDENCE, frozenset(), CemParams, {},
                   lambda p, k, s: cem(p, k), "elastic-net shrinkage-thresholding"),
        MethodSpec("dice", INDEPENDENCE, frozenset(), DiceParams, {},
                   lambda p, k, s: dice_single(p, k), "hinge + proximity gradient search, one counterfactual"),
        MethodSpec("ar", INDEPENDENCE, frozenset(), ArParams, {},
                   lambda p, k, s: actionable_recourse(p, None, k),
                   "minimal-cost grid action (local linear surrogate for non-linear models)"),
        MethodSpec("ar_lime", INDEPENDENCE, frozenset(), ArParams, {}, _ar_lime,
                   "minimal-cost grid action on a local linear surrogate"),
        MethodSpec("cem_vae", DEPENDENCE, frozenset({"vae"}), CemParams, {"vae_weight": 0.9},
                   lambda p, k, s: cem(p, k, s["vae"]), "CEM with autoencoder reconstruction penalty"),
        MethodSpec("revise", DEPENDENCE, frozenset({"vae"}), ReviseParams, {},
                   lambda p, k, s: revise(_latent(p, s), k), "latent-space gradient search"),
        MethodSpec("clue", DEPENDENCE, frozenset({"vae"}), ClueParams, {},
                   lambda p, k, s: clue_lite(_latent(p, s), k), "latent search for low-uncertainty points"),
        MethodSpec("face_eps", DEPENDENCE, frozenset({"graph"}), FaceParams, {"mode": "eps"},
                   lambda p, k, s: face(p, s["graph"], k), "shortest path on an epsilon graph"),
        MethodSpec("face_knn", DEPENDENCE, frozenset({"graph"}), FaceParams, {"mode": "knn"},
                   lambda p, k, s: face(p, s["graph"], k), "shortest path on a kNN graph"),
    ]
}


def get_method(name: str) -> MethodSpec:
    try:
        return METHODS[name]
    except KeyError:
        raise KeyError(f"unknown method {name!r}; choose from {sorted(METHODS)}") from None


__all__ = [
    "ArParams", "CemParams", "ClueParams", "CounterfactualResult", "DEPENDENCE", "DiceParams",
    "FAILURE", "FaceParams", "GsParams", "INDEPENDENCE", "LatentProblem", "METHODS", "MethodSpec",
    "NotNegativeError", "RecourseGraph", "RecourseProblem", "ReviseParams", "SUCCESS", "WachterParams",
    "actionable_recourse", "binary_entropy", "build_graph", "cem", "clue_lite", "dice_single",
    "entropy_gradient", "face", "finalize", "get_method", "growing_spheres", "project_to_actions",
    "revise", "wachter",
]
