"""Data-manifold recourse: REVISE and CLUE-lite (VAE latent search) and FACE (graph search)."""
from __future__ import annotations

import time
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import dijkstra
from scipy.spatial import cKDTree
from scipy.spatial.distance import cdist

from ..optim import Adam
from .core import (
    NO_REACHABLE_POSITIVE,
    CounterfactualResult,
    LatentProblem,
    RecourseProblem,
    finalize,
)
from .independent import _hinge_target

STALL_TOL = 1e-3
RESTART_DRAWS = 256


# --------------------------------------------------------------------------- REVISE

@dataclass(frozen=True)
class ReviseParams:
    learning_rate: float = 0.1
    lam: float = 0.5
    max_iters: int = 1500
    lambda_decay: float = 0.5
    patience: int = 150
    seed: int = 0

    def __post_init__(self):
        if not (self.learning_rate > 0 and self.lam > 0) or self.max_iters < 1 or self.patience < 1:
            raise ValueError("REVISE parameters must be positive")
        if not 0 < self.lambda_decay <= 1:
            raise ValueError("lambda_decay must lie in (0, 1]")


def _latent_search(lp: LatentProblem, name, lr, max_iters, grad_x, accept, patience, seed):
    """Adam on ``z`` using ``grad_x(x_decoded, it) -> dL/dx`` pulled back through the decoder.

    ``accept(candidate)`` decides whether a rounded decoded point ends the
    search. When a window of ``patience`` iterations raises the best
    classifier score by less than ``STALL_TOL`` (a local optimum or a flat
    region of the decoder), the search restarts from the highest-scoring of
    ``RESTART_DRAWS`` seeded uniform draws inside the latent box.
    """
    start = time.perf_counter()
    p = lp.problem
    rng = np.random.default_rng(seed)
    z = lp.z0.copy()
    opt = Adam([z], lr)
    best_before = best = -np.inf
    restarts = 0
    for it in range(1, max_iters + 1):
        xd = lp.vae.decode(z)
        _, gz = lp.vae.decode_vjp(z, grad_x(xd, it))
        opt.step([gz])
        z[:] = lp.clamp(z)
        cand = p.round_binary(lp.vae.decode(z))
        if accept(cand):
            return finalize(p, cand, name, it, start, info={"z": z.copy(), "restarts": restarts})
        best = max(best, p.model.predict_proba(cand))
        if it % patience == 0:
            if best < best_before + STALL_TOL:
                draws = rng.uniform(lp.z_lower, lp.z_upper, size=(RESTART_DRAWS, z.size))
                z[:] = draws[np.argmax(p.model.predict_proba(lp.vae.decode(draws)))]
                opt = Adam([z], lr)
                restarts += 1
                best = -np.inf
            best_before = best
    return finalize(p, None, name, max_iters, start, info={"restarts": restarts})


def revise(lp: LatentProblem, params: ReviseParams = ReviseParams()) -> CounterfactualResult:
    """Latent gradient descent on ``BCE(f(g(z)), 1) + lam * ||g(z) - x||_1``.

    Starts at ``z = encode(x)``, keeps ``z`` inside the latent box and returns
    the first decoded point (binary coordinates rounded) that crosses. The
    distance weight is multiplied by ``lambda_decay`` every ``patience``
    iterations without a crossing; stalled searches restart at random
    points of the latent box.
    """
    p = lp.problem
    x = p.factual

    def grad_x(xd, it):
        lam = params.lam * params.lambda_decay ** ((it - 1) // params.patience)
        f = p.model.predict_proba(xd)
        return -(1.0 - f) * p.model.logit_gradient(xd) + lam * np.sign(xd - x)

    return _latent_search(lp, "revise", params.learning_rate, params.max_iters, grad_x, p.is_valid,
                          params.patience, params.seed)


# --------------------------------------------------------------------------- CLUE-lite

@dataclass(frozen=True)
class ClueParams:
    uncertainty_weight: float = 1.0
    distance_weight: float | None = None  # 1/d when unset
    learning_rate: float = 0.1
    max_iters: int = 1000
    patience: int = 150
    seed: int = 0

    def __post_init__(self):
        if not (self.uncertainty_weight > 0 and self.learning_rate > 0) or self.max_iters < 1 or self.patience < 1:
            raise ValueError("CLUE parameters must be positive")
        if self.distance_weight is not None and not self.distance_weight > 0:
            raise ValueError("distance_weight must be positive")


def binary_entropy(p) -> np.ndarray | float:
    """``H(p)`` in nats with ``H(0) = H(1) = 0``."""
    p = np.asarray(p, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        h = -(np.where(p > 0, p * np.log(p), 0.0) + np.where(p < 1, (1 - p) * np.log1p(-p), 0.0))
    return float(h) if h.ndim == 0 else h


def entropy_gradient(model, x) -> np.ndarray:
    """``dH(f(x))/dx = -s * f (1 - f) * ds/dx`` with ``s`` the logit."""
    s = model.logit(x)
    f = model.predict_proba(x)
    return -s * f * (1.0 - f) * model.logit_gradient(x)


def clue_lite(lp: LatentProblem, params: ClueParams = ClueParams()) -> CounterfactualResult:
    """Latent search on ``u * H(f(g(z))) + hinge + w * ||g(z) - x||_1``.

    Stops at the first decoded point that crosses and is less uncertain
    (lower predictive entropy) than the factual.
    """
    p = lp.problem
    x = p.factual
    w = params.distance_weight if params.distance_weight is not None else 1.0 / p.d
    target = _hinge_target(p.theta)
    h0 = binary_entropy(p.model.predict_proba(x))

    def grad_x(xd, it):
        g = params.uncertainty_weight * entropy_gradient(p.model, xd) + w * np.sign(xd - x)
        if p.model.logit(xd) < target:
            g = g - p.model.logit_gradient(xd)
        return g

    def accept(cand):
        return p.is_valid(cand) and binary_entropy(p.model.predict_proba(cand)) < h0

    return _latent_search(lp, "clue", params.learning_rate, params.max_iters, grad_x, accept,
                          params.patience, params.seed)


# --------------------------------------------------------------------------- FACE

@dataclass(frozen=True)
class FaceParams:
    mode: str = "knn"
    k: int = 50
    radius: float = 0.25
    density_bandwidth: float | None = None  # Scott's rule when unset
    max_graph_nodes: int = 2000
    seed: int = 0

    def __post_init__(self):
        if self.mode not in ("knn", "eps"):
            raise ValueError("mode must be 'knn' or 'eps'")
        if self.k < 1 or not self.radius > 0 or self.max_graph_nodes < 2:
            raise ValueError("need k >= 1, radius > 0 and max_graph_nodes >= 2")
        if self.density_bandwidth is not None and not self.density_bandwidth > 0:
            raise ValueError("density_bandwidth must be positive")


def kde(points, q, bandwidth) -> np.ndarray:
    """Isotropic Gaussian KDE (unnormalized mean kernel) of ``points`` at the rows of ``q``."""
    q = np.atleast_2d(q)
    out = np.empty(q.shape[0])
    for s in range(0, q.shape[0], 2048):
        d2 = cdist(q[s:s + 2048], points, "sqeuclidean")
        out[s:s + 2048] = np.exp(-d2 / (2.0 * bandwidth**2)).mean(axis=1)
    return out


@dataclass(frozen=True, eq=False)
class RecourseGraph:
    """Undirected weighted graph over (a subsample of) training rows.

    ``index`` maps graph nodes to rows of the source data; ``adjacency`` is
    an upper-triangular CSR matrix (explicit zeros are edges). ``positive``
    caches ``f(node) > theta`` for the model the graph was built with.
    """

    points: np.ndarray
    index: np.ndarray
    adjacency: csr_matrix
    positive: np.ndarray
    params: FaceParams
    bandwidth: float
    density_max: float
    frozen_binary: np.ndarray
    model: object = None
    theta: float = 0.5

    @property
    def n_nodes(self) -> int:
        return self.points.shape[0]

    @property
    def n_edges(self) -> int:
        return self.adjacency.nnz

    def edge_weights(self, a, b) -> np.ndarray:
        """``||a - b|| * clip(1 - log(kde(mid) / max kde), 1, 10)`` row-wise."""
        dist = np.linalg.norm(a - b, axis=1)
        ratio = kde(self.points, (a + b) / 2.0, self.bandwidth) / self.density_max
        with np.errstate(divide="ignore"):
            pen = np.clip(1.0 - np.log(ratio), 1.0, 10.0)
        return dist * pen

    @cached_property
    def tree(self) -> cKDTree:
        return cKDTree(self.points)

    def neighbours(self, q) -> np.ndarray:
        """Graph nodes a new point ``q`` connects to under the graph's mode."""
        tree = self.tree
        if self.params.mode == "knn":
            _, idx = tree.query(q, k=min(self.params.k, self.n_nodes))
            idx = np.atleast_1d(idx)
        else:
            idx = np.array(sorted(tree.query_ball_point(q, self.params.radius)), dtype=np.int64)
        keep = (self.points[idx][:, self.frozen_binary] == q[self.frozen_binary]).all(axis=1)
        return idx[keep]

    def positive_for(self, model, theta) -> np.ndarray:
        if model is self.model and theta == self.theta:
            return self.positive
        return np.atleast_1d(np.asarray(model.predict_proba(self.points)) > theta)


def scott_bandwidth(points) -> float:
    n, d = points.shape
    sigma = float(np.mean(np.std(points, axis=0)))
    return max(sigma, 1e-3) * n ** (-1.0 / (d + 4))


def build_graph(data, model, params: FaceParams = FaceParams(), theta: float = 0.5,
                frozen_binary=None) -> RecourseGraph:
    """Build the FACE graph over training rows.

    ``data`` is an :class:`~cfbench.dataset.EncodedDataset` (its immutable
    binary columns are used unless ``frozen_binary`` is given) or a matrix.
    At most ``max_graph_nodes`` rows are kept (seeded subsample). Edges that
    join points differing in an immutable binary feature are dropped.
    """
    if hasattr(data, "matrix"):
        X = np.asarray(data.matrix, dtype=float)
        if frozen_binary is None:
            frozen_binary = data.immutable_mask & data.binary_mask
    else:
        X = np.asarray(data, dtype=float)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ValueError("FACE needs a non-empty training matrix")
    frozen_binary = np.zeros(X.shape[1], bool) if frozen_binary is None else np.asarray(frozen_binary, bool)
    index = np.arange(X.shape[0])
    if X.shape[0] > params.max_graph_nodes:
        rng = np.random.default_rng(params.seed)
        index = np.sort(rng.choice(X.shape[0], params.max_graph_nodes, replace=False))
    pts = X[index].copy()
    pts.setflags(write=False)
    n = pts.shape[0]
    tree = cKDTree(pts)
    if params.mode == "knn":
        k = min(params.k, n - 1)
        if k < 1:
            pairs = np.empty((0, 2), dtype=np.int64)
        else:
            _, nb = tree.query(pts, k=k + 1)
            rows = np.repeat(np.arange(n), k)
            cols = _drop_self(nb, k).ravel()
            pairs = np.unique(np.sort(np.stack([rows, cols], axis=1), axis=1), axis=0)
    else:
        pairs = tree.query_pairs(params.radius, output_type="ndarray").astype(np.int64)
        pairs = np.unique(np.sort(pairs, axis=1), axis=0) if len(pairs) else np.empty((0, 2), dtype=np.int64)
    if len(pairs) and frozen_binary.any():
        same = (pts[pairs[:, 0]][:, frozen_binary] == pts[pairs[:, 1]][:, frozen_binary]).all(axis=1)
        pairs = pairs[same]
    bw = params.density_bandwidth or scott_bandwidth(pts)
    dmax = float(kde(pts, pts, bw).max())
    adj = csr_matrix((n, n))
    g = RecourseGraph(pts, index, adj, np.zeros(n, bool), params, bw, dmax, frozen_binary, model, theta)
    if len(pairs):
        w = g.edge_weights(pts[pairs[:, 0]], pts[pairs[:, 1]])
        adj = csr_matrix((w, (pairs[:, 0], pairs[:, 1])), shape=(n, n))
    positive = np.atleast_1d(np.asarray(model.predict_proba(pts)) > theta)
    return RecourseGraph(pts, index, adj, positive, params, bw, dmax, frozen_binary, model, theta)


def _drop_self(nb, k):
    """Remove each row's own index from a ``(n, k+1)`` kNN result (duplicates may displace it)."""
    n = nb.shape[0]
    out = np.empty((n, k), dtype=np.int64)
    for i in range(n):
        row = nb[i][nb[i] != i]
        out[i] = row[:k]
    return out


def face(p: RecourseProblem, g: RecourseGraph, params: FaceParams | None = None) -> CounterfactualResult:
    """Shortest-path recourse to the cheapest positively classified graph node.

    The factual joins the graph through its mode-specific neighbours; the
    returned counterfactual is the node's training row, unchanged.
    """
    start = time.perf_counter()
    name = f"face_{g.params.mode}"
    x = p.factual
    nb = g.neighbours(x)
    if nb.size == 0:
        return finalize(p, None, name, 0, start, reason=NO_REACHABLE_POSITIVE)
    n = g.n_nodes
    w = g.edge_weights(np.repeat(x[None, :], nb.size, axis=0), g.points[nb])
    adj = g.adjacency.tocoo()
    rows = np.concatenate([adj.row, np.full(nb.size, n)])
    cols = np.concatenate([adj.col, nb])
    data = np.concatenate([adj.data, w])
    full = csr_matrix((data, (rows, cols)), shape=(n + 1, n + 1))
    dist = dijkstra(full, directed=False, indices=n)[:n]
    positive = g.positive_for(p.model, p.theta)
    reach = np.isfinite(dist) & positive
    if not reach.any():
        return finalize(p, None, name, 1, start, reason=NO_REACHABLE_POSITIVE)
    best = int(np.flatnonzero(reach)[np.argmin(dist[reach])])
    return finalize(p, g.points[best], name, 1, start,
                    info={"node": best, "row": int(g.index[best]), "path_cost": float(dist[best])})

