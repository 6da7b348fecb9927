import itertools
import math

import numpy as np
import pytest
from scipy.sparse.csgraph import dijkstra

from cfbench import catalog
from cfbench.generative import train_vae
from cfbench.model import LinearModel, MlpModel, TrainConfig, train
from cfbench.recourse import (
    ClueParams,
    FaceParams,
    LatentProblem,
    RecourseProblem,
    ReviseParams,
    binary_entropy,
    build_graph,
    cem,
    clue_lite,
    entropy_gradient,
    face,
    get_method,
    revise,
)
from cfbench.recourse.core import NO_REACHABLE_POSITIVE


# ------------------------------------------------------------------ fixtures

@pytest.fixture(scope="module")
def synth():
    return catalog.prepare("synthetic")


@pytest.fixture(scope="module")
def synth_model(synth):
    ep, bs = catalog.TRAIN_SETTINGS[("synthetic", "linear")]
    return train("linear", synth.train, TrainConfig(epochs=ep, batch_size=bs))


@pytest.fixture(scope="module")
def synth_vae(synth):
    return train_vae(synth.train, k=2)


def _negatives(model, X, n):
    neg = X[model.predict_proba(X) <= 0.5]
    return neg[:n]


# ------------------------------------------------------------------ FACE oracle

def _oracle_kde(points, q, bw):
    return np.array([np.mean([math.exp(-np.sum((r - p) ** 2) / (2 * bw * bw)) for p in points]) for r in q])


def _oracle_face(points, x, model, k, bw):
    """Floyd-Warshall over an explicitly listed kNN graph plus the factual as node n."""
    n = len(points)
    dmax = _oracle_kde(points, points, bw).max()

    def weight(a, b):
        ratio = _oracle_kde(points, [(a + b) / 2], bw)[0] / dmax
        pen = 10.0 if ratio == 0 else min(max(1.0 - math.log(ratio), 1.0), 10.0)
        return float(np.linalg.norm(a - b)) * pen

    D = [[math.inf] * (n + 1) for _ in range(n + 1)]
    for i in range(n + 1):
        D[i][i] = 0.0
    for i in range(n):
        others = sorted((j for j in range(n) if j != i), key=lambda j: np.linalg.norm(points[i] - points[j]))
        for j in others[:k]:
            D[i][j] = D[j][i] = weight(points[i], points[j])
    for j in sorted(range(n), key=lambda j: np.linalg.norm(x - points[j]))[:k]:
        D[n][j] = D[j][n] = weight(x, points[j])
    for m, i, j in itertools.product(range(n + 1), repeat=3):
        if D[i][m] + D[m][j] < D[i][j]:
            D[i][j] = D[i][m] + D[m][j]
    pos = [j for j in range(n) if model.predict_proba(points[j]) > 0.5 and math.isfinite(D[n][j])]
    if not pos:
        return None, math.inf
    best = min(pos, key=lambda j: D[n][j])
    return best, D[n][best]


@pytest.mark.parametrize("seed", range(4))
def test_face_knn_matches_floyd_warshall(seed):
    rng = np.random.default_rng(seed)
    pts = rng.random((20, 2))
    model = LinearModel([3.0, 3.0], -4.5)
    x = np.array([0.1, 0.15])
    bw = 0.3
    g = build_graph(pts, model, FaceParams(mode="knn", k=3, density_bandwidth=bw))
    r = face(RecourseProblem(model, x), g)
    node, cost = _oracle_face(pts, x, model, 3, bw)
    if node is None:
        assert not r.success
    else:
        assert r.success
        assert r.info["path_cost"] == pytest.approx(cost, rel=1e-9)
        np.testing.assert_array_equal(r.counterfactual, pts[node])


def test_eps_graph_below_min_distance_is_empty():
    rng = np.random.default_rng(1)
    pts = rng.random((30, 3))
    dmin = min(np.linalg.norm(a - b) for a, b in itertools.combinations(pts, 2))
    model = LinearModel([1.0, 1.0, 1.0], -2.5)
    g = build_graph(pts, model, FaceParams(mode="eps", radius=0.99 * dmin))
    assert g.n_edges == 0
    # a factual far from everything has no way in
    r = face(RecourseProblem(model, np.array([5.0, 5.0, -20.0])), g)
    assert not r.success and r.reason == NO_REACHABLE_POSITIVE


def test_knn_degree_bounds():
    pts = np.random.default_rng(2).random((40, 2))
    k = 4
    g = build_graph(pts, LinearModel([1.0, 1.0]), FaceParams(mode="knn", k=k))
    A = g.adjacency + g.adjacency.T
    deg = np.diff(A.tocsr().indptr)
    assert (deg >= k).all() and (deg <= len(pts) - 1).all()
    # no self loops, upper triangular storage
    coo = g.adjacency.tocoo()
    assert (coo.row < coo.col).all()


def test_identical_points_are_joined_at_zero_cost():
    pts = np.array([[0.2, 0.2], [0.2, 0.2], [0.9, 0.9]])
    g = build_graph(pts, LinearModel([1.0, 1.0], -1.0), FaceParams(mode="knn", k=1, density_bandwidth=0.5))
    dist = dijkstra(g.adjacency, directed=False, indices=0)
    assert dist[1] == 0.0


def test_face_output_is_a_training_row(synth, synth_model):
    g = build_graph(synth.train, synth_model, FaceParams(mode="knn", k=10, max_graph_nodes=500))
    X = synth.train.matrix
    for x in _negatives(synth_model, synth.test.matrix, 5):
        r = face(RecourseProblem(synth_model, x), g)
        assert r.success
        row = r.info["row"]
        np.testing.assert_array_equal(r.counterfactual, X[row])
        assert synth_model.predict_proba(r.counterfactual) > 0.5


def test_graph_respects_node_cap_and_immutable_binaries():
    rng = np.random.default_rng(3)
    X = rng.random((300, 3))
    X[:, 2] = rng.integers(0, 2, 300)
    g = build_graph(X, LinearModel([1.0, 1.0, 0.0], -1.5), FaceParams(k=8, max_graph_nodes=100),
                    frozen_binary=[False, False, True])
    assert g.n_nodes == 100 and len(set(g.index)) == 100
    coo = g.adjacency.tocoo()
    assert (g.points[coo.row, 2] == g.points[coo.col, 2]).all()
    # a factual with sex=0 can only land on sex=0 nodes
    x = np.array([0.1, 0.1, 0.0])
    r = face(RecourseProblem(g.model, x), g)
    assert r.success and r.counterfactual[2] == 0.0


def test_face_params_validation():
    with pytest.raises(ValueError):
        FaceParams(mode="ball")
    with pytest.raises(ValueError):
        FaceParams(k=0)
    with pytest.raises(ValueError):
        build_graph(np.zeros((0, 2)), LinearModel([1.0, 1.0]))


# ------------------------------------------------------------------ entropy

def test_binary_entropy_values():
    assert binary_entropy(0.0) == 0.0 and binary_entropy(1.0) == 0.0
    assert binary_entropy(0.5) == pytest.approx(math.log(2))
    np.testing.assert_allclose(binary_entropy(np.array([0.1, 0.9])), [0.3250829733914482] * 2)


@pytest.mark.parametrize("arch", ["linear", "mlp"])
def test_entropy_gradient_matches_finite_differences(arch):
    rng = np.random.default_rng(7)
    d = 5
    m = LinearModel(rng.normal(size=d), 0.2) if arch == "linear" else MlpModel.initialize(d, rng)
    H = lambda t: binary_entropy(m.predict_proba(t))  # noqa: E731
    for _ in range(20):
        x = rng.random(d)
        num = np.array([(H(x + e) - H(x - e)) / 2e-6 for e in np.eye(d) * 1e-6])
        ana = entropy_gradient(m, x)
        assert np.linalg.norm(ana - num) <= 1e-4 * max(np.linalg.norm(num), 1e-8) + 1e-9


# ------------------------------------------------------------------ latent methods

def test_revise_output_is_decoded_point(synth, synth_model, synth_vae):
    for x in _negatives(synth_model, synth.test.matrix, 5):
        lp = LatentProblem(RecourseProblem(synth_model, x), synth_vae)
        r = revise(lp)
        assert r.success
        z = r.info["z"]
        np.testing.assert_allclose(r.counterfactual, synth_vae.decode(z), atol=1e-12)
        assert (z >= lp.z_lower - 1e-12).all() and (z <= lp.z_upper + 1e-12).all()


def test_revise_rounds_binaries():
    rng = np.random.default_rng(0)
    bm = np.array([False, True, False])
    X = rng.random((400, 3))
    X[:, 1] = (X[:, 1] > 0.5).astype(float)
    vae = train_vae(X, k=2, binary_mask=bm)
    model = LinearModel([2.0, 2.0, 2.0], -3.5)
    x = np.array([0.2, 0.0, 0.2])
    r = revise(LatentProblem(RecourseProblem(model, x, binary=bm), vae))
    assert r.success
    assert r.counterfactual[1] in (0.0, 1.0)


def test_clue_lowers_uncertainty(synth, synth_model, synth_vae):
    done = 0
    for x in _negatives(synth_model, synth.test.matrix, 5):
        p = RecourseProblem(synth_model, x)
        r = clue_lite(LatentProblem(p, synth_vae))
        if r.success:
            h = binary_entropy(synth_model.predict_proba(r.counterfactual))
            assert h < binary_entropy(synth_model.predict_proba(x))
            done += 1
    assert done >= 3


def test_latent_methods_are_deterministic(synth, synth_model, synth_vae):
    x = _negatives(synth_model, synth.test.matrix, 1)[0]
    lp = LatentProblem(RecourseProblem(synth_model, x), synth_vae)
    a, b = revise(lp), revise(lp)
    assert np.array_equal(a.counterfactual, b.counterfactual)
    a, b = clue_lite(lp), clue_lite(lp)
    assert a.status == b.status and (a.counterfactual is None or np.array_equal(a.counterfactual, b.counterfactual))


def test_methods_do_not_mutate_model_or_factual(synth, synth_model, synth_vae):
    before = synth_model.checksum()
    x = _negatives(synth_model, synth.test.matrix, 1)[0].copy()
    keep = x.copy()
    p = RecourseProblem(synth_model, x)
    setup = {"vae": synth_vae,
             "graph": build_graph(synth.train, synth_model, FaceParams(max_graph_nodes=300))}
    for name in ["revise", "clue", "cem_vae", "face_knn", "face_eps"]:
        spec = get_method(name)
        spec.run(p, spec.make_params(), setup)
    assert synth_model.checksum() == before
    np.testing.assert_array_equal(x, keep)


def test_cem_with_vae_succeeds(synth, synth_model, synth_vae):
    x = _negatives(synth_model, synth.test.matrix, 1)[0]
    spec = get_method("cem_vae")
    r = cem(RecourseProblem(synth_model, x), spec.make_params(), synth_vae)
    assert r.success and synth_model.predict_proba(r.counterfactual) > 0.5


@pytest.mark.parametrize("cls,kw", [(ReviseParams, dict(lam=0.0)), (ReviseParams, dict(lambda_decay=0.0)),
                                    (ClueParams, dict(distance_weight=-1.0)), (ClueParams, dict(max_iters=0))])
def test_latent_param_validation(cls, kw):
    with pytest.raises(ValueError):
        cls(**kw)
