"""FACE: recourse as a walk through the training data.

FACE builds a graph over training rows (kNN or epsilon-ball edges) whose
edge weights grow in low-density regions, then returns the cheapest
positively classified row reachable from the factual. The answer is always
a real training row. The price is coverage: a sparse epsilon graph may
leave the factual stranded.

Run:  python3 demos/03_face_paths.py
"""
import time

import numpy as np

from cfbench import bench, catalog
from cfbench.evaluation import constraint_violation, cost_l1
from cfbench.model import TrainConfig, train
from cfbench.recourse import FaceParams, RecourseProblem, build_graph, face

data = catalog.prepare("adult")
epochs, batch = catalog.TRAIN_SETTINGS[("adult", "linear")]
model = train("linear", data.train, TrainConfig(epochs=epochs, batch_size=batch))
cohort = bench.sample_cohort(model, data.test, 30, seed=0)

for params in (FaceParams(mode="knn", k=50), FaceParams(mode="eps", radius=0.25)):
    # graph construction is paid once per data set and model
    t0 = time.perf_counter()
    graph = build_graph(data.train, model, params)
    built = time.perf_counter() - t0
    print(f"\n{params.mode}: {graph.n_nodes} nodes, {graph.n_edges} edges, built in {built:.2f}s")

    results = [face(RecourseProblem.from_schema(model, x, data.schema), graph) for x in cohort]
    ok = [r for r in results if r.success]
    print(f"  success {len(ok)}/{len(results)}")
    if not ok:
        continue
    # every answer is a verbatim training row
    rows = data.train.matrix[[r.info["row"] for r in ok]]
    assert np.array_equal(rows, np.array([r.counterfactual for r in ok]))
    print(f"  mean path cost {np.mean([r.info['path_cost'] for r in ok]):.3f}")
    print(f"  mean l1 cost   {np.mean([cost_l1(r.factual, r.counterfactual) for r in ok]):.3f}")
    # continuous immutables such as age are not filtered by the graph
    vio = np.mean([constraint_violation(r.factual, r.counterfactual, data.schema) for r in ok])
    print(f"  mean violations {vio:.2f}")
