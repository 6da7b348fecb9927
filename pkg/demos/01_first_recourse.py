"""First recourse: explain one rejected COMPAS defendant three ways.

We train a logistic regression on COMPAS, pick one person the model
classifies negatively, and ask Growing Spheres, Wachter and Actionable
Recourse what would have to change. Changes are printed in the original
units so they can be read without knowing the encoding.

Run:  python3 demos/01_first_recourse.py
"""
import numpy as np

from cfbench import catalog
from cfbench.model import TrainConfig, accuracy, train
from cfbench.recourse import RecourseProblem, actionable_recourse, growing_spheres, wachter

# Step 1: data. prepare() binarizes categoricals, splits 80/20 with seed 0
# and min-max scales with bounds fit on the training split.
data = catalog.prepare("compas")
print(f"COMPAS: {data.train.n} train rows, {data.test.n} test rows, d = {data.train.d}")
print("features:", ", ".join(data.train.feature_names))

# Step 2: the classifier under explanation.
epochs, batch = catalog.TRAIN_SETTINGS[("compas", "linear")]
model = train("linear", data.train, TrainConfig(epochs=epochs, batch_size=batch))
print(f"test accuracy: {accuracy(model, data.test.matrix, data.test.target):.3f}")

# Step 3: pick the first negatively classified test row.
scores = model.predict_proba(data.test.matrix)
i = int(np.flatnonzero(scores < 0.5)[0])
x = data.test.matrix[i]
print(f"\nfactual #{i}: f(x) = {scores[i]:.3f}")

# Step 4: the action set comes from the schema (age, race and sex are
# immutable in the default COMPAS configuration).
problem = RecourseProblem.from_schema(model, x, data.schema)
print("frozen:", [n for n, f in zip(data.train.feature_names, problem.frozen) if f])

# Step 5: three methods, one counterfactual each.
names = data.train.feature_names
raw_x = data.train.decode(x)
for method in (growing_spheres, wachter, actionable_recourse):
    r = method(problem)
    print(f"\n{r.method_name}: {r.status} after {r.iterations} iterations")
    if not r.success:
        print("  reason:", r.reason)
        continue
    raw_cf = data.train.decode(r.counterfactual)
    print(f"  f(cf) = {model.predict_proba(r.counterfactual):.3f}")
    # only report what moved; note that Wachter is free to touch immutables
    for j in np.flatnonzero(np.abs(r.delta) > 1e-9):
        print(f"  {names[j]:>16s}: {raw_x[j]:9.3f} -> {raw_cf[j]:9.3f}")
