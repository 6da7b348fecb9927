import json
import time

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cfbench.dataset import BINARY, DECREASE_ONLY, FREE, INCREASE_ONLY, FeatureSchema
from cfbench.generative import Vae
from cfbench.model import LinearModel
from cfbench.recourse import (
    FAILURE,
    SUCCESS,
    LatentProblem,
    NotNegativeError,
    RecourseProblem,
    finalize,
    project_to_actions,
)
from cfbench.recourse.core import BUDGET_EXHAUSTED, movable

SCHEMA = (
    FeatureSchema("age", immutable=True),
    FeatureSchema("savings", direction=INCREASE_ONLY),
    FeatureSchema("debt", direction=DECREASE_ONLY),
    FeatureSchema("sex", BINARY, immutable=True),
    FeatureSchema("owner", BINARY),
)
MODEL = LinearModel([0.0, 2.0, -2.0, 0.0, 1.0], -2.0)
X = np.array([0.4, 0.3, 0.6, 1.0, 0.0])


@pytest.fixture
def problem():
    return RecourseProblem.from_schema(MODEL, X, SCHEMA)


def test_schema_drives_action_set(problem):
    np.testing.assert_array_equal(problem.frozen, [True, False, False, True, False])
    np.testing.assert_array_equal(problem.binary, [False, False, False, True, True])
    assert problem.directions == (FREE, INCREASE_ONLY, DECREASE_ONLY, FREE, FREE)
    assert problem.d == 5


def test_positive_factual_is_rejected():
    with pytest.raises(NotNegativeError):
        RecourseProblem(LinearModel([1.0]), np.array([0.5]))


def test_boundary_factual_is_rejected():
    # f(x) = theta exactly is not in the negative cohort
    with pytest.raises(NotNegativeError):
        RecourseProblem(LinearModel([1.0]), np.array([0.0]))


def test_bad_shapes_and_weights():
    with pytest.raises(ValueError):
        RecourseProblem(MODEL, X[:3])
    with pytest.raises(ValueError):
        RecourseProblem(MODEL, X, frozen=[True])
    with pytest.raises(ValueError):
        RecourseProblem(MODEL, X, directions=("up",) * 5)
    with pytest.raises(ValueError):
        RecourseProblem(MODEL, X, cost_weights=(0.7, 0.7))


def test_factual_is_read_only(problem):
    with pytest.raises(ValueError):
        problem.factual[0] = 9.0


def test_box_widens_to_include_factual():
    p = RecourseProblem(LinearModel([1.0, 1.0], -5.0), np.array([1.3, -0.1]))
    np.testing.assert_array_equal(p.lower, [0.0, -0.1])
    np.testing.assert_array_equal(p.upper, [1.3, 1.0])


def test_projection_restores_immutables(problem):
    c = X.copy()
    c[0] = 0.9
    c[3] = 0.0
    out = project_to_actions(problem, c)
    assert out[0] == X[0] and out[3] == X[3]


def test_projection_direction_clamps(problem):
    c = X.copy()
    c[1] = 0.1  # savings may only increase
    c[2] = 0.9  # debt may only decrease
    out = project_to_actions(problem, c)
    assert out[1] == X[1] and out[2] == X[2]


def test_projection_identity_inside(problem):
    c = np.array([0.4, 0.5, 0.2, 1.0, 1.0])
    np.testing.assert_array_equal(project_to_actions(problem, c), c)


def test_projection_boxes(problem):
    c = np.array([0.4, 3.0, -2.0, 1.0, 1.7])
    np.testing.assert_array_equal(project_to_actions(problem, c), [0.4, 1.0, 0.0, 1.0, 1.0])


@given(st.lists(st.floats(-5, 5), min_size=5, max_size=5))
@settings(max_examples=200)
def test_projection_is_idempotent_and_admissible(values):
    p = RecourseProblem.from_schema(MODEL, X, SCHEMA)
    once = project_to_actions(p, np.array(values))
    np.testing.assert_array_equal(project_to_actions(p, once), once)
    assert once[0] == X[0] and once[3] == X[3]
    assert once[1] >= X[1] and once[2] <= X[2]
    assert ((once >= p.lower) & (once <= p.upper)).all()


def test_projection_batches(problem):
    batch = np.tile(np.array([0.9, 0.0, 1.0, 0.0, 1.0]), (3, 1))
    out = project_to_actions(problem, batch)
    assert out.shape == (3, 5)
    np.testing.assert_array_equal(out[1], [0.4, 0.3, 0.6, 1.0, 1.0])


def test_movable_mask(problem):
    direction = np.array([1.0, -1.0, 1.0, 1.0, 1.0])
    # age frozen, savings cannot go down, debt cannot go up, sex frozen
    np.testing.assert_array_equal(movable(problem, X, direction), [False, False, False, False, True])
    at_top = X.copy()
    at_top[4] = 1.0
    assert not movable(problem, at_top, direction)[4]


def test_finalize_success_is_strict(problem):
    t0 = time.perf_counter()
    good = np.array([0.4, 1.0, 0.0, 1.0, 1.0])
    r = finalize(problem, good, "m", 3, t0)
    assert r.status == SUCCESS and r.success
    np.testing.assert_array_equal(r.delta, good - X)
    assert r.iterations == 3 and r.wall_time_seconds >= 0

    boundary = np.array([0.4, 0.5, 0.0, 1.0, 1.0])
    assert MODEL.logit(boundary) == 0.0
    r = finalize(problem, boundary, "m", 1, t0)
    assert r.status == FAILURE and r.counterfactual is None and r.reason == BUDGET_EXHAUSTED


def test_finalize_rejects_non_finite(problem):
    r = finalize(problem, np.array([0.4, np.nan, 0, 1, 1]), "m", 0, time.perf_counter())
    assert not r.success


def test_result_json(problem):
    r = finalize(problem, np.array([0.4, 1.0, 0.0, 1.0, 1.0]), "m", 2, time.perf_counter(), info={"z": np.ones(2)})
    d = r.to_json_dict()
    json.dumps(d)
    assert d["status"] == "success" and d["info"]["z"] == [1.0, 1.0]
    assert "wall_time_seconds" not in r.to_json_dict(include_time=False)


def test_latent_problem_bounds(problem):
    vae = Vae.initialize(5, 2, np.array([0, 0, 0, 1, 1], bool), np.random.default_rng(0))
    lp = LatentProblem(problem, vae, half_width=3.0)
    assert (lp.z_lower <= lp.z0).all() and (lp.z0 <= lp.z_upper).all()
    np.testing.assert_allclose(lp.z_upper - lp.z_lower, 6.0)
    far = lp.clamp(lp.z0 + 100)
    np.testing.assert_allclose(far, lp.z_upper)
    with pytest.raises(ValueError):
        LatentProblem(problem, vae, half_width=0.0)
    with pytest.raises(ValueError):
        LatentProblem(problem, Vae.initialize(4, 2, np.zeros(4, bool), np.random.default_rng(0)))
