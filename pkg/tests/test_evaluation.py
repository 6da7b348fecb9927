import copy
import time

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cfbench.dataset import BINARY, FeatureSchema
from cfbench.evaluation import (
    BenchmarkRecord,
    constraint_violation,
    cost_l0,
    cost_l1,
    evaluate,
    is_missing,
    redundancy,
    success_rate,
    ynn,
)
from cfbench.model import LinearModel
from cfbench.recourse import RecourseProblem, finalize

SCHEMA = (
    FeatureSchema("age", immutable=True),
    FeatureSchema("income"),
    FeatureSchema("sex", BINARY, immutable=True),
)


# ------------------------------------------------------------------ costs

def test_l0_example():
    x = np.array([0.5, 0.5, 0.5])
    assert cost_l0(x, x + np.array([0.1, 0.0, -0.2])) == pytest.approx(2 / 3)


def test_l1_example():
    x = np.array([0.5, 0.5])
    assert cost_l1(x, x + np.array([0.3, -0.1])) == pytest.approx(0.2)


def test_costs_zero_on_identity():
    x = np.random.default_rng(0).random(6)
    assert cost_l0(x, x) == 0.0 and cost_l1(x, x) == 0.0


def test_cost_dimension_mismatch():
    with pytest.raises(ValueError):
        cost_l1(np.zeros(3), np.zeros(2))


@given(st.lists(st.floats(-1, 1), min_size=1, max_size=8), st.lists(st.floats(-1, 1), min_size=1, max_size=8))
@settings(max_examples=100)
def test_cost_ranges(a, b):
    n = min(len(a), len(b))
    x, c = np.array(a[:n]), np.array(b[:n])
    assert 0.0 <= cost_l0(x, c) <= 1.0
    assert cost_l1(x, c) == pytest.approx(np.mean(np.abs(x - c)))
    assert cost_l1(x, c) == pytest.approx(cost_l1(c, x))


def test_costs_batch():
    X = np.zeros((2, 2))
    C = np.array([[0.2, 0.0], [0.4, 0.4]])
    np.testing.assert_allclose(cost_l0(X, C), [0.5, 1.0])
    np.testing.assert_allclose(cost_l1(X, C), [0.1, 0.4])


# ------------------------------------------------------------------ yNN

def test_ynn_two_point_fixture():
    model = LinearModel([1.0], -0.5)  # positive above 0.5
    data = np.array([[0.0], [1.0]])
    assert ynn(np.array([[0.9]]), model, data, k=2) == 0.5


def test_ynn_all_agree_and_all_disagree():
    model = LinearModel([1.0], -0.5)
    pos = np.array([[0.8], [0.9], [1.0]])
    neg = np.array([[0.0], [0.1], [0.2]])
    assert ynn(np.array([[0.95]]), model, pos, k=3) == 1.0
    assert ynn(np.array([[0.95]]), model, neg, k=3) == 0.0


def test_ynn_empty_and_k_too_large():
    model = LinearModel([1.0], -0.5)
    assert ynn(np.empty((0, 1)), model, np.zeros((3, 1))) is None
    with pytest.raises(ValueError):
        ynn(np.array([[0.5]]), model, np.zeros((3, 1)), k=5)


# ------------------------------------------------------------------ redundancy, violation

def test_redundancy_zero_when_every_change_is_needed():
    model = LinearModel([1.0, 1.0], -1.5)
    assert redundancy(np.array([0.0, 0.0]), np.array([1.0, 1.0]), model) == 0


def test_redundancy_counts_unneeded_change():
    model = LinearModel([1.0, 0.01], -0.5)
    # reverting the second coordinate keeps the point positive
    assert redundancy(np.array([0.0, 0.0]), np.array([1.0, 1.0]), model) == 1


def test_redundancy_no_change():
    model = LinearModel([1.0], 1.0)
    assert redundancy(np.array([0.3]), np.array([0.3]), model) == 0


def test_violation_on_sex_flip():
    x = np.array([0.4, 0.2, 1.0])
    assert constraint_violation(x, np.array([0.4, 0.9, 0.0]), SCHEMA) == 1
    assert constraint_violation(x, np.array([0.4, 0.9, 1.0]), SCHEMA) == 0
    # continuous immutables get a small tolerance
    assert constraint_violation(x, np.array([0.4 + 1e-7, 0.9, 1.0]), SCHEMA) == 0
    assert constraint_violation(x, np.array([0.5, 0.9, 0.0]), SCHEMA) == 2


# ------------------------------------------------------------------ aggregation

MODEL = LinearModel([0.0, 2.0, 0.0], -1.0)


def _results(n_ok, n_fail):
    out = []
    t0 = time.perf_counter()
    for i in range(n_ok + n_fail):
        x = np.array([0.3, 0.1 + 0.01 * i, 1.0])
        p = RecourseProblem.from_schema(MODEL, x, SCHEMA)
        cf = np.array([0.3, 0.9, 1.0]) if i < n_ok else None
        out.append(finalize(p, cf, "m", 1, t0))
    return out


def test_success_rate_three_of_four():
    assert success_rate(_results(3, 1)) == 0.75
    with pytest.raises(ValueError):
        success_rate([])


def test_record_invariants():
    res = _results(3, 1)
    train = np.random.default_rng(0).random((20, 3))
    rec = evaluate(res, MODEL, train, SCHEMA, dataset="d", model_arch="linear", method="m", family="independence")
    assert rec.n_attempted == 4 and rec.n_succeeded == 3 and rec.success_rate == 0.75
    assert 0 <= rec.mean_c0 <= 1 and rec.mean_c1 >= 0 and rec.iqr_c1 >= 0
    assert 0 <= rec.ynn <= 1
    assert rec.violation == 0 and rec.redundancy == 0
    assert rec.avg_time_seconds >= 0


def test_record_without_successes_has_missing_stats():
    rec = evaluate(_results(0, 3), MODEL, np.zeros((6, 3)), SCHEMA, dataset="d", model_arch="linear",
                   method="m", family="independence")
    assert rec.success_rate == 0.0
    for f in ["mean_c0", "mean_c1", "median_c1", "iqr_c0", "ynn", "redundancy", "violation"]:
        assert is_missing(getattr(rec, f))


def test_evaluate_is_pure():
    res = _results(2, 1)
    snapshot = copy.deepcopy(res)
    train = np.random.default_rng(1).random((10, 3))
    train_copy = train.copy()
    kw = dict(dataset="d", model_arch="linear", method="m", family="independence", timed=False)
    a = evaluate(res, MODEL, train, SCHEMA, **kw)
    b = evaluate(res, MODEL, train, SCHEMA, **kw)
    assert a == b
    np.testing.assert_array_equal(train, train_copy)
    for r, s in zip(res, snapshot):
        assert r.status == s.status
        np.testing.assert_array_equal(r.factual, s.factual)


def test_record_dict_drops_timing():
    rec = evaluate(_results(1, 0), MODEL, np.zeros((6, 3)), SCHEMA, dataset="d", model_arch="linear",
                   method="m", family="independence")
    d = rec.to_dict(include_time=False)
    assert not set(BenchmarkRecord.TIMING_FIELDS) & set(d)
    assert rec.to_dict()["setup_time_seconds"] == 0.0


def test_evaluate_needs_attempts():
    with pytest.raises(ValueError):
        evaluate([], MODEL, np.zeros((6, 3)), SCHEMA, dataset="d", model_arch="linear", method="m",
                 family="independence")
