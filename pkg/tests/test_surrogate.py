import math

import numpy as np
import pytest

from cfbench.model import LinearModel, MlpModel
from cfbench.surrogate import LocalLinearModel, default_kernel_width, lime_fit


def _cos(a, b):
    return float(a @ b / (np.linalg.norm(a) * np.linalg.norm(b)))


@pytest.mark.parametrize("seed", range(5))
def test_recovers_linear_direction(seed):
    rng = np.random.default_rng(seed)
    w = rng.normal(size=6)
    m = LinearModel(w, -0.2)
    x = rng.random(6)
    s = lime_fit(m, x, n_samples=2000, seed=seed)
    assert _cos(s.coefficients, w) > 0.99


def test_binary_coordinates_are_flipped_not_jittered():
    w = np.array([1.0, -2.0, 0.5])
    x = np.array([0.4, 1.0, 0.0])
    s = lime_fit(LinearModel(w), x, n_samples=2000, binary_mask=[False, True, True], seed=1)
    assert _cos(s.coefficients, w) > 0.99


def test_too_few_samples():
    with pytest.raises(ValueError, match="d \\+ 2"):
        lime_fit(LinearModel(np.ones(5)), np.zeros(5), n_samples=6)


def test_deterministic_given_seed():
    m = MlpModel.initialize(4, np.random.default_rng(0))
    x = np.full(4, 0.5)
    a = lime_fit(m, x, 500, seed=3)
    b = lime_fit(m, x, 500, seed=3)
    assert np.array_equal(a.coefficients, b.coefficients) and a.intercept == b.intercept
    c = lime_fit(m, x, 500, seed=4)
    assert not np.array_equal(a.coefficients, c.coefficients)


def test_prediction_at_anchor_close_to_model():
    w = np.array([0.2, 0.3])
    m = LinearModel(w, 0.0)
    x = np.array([0.5, 0.5])
    s = lime_fit(m, x, 2000, seed=0)
    assert s.predict(x) == pytest.approx(m.predict_proba(x), abs=1e-3)
    assert s.r2 > 0.99


def test_singular_design_uses_ridge_fallback():
    # every coordinate binary with flip probability 0 leaves the design rank one
    m = LinearModel(np.ones(3))
    with pytest.warns(RuntimeWarning, match="ridge"):
        s = lime_fit(m, np.zeros(3), 50, binary_mask=[True] * 3, flip_prob=0.0)
    assert s.warnings
    assert np.isfinite(s.coefficients).all()


def test_default_width():
    assert default_kernel_width(16) == pytest.approx(3.0)
    with pytest.raises(ValueError):
        lime_fit(LinearModel(np.ones(2)), np.zeros(2), 10, kernel_width=0.0)


def test_local_linear_model_validation():
    with pytest.raises(ValueError):
        LocalLinearModel(np.ones(2), 0.0, np.ones(3), 1.0)
    with pytest.raises(ValueError):
        LocalLinearModel(np.array([1.0, math.inf]), 0.0, np.ones(2), 1.0)
