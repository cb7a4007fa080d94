import numpy as np
import pytest

from gtan.errors import DimensionError
from gtan.optim import AdamState, adam_step, clip_by_global_norm, global_norm


def test_defaults():
    s = AdamState()
    assert (s.lr, s.beta1, s.beta2, s.eps, s.step) == (0.0005, 0.9, 0.999, 1e-8, 0)


def test_first_step_moves_by_lr_against_the_gradient_sign():
    p = {"w": np.array([[1.0, -2.0, 0.5]])}
    g = {"w": np.array([[0.3, -4.0, 1e-3]])}
    new, state = adam_step(p, g, AdamState(lr=0.01))
    step = new["w"] - p["w"]
    # bias-corrected first step: -lr * g / (|g| + eps)
    assert np.allclose(step, -0.01 * np.sign(g["w"]), atol=1e-7)
    assert state.step == 1


def test_matches_hand_computed_second_step():
    p = {"w": np.array([[0.0]])}
    state = AdamState(lr=0.1)
    p, state = adam_step(p, {"w": np.array([[1.0]])}, state)
    p, state = adam_step(p, {"w": np.array([[-2.0]])}, state)
    m = 0.9 * 0.1 + 0.1 * -2.0
    v = 0.999 * 0.001 + 0.001 * 4.0
    m_hat, v_hat = m / (1 - 0.9 ** 2), v / (1 - 0.999 ** 2)
    expected = -0.1 / (1 + 1e-8) - 0.1 * m_hat / (np.sqrt(v_hat) + 1e-8)
    assert p["w"][0, 0] == pytest.approx(expected, rel=1e-12)


def test_zero_gradient_leaves_parameters_unchanged():
    p = {"w": np.arange(4.0).reshape(2, 2)}
    new, _ = adam_step(p, {"w": np.zeros((2, 2))}, AdamState())
    assert np.array_equal(new["w"], p["w"])


def test_zero_learning_rate_leaves_parameters_unchanged():
    p = {"w": np.arange(4.0).reshape(2, 2)}
    state = AdamState(lr=0.0)
    for _ in range(5):
        p2, state = adam_step(p, {"w": np.ones((2, 2))}, state)
    assert np.array_equal(p2["w"], p["w"])


def test_converges_on_scalar_quadratic():
    p = {"w": np.array([[0.0]])}
    state = AdamState(lr=0.1)
    for _ in range(100):
        g = {"w": 2.0 * (p["w"] - 3.0)}
        p, state = adam_step(p, g, state)
    assert abs(p["w"][0, 0] - 3.0) < 0.05


def test_shape_mismatch_is_a_dimension_error():
    with pytest.raises(DimensionError):
        adam_step({"w": np.zeros((2, 2))}, {"w": np.zeros((2, 3))}, AdamState())


def test_returns_fresh_arrays_and_keeps_missing_parameters():
    p = {"w": np.ones((1, 2)), "frozen": np.ones((1, 1))}
    new, _ = adam_step(p, {"w": np.ones((1, 2))}, AdamState())
    assert new["w"] is not p["w"]
    assert np.array_equal(p["w"], np.ones((1, 2)))
    assert new["frozen"] is p["frozen"]


def test_step_counter_strictly_increases():
    state = AdamState()
    p = {"w": np.zeros((1, 1))}
    for k in range(1, 4):
        p, state = adam_step(p, {"w": np.ones((1, 1))}, state)
        assert state.step == k
        assert state.m["w"].shape == p["w"].shape


def test_global_norm_clipping():
    g = {"a": np.array([[3.0]]), "b": np.array([[4.0]])}
    assert global_norm(g) == 5.0
    clipped = clip_by_global_norm(g, 1.0)
    assert global_norm(clipped) == pytest.approx(1.0)
    assert clipped["a"][0, 0] / clipped["b"][0, 0] == pytest.approx(0.75)
    assert clip_by_global_norm(g, 10.0)["a"] is g["a"]
