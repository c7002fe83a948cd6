import numpy as np
import pytest

from fmcwhar.nn import Lstm, ShapeMismatch
from fmcwhar.nn.gradcheck import check_layer


def test_zero_weights_zero_input_gives_zero_state():
    lstm = Lstm(3, 4)
    for p in lstm.params().values():
        p[...] = 0.0
    out = lstm.forward(np.zeros((2, 6, 3)))
    # Gates sit at 0.5, candidate tanh(0) = 0, so nothing accumulates.
    np.testing.assert_array_equal(out, np.zeros((2, 4)))


def test_single_step_closed_form():
    # T = 1 on a 1 x 1 x 2 input reduces to one gated cell; evaluate the
    # gate equations by hand and compare.
    lstm = Lstm(2, 1)
    w_x = np.array([[0.5, -1.0],   # input gate
                    [0.25, 0.75],  # forget gate
                    [1.5, -0.5],   # candidate
                    [-0.3, 0.9]])  # output gate
    b = np.array([0.1, -0.2, 0.3, 0.05])
    lstm.w_x[...] = w_x
    lstm.w_h[...] = 0.0
    lstm.b[...] = b
    x = np.array([[[0.4, -0.6]]])

    def sig(v):
        return 1.0 / (1.0 + np.exp(-v))

    pre = w_x @ x[0, 0] + b
    i, f, g, o = sig(pre[0]), sig(pre[1]), np.tanh(pre[2]), sig(pre[3])
    c = i * g  # zero initial cell state: forget gate has nothing to keep
    expected = o * np.tanh(c)
    out = lstm.forward(x)
    np.testing.assert_allclose(out[0, 0], expected, atol=1e-12)
    assert f != 0  # the forget gate exists even if the initial state is zero


def test_last_step_only():
    # Appending steps changes the output; the return value tracks h_T.
    rng = np.random.default_rng(0)
    lstm = Lstm(3, 5, rng=rng)
    x = rng.standard_normal((2, 4, 3))
    h4 = lstm.forward(x)
    h3 = lstm.forward(x[:, :3])
    assert not np.allclose(h4, h3)


def test_gradcheck_through_five_steps():
    rng = np.random.default_rng(1)
    lstm = Lstm(6, 5, rng=rng)
    x = rng.standard_normal((2, 5, 6))
    result = check_layer("lstm_t5", lstm, x)
    assert result.passed, f"max relative error {result.max_rel_error:.3e}"


def test_input_shape_validation():
    lstm = Lstm(3, 4)
    with pytest.raises(ShapeMismatch):
        lstm.forward(np.zeros((2, 5, 7)))
    with pytest.raises(ShapeMismatch):
        lstm.forward(np.zeros((2, 3)))


def test_forget_bias_initialized_open():
    lstm = Lstm(2, 4)
    np.testing.assert_array_equal(lstm.b[4:8], np.ones(4))
    np.testing.assert_array_equal(lstm.b[:4], np.zeros(4))
