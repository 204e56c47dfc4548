import numpy as np
import pytest

from narrative_cantm import nn


def test_softmax_1d_and_2d():
    assert nn.softmax(np.zeros(4)).tolist() == [0.25] * 4
    assert nn.softmax(np.zeros((2, 2))).tolist() == [[0.5, 0.5]] * 2


def test_argmax_lowest_tie():
    assert nn.argmax_lowest(np.full((1, 7), 1 / 7)).tolist() == [0]


def test_clamp_mask():
    out, mask = nn.clamp_logvar(np.array([-20.0, 0.0, 10.0, 11.0]))
    assert out.tolist() == [-10.0, 0.0, 10.0, 10.0]
    assert mask.tolist() == [False, True, False, False]


def test_clip_grad_norm():
    g = {"a": np.array([3.0]), "b": np.array([4.0])}
    assert nn.clip_grad_norm(g, 1.0) == pytest.approx(5.0)
    assert np.sqrt(g["a"] ** 2 + g["b"] ** 2)[0] == pytest.approx(1.0)
    h = {"a": np.array([0.1])}
    nn.clip_grad_norm(h, 1.0)
    assert h["a"][0] == 0.1


def test_sgd_step():
    p = {"w": np.array([1.0])}
    nn.SGD(0.5).step(p, {"w": np.array([2.0])})
    assert p["w"][0] == 0.0


def test_adam_minimises_quadratic():
    p = {"w": np.array([5.0, -3.0])}
    opt = nn.Adam(0.1)
    for _ in range(500):
        opt.step(p, {"w": 2 * p["w"]})
    assert np.abs(p["w"]).max() < 1e-2


def test_make_optimizer():
    assert isinstance(nn.make_optimizer("adam", 0.1), nn.Adam)
    with pytest.raises(ValueError):
        nn.make_optimizer("rmsprop", 0.1)


def test_glorot_shape_and_scale(rng):
    w = nn.glorot(rng, 200, 300)
    assert w.shape == (200, 300)
    assert w.std() == pytest.approx(np.sqrt(2 / 500), rel=0.05)


def test_check_finite():
    with pytest.raises(FloatingPointError, match="x"):
        nn.check_finite("x", np.array([np.nan]))
